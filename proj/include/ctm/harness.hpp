#pragma once

// Experiment plumbing shared by the command-line tool and the test suites:
// dataset preparation, K sweeps, prefix-group schedules.

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <thread>

#include "ctm/concept_kb.hpp"
#include "ctm/corpus.hpp"
#include "ctm/eval.hpp"
#include "ctm/samplers.hpp"

namespace ctm {

// KB contents kept as text so they can be re-restricted to any corpus.
struct KbSource {
  std::string text;
  std::string name = "<kb>";
  std::optional<ClusterMap> clusters;
  bool renormalize = true;

  static KbSource from_files(const std::string& kb_path, const std::optional<std::string>& cluster_path,
                             bool renormalize = true) {
    KbSource s;
    auto in = open_input(kb_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    s.text = ss.str();
    s.name = kb_path;
    if (cluster_path) s.clusters = ClusterMap::load(*cluster_path);
    s.renormalize = renormalize;
    return s;
  }

  ConceptKB load_for(const Vocabulary& vocab) const {
    std::istringstream in(text);
    KbLoadOptions o;
    o.renormalize = renormalize;
    o.target_vocab = &vocab;
    return load_kb(in, clusters ? &*clusters : nullptr, o, name);
  }
};

struct Dataset {
  std::string name;
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const ConceptKB> kb;
  std::shared_ptr<const LabelSet> labels;
};

// Builds the corpus, then the KB restricted to its vocabulary and the label
// sets of the surviving documents, whichever are available.
inline Dataset prepare_dataset(std::string name, const std::vector<std::string>& texts,
                               const std::vector<std::vector<std::string>>* raw_labels,
                               const PreprocessConfig& pre, const KbSource* kb) {
  Dataset ds;
  ds.name = std::move(name);
  auto corpus = std::make_shared<Corpus>(build_corpus(texts, pre));
  if (kb) ds.kb = std::make_shared<ConceptKB>(kb->load_for(corpus->vocab()));
  if (raw_labels && !raw_labels->empty()) {
    ds.labels = std::make_shared<LabelSet>(attach_labels(*corpus, align_labels(*corpus, *raw_labels)));
  }
  ds.corpus = std::move(corpus);
  return ds;
}

// Prefix lengths for incremental training: `groups` groups, the first
// groups-1 of `group_size` documents each and the last holding the rest.
// group_size == 0 splits evenly.
inline std::vector<std::size_t> prefix_schedule(std::size_t docs, std::size_t groups, std::size_t group_size = 0) {
  if (groups == 0) throw Error("prefix schedule: groups must be positive");
  if (group_size == 0) group_size = docs / groups;
  if (group_size == 0 || group_size * (groups - 1) >= docs) {
    throw Error("prefix schedule: " + std::to_string(docs) + " documents cannot fill " + std::to_string(groups) +
                " groups of " + std::to_string(group_size));
  }
  std::vector<std::size_t> out;
  for (std::size_t g = 1; g < groups; ++g) out.push_back(g * group_size);
  out.push_back(docs);
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v <= 0) throw Error("expected a positive integer, got '" + item + "'");
    if (std::find(out.begin(), out.end(), static_cast<std::size_t>(v)) != out.end()) {
      throw Error("duplicate entry " + item + " in list");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw Error("empty list");
  return out;
}

struct TrainResult {
  GibbsReport report;
  double train_perplexity = 0.0;
  double wall_time_s = 0.0;
};

inline TrainResult train(const Dataset& ds, const Hyperparameters& hp, bool log_likelihood = true) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r;
  r.report = run_gibbs(ds.corpus, uses_kb(hp.kind) ? ds.kb : nullptr, uses_labels(hp.kind) ? ds.labels : nullptr,
                       hp, log_likelihood);
  r.train_perplexity = perplexity(r.report.model, *ds.corpus, EvalMode::training);
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// One (dataset, model, K, seed) experiment cell.
struct Cell {
  const Dataset* dataset = nullptr;
  Hyperparameters hp;
  EvalMode mode = EvalMode::training;
  // Held-out documents for fold-in mode; empty means fold-in on the training corpus.
  std::shared_ptr<const Corpus> heldout;
};

inline EvalRow run_cell(const Cell& cell) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& ds = *cell.dataset;
  auto report = run_gibbs(ds.corpus, uses_kb(cell.hp.kind) ? ds.kb : nullptr,
                          uses_labels(cell.hp.kind) ? ds.labels : nullptr, cell.hp, false);
  PerplexityOptions o;
  o.mode = cell.mode;
  o.seed = cell.hp.seed;
  const Corpus& target = (cell.mode == EvalMode::foldin && cell.heldout) ? *cell.heldout : *ds.corpus;
  EvalRow row;
  row.model_kind = to_string(cell.hp.kind);
  row.topics = cell.hp.topics;
  row.dataset = ds.name;
  row.mode = to_string(cell.mode);
  row.perplexity = evaluate_perplexity(report.model, target, o).perplexity;
  row.seed = cell.hp.seed;
  row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

// Runs cells on up to `jobs` threads; rows come back in cell order.
inline std::vector<EvalRow> run_cells(const std::vector<Cell>& cells, std::size_t jobs = 1,
                                      const std::function<void(const EvalRow&)>& on_done = {}) {
  std::vector<EvalRow> rows(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
      try {
        rows[i] = run_cell(cells[i]);
        if (on_done) {
          std::lock_guard lock(done_mu);
          on_done(rows[i]);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

}  // namespace ctm
