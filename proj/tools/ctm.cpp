// ctm: train, evaluate, generate and inspect concept topic models.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "ctm/ctm.hpp"

#ifndef CTM_DEFAULT_STOPWORDS
#define CTM_DEFAULT_STOPWORDS ""
#endif

namespace fs = std::filesystem;
using namespace ctm;

namespace {

struct InputOpts {
  std::string corpus;
  std::string labels;
  std::string kb;
  std::string clusters;
  bool raw_kb = false;
  std::string stopwords = CTM_DEFAULT_STOPWORDS;
  bool no_stopwords = false;
  std::size_t min_count = PreprocessConfig{}.min_count;
};

struct ModelOpts {
  std::string model = "lda";
  std::size_t topics = 10;
  double alpha = 0.01;
  std::vector<double> alpha_vector;
  double beta = 0.01;
  std::size_t iters = 1000;
  std::uint64_t seed = 0;
  std::string kb_factor = "raw";
  bool random_scan = false;
  std::size_t average_last = 0;

  Hyperparameters hyper(ModelKind kind, std::size_t K, std::uint64_t s) const {
    Hyperparameters hp;
    hp.kind = kind;
    hp.topics = K;
    hp.alpha = alpha;
    hp.alpha_vector = alpha_vector;
    hp.beta = beta;
    hp.iterations = iters;
    hp.seed = s;
    hp.kb_factor = kb_factor == "normalized" ? KbFactor::normalized : KbFactor::raw;
    hp.random_scan = random_scan;
    hp.average_last = average_last;
    return hp;
  }
};

void add_input_options(CLI::App* cmd, InputOpts& in, bool corpus_required) {
  auto* c = cmd->add_option("--corpus", in.corpus, "Corpus: one document per line, or JSONL with a \"text\" field")
                ->check(CLI::ExistingFile);
  if (corpus_required) c->required();
  cmd->add_option("--labels", in.labels, "Label file (index<TAB>l1,l2) for llda/cllda")->check(CLI::ExistingFile);
  cmd->add_option("--kb", in.kb, "Concept KB (word<TAB>concept<TAB>prob)")->check(CLI::ExistingFile);
  cmd->add_option("--clusters", in.clusters, "Concept cluster map (concept<TAB>cluster)")->check(CLI::ExistingFile);
  cmd->add_flag("--raw-kb", in.raw_kb, "Keep merged KB rows without renormalizing them");
  cmd->add_option("--stopwords", in.stopwords, "Stopword list, one word per line")->capture_default_str();
  cmd->add_flag("--no-stopwords", in.no_stopwords, "Disable stopword removal");
  cmd->add_option("--min-count", in.min_count, "Drop words with fewer corpus occurrences")->capture_default_str();
}

void add_model_options(CLI::App* cmd, ModelOpts& m, bool multi_model) {
  cmd->add_option("--model", m.model, multi_model ? "Model kinds, comma separated (lda,clda,llda,cllda)"
                                                  : "Model kind: lda, clda, llda or cllda")
      ->capture_default_str();
  cmd->add_option("--topics,-K", m.topics, "Number of topics")->capture_default_str();
  cmd->add_option("--alpha", m.alpha, "Symmetric document-topic prior")->capture_default_str();
  cmd->add_option("--alpha-vector", m.alpha_vector, "Per-topic prior, overrides --alpha")->delimiter(',');
  cmd->add_option("--beta", m.beta, "Topic-entity prior")->capture_default_str();
  cmd->add_option("--iters", m.iters, "Gibbs sweeps")->capture_default_str();
  cmd->add_option("--seed", m.seed, "Random seed")->capture_default_str();
  cmd->add_option("--kb-factor", m.kb_factor, "KB value used in the sampler: raw or normalized")
      ->check(CLI::IsMember({"raw", "normalized"}))
      ->capture_default_str();
  cmd->add_flag("--random-scan", m.random_scan, "Visit tokens in a fresh random order each sweep");
  cmd->add_option("--average-last", m.average_last, "Average estimates over this many final sweeps");
}

PreprocessConfig preprocess_config(const InputOpts& in) {
  PreprocessConfig pre;
  pre.min_count = in.min_count;
  if (!in.no_stopwords && !in.stopwords.empty()) {
    auto s = open_input(in.stopwords);
    pre.stopwords = read_stopwords(s);
  }
  return pre;
}

std::optional<KbSource> kb_source(const InputOpts& in) {
  if (in.kb.empty()) {
    if (!in.clusters.empty()) throw Error("--clusters needs --kb");
    return std::nullopt;
  }
  return KbSource::from_files(in.kb, in.clusters.empty() ? std::nullopt : std::optional<std::string>(in.clusters),
                              !in.raw_kb);
}

// Label sets aligned with the raw documents: from --labels if given,
// otherwise from the JSONL "labels" field.
std::vector<std::vector<std::string>> raw_labels(const InputOpts& in, const RawDocuments& docs) {
  if (!in.labels.empty()) {
    auto s = open_input(in.labels);
    return parse_label_lines(s, docs.texts.size(), in.labels);
  }
  return docs.labels;
}

void check_inputs(ModelKind kind, const Dataset& ds) {
  if (uses_kb(kind) && !ds.kb) throw Error(to_string(kind) + " needs --kb");
  if (uses_labels(kind) && !ds.labels) throw Error(to_string(kind) + " needs --labels or labeled JSONL input");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("write failed: " + p.string());
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// ---------------------------------------------------------------------------

int cmd_train(const CLI::App& app, const InputOpts& in, const ModelOpts& mo, const std::string& out_dir) {
  const auto kind = parse_model_kind(mo.model);
  auto raw = read_documents(in.corpus);
  auto labels = raw_labels(in, raw);
  auto kb = kb_source(in);
  auto ds = prepare_dataset(fs::path(in.corpus).filename().string(), raw.texts,
                            uses_labels(kind) ? &labels : nullptr, preprocess_config(in), kb ? &*kb : nullptr);
  check_inputs(kind, ds);
  auto K = mo.topics;
  if (uses_labels(kind)) {
    // labeled models have one topic per distinct label
    if (app.count("--topics") && K != ds.labels->label_count()) {
      throw Error("--topics " + std::to_string(K) + " but the label files name " +
                  std::to_string(ds.labels->label_count()) + " labels");
    }
    K = ds.labels->label_count();
  }
  auto hp = mo.hyper(kind, K, mo.seed);

  std::cerr << "ctm train: model=" << to_string(kind) << " K=" << K << " alpha=" << hp.alpha << " beta=" << hp.beta
            << " iterations=" << hp.iterations << " seed=" << hp.seed << "\n"
            << "  documents=" << ds.corpus->doc_count() << " (dropped " << ds.corpus->dropped().size()
            << ") vocabulary=" << ds.corpus->vocab_size() << " tokens=" << ds.corpus->token_count();
  if (ds.kb && uses_kb(kind)) std::cerr << " concepts=" << ds.kb->concept_count();
  std::cerr << "\n";

  auto result = train(ds, hp);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  save_snapshot(result.report.model, (dir / "model.snap").string());

  std::ostringstream log;
  log << "sweep,log_likelihood,wall_time_s\n";
  for (const auto& s : result.report.sweeps)
    log << s.sweep << ',' << fmt(s.log_likelihood) << ',' << std::fixed << std::setprecision(3) << s.wall_time_s
        << std::defaultfloat << '\n';
  write_text(dir / "sweeps.csv", log.str());

  nlohmann::json summary;
  summary["model"] = to_string(kind);
  summary["topics"] = K;
  summary["alpha"] = hp.alpha;
  summary["beta"] = hp.beta;
  summary["iterations"] = hp.iterations;
  summary["seed"] = hp.seed;
  summary["documents"] = ds.corpus->doc_count();
  summary["vocabulary"] = ds.corpus->vocab_size();
  summary["tokens"] = ds.corpus->token_count();
  summary["entities"] = result.report.model.entity_count();
  summary["train_perplexity"] = result.train_perplexity;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_text(dir / "config.toml", app.config_to_str(true, false));

  std::cout << "train perplexity " << fmt(result.train_perplexity) << "\n"
            << "wrote " << (dir / "model.snap").string() << "\n";
  return 0;
}

struct EvalOpts {
  std::vector<std::string> snapshots;
  std::string mode = "training";
  std::string heldout;
  std::string sweep;
  std::size_t groups = 0;
  std::size_t group_size = 0;
  std::string seeds;
  std::size_t jobs = 1;
  std::size_t foldin_sweeps = 500;
  bool skip_oov = false;
  std::string out;
};

void emit(const EvalReport& rep, const std::string& out) {
  if (out.empty()) {
    rep.write_csv(std::cout);
    return;
  }
  std::ostringstream s;
  rep.write_csv(s);
  write_text(out, s.str());
  std::cerr << "wrote " << out << "\n";
}

int eval_snapshots(const InputOpts& in, const EvalOpts& eo) {
  const auto mode = parse_eval_mode(eo.mode);
  auto raw = read_documents(eo.heldout.empty() ? in.corpus : eo.heldout);
  const auto pre = preprocess_config(in);
  EvalReport rep;
  for (const auto& path : eo.snapshots) {
    const auto t0 = std::chrono::steady_clock::now();
    auto m = load_snapshot(path);
    Corpus corpus;
    if (mode == EvalMode::training) {
      corpus = build_corpus(raw.texts, pre);
      if (corpus.vocab().hash() != m.vocab_hash) {
        throw Error("vocabulary of " + path + " does not match the corpus; evaluate with the same corpus and "
                    "preprocessing used for training");
      }
    } else {
      std::size_t skipped = 0;
      corpus = Corpus::with_vocabulary(tokenize_all(raw.texts, pre), m.vocab, &skipped);
      if (skipped) std::cerr << path << ": " << skipped << " tokens outside the model vocabulary skipped\n";
    }
    PerplexityOptions o;
    o.mode = mode;
    o.oov = eo.skip_oov ? OovPolicy::skip : OovPolicy::reject;
    o.foldin_sweeps = eo.foldin_sweeps;
    o.seed = m.hp.seed;
    auto r = evaluate_perplexity(m, corpus, o);
    EvalRow row;
    row.model_kind = to_string(m.hp.kind);
    row.topics = m.topics();
    row.dataset = fs::path(eo.heldout.empty() ? in.corpus : eo.heldout).filename().string();
    row.mode = to_string(mode);
    row.perplexity = r.perplexity;
    row.seed = m.hp.seed;
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.rows.push_back(row);
  }
  emit(rep, eo.out);
  return 0;
}

int eval_sweep(const InputOpts& in, const ModelOpts& mo, const EvalOpts& eo) {
  const auto mode = parse_eval_mode(eo.mode);
  std::vector<ModelKind> kinds;
  {
    std::stringstream ss(mo.model);
    for (std::string k; std::getline(ss, k, ',');)
      if (!k.empty()) kinds.push_back(parse_model_kind(k));
  }
  if (kinds.empty()) throw Error("--model names no model kind");
  const auto Ks = eo.sweep.empty() ? std::vector<std::size_t>{mo.topics} : parse_size_list(eo.sweep);
  std::vector<std::uint64_t> seeds;
  if (eo.seeds.empty()) {
    seeds.push_back(mo.seed);
  } else {
    for (auto s : parse_size_list(eo.seeds)) seeds.push_back(s);
  }

  auto raw = read_documents(in.corpus);
  auto labels = raw_labels(in, raw);
  auto kb = kb_source(in);
  const auto pre = preprocess_config(in);
  const std::string base = fs::path(in.corpus).filename().string();

  // one dataset per training prefix; the full corpus when no groups are asked for
  std::vector<std::size_t> prefixes{raw.texts.size()};
  if (eo.groups) prefixes = prefix_schedule(raw.texts.size(), eo.groups, eo.group_size);
  std::vector<Dataset> datasets;
  datasets.reserve(prefixes.size());
  bool any_labels = false;
  for (auto k : kinds) any_labels = any_labels || uses_labels(k);
  for (auto n : prefixes) {
    std::vector<std::string> texts(raw.texts.begin(), raw.texts.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<std::vector<std::string>> lab;
    if (any_labels) lab.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    auto name = eo.groups ? base + ":" + std::to_string(n) : base;
    datasets.push_back(prepare_dataset(name, texts, any_labels ? &lab : nullptr, pre, kb ? &*kb : nullptr));
  }

  std::shared_ptr<const Corpus> heldout;
  if (!eo.heldout.empty()) {
    if (mode != EvalMode::foldin) throw Error("--heldout requires --mode foldin");
    if (eo.groups) throw Error("--heldout with --groups is not supported; evaluate prefixes in training mode");
    auto hraw = read_documents(eo.heldout);
    heldout = std::make_shared<Corpus>(
        Corpus::with_vocabulary(tokenize_all(hraw.texts, pre), datasets.front().corpus->vocab()));
  }

  std::vector<Cell> cells;
  for (const auto& ds : datasets) {
    for (auto kind : kinds) {
      check_inputs(kind, ds);
      for (auto K : Ks) {
        auto k_eff = K;
        if (uses_labels(kind)) k_eff = ds.labels->label_count();
        for (auto s : seeds) cells.push_back({&ds, mo.hyper(kind, k_eff, s), mode, heldout});
      }
    }
  }
  std::cerr << "ctm eval: " << cells.size() << " runs on " << std::max<std::size_t>(1, eo.jobs) << " thread(s)\n";
  EvalReport rep;
  rep.rows = run_cells(cells, eo.jobs, [](const EvalRow& r) {
    std::cerr << "  " << r.model_kind << " K=" << r.topics << " " << r.dataset << " seed=" << r.seed
              << " perplexity=" << fmt(r.perplexity) << "\n";
  });
  emit(rep, eo.out);
  return 0;
}

struct GenOpts {
  std::string kb;
  std::size_t concepts = SyntheticKbConfig{}.concepts;
  std::size_t words_per_concept = SyntheticKbConfig{}.words_per_concept;
  std::size_t word_pool = SyntheticKbConfig{}.word_pool;
  std::uint64_t kb_seed = SyntheticKbConfig{}.seed;
  GenConfig gen;
  std::string out = "generated";
};

int cmd_generate(const CLI::App& app, const GenOpts& go) {
  const fs::path dir(go.out);
  fs::create_directories(dir);
  ConceptKB kb;
  if (go.kb.empty()) {
    SyntheticKbConfig kc;
    kc.concepts = go.concepts;
    kc.words_per_concept = go.words_per_concept;
    kc.word_pool = go.word_pool;
    kc.seed = go.kb_seed;
    auto text = synthetic_kb_text(kc);
    write_text(dir / "kb.tsv", text);
    std::istringstream s(text);
    kb = load_kb(s, nullptr, {}, "<synthetic>");
  } else {
    kb = load_kb(go.kb, std::nullopt);
  }
  auto g = generate_corpus(go.gen, kb);
  std::string corpus;
  std::size_t tokens = 0;
  for (const auto& line : g.lines()) corpus += line + '\n';
  for (const auto& d : g.docs) tokens += d.size();
  write_text(dir / "corpus.txt", corpus);
  write_text(dir / "truth.json", g.truth.to_json(go.gen).dump() + "\n");
  write_text(dir / "config.toml", app.config_to_str(true, false));
  std::cout << "generated " << g.docs.size() << " documents, " << tokens << " tokens (expected "
            << fmt(static_cast<double>(go.gen.docs) * go.gen.mean_length) << ", " << kLengthLaw << ") in "
            << dir.string() << "\n";
  return 0;
}

struct InspectOpts {
  std::string snapshot;
  std::string match;
  std::size_t top = 10;
};

int cmd_inspect(const InspectOpts& io) {
  auto m = load_snapshot(io.snapshot);
  std::cout << to_string(m.hp.kind) << " model: K=" << m.topics() << " entities=" << m.entity_count()
            << " (concepts " << m.concept_count() << ") vocabulary=" << m.vocab.size() << "\n";
  std::cout << "concepts are shown as **name**\n";
  for (TopicId k = 0; k < m.topics(); ++k) {
    auto ents = top_terms(m, k, io.top, TermSpace::entities);
    auto words = top_terms(m, k, io.top, TermSpace::words);
    std::cout << "\n" << m.topic_name(k) << "\n";
    std::size_t width = 6;
    for (const auto& e : ents) width = std::max(width, e.name.size() + (e.is_concept ? 4 : 0));
    std::cout << "  " << std::left << std::setw(4) << "#" << std::setw(static_cast<int>(width) + 2) << "entity"
              << "word\n";
    for (std::size_t r = 0; r < std::max(ents.size(), words.size()); ++r) {
      std::string e = r < ents.size() ? (ents[r].is_concept ? "**" + ents[r].name + "**" : ents[r].name) : "";
      std::string w = r < words.size() ? words[r].name : "";
      std::cout << "  " << std::left << std::setw(4) << r + 1 << std::setw(static_cast<int>(width) + 2) << e << w
                << "\n";
    }
  }
  if (!io.match.empty()) {
    auto other = load_snapshot(io.match);
    auto match = match_topics(m, other);
    std::cout << "\nmatch against " << io.match << " (KL over words)\n";
    for (const auto& p : match.pairs)
      std::cout << "  " << m.topic_name(p.a) << " -> " << other.topic_name(p.b) << "  KL " << fmt(p.kl) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept topic models (LDA, CLDA, Labeled LDA, CLLDA) with collapsed Gibbs sampling"};
  app.set_config("--config", "", "TOML or INI file with option values; command-line flags override it");
  app.require_subcommand(1);

  InputOpts train_in, eval_in;
  ModelOpts train_mo, eval_mo;
  std::string train_out = ".";
  auto* train_cmd = app.add_subcommand("train", "Train a model and write model.snap, sweeps.csv, summary.json");
  add_input_options(train_cmd, train_in, true);
  add_model_options(train_cmd, train_mo, false);
  train_cmd->add_option("--out,-o", train_out, "Output directory")->capture_default_str();

  EvalOpts eo;
  auto* eval_cmd = app.add_subcommand("eval", "Perplexity of snapshots, or of retrained models over a K sweep");
  add_input_options(eval_cmd, eval_in, false);
  add_model_options(eval_cmd, eval_mo, true);
  eval_cmd->add_option("--snapshot", eo.snapshots, "Snapshot(s) to evaluate")->check(CLI::ExistingFile);
  eval_cmd->add_option("--mode", eo.mode, "training or foldin")
      ->check(CLI::IsMember({"training", "foldin"}))
      ->capture_default_str();
  eval_cmd->add_option("--heldout", eo.heldout, "Held-out corpus for fold-in")->check(CLI::ExistingFile);
  eval_cmd->add_option("--sweep", eo.sweep, "Retrain for each K in a comma-separated list");
  eval_cmd->add_option("--groups", eo.groups, "Train on growing prefixes split into N groups");
  eval_cmd->add_option("--group-size", eo.group_size, "Documents per prefix group (default: even split)");
  eval_cmd->add_option("--seeds", eo.seeds, "Comma-separated seeds, one run each (default: --seed)");
  eval_cmd->add_option("--jobs,-j", eo.jobs, "Concurrent runs")->capture_default_str();
  eval_cmd->add_option("--foldin-sweeps", eo.foldin_sweeps, "Gibbs sweeps per fold-in document")
      ->capture_default_str();
  eval_cmd->add_flag("--skip-oov", eo.skip_oov, "Skip tokens the model gives no mass instead of failing");
  eval_cmd->add_option("--out,-o", eo.out, "CSV output file (default: stdout)");

  GenOpts go;
  auto* gen_cmd = app.add_subcommand("generate", "Sample a synthetic corpus with ground truth");
  gen_cmd->add_option("--kb", go.kb, "KB to generate from (default: a random synthetic KB)")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--concepts", go.concepts, "Synthetic KB: number of concepts")->capture_default_str();
  gen_cmd->add_option("--words-per-concept", go.words_per_concept, "Synthetic KB: words per concept")
      ->capture_default_str();
  gen_cmd->add_option("--word-pool", go.word_pool, "Synthetic KB: size of the shared word pool")
      ->capture_default_str();
  gen_cmd->add_option("--kb-seed", go.kb_seed, "Synthetic KB: random seed")->capture_default_str();
  gen_cmd->add_option("--topics,-K", go.gen.topics, "Number of topics")->capture_default_str();
  gen_cmd->add_option("--docs", go.gen.docs, "Number of documents")->capture_default_str();
  gen_cmd->add_option("--mean-length", go.gen.mean_length, "Mean document length (Poisson)")->capture_default_str();
  gen_cmd->add_option("--alpha", go.gen.alpha, "Document-topic concentration")->capture_default_str();
  gen_cmd->add_option("--beta", go.gen.beta, "Topic-entity concentration")->capture_default_str();
  gen_cmd->add_option("--atomic-fraction", go.gen.atomic_fraction, "Share of tokens drawn from atomic words")
      ->capture_default_str();
  gen_cmd->add_option("--atomic-vocab", go.gen.atomic_vocab, "Number of atomic words")->capture_default_str();
  gen_cmd->add_option("--seed", go.gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out,-o", go.out, "Output directory")->capture_default_str();

  InspectOpts io;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print the top entities and words of every topic");
  inspect_cmd->add_option("--snapshot", io.snapshot, "Snapshot to inspect")->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--top,-n", io.top, "Entries per topic")->capture_default_str();
  inspect_cmd->add_option("--match", io.match, "Second snapshot to align topics with")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) return cmd_train(*train_cmd, train_in, train_mo, train_out);
    if (*eval_cmd) {
      if (!eo.snapshots.empty()) {
        if (eval_in.corpus.empty()) throw Error("eval needs --corpus");
        if (!eo.sweep.empty() || eo.groups) throw Error("--snapshot cannot be combined with --sweep or --groups");
        return eval_snapshots(eval_in, eo);
      }
      if (eval_in.corpus.empty()) throw Error("eval needs --corpus and either --snapshot or model options");
      return eval_sweep(eval_in, eval_mo, eo);
    }
    if (*gen_cmd) return cmd_generate(*gen_cmd, go);
    if (*inspect_cmd) return cmd_inspect(io);
  } catch (const std::exception& e) {
    std::cerr << "ctm: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
