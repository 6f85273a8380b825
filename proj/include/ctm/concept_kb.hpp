#pragma once

// Concept knowledge base: per-concept word distributions P(w|c), word ->
// concept candidate lookup, and concept-cluster reduction.
//
// KB file:      word<TAB>concept<TAB>probability   (one triple per line)
// Cluster file: concept<TAB>cluster_name
//
// Blank lines and lines starting with '#' are ignored in both.

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctm/common.hpp"
#include "ctm/corpus.hpp"

namespace ctm {

enum class EntityKind { atomic, concept_backed };

struct ConceptCandidate {
  ConceptId concept_id;
  double prob;      // P(w|c) after merge and renormalization
  double raw_prob;  // P(w|c) after merge, before renormalization
  friend bool operator==(const ConceptCandidate&, const ConceptCandidate&) = default;
};

struct ConceptWord {
  WordId word;
  double prob;
  double raw_prob;
  friend bool operator==(const ConceptWord&, const ConceptWord&) = default;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> f;
  std::size_t b = 0;
  for (;;) {
    auto t = line.find('\t', b);
    f.push_back(line.substr(b, t == std::string::npos ? std::string::npos : t - b));
    if (t == std::string::npos) break;
    b = t + 1;
  }
  return f;
}

inline bool skippable(const std::string& line) {
  auto b = line.find_first_not_of(" \t");
  return b == std::string::npos || line[b] == '#';
}

}  // namespace detail

// Maps raw concept names onto cluster names.
class ClusterMap {
 public:
  static ClusterMap parse(std::istream& in, const std::string& source = "<clusters>") {
    ClusterMap m;
    std::size_t lineno = 0;
    for (const auto& line : read_lines(in)) {
      ++lineno;
      if (detail::skippable(line)) continue;
      auto f = detail::split_tabs(line);
      if (f.size() != 2 || f[0].empty() || f[1].empty()) {
        throw ParseError(source, lineno, "expected concept<TAB>cluster_name");
      }
      auto cid = m.clusters_.add(f[1]);
      auto [it, fresh] = m.cluster_of_.emplace(f[0], cid);
      if (!fresh && it->second != cid) {
        throw ParseError(source, lineno, "concept '" + f[0] + "' assigned to two clusters");
      }
      if (fresh) m.line_of_.emplace(f[0], lineno);
    }
    m.source_ = source;
    return m;
  }

  static ClusterMap load(const std::string& path) {
    auto in = open_input(path);
    return parse(in, path);
  }

  const Vocabulary& cluster_vocab() const { return clusters_; }
  std::size_t cluster_count() const { return clusters_.size(); }
  std::size_t concept_count() const { return cluster_of_.size(); }

  std::optional<std::string> cluster_of(const std::string& concept_name) const {
    auto it = cluster_of_.find(concept_name);
    if (it == cluster_of_.end()) return std::nullopt;
    return clusters_.word(it->second);
  }

  // Concepts in the map, in no particular order, with their defining line.
  const std::unordered_map<std::string, std::size_t>& lines() const { return line_of_; }
  const std::string& source() const { return source_; }

 private:
  Vocabulary clusters_;
  std::unordered_map<std::string, std::uint32_t> cluster_of_;
  std::unordered_map<std::string, std::size_t> line_of_;
  std::string source_;
};

struct KbLoadOptions {
  // Rescale every concept row to sum to one over the retained words.
  bool renormalize = true;
  // When set, rows are restricted to these words and word ids follow this
  // vocabulary.
  const Vocabulary* target_vocab = nullptr;
};

class ConceptKB {
 public:
  ConceptKB() = default;

  // A KB with no concepts over the given word table; every word is atomic.
  static ConceptKB empty(const Vocabulary& words) {
    ConceptKB kb;
    kb.words_ = words;
    kb.word_to_concepts_.resize(words.size());
    return kb;
  }

  const Vocabulary& words() const { return words_; }
  const Vocabulary& concepts() const { return concepts_; }
  std::size_t concept_count() const { return concepts_.size(); }
  bool renormalized() const { return renormalized_; }

  // All concepts with P(word|c) > 0, sorted by concept id.
  std::span<const ConceptCandidate> concepts_of(WordId word) const {
    if (word >= word_to_concepts_.size()) throw Error("concepts_of: word id out of range");
    return word_to_concepts_[word];
  }

  EntityKind classify_token(WordId word) const {
    return concepts_of(word).empty() ? EntityKind::atomic : EntityKind::concept_backed;
  }

  // Words of concept c with their probabilities, sorted by word id.
  std::span<const ConceptWord> words_of(ConceptId c) const { return concept_to_words_.at(c); }

  std::uint64_t hash() const {
    Fnv1a h;
    h.u64(words_.hash());
    h.u64(concepts_.size());
    for (ConceptId c = 0; c < concepts_.size(); ++c) {
      h.str(concepts_.word(c));
      h.u64(concept_to_words_[c].size());
      for (const auto& e : concept_to_words_[c]) {
        h.u64(e.word);
        h.f64(e.prob);
        h.f64(e.raw_prob);
      }
    }
    return h.value();
  }

  friend bool operator==(const ConceptKB& a, const ConceptKB& b) {
    return a.words_ == b.words_ && a.concepts_ == b.concepts_ &&
           a.word_to_concepts_ == b.word_to_concepts_ && a.concept_to_words_ == b.concept_to_words_;
  }

  // Rebuilds the word -> concept view from the concept -> word view. Used to
  // check the two views are exact transposes.
  std::vector<std::vector<ConceptCandidate>> transpose_of_concept_rows() const {
    std::vector<std::vector<ConceptCandidate>> out(words_.size());
    for (ConceptId c = 0; c < concept_to_words_.size(); ++c)
      for (const auto& e : concept_to_words_[c]) out[e.word].push_back({c, e.prob, e.raw_prob});
    return out;
  }
  const std::vector<std::vector<ConceptCandidate>>& word_rows() const { return word_to_concepts_; }

 private:
  friend ConceptKB load_kb(std::istream&, const ClusterMap*, const KbLoadOptions&, const std::string&);

  Vocabulary words_;
  Vocabulary concepts_;
  std::vector<std::vector<ConceptCandidate>> word_to_concepts_;
  std::vector<std::vector<ConceptWord>> concept_to_words_;
  bool renormalized_ = true;
};

// Parses a KB stream, merges clustered concepts by uniform averaging of their
// rows, optionally restricts to a target vocabulary, and renormalizes.
inline ConceptKB load_kb(std::istream& in, const ClusterMap* clusters, const KbLoadOptions& opts = {},
                         const std::string& source = "<kb>") {
  struct RawRow {
    std::vector<std::pair<std::string, double>> entries;
  };
  Vocabulary raw_concepts;
  std::vector<RawRow> rows;
  std::map<std::pair<std::uint32_t, std::string>, std::size_t> seen;

  std::size_t lineno = 0;
  for (const auto& line : read_lines(in)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    auto f = detail::split_tabs(line);
    if (f.size() != 3 || f[0].empty() || f[1].empty()) {
      throw ParseError(source, lineno, "expected word<TAB>concept<TAB>probability");
    }
    double p = 0.0;
    try {
      std::size_t used = 0;
      p = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "probability '" + f[2] + "' is not a number");
    }
    if (!std::isfinite(p) || p <= 0.0 || p > 1.0) {
      throw ParseError(source, lineno, "probability " + f[2] + " outside (0,1]");
    }
    auto cid = raw_concepts.add(f[1]);
    if (cid == rows.size()) rows.emplace_back();
    if (!seen.emplace(std::make_pair(cid, f[0]), lineno).second) {
      throw ParseError(source, lineno, "duplicate entry for (" + f[0] + ", " + f[1] + ")");
    }
    rows[cid].entries.emplace_back(f[0], p);
  }

  if (clusters) {
    for (const auto& [name, line] : clusters->lines()) {
      if (!raw_concepts.contains(name)) {
        throw ParseError(clusters->source(), line, "cluster references unknown concept '" + name + "'");
      }
    }
  }

  // Group raw concepts under their final (cluster or own) name.
  Vocabulary merged_names;
  std::vector<std::vector<std::uint32_t>> members;
  for (std::uint32_t c = 0; c < raw_concepts.size(); ++c) {
    std::string name = raw_concepts.word(c);
    if (clusters) {
      if (auto cl = clusters->cluster_of(name)) name = *cl;
    }
    auto m = merged_names.add(name);
    if (m == members.size()) members.emplace_back();
    members[m].push_back(c);
  }

  ConceptKB kb;
  kb.renormalized_ = opts.renormalize;
  if (opts.target_vocab) kb.words_ = *opts.target_vocab;

  std::vector<std::vector<std::pair<WordId, double>>> merged_rows;
  std::vector<std::string> merged_kept;
  for (std::uint32_t m = 0; m < members.size(); ++m) {
    std::vector<std::string> order;
    std::unordered_map<std::string, double> mass;
    for (auto c : members[m]) {
      for (const auto& [w, p] : rows[c].entries) {
        auto [it, fresh] = mass.emplace(w, 0.0);
        if (fresh) order.push_back(w);
        it->second += p;
      }
    }
    const double share = 1.0 / static_cast<double>(members[m].size());
    std::vector<std::pair<WordId, double>> row;
    for (const auto& w : order) {
      WordId id;
      if (opts.target_vocab) {
        auto found = opts.target_vocab->find(w);
        if (!found) continue;
        id = *found;
      } else {
        id = kb.words_.add(w);
      }
      row.emplace_back(id, mass[w] * share);
    }
    if (row.empty()) continue;
    merged_rows.push_back(std::move(row));
    merged_kept.push_back(merged_names.word(m));
  }

  kb.word_to_concepts_.resize(kb.words_.size());
  kb.concept_to_words_.resize(merged_rows.size());
  for (ConceptId c = 0; c < merged_rows.size(); ++c) {
    kb.concepts_.add(merged_kept[c]);
    auto& row = merged_rows[c];
    std::sort(row.begin(), row.end());
    double sum = 0.0;
    for (const auto& e : row) sum += e.second;
    if (!opts.renormalize && sum > 1.0 + 1e-9) {
      throw Error(source + ": concept '" + merged_kept[c] + "' has total probability " + std::to_string(sum) +
                  " > 1");
    }
    for (const auto& [w, raw] : row) {
      double p = opts.renormalize ? raw / sum : raw;
      kb.concept_to_words_[c].push_back({w, p, raw});
      kb.word_to_concepts_[w].push_back({c, p, raw});
    }
  }
  return kb;
}

inline ConceptKB load_kb(const std::string& kb_path, const std::optional<std::string>& cluster_path,
                         const KbLoadOptions& opts = {}) {
  std::optional<ClusterMap> clusters;
  if (cluster_path) clusters = ClusterMap::load(*cluster_path);
  auto in = open_input(kb_path);
  return load_kb(in, clusters ? &*clusters : nullptr, opts, kb_path);
}

inline std::span<const ConceptCandidate> concepts_of(const ConceptKB& kb, WordId word) {
  return kb.concepts_of(word);
}

inline EntityKind classify_token(const ConceptKB& kb, WordId word) { return kb.classify_token(word); }

// Writes the KB back out as word<TAB>concept<TAB>probability using the
// renormalized values.
inline void write_kb(std::ostream& out, const ConceptKB& kb) {
  out.precision(17);
  for (ConceptId c = 0; c < kb.concept_count(); ++c)
    for (const auto& e : kb.words_of(c))
      out << kb.words().word(e.word) << '\t' << kb.concepts().word(c) << '\t' << e.prob << '\n';
}

}  // namespace ctm
