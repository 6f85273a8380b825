#pragma once

// Evaluation: projection of topics onto words, perplexity, KL topic matching,
// top-term extraction, and exact posterior enumeration for tiny instances.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <vector>

#include "ctm/model_state.hpp"

namespace ctm {

// p(w|k) = sum_c phi[k][c] * lambda(w|c) + phi[k][atomic(w)]
inline std::vector<double> topic_word_distribution(const TopicModel& m, TopicId k) {
  if (k >= m.topics()) throw Error("topic id out of range");
  std::vector<double> p(m.vocab.size(), 0.0);
  const auto phi = m.phi.row(k);
  for (std::size_t c = 0; c < m.concept_words.size(); ++c)
    for (const auto& e : m.concept_words[c]) p[e.word] += phi[c] * e.prob;
  const std::size_t R = m.concept_count();
  for (std::size_t a = 0; a < m.atomic_word_of.size(); ++a) p[m.atomic_word_of[a]] += phi[R + a];
  return p;
}

// K x V matrix of projected word distributions.
inline Matrix word_distributions(const TopicModel& m) {
  Matrix out(m.topics(), m.vocab.size());
  for (TopicId k = 0; k < m.topics(); ++k) {
    auto p = topic_word_distribution(m, k);
    std::copy(p.begin(), p.end(), out.row(k).begin());
  }
  return out;
}

enum class EvalMode { training, foldin };
enum class OovPolicy { reject, skip };

inline std::string to_string(EvalMode m) { return m == EvalMode::training ? "training" : "foldin"; }
inline EvalMode parse_eval_mode(std::string_view s) {
  if (s == "training") return EvalMode::training;
  if (s == "foldin") return EvalMode::foldin;
  throw Error("unknown eval mode '" + std::string(s) + "'");
}

struct PerplexityOptions {
  EvalMode mode = EvalMode::training;
  OovPolicy oov = OovPolicy::reject;
  std::size_t foldin_sweeps = 500;
  std::uint64_t seed = 0;
};

struct PerplexityResult {
  double perplexity = 0.0;
  double log_likelihood = 0.0;
  std::size_t tokens = 0;
  std::size_t skipped = 0;
};

// exp(-sum_d log p(w_d) / sum_d N_d) with p(w_{d,i}) = sum_k theta[d][k] * p(w|k).
// docs hold model vocabulary ids.
inline PerplexityResult perplexity_from(const Matrix& theta, const Matrix& word_dist,
                                        const std::vector<std::vector<WordId>>& docs) {
  if (theta.rows() != docs.size()) throw Error("perplexity: theta rows do not match document count");
  PerplexityResult r;
  const std::size_t K = word_dist.rows();
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (auto w : docs[d]) {
      double p = 0.0;
      for (std::size_t k = 0; k < K; ++k) p += theta(d, k) * word_dist(k, w);
      r.log_likelihood += std::log(p);
      ++r.tokens;
    }
  }
  if (r.tokens == 0) throw Error("perplexity: no tokens to evaluate");
  r.perplexity = std::exp(-r.log_likelihood / static_cast<double>(r.tokens));
  return r;
}

namespace detail {

// Maps corpus tokens onto model word ids; words the model gives no mass are
// treated as out of vocabulary.
inline std::vector<std::vector<WordId>> map_to_model(const TopicModel& m, const Matrix& word_dist,
                                                     const Corpus& corpus, OovPolicy oov, std::size_t& skipped) {
  std::vector<WordId> remap(corpus.vocab_size(), std::numeric_limits<WordId>::max());
  const bool same = corpus.vocab().hash() == m.vocab_hash;
  for (WordId w = 0; w < corpus.vocab_size(); ++w) {
    std::optional<WordId> id = same ? std::optional<WordId>(w) : m.vocab.find(corpus.vocab().word(w));
    if (!id) continue;
    bool has_mass = false;
    for (std::size_t k = 0; k < word_dist.rows() && !has_mass; ++k) has_mass = word_dist(k, *id) > 0.0;
    if (has_mass) remap[w] = *id;
  }
  std::vector<std::vector<WordId>> docs(corpus.doc_count());
  skipped = 0;
  for (std::size_t d = 0; d < corpus.doc_count(); ++d) {
    for (auto w : corpus.doc(d)) {
      if (remap[w] == std::numeric_limits<WordId>::max()) {
        if (oov == OovPolicy::reject) throw Error("perplexity: word '" + corpus.vocab().word(w) + "' is not in the model");
        ++skipped;
        continue;
      }
      docs[d].push_back(remap[w]);
    }
  }
  return docs;
}

}  // namespace detail

// Estimates theta for unseen documents by Gibbs sampling topic assignments
// against the frozen projected word distributions.
inline Matrix fold_in(const TopicModel& m, const Matrix& word_dist, const std::vector<std::vector<WordId>>& docs,
                      std::size_t sweeps, std::uint64_t seed) {
  const std::size_t K = m.topics();
  Rng rng(seed);
  Matrix theta(docs.size(), K);
  std::vector<double> cum(K);
  std::vector<std::int32_t> n(K);
  std::vector<TopicId> z;
  const double asum = m.hp.alpha_sum();
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& doc = docs[d];
    std::fill(n.begin(), n.end(), 0);
    z.resize(doc.size());
    for (auto& t : z) {
      t = static_cast<TopicId>(uniform_index(rng, K));
      ++n[t];
    }
    for (std::size_t s = 0; s < sweeps; ++s) {
      for (std::size_t i = 0; i < doc.size(); ++i) {
        --n[z[i]];
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          acc += (m.hp.alpha_of(k) + n[k]) * word_dist(k, doc[i]);
          cum[k] = acc;
        }
        const double target = uniform01(rng) * acc;
        auto it = std::upper_bound(cum.begin(), cum.end(), target);
        if (it == cum.end()) it = std::lower_bound(cum.begin(), cum.end(), acc);
        z[i] = static_cast<TopicId>(it - cum.begin());
        ++n[z[i]];
      }
    }
    for (std::size_t k = 0; k < K; ++k)
      theta(d, k) = (m.hp.alpha_of(k) + n[k]) / (asum + static_cast<double>(doc.size()));
  }
  return theta;
}

inline PerplexityResult evaluate_perplexity(const TopicModel& m, const Corpus& corpus,
                                            const PerplexityOptions& opts = {}) {
  const auto wd = word_distributions(m);
  PerplexityResult r;
  auto docs = detail::map_to_model(m, wd, corpus, opts.oov, r.skipped);
  if (opts.mode == EvalMode::training) {
    if (corpus.doc_count() != m.theta.rows()) {
      throw Error("training-mode perplexity needs the training corpus (" + std::to_string(m.theta.rows()) +
                  " documents, got " + std::to_string(corpus.doc_count()) + ")");
    }
    auto res = perplexity_from(m.theta, wd, docs);
    res.skipped = r.skipped;
    return res;
  }
  auto theta = fold_in(m, wd, docs, opts.foldin_sweeps, opts.seed);
  auto res = perplexity_from(theta, wd, docs);
  res.skipped = r.skipped;
  return res;
}

inline double perplexity(const TopicModel& m, const Corpus& corpus, EvalMode mode = EvalMode::training) {
  PerplexityOptions o;
  o.mode = mode;
  return evaluate_perplexity(m, corpus, o).perplexity;
}

// ---------------------------------------------------------------------------
// Topic matching

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

struct TopicMatch {
  struct Pair {
    TopicId a;
    TopicId b;
    double kl;
  };
  std::vector<Pair> pairs;
};

// For each topic of `a`, the topic of `b` with the smallest
// KL(p_a(.|k) || p_b(.|k')) over word space; ties go to the lower index.
inline TopicMatch match_topics(const TopicModel& a, const TopicModel& b) {
  if (a.vocab_hash != b.vocab_hash) throw Error("match_topics: models have different vocabularies");
  const auto pa = word_distributions(a);
  const auto pb = word_distributions(b);
  TopicMatch out;
  for (TopicId k = 0; k < pa.rows(); ++k) {
    TopicMatch::Pair best{k, 0, std::numeric_limits<double>::infinity()};
    for (TopicId j = 0; j < pb.rows(); ++j) {
      double kl = kl_divergence(pa.row(k), pb.row(j));
      if (kl < best.kl) best = {k, j, kl};
    }
    out.pairs.push_back(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Top terms

enum class TermSpace { entities, words };

struct RankedTerm {
  std::uint32_t id;
  std::string name;
  double prob;
  bool is_concept;
};

inline std::vector<RankedTerm> top_terms(const TopicModel& m, TopicId k, std::size_t n, TermSpace space) {
  if (n < 1) throw Error("top_terms: n must be >= 1");
  std::vector<double> p;
  if (space == TermSpace::entities) {
    auto row = m.phi.row(k);
    p.assign(row.begin(), row.end());
  } else {
    p = topic_word_distribution(m, k);
  }
  std::vector<std::uint32_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0u);
  n = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](auto x, auto y) { return p[x] > p[y] || (p[x] == p[y] && x < y); });
  std::vector<RankedTerm> out;
  for (std::size_t r = 0; r < n; ++r) {
    const auto id = idx[r];
    if (space == TermSpace::entities) {
      out.push_back({id, m.entity_name(id), p[id], id < m.concept_count()});
    } else {
      out.push_back({id, m.vocab.word(id), p[id], false});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact enumeration

struct ExactPosterior {
  std::size_t configurations = 0;
  std::vector<std::vector<double>> topic_marginals;   // per token (document-major), K entries
  std::vector<std::vector<double>> entity_marginals;  // per token, E entries
};

inline constexpr std::size_t kMaxEnumeration = 10'000'000;

// Scores every joint (topic, entity) assignment by the collapsed joint
//   prod_d DirMult(n_d. | alpha) * prod_k DirMult(n_k. | beta) * prod_i P(w_i|c_i)
// and returns exact per-token marginals.
inline ExactPosterior exact_posterior(const Corpus& corpus, const ConceptKB* kb, const LabelSet* labels,
                                      const Hyperparameters& hp) {
  hp.validate();
  const bool concepts = uses_kb(hp.kind);
  const bool labeled = uses_labels(hp.kind);
  if (concepts && !kb) throw Error("exact_posterior: KB required");
  if (labeled && (!labels || labels->label_count() != hp.topics)) throw Error("exact_posterior: labels required");
  const std::size_t K = hp.topics;
  const std::size_t D = corpus.doc_count();

  const std::size_t R = concepts ? kb->concept_count() : 0;
  std::vector<EntityId> atomic(corpus.vocab_size(), kNoEntity);
  std::size_t E = R;
  for (const auto& doc : corpus.docs())
    for (auto w : doc)
      if (atomic[w] == kNoEntity && !(concepts && !kb->concepts_of(w).empty())) atomic[w] = static_cast<EntityId>(E++);

  struct Choice {
    std::size_t k;
    std::size_t e;
    double log_factor;
  };
  std::vector<std::vector<Choice>> choices;
  std::vector<std::size_t> doc_of;
  double configs = 1.0;
  for (std::size_t d = 0; d < D; ++d) {
    for (auto w : corpus.doc(d)) {
      std::vector<Choice> c;
      for (std::size_t k = 0; k < K; ++k) {
        if (labeled) {
          auto ls = labels->labels(d);
          if (std::find(ls.begin(), ls.end(), k) == ls.end()) continue;
        }
        if (atomic[w] != kNoEntity) {
          c.push_back({k, atomic[w], 0.0});
        } else {
          for (const auto& cand : kb->concepts_of(w)) {
            const double f = hp.kb_factor == KbFactor::raw ? cand.raw_prob : cand.prob;
            c.push_back({k, cand.concept_id, std::log(f)});
          }
        }
      }
      configs *= static_cast<double>(c.size());
      choices.push_back(std::move(c));
      doc_of.push_back(d);
    }
  }
  if (configs > static_cast<double>(kMaxEnumeration)) {
    throw Error("exact_posterior: " + std::to_string(configs) + " configurations exceed the enumeration bound");
  }

  const std::size_t N = choices.size();
  ExactPosterior out;
  out.configurations = static_cast<std::size_t>(configs);
  out.topic_marginals.assign(N, std::vector<double>(K, 0.0));
  out.entity_marginals.assign(N, std::vector<double>(E, 0.0));

  const double asum = hp.alpha_sum();
  const double bsum = hp.beta * static_cast<double>(E);
  std::vector<std::size_t> odo(N, 0);
  std::vector<int> ndk(D * K), nke(K * E), nk(K), nd(D);
  double log_max = -std::numeric_limits<double>::infinity();
  for (;;) {
    std::fill(ndk.begin(), ndk.end(), 0);
    std::fill(nke.begin(), nke.end(), 0);
    std::fill(nk.begin(), nk.end(), 0);
    std::fill(nd.begin(), nd.end(), 0);
    double score = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
      const auto& ch = choices[t][odo[t]];
      ++ndk[doc_of[t] * K + ch.k];
      ++nd[doc_of[t]];
      ++nke[ch.k * E + ch.e];
      ++nk[ch.k];
      score += ch.log_factor;
    }
    for (std::size_t d = 0; d < D; ++d) {
      score += std::lgamma(asum) - std::lgamma(asum + nd[d]);
      for (std::size_t k = 0; k < K; ++k) score += std::lgamma(hp.alpha_of(k) + ndk[d * K + k]) - std::lgamma(hp.alpha_of(k));
    }
    for (std::size_t k = 0; k < K; ++k) {
      score += std::lgamma(bsum) - std::lgamma(bsum + nk[k]);
      for (std::size_t e = 0; e < E; ++e) score += std::lgamma(hp.beta + nke[k * E + e]) - std::lgamma(hp.beta);
    }

    if (score > log_max) {
      const double rescale = std::exp(log_max - score);
      for (auto& row : out.topic_marginals)
        for (auto& v : row) v *= rescale;
      for (auto& row : out.entity_marginals)
        for (auto& v : row) v *= rescale;
      log_max = score;
    }
    const double w = std::exp(score - log_max);
    for (std::size_t t = 0; t < N; ++t) {
      const auto& ch = choices[t][odo[t]];
      out.topic_marginals[t][ch.k] += w;
      out.entity_marginals[t][ch.e] += w;
    }

    std::size_t t = 0;
    while (t < N && ++odo[t] == choices[t].size()) odo[t++] = 0;
    if (t == N) break;
  }
  for (std::size_t t = 0; t < N; ++t) {
    double z = 0.0;
    for (double v : out.topic_marginals[t]) z += v;
    for (auto& v : out.topic_marginals[t]) v /= z;
    for (auto& v : out.entity_marginals[t]) v /= z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct EvalRow {
  std::string model_kind;
  std::size_t topics = 0;
  std::string dataset;
  std::string mode;
  double perplexity = 0.0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
};

struct EvalReport {
  std::uint64_t model_hash = 0;
  std::vector<EvalRow> rows;

  static constexpr const char* kHeader = "model_kind,K,dataset,mode,perplexity,seed,wall_time_s";

  void write_csv(std::ostream& out) const {
    out << kHeader << '\n';
    for (const auto& r : rows) {
      std::ostringstream p, t;
      p << std::setprecision(17) << r.perplexity;
      t << std::fixed << std::setprecision(3) << r.wall_time_s;
      out << r.model_kind << ',' << r.topics << ',' << r.dataset << ',' << r.mode << ',' << p.str() << ','
          << r.seed << ',' << t.str() << '\n';
    }
  }
};

}  // namespace ctm
