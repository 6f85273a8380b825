#pragma once

// Forward simulation of the four-layer generative process, for synthetic
// corpora with known ground truth.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ctm/concept_kb.hpp"
#include "ctm/corpus.hpp"

namespace ctm {

struct GenConfig {
  std::size_t topics = 5;
  std::size_t docs = 100;
  double mean_length = 50.0;
  double alpha = 0.1;
  double beta = 0.1;
  // Probability that a token is drawn from the atomic block (xi = 0).
  double atomic_fraction = 0.3;
  // Number of atomic words ("aw0", "aw1", ...) in the atomic block.
  std::size_t atomic_vocab = 200;
  std::uint64_t seed = 1;

  void validate() const {
    if (topics == 0) throw Error("generate: topics must be positive");
    if (docs == 0 || !(mean_length > 0.0)) throw Error("generate: configuration yields zero expected tokens");
    if (!(alpha > 0.0) || !(beta > 0.0)) throw Error("generate: alpha and beta must be positive");
    if (!(atomic_fraction >= 0.0 && atomic_fraction <= 1.0)) throw Error("generate: atomic fraction outside [0,1]");
    if (atomic_fraction > 0.0 && atomic_vocab == 0) throw Error("generate: atomic tokens requested with no atomic words");
  }
};

inline constexpr const char* kLengthLaw = "poisson(mean_length), zero draws redrawn";

// Symmetric Dirichlet draw. Works in log space so very small concentrations
// do not underflow: G ~ Gamma(a+1) * U^(1/a) is Gamma(a).
inline std::vector<double> sample_dirichlet(std::size_t n, double a, Rng& rng) {
  std::gamma_distribution<double> gamma(a + 1.0, 1.0);
  std::vector<double> lg(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (auto& v : lg) {
    const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    v = std::log(gamma(rng)) + std::log(u) / a;
    mx = std::max(mx, v);
  }
  double sum = 0.0;
  for (auto& v : lg) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : lg) v /= sum;
  return lg;
}

inline std::size_t sample_categorical(std::span<const double> w, Rng& rng) {
  double total = 0.0;
  for (double x : w) total += x;
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    acc += w[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

struct GroundTruth {
  Matrix theta;  // D x K
  Matrix phi;    // K x E; concepts of the KB first, then atomic words
  std::vector<std::string> entity_names;
  std::size_t concept_count = 0;
  std::vector<std::vector<TopicId>> z;
  std::vector<std::vector<EntityId>> entity;

  nlohmann::json to_json(const GenConfig& cfg) const {
    nlohmann::json j;
    j["config"] = {{"topics", cfg.topics},       {"docs", cfg.docs},
                   {"mean_length", cfg.mean_length}, {"alpha", cfg.alpha},
                   {"beta", cfg.beta},           {"atomic_fraction", cfg.atomic_fraction},
                   {"atomic_vocab", cfg.atomic_vocab}, {"seed", cfg.seed},
                   {"length_law", kLengthLaw}};
    j["concept_count"] = concept_count;
    j["entities"] = entity_names;
    auto rows = [](const Matrix& m) {
      std::vector<std::vector<double>> out;
      for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
      return out;
    };
    j["theta"] = rows(theta);
    j["phi"] = rows(phi);
    j["z"] = z;
    j["entity"] = entity;
    return j;
  }
};

struct GeneratedCorpus {
  std::vector<std::vector<std::string>> docs;  // token strings
  GroundTruth truth;

  Corpus corpus() const { return Corpus::from_tokens(docs); }
  std::vector<std::string> lines() const {
    std::vector<std::string> out;
    for (const auto& d : docs) {
      std::string s;
      for (const auto& w : d) {
        if (!s.empty()) s += ' ';
        s += w;
      }
      out.push_back(std::move(s));
    }
    return out;
  }
};

inline std::string atomic_word_name(std::size_t j) { return "aw" + std::to_string(j); }

// phi_k ~ Dir(beta) over concepts + atomic words; theta_d ~ Dir(alpha); per
// token z ~ theta_d, xi ~ Bernoulli(1 - atomic_fraction); xi = 0 emits an
// atomic word from phi_z's atomic block, xi = 1 draws a concept from phi_z's
// concept block and then a word from that concept's lambda row.
inline GeneratedCorpus generate_corpus(const GenConfig& cfg, const ConceptKB& kb) {
  cfg.validate();
  const std::size_t R = kb.concept_count();
  const std::size_t m = cfg.atomic_fraction > 0.0 ? cfg.atomic_vocab : 0;
  if (cfg.atomic_fraction < 1.0 && R == 0) throw Error("generate: concept tokens requested but the KB is empty");
  const std::size_t E = R + m;
  const std::size_t K = cfg.topics;

  Rng rng(cfg.seed);
  GeneratedCorpus out;
  auto& t = out.truth;
  t.concept_count = R;
  for (ConceptId c = 0; c < R; ++c) t.entity_names.push_back(kb.concepts().word(c));
  for (std::size_t j = 0; j < m; ++j) t.entity_names.push_back(atomic_word_name(j));

  t.phi = Matrix(K, E);
  for (std::size_t k = 0; k < K; ++k) {
    auto row = sample_dirichlet(E, cfg.beta, rng);
    std::copy(row.begin(), row.end(), t.phi.row(k).begin());
  }
  t.theta = Matrix(cfg.docs, K);
  for (std::size_t d = 0; d < cfg.docs; ++d) {
    auto row = sample_dirichlet(K, cfg.alpha, rng);
    std::copy(row.begin(), row.end(), t.theta.row(d).begin());
  }

  std::vector<std::vector<double>> lambda(R);
  for (ConceptId c = 0; c < R; ++c)
    for (const auto& e : kb.words_of(c)) lambda[c].push_back(e.prob);

  std::poisson_distribution<long> length(cfg.mean_length);
  std::bernoulli_distribution concept_backed(1.0 - cfg.atomic_fraction);
  out.docs.resize(cfg.docs);
  t.z.resize(cfg.docs);
  t.entity.resize(cfg.docs);
  for (std::size_t d = 0; d < cfg.docs; ++d) {
    long n = 0;
    while (n == 0) n = length(rng);
    for (long i = 0; i < n; ++i) {
      const auto z = static_cast<TopicId>(sample_categorical(t.theta.row(d), rng));
      const auto phi = t.phi.row(z);
      EntityId e;
      std::string word;
      if (concept_backed(rng)) {
        e = static_cast<EntityId>(sample_categorical(phi.subspan(0, R), rng));
        const auto row = kb.words_of(e);
        word = kb.words().word(row[sample_categorical(lambda[e], rng)].word);
      } else {
        const auto j = sample_categorical(phi.subspan(R, m), rng);
        e = static_cast<EntityId>(R + j);
        word = atomic_word_name(j);
      }
      out.docs[d].push_back(std::move(word));
      t.z[d].push_back(z);
      t.entity[d].push_back(e);
    }
  }
  return out;
}

struct SyntheticKbConfig {
  std::size_t concepts = 30;
  std::size_t words_per_concept = 40;
  // Concept words are drawn from a shared pool ("cw0", "cw1", ...); a pool
  // smaller than concepts * words_per_concept makes concepts overlap.
  std::size_t word_pool = 1000;
  double lambda_concentration = 1.0;
  std::uint64_t seed = 7;
};

// Random KB: each concept takes distinct words from the pool with
// Dirichlet-distributed P(w|c). Returned in the KB file format.
inline std::string synthetic_kb_text(const SyntheticKbConfig& cfg) {
  if (cfg.concepts == 0 || cfg.words_per_concept == 0 || cfg.word_pool < cfg.words_per_concept) {
    throw Error("synthetic KB: need concepts > 0 and word_pool >= words_per_concept > 0");
  }
  Rng rng(cfg.seed);
  std::ostringstream out;
  out.precision(17);
  std::vector<std::size_t> pool(cfg.word_pool);
  for (std::size_t c = 0; c < cfg.concepts; ++c) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg.words_per_concept; ++i) std::swap(pool[i], pool[i + uniform_index(rng, cfg.word_pool - i)]);
    auto lambda = sample_dirichlet(cfg.words_per_concept, cfg.lambda_concentration, rng);
    for (std::size_t i = 0; i < cfg.words_per_concept; ++i) {
      // keep every entry strictly positive after printing
      const double p = std::max(lambda[i], 1e-300);
      out << "cw" << pool[i] << '\t' << "concept" << c << '\t' << p << '\n';
    }
  }
  return out.str();
}

inline ConceptKB make_synthetic_kb(const SyntheticKbConfig& cfg) {
  std::istringstream in(synthetic_kb_text(cfg));
  return load_kb(in, nullptr, {}, "<synthetic>");
}

}  // namespace ctm
