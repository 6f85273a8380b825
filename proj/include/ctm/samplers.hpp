#pragma once

// Collapsed Gibbs update kernels for LDA, CLDA, Labeled LDA and CLLDA, and
// the sweep driver.
//
// Every kernel assumes token (d,i) has already been removed from the counts
// (SamplerState::remove) and does not mutate the state; the caller adds the
// returned assignment back.
//
// Concept-backed token, weight of cell (k, c):
//   (beta + n_kc) / (E*beta + n_k) * (alpha_k + n_dk) / (sum(alpha) + n_d) * P(w|c)
// Atomic token with entity a, weight of topic k:
//   (beta + n_ka) / (E*beta + n_k) * (alpha_k + n_dk) / (sum(alpha) + n_d)
// The labeled kernels multiply every weight by the document's label indicator.

#include <chrono>
#include <numeric>
#include <vector>

#include "ctm/model_state.hpp"

namespace ctm {

struct KernelScratch {
  std::vector<double> cumulative;
};

namespace detail {

// Index of the cell selected by one uniform draw against the running sum.
// Zero-weight cells are never returned.
inline std::size_t draw_cumulative(const std::vector<double>& cum, Rng& rng) {
  const double total = cum.back();
  if (!(total > 0.0)) throw Error("sampling weights are all zero");
  const double target = uniform01(rng) * total;
  auto it = std::upper_bound(cum.begin(), cum.end(), target);
  // target rounded up to the total: take the last cell carrying weight
  if (it == cum.end()) it = std::lower_bound(cum.begin(), cum.end(), total);
  return static_cast<std::size_t>(it - cum.begin());
}

template <bool Masked>
TokenAssignment draw_site(const SamplerState& s, std::size_t d, std::size_t i, Rng& rng, KernelScratch& scratch) {
  const auto& c = s.counts();
  const auto& hp = s.hp();
  const std::size_t K = hp.topics;
  const double beta = hp.beta;
  const double beta_sum = beta * static_cast<double>(c.entities);
  const double doc_denom = hp.alpha_sum() + c.n_doc(d);
  const auto mask = s.topic_mask(d);
  auto& cum = scratch.cumulative;

  const auto cands = s.candidates(d, i);
  if (cands.empty()) {
    const EntityId a = s.entities().atomic_id_of_word[s.word(d, i)];
    if (a == kNoEntity) throw Error("token has neither concepts nor an atomic id");
    cum.resize(K);
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double w = (beta + c.n_topic_entity(k, a)) / (beta_sum + static_cast<double>(c.n_topic(k))) *
                 ((hp.alpha_of(k) + c.n_doc_topic(d, k)) / doc_denom);
      if constexpr (Masked) w *= static_cast<double>(mask[k]);
      acc += w;
      cum[k] = acc;
    }
    return {static_cast<TopicId>(detail::draw_cumulative(cum, rng)), a};
  }

  const std::size_t J = cands.size();
  cum.resize(K * J);
  double acc = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double topic_denom = beta_sum + static_cast<double>(c.n_topic(k));
    const double doc_part = (hp.alpha_of(k) + c.n_doc_topic(d, k)) / doc_denom;
    for (std::size_t j = 0; j < J; ++j) {
      double w = (beta + c.n_topic_entity(k, cands[j].concept_id)) / topic_denom * doc_part * s.kb_factor(cands[j]);
      if constexpr (Masked) w *= static_cast<double>(mask[k]);
      acc += w;
      cum[k * J + j] = acc;
    }
  }
  const auto cell = detail::draw_cumulative(cum, rng);
  return {static_cast<TopicId>(cell / J), cands[cell % J].concept_id};
}

}  // namespace detail

inline TokenAssignment sample_token_clda(const SamplerState& s, std::size_t d, std::size_t i, Rng& rng,
                                         KernelScratch& scratch) {
  return detail::draw_site<false>(s, d, i, rng, scratch);
}

inline TokenAssignment sample_token_cllda(const SamplerState& s, std::size_t d, std::size_t i, Rng& rng,
                                          KernelScratch& scratch) {
  return detail::draw_site<true>(s, d, i, rng, scratch);
}

// Three-layer kernel over word entities; applies the label indicator for
// Labeled LDA.
inline TokenAssignment sample_token_baseline(const SamplerState& s, std::size_t d, std::size_t i, Rng& rng,
                                             KernelScratch& scratch) {
  if (s.kb()) throw Error("baseline kernel used on a concept-layer state");
  if (s.hp().kind == ModelKind::llda) return detail::draw_site<true>(s, d, i, rng, scratch);
  return detail::draw_site<false>(s, d, i, rng, scratch);
}

inline TokenAssignment sample_token(const SamplerState& s, std::size_t d, std::size_t i, Rng& rng,
                                    KernelScratch& scratch) {
  switch (s.hp().kind) {
    case ModelKind::lda:
    case ModelKind::llda: return sample_token_baseline(s, d, i, rng, scratch);
    case ModelKind::clda: return sample_token_clda(s, d, i, rng, scratch);
    case ModelKind::cllda: return sample_token_cllda(s, d, i, rng, scratch);
  }
  throw Error("unknown model kind");
}

struct SweepLog {
  std::size_t sweep = 0;
  double log_likelihood = 0.0;
  double wall_time_s = 0.0;
};

struct GibbsReport {
  std::vector<SweepLog> sweeps;
  TopicModel model;
};

// Owns one chain: its state and its random stream.
class GibbsSampler {
 public:
  GibbsSampler(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const ConceptKB> kb,
               std::shared_ptr<const LabelSet> labels, const Hyperparameters& hp)
      : rng_(hp.seed), state_(init_state(std::move(corpus), std::move(kb), std::move(labels), hp, rng_)) {}

  GibbsSampler(SamplerState state, Rng rng) : rng_(std::move(rng)), state_(std::move(state)) {}

  // One full pass, each token visited exactly once. Document-major order
  // unless the state's hyperparameters ask for random scan.
  void sweep() {
    const auto& corpus = state_.corpus();
    if (state_.hp().random_scan) {
      if (order_.empty()) {
        for (std::size_t d = 0; d < corpus.doc_count(); ++d)
          for (std::size_t i = 0; i < corpus.doc_length(d); ++i) order_.emplace_back(d, i);
      }
      for (std::size_t n = order_.size(); n > 1; --n) std::swap(order_[n - 1], order_[uniform_index(rng_, n)]);
      for (auto [d, i] : order_) step(d, i);
      return;
    }
    for (std::size_t d = 0; d < corpus.doc_count(); ++d)
      for (std::size_t i = 0; i < corpus.doc_length(d); ++i) step(d, i);
  }

  const SamplerState& state() const { return state_; }
  Rng& rng() { return rng_; }

 private:
  void step(std::size_t d, std::size_t i) {
    state_.remove(d, i);
    state_.add(d, i, sample_token(state_, d, i, rng_, scratch_));
  }

  Rng rng_;
  SamplerState state_;
  KernelScratch scratch_;
  std::vector<std::pair<std::size_t, std::size_t>> order_;
};

// Runs hp.iterations sweeps and freezes the final estimates (or their
// average over the last hp.average_last sweeps).
inline GibbsReport run_gibbs(GibbsSampler& sampler, bool log_likelihood = true) {
  const auto& hp = sampler.state().hp();
  GibbsReport report;
  report.sweeps.reserve(hp.iterations);
  const std::size_t avg = hp.average_last > 1 ? hp.average_last : 0;
  Matrix phi_sum, theta_sum;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t it = 0; it < hp.iterations; ++it) {
    sampler.sweep();
    SweepLog log;
    log.sweep = it + 1;
    log.log_likelihood = log_likelihood ? log_joint(sampler.state()) : 0.0;
    log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.sweeps.push_back(log);
    if (avg && it + avg >= hp.iterations) {
      auto phi = estimate_phi(sampler.state());
      auto theta = estimate_theta(sampler.state());
      if (phi_sum.rows() == 0) {
        phi_sum = std::move(phi);
        theta_sum = std::move(theta);
      } else {
        for (std::size_t n = 0; n < phi.data().size(); ++n) phi_sum.data()[n] += phi.data()[n];
        for (std::size_t n = 0; n < theta.data().size(); ++n) theta_sum.data()[n] += theta.data()[n];
      }
    }
  }
  if (avg) {
    for (auto& v : phi_sum.data()) v /= static_cast<double>(avg);
    for (auto& v : theta_sum.data()) v /= static_cast<double>(avg);
    report.model = make_model(sampler.state(), std::move(phi_sum), std::move(theta_sum));
  } else {
    report.model = make_model(sampler.state());
  }
  return report;
}

inline GibbsReport run_gibbs(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const ConceptKB> kb,
                             std::shared_ptr<const LabelSet> labels, const Hyperparameters& hp,
                             bool log_likelihood = true) {
  GibbsSampler sampler(std::move(corpus), std::move(kb), std::move(labels), hp);
  return run_gibbs(sampler, log_likelihood);
}

}  // namespace ctm
