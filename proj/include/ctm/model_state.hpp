#pragma once

// Gibbs chain state over the mixed entity space (concepts followed by atomic
// concepts), and the point estimates taken from it.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ctm/common.hpp"
#include "ctm/concept_kb.hpp"
#include "ctm/corpus.hpp"

namespace ctm {

enum class ModelKind { lda, clda, llda, cllda };

inline bool uses_kb(ModelKind k) { return k == ModelKind::clda || k == ModelKind::cllda; }
inline bool uses_labels(ModelKind k) { return k == ModelKind::llda || k == ModelKind::cllda; }

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::lda: return "lda";
    case ModelKind::clda: return "clda";
    case ModelKind::llda: return "llda";
    case ModelKind::cllda: return "cllda";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "lda") return ModelKind::lda;
  if (s == "clda") return ModelKind::clda;
  if (s == "llda") return ModelKind::llda;
  if (s == "cllda") return ModelKind::cllda;
  throw Error("unknown model kind '" + std::string(s) + "'");
}

// Which KB value enters the P(w|c) factor of the concept-backed update.
enum class KbFactor { raw, normalized };

struct Hyperparameters {
  double alpha = 0.01;
  std::vector<double> alpha_vector;  // per-topic; overrides `alpha` when non-empty
  double beta = 0.01;
  std::size_t topics = 1;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  ModelKind kind = ModelKind::lda;

  KbFactor kb_factor = KbFactor::raw;
  bool random_scan = false;
  // Average the estimates over this many final sweeps; 0 or 1 keeps the last.
  std::size_t average_last = 0;

  double alpha_of(std::size_t k) const { return alpha_vector.empty() ? alpha : alpha_vector[k]; }
  double alpha_sum() const {
    if (alpha_vector.empty()) return alpha * static_cast<double>(topics);
    double s = 0.0;
    for (double a : alpha_vector) s += a;
    return s;
  }

  void validate() const {
    if (topics < 1) throw Error("topic count K must be >= 1");
    if (iterations < 1) throw Error("iterations must be >= 1");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw Error("beta must be > 0");
    if (alpha_vector.empty()) {
      if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error("alpha must be > 0");
    } else {
      if (alpha_vector.size() != topics) throw Error("alpha vector length must equal K");
      for (double a : alpha_vector)
        if (!(a > 0.0) || !std::isfinite(a)) throw Error("alpha entries must be > 0");
    }
    if (average_last > iterations) throw Error("average_last exceeds iterations");
  }

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

// Concept ids 0..R-1, then atomic ids R..R+m-1 in first-occurrence order of
// the atomic words in the corpus.
struct EntitySpace {
  std::size_t concept_count = 0;
  std::vector<WordId> atomic_word_of;       // index: atomic id - R
  std::vector<EntityId> atomic_id_of_word;  // per vocab word; kNoEntity if concept-backed or unseen

  std::size_t size() const { return concept_count + atomic_word_of.size(); }
  std::size_t atomic_count() const { return atomic_word_of.size(); }
  bool is_concept(EntityId e) const { return e < concept_count; }

  friend bool operator==(const EntitySpace&, const EntitySpace&) = default;
};

// kb == nullptr gives the three-layer space: every word is its own entity.
inline EntitySpace build_entity_space(const Corpus& corpus, const ConceptKB* kb) {
  EntitySpace es;
  es.concept_count = kb ? kb->concept_count() : 0;
  es.atomic_id_of_word.assign(corpus.vocab_size(), kNoEntity);
  for (const auto& doc : corpus.docs()) {
    for (auto w : doc) {
      if (es.atomic_id_of_word[w] != kNoEntity) continue;
      if (kb && kb->classify_token(w) == EntityKind::concept_backed) continue;
      es.atomic_id_of_word[w] = static_cast<EntityId>(es.concept_count + es.atomic_word_of.size());
      es.atomic_word_of.push_back(w);
    }
  }
  return es;
}

struct TokenAssignment {
  TopicId topic = 0;
  EntityId entity = 0;
  friend bool operator==(const TokenAssignment&, const TokenAssignment&) = default;
};

struct CountTables {
  std::size_t topics = 0;
  std::size_t entities = 0;
  std::vector<std::int32_t> topic_entity;  // K x E, row-major
  std::vector<std::int64_t> topic_total;   // K
  std::vector<std::int32_t> doc_topic;     // D x K, row-major
  std::vector<std::int32_t> doc_total;     // D

  CountTables() = default;
  CountTables(std::size_t docs, std::size_t k, std::size_t e)
      : topics(k), entities(e), topic_entity(k * e, 0), topic_total(k, 0), doc_topic(docs * k, 0), doc_total(docs, 0) {}

  std::int32_t n_topic_entity(std::size_t k, std::size_t e) const { return topic_entity[k * entities + e]; }
  std::int64_t n_topic(std::size_t k) const { return topic_total[k]; }
  std::int32_t n_doc_topic(std::size_t d, std::size_t k) const { return doc_topic[d * topics + k]; }
  std::int32_t n_doc(std::size_t d) const { return doc_total[d]; }

  void add(std::size_t d, TokenAssignment a, int delta) {
    topic_entity[a.topic * entities + a.entity] += delta;
    topic_total[a.topic] += delta;
    doc_topic[d * topics + a.topic] += delta;
    doc_total[d] += delta;
  }

  friend bool operator==(const CountTables&, const CountTables&) = default;
};

// Frozen estimates plus everything needed to evaluate and persist them.
struct TopicModel {
  Hyperparameters hp;
  Vocabulary vocab;
  std::vector<std::string> concept_names;
  std::vector<std::vector<ConceptWord>> concept_words;  // lambda rows, sorted by word id
  std::vector<WordId> atomic_word_of;
  std::vector<std::string> topic_names;  // label names for labeled kinds, else empty
  std::uint64_t kb_hash = 0;
  std::uint64_t vocab_hash = 0;
  Matrix phi;    // K x E
  Matrix theta;  // D x K

  std::size_t topics() const { return phi.rows(); }
  std::size_t entity_count() const { return phi.cols(); }
  std::size_t concept_count() const { return concept_names.size(); }

  std::string entity_name(EntityId e) const {
    if (e < concept_names.size()) return concept_names[e];
    return vocab.word(atomic_word_of.at(e - concept_names.size()));
  }
  std::string topic_name(TopicId k) const {
    return k < topic_names.size() ? topic_names[k] : "topic " + std::to_string(k);
  }

  friend bool operator==(const TopicModel& a, const TopicModel& b) {
    return a.hp == b.hp && a.vocab == b.vocab && a.concept_names == b.concept_names &&
           a.concept_words == b.concept_words && a.atomic_word_of == b.atomic_word_of &&
           a.topic_names == b.topic_names && a.kb_hash == b.kb_hash && a.vocab_hash == b.vocab_hash &&
           a.phi == b.phi && a.theta == b.theta;
  }
};

class SamplerState {
 public:
  SamplerState(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const ConceptKB> kb,
               std::shared_ptr<const LabelSet> labels, Hyperparameters hp)
      : corpus_(std::move(corpus)), kb_(std::move(kb)), labels_(std::move(labels)), hp_(std::move(hp)) {
    const auto D = corpus_->doc_count();
    offsets_.resize(D + 1, 0);
    for (std::size_t d = 0; d < D; ++d) offsets_[d + 1] = offsets_[d] + corpus_->doc_length(d);
    entities_ = build_entity_space(*corpus_, uses_kb(hp_.kind) ? kb_.get() : nullptr);
    assignments_.resize(offsets_[D]);
    counts_ = CountTables(D, hp_.topics, entities_.size());

    topic_mask_.assign(D * hp_.topics, 1);
    if (uses_labels(hp_.kind)) {
      for (std::size_t d = 0; d < D; ++d) {
        std::fill_n(topic_mask_.begin() + static_cast<std::ptrdiff_t>(d * hp_.topics), hp_.topics, 0);
        for (auto l : labels_->labels(d)) topic_mask_[d * hp_.topics + l] = 1;
      }
    }
  }

  const Corpus& corpus() const { return *corpus_; }
  const ConceptKB* kb() const { return uses_kb(hp_.kind) ? kb_.get() : nullptr; }
  const LabelSet* labels() const { return labels_.get(); }
  const Hyperparameters& hp() const { return hp_; }
  const EntitySpace& entities() const { return entities_; }
  const CountTables& counts() const { return counts_; }

  std::size_t doc_count() const { return corpus_->doc_count(); }
  std::size_t token_count() const { return assignments_.size(); }
  std::size_t flat_index(std::size_t d, std::size_t i) const { return offsets_[d] + i; }
  WordId word(std::size_t d, std::size_t i) const { return corpus_->doc(d)[i]; }

  const TokenAssignment& assignment(std::size_t d, std::size_t i) const { return assignments_[offsets_[d] + i]; }
  const std::vector<TokenAssignment>& assignments() const { return assignments_; }

  // 1 where topic k is admissible for document d (the label indicator).
  std::span<const std::uint8_t> topic_mask(std::size_t d) const {
    return {topic_mask_.data() + d * hp_.topics, hp_.topics};
  }

  // Candidate concepts of token (d,i); empty for atomic tokens.
  std::span<const ConceptCandidate> candidates(std::size_t d, std::size_t i) const {
    const auto* k = kb();
    if (!k) return {};
    return k->concepts_of(word(d, i));
  }

  double kb_factor(const ConceptCandidate& c) const {
    return hp_.kb_factor == KbFactor::raw ? c.raw_prob : c.prob;
  }

  // Removes token (d,i) from the counts (the leave-one-out view).
  void remove(std::size_t d, std::size_t i) { counts_.add(d, assignment(d, i), -1); }

  // Stores a new assignment for (d,i) and adds it to the counts.
  void add(std::size_t d, std::size_t i, TokenAssignment a) {
    assignments_[offsets_[d] + i] = a;
    counts_.add(d, a, +1);
  }

  // Replaces every assignment and rebuilds the counts.
  void set_assignments(std::vector<TokenAssignment> a) {
    if (a.size() != assignments_.size()) throw Error("set_assignments: size mismatch");
    assignments_ = std::move(a);
    counts_ = rebuild_counts();
  }

  CountTables rebuild_counts() const {
    CountTables t(doc_count(), hp_.topics, entities_.size());
    for (std::size_t d = 0; d < doc_count(); ++d)
      for (std::size_t i = 0; i < corpus_->doc_length(d); ++i) t.add(d, assignment(d, i), +1);
    return t;
  }

  std::shared_ptr<const Corpus> corpus_ptr() const { return corpus_; }
  std::shared_ptr<const ConceptKB> kb_ptr() const { return kb_; }
  std::shared_ptr<const LabelSet> labels_ptr() const { return labels_; }

 private:
  std::shared_ptr<const Corpus> corpus_;
  std::shared_ptr<const ConceptKB> kb_;
  std::shared_ptr<const LabelSet> labels_;
  Hyperparameters hp_;
  EntitySpace entities_;
  std::vector<std::size_t> offsets_;
  std::vector<TokenAssignment> assignments_;
  CountTables counts_;
  std::vector<std::uint8_t> topic_mask_;
};

// Checks the kind/input combination and returns a state with a seeded random
// initial assignment. `rng` continues into the sampler so the whole chain is
// fixed by the seed.
inline SamplerState init_state(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const ConceptKB> kb,
                               std::shared_ptr<const LabelSet> labels, const Hyperparameters& hp, Rng& rng) {
  hp.validate();
  if (!corpus || corpus->doc_count() == 0 || corpus->token_count() == 0) throw Error("init_state: empty corpus");
  if (uses_kb(hp.kind)) {
    if (!kb) throw Error(to_string(hp.kind) + " requires a concept knowledge base");
    if (kb->words().size() != corpus->vocab_size() || kb->words().hash() != corpus->vocab().hash()) {
      throw Error("knowledge base word table does not match the corpus vocabulary; load it with target_vocab");
    }
  }
  if (uses_labels(hp.kind)) {
    if (!labels) throw Error(to_string(hp.kind) + " requires document labels");
    if (labels->doc_count() != corpus->doc_count()) throw Error("label sets do not align with documents");
    if (labels->label_count() != hp.topics) {
      throw Error("labeled models need K equal to the label count (" + std::to_string(labels->label_count()) + ")");
    }
    for (std::size_t d = 0; d < labels->doc_count(); ++d) {
      if (labels->labels(d).empty()) throw Error("document " + std::to_string(d) + " has an empty label set");
    }
  }

  SamplerState s(std::move(corpus), std::move(kb), std::move(labels), hp);
  std::vector<TopicId> admissible;
  for (std::size_t d = 0; d < s.doc_count(); ++d) {
    admissible.clear();
    auto mask = s.topic_mask(d);
    for (TopicId k = 0; k < hp.topics; ++k)
      if (mask[k]) admissible.push_back(k);
    for (std::size_t i = 0; i < s.corpus().doc_length(d); ++i) {
      TokenAssignment a;
      a.topic = admissible[uniform_index(rng, admissible.size())];
      auto cands = s.candidates(d, i);
      if (cands.empty()) {
        a.entity = s.entities().atomic_id_of_word[s.word(d, i)];
      } else {
        double total = 0.0;
        for (const auto& c : cands) total += s.kb_factor(c);
        double u = uniform01(rng) * total;
        a.entity = cands.back().concept_id;
        double acc = 0.0;
        for (const auto& c : cands) {
          acc += s.kb_factor(c);
          if (u < acc) {
            a.entity = c.concept_id;
            break;
          }
        }
      }
      s.add(d, i, a);
    }
  }
  return s;
}

inline SamplerState init_state(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const ConceptKB> kb,
                               std::shared_ptr<const LabelSet> labels, const Hyperparameters& hp) {
  Rng rng(hp.seed);
  return init_state(std::move(corpus), std::move(kb), std::move(labels), hp, rng);
}

// phi_hat[k][e] = (beta + n_ke) / (E*beta + n_k)
inline Matrix estimate_phi(const CountTables& c, double beta) {
  Matrix phi(c.topics, c.entities);
  const double denom_prior = beta * static_cast<double>(c.entities);
  for (std::size_t k = 0; k < c.topics; ++k) {
    const double denom = denom_prior + static_cast<double>(c.n_topic(k));
    for (std::size_t e = 0; e < c.entities; ++e)
      phi(k, e) = (beta + c.n_topic_entity(k, e)) / denom;
  }
  return phi;
}

// theta_hat[d][k] = (alpha_k + n_dk) / (sum(alpha) + n_d)
inline Matrix estimate_theta(const CountTables& c, const Hyperparameters& hp) {
  Matrix theta(c.doc_total.size(), c.topics);
  const double asum = hp.alpha_sum();
  for (std::size_t d = 0; d < theta.rows(); ++d) {
    const double denom = asum + c.n_doc(d);
    for (std::size_t k = 0; k < c.topics; ++k) theta(d, k) = (hp.alpha_of(k) + c.n_doc_topic(d, k)) / denom;
  }
  return theta;
}

inline Matrix estimate_phi(const SamplerState& s) { return estimate_phi(s.counts(), s.hp().beta); }
inline Matrix estimate_theta(const SamplerState& s) { return estimate_theta(s.counts(), s.hp()); }

// Collapsed log joint log p(e, z | alpha, beta) + sum_i log P(w_i|c_i); the
// per-sweep progress statistic.
inline double log_joint(const SamplerState& s) {
  const auto& c = s.counts();
  const auto& hp = s.hp();
  const double beta = hp.beta;
  const double E = static_cast<double>(c.entities);
  const double lg_beta = std::lgamma(beta);
  double ll = 0.0;
  for (std::size_t k = 0; k < c.topics; ++k) {
    ll += std::lgamma(E * beta) - std::lgamma(E * beta + static_cast<double>(c.n_topic(k)));
    for (std::size_t e = 0; e < c.entities; ++e) {
      auto n = c.n_topic_entity(k, e);
      if (n) ll += std::lgamma(beta + n) - lg_beta;
    }
  }
  const double asum = hp.alpha_sum();
  for (std::size_t d = 0; d < s.doc_count(); ++d) {
    ll += std::lgamma(asum) - std::lgamma(asum + c.n_doc(d));
    for (std::size_t k = 0; k < c.topics; ++k) {
      auto n = c.n_doc_topic(d, k);
      if (n) ll += std::lgamma(hp.alpha_of(k) + n) - std::lgamma(hp.alpha_of(k));
    }
  }
  for (std::size_t d = 0; d < s.doc_count(); ++d) {
    for (std::size_t i = 0; i < s.corpus().doc_length(d); ++i) {
      auto e = s.assignment(d, i).entity;
      if (!s.entities().is_concept(e)) continue;
      for (const auto& cand : s.candidates(d, i)) {
        if (cand.concept_id == e) {
          ll += std::log(s.kb_factor(cand));
          break;
        }
      }
    }
  }
  return ll;
}

// Freezes the given estimates together with the state's metadata.
inline TopicModel make_model(const SamplerState& s, Matrix phi, Matrix theta) {
  TopicModel m;
  m.hp = s.hp();
  m.vocab = s.corpus().vocab();
  m.vocab_hash = m.vocab.hash();
  if (const auto* kb = s.kb()) {
    m.kb_hash = kb->hash();
    for (ConceptId c = 0; c < kb->concept_count(); ++c) {
      m.concept_names.push_back(kb->concepts().word(c));
      auto row = kb->words_of(c);
      m.concept_words.emplace_back(row.begin(), row.end());
    }
  }
  m.atomic_word_of = s.entities().atomic_word_of;
  if (uses_labels(s.hp().kind) && s.labels()) m.topic_names = s.labels()->label_vocab().words();
  m.phi = std::move(phi);
  m.theta = std::move(theta);
  return m;
}

inline TopicModel make_model(const SamplerState& s) { return make_model(s, estimate_phi(s), estimate_theta(s)); }

}  // namespace ctm
