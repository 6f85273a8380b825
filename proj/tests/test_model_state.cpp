#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace ctm;
using ctm::testing::corpus_of;
using ctm::testing::hyper;
using ctm::testing::kb_of;

namespace {

struct Inputs {
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const ConceptKB> kb;
};

Inputs army_inputs() {
  Inputs in;
  in.corpus = std::make_shared<Corpus>(corpus_of({"zorb tank blip zorb", "gun torpedo tank"}));
  in.kb = std::make_shared<ConceptKB>(
      kb_of("tank\tarmy\t0.6\ngun\tarmy\t0.4\ntorpedo\tnavy\t0.7\ngun\tnavy\t0.3\n", &in.corpus->vocab()));
  return in;
}

}  // namespace

TEST(EntitySpace, ConceptsFirstThenAtomicInFirstOccurrenceOrder) {
  auto in = army_inputs();
  auto es = build_entity_space(*in.corpus, in.kb.get());
  EXPECT_EQ(es.concept_count, 2u);
  ASSERT_EQ(es.atomic_count(), 2u);
  EXPECT_EQ(in.corpus->vocab().word(es.atomic_word_of[0]), "zorb");
  EXPECT_EQ(in.corpus->vocab().word(es.atomic_word_of[1]), "blip");
  EXPECT_EQ(es.atomic_id_of_word[*in.corpus->vocab().find("zorb")], 2u);
  EXPECT_EQ(es.atomic_id_of_word[*in.corpus->vocab().find("tank")], kNoEntity);
}

TEST(EntitySpace, WithoutKbEveryWordIsItsOwnEntity) {
  auto in = army_inputs();
  auto es = build_entity_space(*in.corpus, nullptr);
  EXPECT_EQ(es.size(), in.corpus->vocab_size());
  for (WordId w = 0; w < in.corpus->vocab_size(); ++w) EXPECT_EQ(es.atomic_id_of_word[w], w);
}

TEST(InitState, CountsMatchAssignments) {
  auto in = army_inputs();
  for (auto kind : {ModelKind::lda, ModelKind::clda}) {
    auto s = init_state(in.corpus, in.kb, nullptr, hyper(kind, 3, 11));
    EXPECT_EQ(s.counts(), s.rebuild_counts());
    EXPECT_EQ(s.token_count(), in.corpus->token_count());
    for (std::size_t d = 0; d < s.doc_count(); ++d) {
      for (std::size_t i = 0; i < in.corpus->doc_length(d); ++i) {
        const auto a = s.assignment(d, i);
        EXPECT_LT(a.topic, 3u);
        auto cands = s.candidates(d, i);
        if (cands.empty()) {
          EXPECT_EQ(a.entity, s.entities().atomic_id_of_word[s.word(d, i)]);
        } else {
          bool found = false;
          for (const auto& c : cands) found = found || c.concept_id == a.entity;
          EXPECT_TRUE(found);
        }
      }
    }
  }
}

TEST(InitState, SameSeedSameState) {
  auto in = army_inputs();
  auto a = init_state(in.corpus, in.kb, nullptr, hyper(ModelKind::clda, 4, 5));
  auto b = init_state(in.corpus, in.kb, nullptr, hyper(ModelKind::clda, 4, 5));
  auto c = init_state(in.corpus, in.kb, nullptr, hyper(ModelKind::clda, 4, 6));
  EXPECT_EQ(a.assignments(), b.assignments());
  EXPECT_NE(a.assignments(), c.assignments());
}

TEST(InitState, LabeledTopicsStayInsideLabelSets) {
  auto corpus = std::make_shared<Corpus>(corpus_of({"a b c d e f g", "h i j k", "a h"}));
  auto labels = std::make_shared<LabelSet>(attach_labels(*corpus, {{"x"}, {"y", "z"}, {"z"}}));
  auto s = init_state(corpus, nullptr, labels, hyper(ModelKind::llda, 3, 2));
  for (std::size_t d = 0; d < s.doc_count(); ++d) {
    auto ls = labels->labels(d);
    for (std::size_t i = 0; i < corpus->doc_length(d); ++i)
      EXPECT_NE(std::find(ls.begin(), ls.end(), s.assignment(d, i).topic), ls.end());
  }
}

TEST(InitState, RejectsBadCombinations) {
  auto in = army_inputs();
  EXPECT_THROW(init_state(in.corpus, nullptr, nullptr, hyper(ModelKind::clda, 2)), Error);
  EXPECT_THROW(init_state(in.corpus, nullptr, nullptr, hyper(ModelKind::llda, 2)), Error);
  auto stale = std::make_shared<ConceptKB>(kb_of("tank\tarmy\t1\n"));
  EXPECT_THROW(init_state(in.corpus, stale, nullptr, hyper(ModelKind::clda, 2)), Error);

  auto labels = std::make_shared<LabelSet>(attach_labels(*in.corpus, {{"x"}, {"y"}}));
  EXPECT_THROW(init_state(in.corpus, nullptr, labels, hyper(ModelKind::llda, 3)), Error);
  EXPECT_NO_THROW(init_state(in.corpus, nullptr, labels, hyper(ModelKind::llda, 2)));

  auto hp = hyper(ModelKind::lda, 0);
  EXPECT_THROW(init_state(in.corpus, nullptr, nullptr, hp), Error);
  hp = hyper(ModelKind::lda, 2);
  hp.beta = 0.0;
  EXPECT_THROW(init_state(in.corpus, nullptr, nullptr, hp), Error);
  hp = hyper(ModelKind::lda, 2);
  hp.alpha_vector = {0.1};
  EXPECT_THROW(init_state(in.corpus, nullptr, nullptr, hp), Error);
}

TEST(Estimators, HandCountedFixture) {
  // one document "p q p r", K = 2, every word atomic
  auto corpus = std::make_shared<Corpus>(corpus_of({"p q p r"}));
  auto hp = hyper(ModelKind::lda, 2);
  hp.alpha_vector = {0.2, 0.6};
  hp.beta = 0.5;
  auto s = init_state(corpus, nullptr, nullptr, hp);
  // p->0, q->1, p->0, r->0: n_0 = {p:2, r:1}, n_1 = {q:1}
  s.set_assignments({{0, 0}, {1, 1}, {0, 0}, {0, 2}});
  auto phi = estimate_phi(s);
  EXPECT_DOUBLE_EQ(phi(0, 0), 2.5 / 4.5);
  EXPECT_DOUBLE_EQ(phi(0, 1), 0.5 / 4.5);
  EXPECT_DOUBLE_EQ(phi(0, 2), 1.5 / 4.5);
  EXPECT_DOUBLE_EQ(phi(1, 1), 1.5 / 2.5);
  auto theta = estimate_theta(s);
  EXPECT_DOUBLE_EQ(theta(0, 0), 3.2 / 4.8);
  EXPECT_DOUBLE_EQ(theta(0, 1), 1.6 / 4.8);
}

TEST(Estimators, RowsAreDistributions) {
  auto in = army_inputs();
  auto s = init_state(in.corpus, in.kb, nullptr, hyper(ModelKind::clda, 3, 9));
  auto phi = estimate_phi(s);
  auto theta = estimate_theta(s);
  for (std::size_t k = 0; k < phi.rows(); ++k) {
    double sum = 0.0;
    for (double v : phi.row(k)) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  for (std::size_t d = 0; d < theta.rows(); ++d) {
    double sum = 0.0;
    for (double v : theta.row(d)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(LogJoint, SingleTokenReducesToKbFactor) {
  // with K = 1 and E = 2 the Dirichlet-multinomial terms are
  // Gamma(2b)/Gamma(2b+1) * Gamma(b+1)/Gamma(b) = 1/2 and the document term is 1
  auto corpus = std::make_shared<Corpus>(corpus_of({"gun"}));
  auto kb = std::make_shared<ConceptKB>(kb_of("gun\tarmy\t0.4\ngun\tnavy\t0.3\n", &corpus->vocab(), false));
  auto s = init_state(corpus, kb, nullptr, hyper(ModelKind::clda, 1));
  s.set_assignments({{0, 1}});
  EXPECT_NEAR(log_joint(s), std::log(0.5) + std::log(0.3), 1e-12);
}

TEST(MakeModel, CarriesMetadata) {
  auto in = army_inputs();
  auto s = init_state(in.corpus, in.kb, nullptr, hyper(ModelKind::clda, 2, 3));
  auto m = make_model(s);
  EXPECT_EQ(m.concept_names, (std::vector<std::string>{"army", "navy"}));
  EXPECT_EQ(m.entity_count(), 4u);
  EXPECT_EQ(m.entity_name(2), "zorb");
  EXPECT_EQ(m.vocab_hash, in.corpus->vocab().hash());
  EXPECT_EQ(m.kb_hash, in.kb->hash());
  EXPECT_EQ(m.topic_name(1), "topic 1");
}
