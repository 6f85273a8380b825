#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace ctm;
using ctm::testing::corpus_of;
using ctm::testing::hyper;
using ctm::testing::kb_of;

namespace {

// Vocabulary a b c x; concepts c1 = {a .5, b .5}, c2 = {b .25, c .75}; x atomic.
TopicModel projection_model(std::vector<std::vector<double>> phi_rows, std::vector<std::vector<double>> theta_rows) {
  TopicModel m;
  m.vocab = Vocabulary(std::vector<std::string>{"a", "b", "c", "x"});
  m.vocab_hash = m.vocab.hash();
  m.concept_names = {"c1", "c2"};
  m.concept_words = {{{0, 0.5, 0.5}, {1, 0.5, 0.5}}, {{1, 0.25, 0.25}, {2, 0.75, 0.75}}};
  m.atomic_word_of = {3};
  m.hp.topics = phi_rows.size();
  m.phi = Matrix(phi_rows.size(), 3);
  for (std::size_t k = 0; k < phi_rows.size(); ++k)
    for (std::size_t e = 0; e < 3; ++e) m.phi(k, e) = phi_rows[k][e];
  m.theta = Matrix(theta_rows.size(), phi_rows.size());
  for (std::size_t d = 0; d < theta_rows.size(); ++d)
    for (std::size_t k = 0; k < phi_rows.size(); ++k) m.theta(d, k) = theta_rows[d][k];
  return m;
}

// K topics, all uniform over a V-word atomic vocabulary.
TopicModel uniform_model(std::size_t V, std::size_t K, std::size_t D) {
  TopicModel m;
  std::vector<std::string> words;
  for (std::size_t v = 0; v < V; ++v) words.push_back("w" + std::to_string(v));
  m.vocab = Vocabulary(words);
  m.vocab_hash = m.vocab.hash();
  for (WordId v = 0; v < V; ++v) m.atomic_word_of.push_back(v);
  m.hp.topics = K;
  m.phi = Matrix(K, V, 1.0 / static_cast<double>(V));
  m.theta = Matrix(D, K, 1.0 / static_cast<double>(K));
  return m;
}

}  // namespace

TEST(Projection, MixesConceptRowsAndAtomicMass) {
  auto m = projection_model({{0.5, 0.3, 0.2}}, {{1.0}});
  auto p = topic_word_distribution(m, 0);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.325, 1e-15);
  EXPECT_NEAR(p[2], 0.225, 1e-15);
  EXPECT_NEAR(p[3], 0.2, 1e-15);
  EXPECT_THROW(topic_word_distribution(m, 1), Error);
}

TEST(Perplexity, TwoDocumentFixture) {
  auto m = projection_model({{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}}, {{0.7, 0.3}, {0.2, 0.8}});
  auto corpus = corpus_of({"a x", "b c b"});
  // token probabilities .19 .23 | .225 .405 .225
  const double expect =
      std::exp(-(std::log(0.19) + std::log(0.23) + 2 * std::log(0.225) + std::log(0.405)) / 5.0);
  auto r = evaluate_perplexity(m, corpus);
  EXPECT_NEAR(r.perplexity, expect, 1e-12 * expect);
  EXPECT_EQ(r.tokens, 5u);
}

TEST(Perplexity, UniformModelGivesVocabularySize) {
  auto m = uniform_model(37, 4, 3);
  auto corpus = corpus_of({"w1 w2 w3", "w36 w0", "w5 w5 w5 w5"});
  EXPECT_NEAR(perplexity(m, corpus), 37.0, 37.0 * 1e-12);
}

TEST(Perplexity, OutOfVocabularyPolicy) {
  auto m = uniform_model(4, 1, 2);
  auto corpus = corpus_of({"w1 novel", "w2"});
  EXPECT_THROW(perplexity(m, corpus), Error);
  PerplexityOptions o;
  o.oov = OovPolicy::skip;
  auto r = evaluate_perplexity(m, corpus, o);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.tokens, 2u);
  EXPECT_NEAR(r.perplexity, 4.0, 1e-12);
}

TEST(Perplexity, TrainingModeNeedsMatchingDocumentCount) {
  auto m = uniform_model(4, 1, 2);
  EXPECT_THROW(perplexity(m, corpus_of({"w1"})), Error);
}

TEST(FoldIn, SingleTopicAgreesWithTrainingMode) {
  auto m = projection_model({{0.5, 0.3, 0.2}}, {{1.0}, {1.0}});
  auto corpus = corpus_of({"a x c", "b b"});
  PerplexityOptions o;
  o.mode = EvalMode::foldin;
  o.foldin_sweeps = 10;
  EXPECT_NEAR(evaluate_perplexity(m, corpus, o).perplexity, perplexity(m, corpus), 1e-12);
}

TEST(FoldIn, IsSeeded) {
  auto m = projection_model({{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}}, {{0.5, 0.5}});
  auto corpus = corpus_of({"a x c b b a c c x"});
  PerplexityOptions o;
  o.mode = EvalMode::foldin;
  o.foldin_sweeps = 50;
  o.seed = 3;
  EXPECT_EQ(evaluate_perplexity(m, corpus, o).perplexity, evaluate_perplexity(m, corpus, o).perplexity);
}

TEST(KlMatching, RecoversPermutationAndBreaksTiesLow) {
  auto a = projection_model({{0.8, 0.1, 0.1}, {0.1, 0.1, 0.8}, {0.1, 0.8, 0.1}}, {{1, 0, 0}});
  auto b = projection_model({{0.1, 0.8, 0.1}, {0.8, 0.1, 0.1}, {0.1, 0.1, 0.8}}, {{1, 0, 0}});
  auto match = match_topics(a, b);
  ASSERT_EQ(match.pairs.size(), 3u);
  EXPECT_EQ(match.pairs[0].b, 1u);
  EXPECT_EQ(match.pairs[1].b, 2u);
  EXPECT_EQ(match.pairs[2].b, 0u);
  EXPECT_NEAR(match.pairs[0].kl, 0.0, 1e-15);

  auto tied = projection_model({{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}}, {{1, 0}});
  for (const auto& p : match_topics(a, tied).pairs) EXPECT_EQ(p.b, 0u);

  auto other = uniform_model(4, 3, 1);
  EXPECT_THROW(match_topics(a, other), Error);
}

TEST(KlMatching, Divergence) {
  std::vector<double> p{0.5, 0.5}, q{0.25, 0.75}, z{1.0, 0.0};
  EXPECT_NEAR(kl_divergence(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75), 1e-15);
  EXPECT_EQ(kl_divergence(p, p), 0.0);
  EXPECT_TRUE(std::isinf(kl_divergence(p, z)));
  EXPECT_NEAR(kl_divergence(z, p), std::log(2.0), 1e-15);
}

TEST(TopTerms, RanksEntitiesAndWords) {
  auto m = projection_model({{0.5, 0.3, 0.2}}, {{1.0}});
  auto ents = top_terms(m, 0, 2, TermSpace::entities);
  ASSERT_EQ(ents.size(), 2u);
  EXPECT_EQ(ents[0].name, "c1");
  EXPECT_TRUE(ents[0].is_concept);
  auto words = top_terms(m, 0, 10, TermSpace::words);
  ASSERT_EQ(words.size(), 4u);
  EXPECT_EQ(words[0].name, "b");
  EXPECT_EQ(words[1].name, "a");
  EXPECT_THROW(top_terms(m, 0, 0, TermSpace::words), Error);
}

TEST(ExactPosterior, SingleTokenFollowsKbFactor) {
  auto corpus = corpus_of({"gun"});
  auto kb = kb_of("gun\tarmy\t0.8\ngun\tnavy\t0.2\n", &corpus.vocab());
  auto post = exact_posterior(corpus, &kb, nullptr, hyper(ModelKind::clda, 1));
  EXPECT_EQ(post.configurations, 2u);
  EXPECT_NEAR(post.entity_marginals[0][0], 0.8, 1e-12);
  EXPECT_NEAR(post.entity_marginals[0][1], 0.2, 1e-12);
}

TEST(ExactPosterior, TwoTokensFollowDirichletMultinomial) {
  // "x x", K = 2, V = 1, alpha = beta = 1 (so E*beta = 1):
  // same topic:  DirMult doc = 1*2/(2*3) = 1/3, topic = 1*2/(1*2) = 1
  // split:       doc = 1*1/(2*3) = 1/6,        topic = 1*1 = 1
  // configurations (0,0) (1,1) carry 1/3 each, (0,1) (1,0) 1/6 each
  auto corpus = corpus_of({"x x"});
  auto hp = hyper(ModelKind::lda, 2);
  hp.alpha = 1.0;
  hp.beta = 1.0;
  auto post = exact_posterior(corpus, nullptr, nullptr, hp);
  EXPECT_EQ(post.configurations, 4u);
  EXPECT_NEAR(post.topic_marginals[0][0], 0.5, 1e-12);

  // with an asymmetric prior the marginal is (a0 + ...) computable by hand:
  // p(z1=0) = sum over z2 of p(z1=0, z2) with doc DirMult
  hp.alpha_vector = {1.0, 3.0};
  post = exact_posterior(corpus, nullptr, nullptr, hp);
  // weights: (0,0) 1*2, (1,1) 3*4, (0,1) 1*3, (1,0) 3*1, over the common denominator 4*5
  EXPECT_NEAR(post.topic_marginals[0][0], (2.0 + 3.0) / (2.0 + 12.0 + 3.0 + 3.0), 1e-12);
}

TEST(ExactPosterior, RefusesHugeInstances) {
  std::string doc;
  for (int i = 0; i < 30; ++i) doc += "w ";
  EXPECT_THROW(exact_posterior(corpus_of({doc}), nullptr, nullptr, hyper(ModelKind::lda, 3)), Error);
}

TEST(Report, CsvHeaderAndRows) {
  EvalReport rep;
  rep.rows.push_back({"clda", 10, "prefix-100", "training", 123.5, 7, 1.25});
  std::ostringstream out;
  rep.write_csv(out);
  EXPECT_EQ(out.str(), "model_kind,K,dataset,mode,perplexity,seed,wall_time_s\nclda,10,prefix-100,training,123.5,7,1.250\n");
}
