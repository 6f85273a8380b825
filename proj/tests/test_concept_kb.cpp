#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace ctm;
using ctm::testing::fixture;
using ctm::testing::kb_of;

namespace {

double row_sum(const ConceptKB& kb, ConceptId c) {
  double s = 0.0;
  for (const auto& e : kb.words_of(c)) s += e.prob;
  return s;
}

}  // namespace

TEST(LoadKb, SingleConceptKeepsRows) {
  auto kb = kb_of("dog\tanimal\t0.6\ncat\tanimal\t0.4\n");
  ASSERT_EQ(kb.concept_count(), 1u);
  EXPECT_EQ(kb.concepts().word(0), "animal");
  ASSERT_EQ(kb.words_of(0).size(), 2u);
  EXPECT_NEAR(row_sum(kb, 0), 1.0, 1e-12);
  auto dog = *kb.words().find("dog");
  ASSERT_EQ(kb.concepts_of(dog).size(), 1u);
  EXPECT_DOUBLE_EQ(kb.concepts_of(dog)[0].prob, 0.6);
}

TEST(LoadKb, ClusterMergeAveragesThenRenormalizes) {
  // hand computation: microsoft (0.5 + 0.8) / 2 = 0.65, google 0.5 / 2 = 0.25,
  // row mass 0.9, so microsoft -> 0.65 / 0.9 = 13/18
  auto kb = load_kb(fixture("merge_kb.tsv"), fixture("merge_clusters.tsv"));
  ASSERT_EQ(kb.concept_count(), 1u);
  EXPECT_EQ(kb.concepts().word(0), "company");
  auto ms = kb.concepts_of(*kb.words().find("microsoft"));
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].concept_id, 0u);
  EXPECT_NEAR(ms[0].raw_prob, 0.65, 1e-15);
  EXPECT_NEAR(ms[0].prob, 13.0 / 18.0, 1e-15);
  EXPECT_NEAR(kb.concepts_of(*kb.words().find("google"))[0].prob, 5.0 / 18.0, 1e-15);
}

TEST(LoadKb, ClusterMergeConservesSupport) {
  auto plain = load_kb(fixture("mini_kb.tsv"), std::nullopt);
  auto merged = load_kb(fixture("mini_kb.tsv"), fixture("mini_clusters.tsv"));
  EXPECT_EQ(plain.concept_count(), 4u);
  EXPECT_EQ(merged.concept_count(), 2u);  // military, company
  auto military = *merged.concepts().find("military");
  std::set<std::string> merged_words, union_words;
  for (const auto& e : merged.words_of(military)) merged_words.insert(merged.words().word(e.word));
  for (auto name : {"army", "navy", "air force"})
    for (const auto& e : plain.words_of(*plain.concepts().find(name))) union_words.insert(plain.words().word(e.word));
  EXPECT_EQ(merged_words, union_words);
  EXPECT_NEAR(row_sum(merged, military), 1.0, 1e-12);
}

TEST(LoadKb, ClusterCountFromFile) {
  std::ostringstream kbtext, cltext;
  for (int c = 0; c < 4819; ++c) {
    kbtext << "w" << c << "\tc" << c << "a\t0.5\n" << "v" << c << "\tc" << c << "b\t0.25\n";
    cltext << "c" << c << "a\tcluster" << c << "\n" << "c" << c << "b\tcluster" << c << "\n";
  }
  std::istringstream cin(cltext.str());
  auto clusters = ClusterMap::parse(cin);
  EXPECT_EQ(clusters.cluster_vocab().size(), 4819u);
  std::istringstream kin(kbtext.str());
  auto kb = load_kb(kin, &clusters);
  EXPECT_EQ(kb.concept_count(), 4819u);
}

TEST(LoadKb, Rejections) {
  auto expect_line = [](const std::string& text, std::size_t line) {
    std::istringstream in(text);
    try {
      load_kb(in, nullptr);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    }
  };
  expect_line("a\tb\t0.5\nbroken line\n", 2);
  expect_line("a\tb\tx\n", 1);
  expect_line("a\tb\t0\n", 1);
  expect_line("a\tb\t1.5\n", 1);
  expect_line("a\tb\t-0.1\n", 1);
  expect_line("a\tb\tnan\n", 1);
  expect_line("a\tb\t0.5\na\tb\t0.5\n", 2);

  std::istringstream cl("ghost\tcluster\n");
  auto clusters = ClusterMap::parse(cl);
  std::istringstream in("a\tb\t0.5\n");
  EXPECT_THROW(load_kb(in, &clusters), ParseError);

  std::istringstream twice("x\tc1\nx\tc2\n");
  EXPECT_THROW(ClusterMap::parse(twice), ParseError);
}

TEST(LoadKb, RawModeKeepsValuesAndRejectsOverfullRows) {
  auto kb = kb_of("dog\tanimal\t0.3\ncat\tanimal\t0.2\n", nullptr, false);
  EXPECT_FALSE(kb.renormalized());
  EXPECT_DOUBLE_EQ(kb.words_of(0)[0].prob, 0.3);
  EXPECT_THROW(kb_of("dog\tanimal\t0.7\ncat\tanimal\t0.6\n", nullptr, false), Error);
}

TEST(LoadKb, TargetVocabRestrictsAndRenormalizes) {
  Vocabulary v(std::vector<std::string>{"gun", "zorblax", "tank", "pilot"});
  KbLoadOptions o;
  o.target_vocab = &v;
  auto kb = load_kb(fixture("mini_kb.tsv"), std::nullopt, o);
  EXPECT_EQ(kb.words(), v);
  // army keeps tank+gun, navy keeps gun, air force keeps pilot; company is dropped
  EXPECT_EQ(kb.concept_count(), 3u);
  EXPECT_FALSE(kb.concepts().contains("company"));
  for (ConceptId c = 0; c < kb.concept_count(); ++c) EXPECT_NEAR(row_sum(kb, c), 1.0, 1e-9);
  auto army = *kb.concepts().find("army");
  for (const auto& e : kb.words_of(army)) {
    if (kb.words().word(e.word) == "tank") {
      EXPECT_NEAR(e.prob, 0.4 / 0.7, 1e-15);
    }
  }
  EXPECT_EQ(kb.classify_token(*v.find("zorblax")), EntityKind::atomic);
  EXPECT_EQ(kb.classify_token(*v.find("gun")), EntityKind::concept_backed);
}

TEST(ConceptsOf, SortedCandidatesAndAtomicWords) {
  auto kb = load_kb(fixture("mini_kb.tsv"), std::nullopt);
  auto gun = kb.concepts_of(*kb.words().find("gun"));
  ASSERT_EQ(gun.size(), 2u);
  EXPECT_LT(gun[0].concept_id, gun[1].concept_id);
  EXPECT_DOUBLE_EQ(gun[0].raw_prob, 0.3);
  EXPECT_DOUBLE_EQ(gun[1].raw_prob, 0.2);

  auto empty = ConceptKB::empty(Vocabulary(std::vector<std::string>{"neologism"}));
  EXPECT_TRUE(empty.concepts_of(0).empty());
  EXPECT_EQ(classify_token(empty, 0), EntityKind::atomic);
  EXPECT_THROW(empty.concepts_of(5), Error);
}

TEST(ConceptsOf, PrunedRowMakesWordAtomic) {
  // "tanks" is the only army word; the target vocabulary spells it "tank",
  // so the army row empties and "tank" has no concept left
  Vocabulary v(std::vector<std::string>{"tank", "ship"});
  auto kb = kb_of("tanks\tarmy\t1.0\nship\tnavy\t0.5\n", &v);
  EXPECT_FALSE(kb.concepts().contains("army"));
  EXPECT_EQ(kb.classify_token(0), EntityKind::atomic);
  EXPECT_EQ(kb.classify_token(1), EntityKind::concept_backed);
}

TEST(Invariants, TransposeConsistencyAndProbabilityRange) {
  for (bool clusters : {false, true}) {
    auto kb = load_kb(fixture("mini_kb.tsv"),
                      clusters ? std::optional<std::string>(fixture("mini_clusters.tsv")) : std::nullopt);
    EXPECT_EQ(kb.transpose_of_concept_rows(), kb.word_rows());
    for (ConceptId c = 0; c < kb.concept_count(); ++c) {
      double s = 0.0;
      for (const auto& e : kb.words_of(c)) {
        EXPECT_TRUE(std::isfinite(e.prob));
        EXPECT_GT(e.prob, 0.0);
        EXPECT_LE(e.prob, 1.0);
        s += e.prob;
      }
      EXPECT_LE(s, 1.0 + 1e-9);
    }
  }
}

TEST(Invariants, HashIsContentIdentity) {
  auto a = load_kb(fixture("mini_kb.tsv"), std::nullopt);
  auto b = load_kb(fixture("mini_kb.tsv"), std::nullopt);
  auto c = load_kb(fixture("mini_kb.tsv"), fixture("mini_clusters.tsv"));
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
}
