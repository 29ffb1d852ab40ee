#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "relkit/corpus.hpp"
#include "relkit/depgraph.hpp"
#include "test_support.hpp"

using namespace relkit;
using relkit::testing::fixture_dir;

namespace {

struct Expected {
  std::string id;
  ConjunctionMode mode;
  int a;
  int h;
  Label label;
};

std::vector<Expected> load_expected() {
  std::ifstream in(fixture_dir() / "sard_expected.tsv");
  std::vector<Expected> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Expected e;
    std::string mode, label;
    ss >> e.id >> mode >> e.a >> e.h >> label;
    e.mode = mode == "deprel" ? ConjunctionMode::kDeprel : ConjunctionMode::kUpos;
    e.label = parse_label(label);
    rows.push_back(e);
  }
  return rows;
}

}  // namespace

TEST(SardFixtures, EveryFrozenOutcomeMatches) {
  const Corpus corpus = load_corpus(fixture_dir() / "sard_corpus.jsonl");
  const TreeBank trees = load_conllu(fixture_dir() / "sard_fixtures.conllu");
  check_against_corpus(trees, corpus);
  const auto rows = load_expected();
  ASSERT_EQ(rows.size(), 180u);
  for (const auto& e : rows) {
    const auto& r = corpus[corpus.require_index(e.id)];
    EXPECT_EQ(sard_predict(trees.at(e.id), r.e1, r.e2, SardConfig::from_ids(e.a, e.h, e.mode)), e.label)
        << e.id << " a=" << e.a << " h=" << e.h;
  }
}

TEST(SardFixtures, CorpusLevelMatchesPerRecord) {
  const Corpus corpus = load_corpus(fixture_dir() / "sard_corpus.jsonl");
  const TreeBank trees = load_conllu(fixture_dir() / "sard_fixtures.conllu");
  const auto cfg = SardConfig::from_ids(3, 2);
  const auto serial = sard_predict_corpus(corpus, trees, cfg, 1);
  EXPECT_EQ(sard_predict_corpus(corpus, trees, cfg, 4), serial);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(serial[i], sard_predict(trees.at(corpus[i].id), corpus[i].e1, corpus[i].e2, cfg));
  }
}

TEST(SardFixtures, MissingTreeIsDataError) {
  const Corpus corpus = load_corpus(fixture_dir() / "sard_corpus.jsonl");
  EXPECT_THROW(sard_predict_corpus(corpus, TreeBank{}, SardConfig{}), DataError);
}
