#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "hif/synth.hpp"
#include "hif/threadstore.hpp"

using namespace hif;

namespace {

std::string thread_line(const std::string& id, int replies, bool chain = true) {
  std::string s = R"({"root":{"id":")" + id + R"(","ts":0,"text":"root text","author":"a"},"replies":[)";
  for (int i = 0; i < replies; ++i) {
    if (i) s += ",";
    std::string parent = (chain && i > 0) ? id + "_r" + std::to_string(i - 1) : id;
    s += R"({"id":")" + id + "_r" + std::to_string(i) + R"(","parent":")" + parent +
         R"(","ts":)" + std::to_string(1000 * (i + 1)) + R"(,"text":"reply )" +
         std::to_string(i) + R"(","author":"b"})";
  }
  return s + "]}";
}

}  // namespace

TEST_CASE("parse_corpus: empty file gives empty corpus") {
  std::stringstream ss("");
  Corpus c = parse_corpus(ss);
  CHECK(c.size() == 0);
}

TEST_CASE("parse_corpus: root-only thread has q=0") {
  std::stringstream ss(thread_line("t0", 0));
  Corpus c = parse_corpus(ss);
  REQUIRE(c.size() == 1);
  CHECK(c.threads[0].length() == 0);
}

TEST_CASE("parse_corpus: dangling parent is rejected with ids") {
  std::stringstream ss(
      R"({"root":{"id":"t0","ts":0,"text":"x","author":"a"},"replies":[{"id":"r0","parent":"missing","ts":1,"text":"y","author":"b"}]})");
  try {
    parse_corpus(ss);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("t0") != std::string::npos);
    CHECK(msg.find("missing") != std::string::npos);
  }
}

TEST_CASE("parse_corpus: cyclic parents rejected") {
  std::stringstream ss(
      R"({"root":{"id":"t0","ts":0,"text":"x","author":"a"},"replies":[{"id":"r0","parent":"r1","ts":1,"text":"y","author":"b"},{"id":"r1","parent":"r0","ts":1,"text":"z","author":"b"}]})");
  CHECK_THROWS_AS(parse_corpus(ss), DataError);
}

TEST_CASE("parse_corpus: malformed line reports line number") {
  std::stringstream ss("{not json\n");
  try {
    parse_corpus(ss);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("replies are sorted chronologically with id tie-break") {
  std::string s =
      R"({"root":{"id":"t0","ts":0,"text":"x","author":"a"},"replies":[)"
      R"({"id":"b","parent":"t0","ts":5,"text":"x","author":"a"},)"
      R"({"id":"a","parent":"t0","ts":5,"text":"x","author":"a"},)"
      R"({"id":"c","parent":"t0","ts":2,"text":"x","author":"a"}]})";
  std::stringstream ss(s);
  Corpus c = parse_corpus(ss);
  REQUIRE(c.threads[0].length() == 3);
  CHECK(c.threads[0].replies[0].id == "c");
  CHECK(c.threads[0].replies[1].id == "a");
  CHECK(c.threads[0].replies[2].id == "b");
}

TEST_CASE("parse then serialize round-trips semantically") {
  std::stringstream ss(thread_line("t0", 5) + "\n" + thread_line("t1", 3, false) + "\n");
  Corpus c1 = parse_corpus(ss);
  std::stringstream out;
  serialize_corpus(c1, out);
  Corpus c2 = parse_corpus(out);
  REQUIRE(c2.size() == c1.size());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c2.threads[i].root.id == c1.threads[i].root.id);
    REQUIRE(c2.threads[i].length() == c1.threads[i].length());
    for (std::size_t r = 0; r < c1.threads[i].length(); ++r) {
      CHECK(c2.threads[i].replies[r].id == c1.threads[i].replies[r].id);
      CHECK(c2.threads[i].replies[r].parent_id == c1.threads[i].replies[r].parent_id);
      CHECK(c2.threads[i].replies[r].timestamp_ms == c1.threads[i].replies[r].timestamp_ms);
      CHECK(c2.threads[i].replies[r].tokens == c1.threads[i].replies[r].tokens);
    }
  }
}

TEST_CASE("thread_adjacency") {
  SUBCASE("root + 1 reply") {
    std::stringstream ss(thread_line("t0", 1));
    Corpus c = parse_corpus(ss);
    Tensor a = thread_adjacency(c.threads[0]);
    CHECK(a.data == std::vector<double>{0, 1, 1, 0});
  }
  SUBCASE("chain root<-r1<-r2") {
    std::stringstream ss(thread_line("t0", 2, true));
    Corpus c = parse_corpus(ss);
    Tensor a = thread_adjacency(c.threads[0]);
    CHECK(a.at(0, 1) == 1.0);
    CHECK(a.at(1, 2) == 1.0);
    CHECK(a.at(0, 2) == 0.0);
  }
  SUBCASE("star with 3 replies") {
    std::stringstream ss(thread_line("t0", 3, false));
    Corpus c = parse_corpus(ss);
    Tensor a = thread_adjacency(c.threads[0]);
    for (std::size_t r = 1; r < 4; ++r) {
      CHECK(a.at(0, r) == 1.0);
      CHECK(a.at(r, 0) == 1.0);
    }
    CHECK(a.at(1, 2) == 0.0);
  }
  SUBCASE("symmetric, zero diagonal, exactly 2q nonzeros") {
    SyntheticConfig cfg;
    cfg.archetypes = SyntheticConfig::default_archetypes();
    cfg.threads_per_archetype = 2;
    cfg.replies_per_thread = 17;
    cfg.seed = 7;
    Corpus c = generate_synthetic(cfg);
    for (const auto& th : c.threads) {
      Tensor a = thread_adjacency(th);
      const std::size_t m = th.length() + 1;
      std::size_t nonzeros = 0;
      for (std::size_t i = 0; i < m; ++i) {
        CHECK(a.at(i, i) == 0.0);
        for (std::size_t j = 0; j < m; ++j) {
          CHECK(a.at(i, j) == a.at(j, i));
          if (a.at(i, j) != 0.0) ++nonzeros;
        }
      }
      CHECK(nonzeros == 2 * th.length());
    }
  }
}

TEST_CASE("generate_synthetic determinism: byte-identical serialization") {
  SyntheticConfig cfg;
  cfg.archetypes = SyntheticConfig::default_archetypes();
  cfg.threads_per_archetype = 3;
  cfg.replies_per_thread = 20;
  cfg.seed = 42;
  std::stringstream a, b, ta, tb;
  serialize_corpus(generate_synthetic(cfg), a);
  serialize_corpus(generate_synthetic(cfg), b);
  save_truth(generate_synthetic(cfg), ta);
  save_truth(generate_synthetic(cfg), tb);
  CHECK(a.str() == b.str());
  CHECK(ta.str() == tb.str());
}

TEST_CASE("generate_synthetic: 4 archetypes x 50 threads balanced") {
  SyntheticConfig cfg;
  cfg.archetypes = SyntheticConfig::default_archetypes();
  cfg.threads_per_archetype = 50;
  cfg.replies_per_thread = 5;
  cfg.seed = 1;
  Corpus c = generate_synthetic(cfg);
  CHECK(c.size() == 200);
  std::vector<int> counts(4, 0);
  for (const auto& t : c.truth) counts[t.archetype]++;
  for (int k : counts) CHECK(k == 50);
}

TEST_CASE("generate_synthetic: sigma=0 flat template round-trips through the scorer") {
  SyntheticConfig cfg;
  cfg.archetypes = {{"flat", {{0.0, 0.3}, {1.0, 0.3}}}};
  cfg.threads_per_archetype = 3;
  cfg.replies_per_thread = 25;
  cfg.noise_sigma = 0.0;
  cfg.oscillation_amplitude = 0.0;
  cfg.seed = 11;
  Corpus c = generate_synthetic(cfg);
  HateLexicon lex = synthetic_lexicon();
  auto scorer = reference_scorer(lex);
  for (const auto& th : c.threads) {
    for (const auto& r : th.replies) {
      const double h = hate_intensity(r, cfg.w, *scorer, lex);
      CHECK(std::fabs(h - 0.3) < 0.02);
    }
  }
}

TEST_CASE("generate_synthetic: reply scores reproduce the sidecar targets") {
  SyntheticConfig cfg;
  cfg.archetypes = SyntheticConfig::default_archetypes();
  cfg.threads_per_archetype = 2;
  cfg.replies_per_thread = 40;
  cfg.seed = 5;
  Corpus c = generate_synthetic(cfg);
  HateLexicon lex = synthetic_lexicon();
  auto scorer = reference_scorer(lex);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t r = 0; r < c.threads[i].length(); ++r) {
      const double h = hate_intensity(c.threads[i].replies[r], cfg.w, *scorer, lex);
      CHECK(std::fabs(h - c.truth[i].reply_scores[r]) < 0.02);
    }
  }
}

TEST_CASE("generate_synthetic: infeasible clamping rejected") {
  SyntheticConfig cfg;
  cfg.archetypes = {{"zero", {{0.0, 0.0}, {1.0, 0.0}}}};
  cfg.noise_sigma = 0.3;  // clamp at 0 pulls the mean up by ~0.12
  cfg.oscillation_amplitude = 0.0;
  cfg.threads_per_archetype = 1;
  cfg.replies_per_thread = 5;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}

TEST_CASE("split_train_test") {
  SyntheticConfig cfg;
  cfg.archetypes = SyntheticConfig::default_archetypes();
  cfg.threads_per_archetype = 50;
  cfg.replies_per_thread = 5;
  cfg.seed = 3;
  Corpus c = generate_synthetic(cfg);

  SUBCASE("counting and stratification") {
    auto [train, test] = split_train_test(c, 0.8, 99);
    CHECK(train.size() == 160);
    CHECK(test.size() == 40);
    std::vector<int> tr(4, 0), te(4, 0);
    for (const auto& t : train.truth) tr[t.archetype]++;
    for (const auto& t : test.truth) te[t.archetype]++;
    for (int k : tr) CHECK(k == 40);
    for (int k : te) CHECK(k == 10);
  }
  SUBCASE("determinism and disjoint-exhaustive") {
    auto [tr1, te1] = split_train_test(c, 0.8, 7);
    auto [tr2, te2] = split_train_test(c, 0.8, 7);
    REQUIRE(tr1.size() == tr2.size());
    for (std::size_t i = 0; i < tr1.size(); ++i) {
      CHECK(tr1.threads[i].root.id == tr2.threads[i].root.id);
    }
    std::set<std::string> ids;
    for (const auto& t : tr1.threads) ids.insert(t.root.id);
    for (const auto& t : te1.threads) ids.insert(t.root.id);
    CHECK(ids.size() == c.size());
  }
  SUBCASE("s=10 ratio=0.8") {
    Corpus small;
    small.provenance = "synthetic";
    for (int i = 0; i < 10; ++i) {
      ConversationThread th;
      th.root.id = "s" + std::to_string(i);
      small.threads.push_back(th);
    }
    auto [train, test] = split_train_test(small, 0.8, 1);
    CHECK(train.size() == 8);
    CHECK(test.size() == 2);
  }
  SUBCASE("tiny corpus rejected") {
    Corpus one;
    one.threads.emplace_back();
    CHECK_THROWS_AS(split_train_test(one, 0.8, 1), DataError);
    CHECK_THROWS_AS(split_train_test(c, 1.5, 1), ConfigError);
  }
}
