#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "reverso/symbolic.hpp"

using namespace reverso;

TEST_CASE("code words use positional index blocks") {
  // Second word of an a-entity comes from a200..a299 at 100 words/position.
  CHECK(code_word('a', 1, 0, 100) == "a200");
  CHECK(code_word('a', 1, 99, 100) == "a299");
  CHECK(code_word('a', 0, 12, 100) == "a112");
  CHECK(code_word('b', 4, 7, 100) == "b507");
  // Small words_per_position keeps the 100 block (first position a100, a101).
  CHECK(code_word('a', 0, 0, 2) == "a100");
  CHECK(code_word('a', 0, 1, 2) == "a101");
}

TEST_CASE("gen_entities draws each position from its own block") {
  SymbolicConfig cfg;
  cfg.entity_len = 3;
  cfg.n_pairs = 500;
  cfg.seed = 9;
  const auto [a, b] = gen_entities(cfg);
  REQUIRE(a.size() == 500);
  REQUIRE(b.size() == 500);
  for (const EntityTuple& t : a) {
    REQUIRE(t.size() == 3);
    for (int p = 0; p < 3; ++p) {
      const std::string& w = t[static_cast<std::size_t>(p)];
      CHECK(w.front() == 'a');
      const int idx = std::stoi(w.substr(1));
      CHECK(idx >= (p + 1) * 100);
      CHECK(idx < (p + 2) * 100);
    }
  }
  for (const EntityTuple& t : b) CHECK(t.front().front() == 'b');
}

TEST_CASE("tiny exhaustive space enumerates fully") {
  SymbolicConfig cfg;
  cfg.entity_len = 1;
  cfg.words_per_position = 2;
  cfg.n_pairs = 2;
  cfg.seed = 4;
  const auto [a, b] = gen_entities(cfg);
  std::set<std::string> a_words;
  for (const auto& t : a) a_words.insert(t.front());
  CHECK(a_words == std::set<std::string>{"a100", "a101"});
}

TEST_CASE("entities are distinct and deterministic per seed") {
  SymbolicConfig cfg;
  cfg.entity_len = 2;
  cfg.n_pairs = 2000;
  cfg.seed = 123;
  const auto [a1, b1] = gen_entities(cfg);
  const auto [a2, b2] = gen_entities(cfg);
  CHECK(a1 == a2);
  CHECK(b1 == b2);
  std::set<EntityTuple> uniq(a1.begin(), a1.end());
  CHECK(uniq.size() == a1.size());

  cfg.seed = 124;
  const auto [a3, b3] = gen_entities(cfg);
  CHECK(a1 != a3);
}

TEST_CASE("n_pairs can exhaust the whole space") {
  SymbolicConfig cfg;
  cfg.entity_len = 2;
  cfg.words_per_position = 10;
  cfg.n_pairs = 100;  // exactly 10^2
  cfg.seed = 5;
  const auto [a, b] = gen_entities(cfg);
  std::set<EntityTuple> uniq(a.begin(), a.end());
  CHECK(uniq.size() == 100);
  cfg.n_pairs = 101;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("render matches the paper templates") {
  const SymbolicPair pair{{"a12", "a64"}, {"b54", "b42"}};
  CHECK(render(pair, Direction::forward) == "a12 a64 has a feature b54 b42");
  CHECK(render(pair, Direction::reverse) ==
        "b54 b42 is a feature of a12 a64");
  const SymbolicPair single{{"a7"}, {"b3"}};
  CHECK(render(single, Direction::forward) == "a7 has a feature b3");
}

TEST_CASE("split counts: all forward plus half backward") {
  SymbolicConfig cfg;
  cfg.entity_len = 2;
  cfg.n_pairs = 4;
  cfg.seed = 2;
  const SymbolicDataset ds = make_dataset(cfg);
  CHECK(ds.pairs.size() == 4);
  CHECK(ds.train.size() == 6);  // 4 forward + 2 backward
  CHECK(ds.test.size() == 2);
}

TEST_CASE("paper-scale split yields 15000 train and 5000 test") {
  SymbolicConfig cfg;
  cfg.entity_len = 2;
  cfg.n_pairs = 10000;
  cfg.seed = 0;
  const SymbolicDataset ds = make_dataset(cfg);
  CHECK(ds.train.size() == 15000);
  CHECK(ds.test.size() == 5000);
}

TEST_CASE("backward train and test sets are disjoint and cover all pairs") {
  SymbolicConfig cfg;
  cfg.entity_len = 2;
  cfg.n_pairs = 501;  // odd: floor goes to train
  cfg.seed = 8;
  const SymbolicDataset ds = make_dataset(cfg);
  CHECK(ds.train.size() == 501 + 250);
  CHECK(ds.test.size() == 251);
  std::set<std::string> train_backward;
  for (const Document& d : ds.train)
    if (d.id.rfind("bwd-", 0) == 0) train_backward.insert(d.text);
  std::set<std::string> test_rendered;
  for (const TestItem& item : ds.test)
    test_rendered.insert(item.prompt + " " + item.target);
  for (const std::string& t : test_rendered)
    CHECK(train_backward.count(t) == 0);
  CHECK(train_backward.size() + test_rendered.size() == 501);
}

TEST_CASE("pairing is a bijection") {
  SymbolicConfig cfg;
  cfg.entity_len = 2;
  cfg.n_pairs = 300;
  cfg.seed = 77;
  const SymbolicDataset ds = make_dataset(cfg);
  std::set<EntityTuple> a_set, b_set;
  for (const SymbolicPair& p : ds.pairs) {
    a_set.insert(p.a);
    b_set.insert(p.b);
  }
  CHECK(a_set.size() == ds.pairs.size());
  CHECK(b_set.size() == ds.pairs.size());
}

TEST_CASE("test targets appear in train only inside their forward rendering") {
  SymbolicConfig cfg;
  cfg.entity_len = 2;
  cfg.n_pairs = 200;
  cfg.seed = 31;
  const SymbolicDataset ds = make_dataset(cfg);
  for (const TestItem& item : ds.test) {
    const SymbolicPair& pair = ds.pairs[item.pair_index];
    const std::string forward = render(pair, Direction::forward);
    int containing = 0;
    for (const Document& d : ds.train) {
      if (d.text.find(item.target) == std::string::npos) continue;
      ++containing;
      CHECK(d.text == forward);
    }
    CHECK(containing == 1);
  }
}

TEST_CASE("train documents carry one span per entity") {
  SymbolicConfig cfg;
  cfg.entity_len = 3;
  cfg.n_pairs = 10;
  cfg.seed = 3;
  const SymbolicDataset ds = make_dataset(cfg);
  for (const Document& d : ds.train) {
    REQUIRE(d.entities.size() == 2);
    d.validate();
    for (const EntitySpan& s : d.entities) {
      const std::string surface = d.text.substr(
          static_cast<std::size_t>(s.start),
          static_cast<std::size_t>(s.end - s.start));
      // A full entity is three code words of one prefix.
      CHECK(word_split(surface).size() == 3);
      CHECK((surface.front() == 'a' || surface.front() == 'b'));
      CHECK(surface.front() == s.label.front());
    }
  }
}

TEST_CASE("test documents round trip through the jsonl schema") {
  SymbolicConfig cfg;
  cfg.entity_len = 2;
  cfg.n_pairs = 6;
  cfg.seed = 12;
  const SymbolicDataset ds = make_dataset(cfg);
  const auto docs = test_documents(ds);
  REQUIRE(docs.size() == ds.test.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const TestItem item = test_item_from_document(docs[i]);
    CHECK(item.prompt == ds.test[i].prompt);
    CHECK(item.target == ds.test[i].target);
    CHECK(item.pair_index == ds.test[i].pair_index);
  }
}

TEST_CASE("dataset generation is deterministic per seed") {
  SymbolicConfig cfg;
  cfg.entity_len = 5;
  cfg.n_pairs = 100;
  cfg.seed = 9001;
  const SymbolicDataset d1 = make_dataset(cfg);
  const SymbolicDataset d2 = make_dataset(cfg);
  REQUIRE(d1.train.size() == d2.train.size());
  for (std::size_t i = 0; i < d1.train.size(); ++i)
    CHECK(d1.train[i].text == d2.train[i].text);
  REQUIRE(d1.test.size() == d2.test.size());
  for (std::size_t i = 0; i < d1.test.size(); ++i) {
    CHECK(d1.test[i].prompt == d2.test[i].prompt);
    CHECK(d1.test[i].target == d2.test[i].target);
  }
}

TEST_CASE("config validation") {
  SymbolicConfig cfg;
  cfg.entity_len = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.entity_len = 1;
  cfg.words_per_position = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.words_per_position = 100;
  cfg.n_pairs = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
