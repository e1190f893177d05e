#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "reverso/corpus.hpp"

using namespace reverso;
namespace fs = std::filesystem;

namespace {

const std::string kSentence =
    "Cruise was born on July 3, 1962, in Syracuse, New York, to Mary Lee "
    "Pfeiffer.";

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("reverso_corpus_" + name);
}

std::vector<Document> sample_docs() {
  Document a{"d0", "alpha beta gamma", {{0, 5, "x"}}, {{"lang", "en"}}};
  Document b{"d1", kSentence, {}, {}};
  Document c{"d2", "", {}, {}};
  return {a, b, c};
}

std::multiset<TokenId> multiset_without_rev(const std::vector<TokenId>& ids) {
  std::multiset<TokenId> out;
  for (TokenId id : ids)
    if (id != Vocab::kRev) out.insert(id);
  return out;
}

}  // namespace

TEST_CASE("jsonl round trip is lossless") {
  const auto path = temp_file("roundtrip.jsonl");
  const std::vector<Document> docs = sample_docs();
  write_jsonl(docs, path);
  const std::vector<Document> back = read_jsonl(path);
  REQUIRE(back.size() == docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    CHECK(back[i].id == docs[i].id);
    CHECK(back[i].text == docs[i].text);
    CHECK(back[i].entities == docs[i].entities);
    CHECK(back[i].meta == docs[i].meta);
  }
  fs::remove(path);
}

TEST_CASE("empty file yields empty iterator") {
  const auto path = temp_file("empty.jsonl");
  std::ofstream(path).close();
  CHECK(read_jsonl(path).empty());
  fs::remove(path);
}

TEST_CASE("malformed line reports its line number") {
  const auto path = temp_file("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":"a","text":"fine"})" << "\n";
    out << R"({"id":"b"})" << "\n";  // missing text
  }
  try {
    read_jsonl(path);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":2") != std::string::npos);
    CHECK(msg.find("text") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("invalid json reports its line number") {
  const auto path = temp_file("notjson.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":"a","text":"fine"})" << "\n";
    out << "{oops\n";
  }
  CHECK_THROWS_AS(read_jsonl(path), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("annotate finds gazetteer entries at the right offsets") {
  Document doc{"d", kSentence, {}, {}};
  const Gazetteer gaz({"Mary Lee Pfeiffer", "New York"});
  const Document out = annotate(doc, gaz);
  REQUIRE(out.entities.size() == 2);
  // Oracle: plain string search.
  CHECK(out.entities[0].start ==
        static_cast<std::int64_t>(kSentence.find("New York")));
  CHECK(out.entities[0].end == out.entities[0].start + 8);
  CHECK(out.entities[1].start ==
        static_cast<std::int64_t>(kSentence.find("Mary Lee Pfeiffer")));
  CHECK(kSentence.substr(static_cast<std::size_t>(out.entities[1].start),
                         17) == "Mary Lee Pfeiffer");
}

TEST_CASE("annotate with empty gazetteer is identity") {
  Document doc{"d", kSentence, {{0, 6, "who"}}, {}};
  const Document out = annotate(doc, Gazetteer{});
  CHECK(out.entities == doc.entities);
}

TEST_CASE("longest match wins and existing spans take precedence") {
  Document doc{"d", "New York City and York", {}, {}};
  const Gazetteer gaz({"York", "New York", "New York City"});
  const Document out = annotate(doc, gaz);
  REQUIRE(out.entities.size() == 2);
  CHECK(out.entities[0].start == 0);
  CHECK(out.entities[0].end == 13);  // "New York City"
  CHECK(out.entities[1].start == 18);
  CHECK(out.entities[1].end == 22);  // trailing "York"

  // Pre-existing span blocks the gazetteer matches that overlap it; the
  // non-overlapping "York" is still annotated.
  Document doc2{"d2", "New York City", {{0, 3, "pre"}}, {}};
  const Document out2 = annotate(doc2, gaz);
  REQUIRE(out2.entities.size() == 2);
  CHECK(out2.entities[0].label == "pre");
  CHECK(out2.entities[1].start == 4);
  CHECK(out2.entities[1].end == 8);
}

TEST_CASE("annotate respects word boundaries") {
  Document doc{"d", "Yorkshire is not York", {}, {}};
  const Document out = annotate(doc, Gazetteer({"York"}));
  REQUIRE(out.entities.size() == 1);
  CHECK(out.entities[0].start == 17);
}

TEST_CASE("build_stream doubles the set at mix 0.5") {
  const std::vector<Document> docs = {{"a", "x y z", {}, {}},
                                      {"b", "p q r", {}, {}}};
  VocabBuilder vb;
  for (const auto& d : docs) vb.add(word_split(d.text));
  const Vocab vocab = vb.finish();

  StreamConfig cfg;
  cfg.transform = TransformSpec::token();
  cfg.mix = 0.5;
  cfg.seed = 7;
  const auto stream = build_stream(docs, vocab, cfg);
  CHECK(stream.size() == 4);
  int forward = 0, reverse = 0;
  for (const auto& ex : stream)
    (ex.direction == Direction::forward ? forward : reverse) += 1;
  CHECK(forward == 2);
  CHECK(reverse == 2);
}

TEST_CASE("mix 0 gives a forward-only stream") {
  const std::vector<Document> docs = {{"a", "x y", {}, {}},
                                      {"b", "z w", {}, {}}};
  const Vocab vocab = build_vocab({{"x", "y", "z", "w"}});
  StreamConfig cfg;
  cfg.transform = TransformSpec::none();
  cfg.mix = 0.0;
  const auto stream = build_stream(docs, vocab, cfg);
  CHECK(stream.size() == 2);
  for (const auto& ex : stream) CHECK(ex.direction == Direction::forward);
}

TEST_CASE("stream is deterministic per seed") {
  std::vector<Document> docs;
  for (int i = 0; i < 200; ++i)
    docs.push_back({"d" + std::to_string(i),
                    "w" + std::to_string(i % 17) + " w" + std::to_string(i % 5),
                    {},
                    {}});
  VocabBuilder vb;
  for (const auto& d : docs) vb.add(word_split(d.text));
  const Vocab vocab = vb.finish();
  StreamConfig cfg;
  cfg.transform = TransformSpec::rand(3);
  cfg.seed = 99;
  cfg.shuffle_buffer = 64;
  const auto s1 = build_stream(docs, vocab, cfg);
  const auto s2 = build_stream(docs, vocab, cfg);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].source_id == s2[i].source_id);
    CHECK(s1[i].ids.ids == s2[i].ids.ids);
    CHECK(s1[i].direction == s2[i].direction);
  }
  StreamConfig other = cfg;
  other.seed = 100;
  const auto s3 = build_stream(docs, vocab, other);
  bool same_order = s1.size() == s3.size();
  if (same_order)
    for (std::size_t i = 0; i < s1.size(); ++i)
      same_order &= s1[i].source_id == s3[i].source_id &&
                    s1[i].direction == s3[i].direction;
  CHECK(!same_order);
}

TEST_CASE("reversed examples recover the forward token multiset") {
  std::vector<Document> docs;
  for (int i = 0; i < 50; ++i) {
    std::string text;
    for (int w = 0; w < 3 + i % 7; ++w)
      text += (w ? " w" : "w") + std::to_string((i + w) % 23);
    docs.push_back({"d" + std::to_string(i), text, {}, {}});
  }
  VocabBuilder vb;
  for (const auto& d : docs) vb.add(word_split(d.text));
  const Vocab vocab = vb.finish();

  for (TransformSpec spec :
       {TransformSpec::token(), TransformSpec::word(), TransformSpec::rand(3)}) {
    StreamConfig cfg;
    cfg.transform = spec;
    cfg.seed = 3;
    const auto stream = build_stream(docs, vocab, cfg);
    for (const auto& ex : stream) {
      if (ex.direction == Direction::forward) continue;
      const Document* src = nullptr;
      for (const auto& d : docs)
        if (d.id == ex.source_id) src = &d;
      REQUIRE(src != nullptr);
      const TokenSeq fwd = encode(word_split(src->text), vocab);
      CHECK(multiset_without_rev(ex.ids.ids) ==
            multiset_without_rev(fwd.ids));
    }
  }
}

TEST_CASE("entity_fraction substitutes the entity transform") {
  std::vector<Document> docs;
  for (int i = 0; i < 2000; ++i)
    docs.push_back({"d" + std::to_string(i), "alpha beta gamma delta", {}, {}});
  const Vocab vocab = build_vocab({{"alpha", "beta", "gamma", "delta"}});
  StreamConfig cfg;
  cfg.transform = TransformSpec::word();
  cfg.entity_fraction = 0.05;
  cfg.seed = 17;
  const auto stream = build_stream(docs, vocab, cfg);
  int entity = 0, word = 0;
  for (const auto& ex : stream) {
    if (ex.direction != Direction::reverse) continue;
    (ex.transform.kind == TransformKind::entity ? entity : word) += 1;
  }
  CHECK(entity + word == 2000);
  CHECK(entity > 50);   // ~100 expected
  CHECK(entity < 200);
}

TEST_CASE("direction_marker prepends one REV to reversed samples") {
  const std::vector<Document> docs = {{"a", "x y z", {}, {}}};
  const Vocab vocab = build_vocab({{"x", "y", "z"}});
  StreamConfig cfg;
  cfg.transform = TransformSpec::word();
  cfg.direction_marker = true;
  cfg.seed = 1;
  const auto stream = build_stream(docs, vocab, cfg);
  REQUIRE(stream.size() == 2);
  for (const auto& ex : stream) {
    if (ex.direction == Direction::reverse) {
      REQUIRE(!ex.ids.ids.empty());
      CHECK(ex.ids.ids.front() == Vocab::kRev);
      CHECK(decode(ex.ids) == "[REV] z y x");
    } else {
      CHECK(decode(ex.ids) == "x y z");
    }
  }
  cfg.direction_marker = false;
  for (const auto& ex : build_stream(docs, vocab, cfg))
    if (ex.direction == Direction::reverse) CHECK(decode(ex.ids) == "z y x");
}

TEST_CASE("document validation rejects bad spans") {
  Document doc{"d", "short", {{0, 99, "x"}}, {}};
  CHECK_THROWS_AS(doc.validate(), std::invalid_argument);
  Document doc2{"d", "abcdef", {{2, 4, "x"}, {3, 5, "y"}}, {}};
  CHECK_THROWS_AS(doc2.validate(), std::invalid_argument);
}

TEST_CASE("stream config validation") {
  StreamConfig cfg;
  cfg.mix = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.mix = 0.5;
  cfg.entity_fraction = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.entity_fraction = 0;
  cfg.transform = TransformSpec::rand(0);
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
