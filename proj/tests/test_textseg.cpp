#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "reverso/rng.hpp"
#include "reverso/textseg.hpp"

using namespace reverso;

namespace {

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

// Random printable-ASCII text for property checks.
std::string random_text(Rng& rng, int max_len) {
  const int len = static_cast<int>(rng.below(max_len + 1));
  std::string s;
  for (int i = 0; i < len; ++i)
    s += static_cast<char>(' ' + rng.below(95));
  return s;
}

}  // namespace

TEST_CASE("word_split matches the documented splitter on the running example") {
  const std::string sentence =
      "Cruise was born on July 3, 1962, in Syracuse, New York, to Mary Lee "
      "Pfeiffer.";
  const std::vector<std::string> expected = {
      "Cruise", "was", "born", "on",  "July",     "3",  ",",  "1962", ",",
      "in",     "Syracuse", ",",  "New", "York", ",",  "to", "Mary", "Lee",
      "Pfeiffer", "."};
  CHECK(word_split(sentence) == expected);
}

TEST_CASE("word_split basics") {
  CHECK(word_split("").empty());
  CHECK(word_split("a12 a64") == std::vector<std::string>{"a12", "a64"});
  CHECK(word_split("hello") == std::vector<std::string>{"hello"});
  CHECK(word_split("  \t\n ").empty());
  CHECK(word_split("don't stop") == std::vector<std::string>{"don't", "stop"});
  CHECK(word_split("well-known") == std::vector<std::string>{"well-known"});
  CHECK(word_split("(hello)") == std::vector<std::string>{"(", "hello", ")"});
  CHECK(word_split("\"quote.\"") ==
        std::vector<std::string>{"\"", "quote", ".", "\""});
  CHECK(word_split("1,962") == std::vector<std::string>{"1", ",", "962"});
  CHECK(word_split("x86,arm") == std::vector<std::string>{"x86,arm"});
}

TEST_CASE("word_split handles unicode whitespace") {
  // NBSP and ideographic space both separate words.
  CHECK(word_split("a\xC2\xA0z") == std::vector<std::string>{"a", "z"});
  CHECK(word_split("a\xE3\x80\x80z") == std::vector<std::string>{"a", "z"});
  CHECK(word_split("caf\xC3\xA9 bar") ==
        std::vector<std::string>{"caf\xC3\xA9", "bar"});
}

TEST_CASE("word_split is idempotent under re-joining") {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const std::string text = random_text(rng, 60);
    const auto once = word_split(text);
    const auto twice = word_split(join(once));
    CHECK(once == twice);
  }
}

TEST_CASE("word_split_spans reports byte offsets") {
  const std::string text = " ab, cd";
  const auto spans = word_split_spans(text);
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].word == "ab");
  CHECK(text.substr(spans[0].char_start, spans[0].char_end - spans[0].char_start) ==
        "ab");
  CHECK(spans[1].word == ",");
  CHECK(spans[1].char_start == 3);
  CHECK(spans[2].word == "cd");
  CHECK(spans[2].char_start == 5);
}

TEST_CASE("build_vocab orders specials first then first occurrence") {
  const Vocab v = build_vocab({{"a", "b"}, {"b", "c"}});
  CHECK(v.size() == 8);
  CHECK(v.string_of(0) == "[PAD]");
  CHECK(v.string_of(1) == "[BOS]");
  CHECK(v.string_of(2) == "[EOS]");
  CHECK(v.string_of(3) == "[REV]");
  CHECK(v.string_of(4) == "[UNK]");
  CHECK(v.string_of(5) == "a");
  CHECK(v.string_of(6) == "b");
  CHECK(v.string_of(7) == "c");
}

TEST_CASE("build_vocab edge cases") {
  CHECK_THROWS_AS(build_vocab({}), std::invalid_argument);
  // A corpus of one empty word list is degenerate but legal.
  const Vocab v = build_vocab({{}});
  CHECK(v.size() == Vocab::kNumSpecials);
}

TEST_CASE("encode decode round trip") {
  const Vocab v = build_vocab({{"a12", "a64"}});
  const TokenSeq seq = encode({"a12", "a64"}, v);
  CHECK(seq.ids == std::vector<TokenId>{5, 6});
  CHECK(decode(seq) == "a12 a64");
  CHECK(encode({}, v).ids.empty());
  CHECK(decode(encode({}, v)).empty());
}

TEST_CASE("unknown words encode to UNK") {
  const Vocab v = build_vocab({{"known"}});
  const TokenSeq seq = encode({"mystery"}, v);
  CHECK(seq.ids == std::vector<TokenId>{Vocab::kUnk});
  CHECK(decode(seq) == "[UNK]");
}

TEST_CASE("decode encode identity on random in-vocab word lists") {
  Rng rng(5);
  std::vector<std::string> pool;
  for (int i = 0; i < 50; ++i) pool.push_back("w" + std::to_string(i));
  const Vocab v = build_vocab({pool});
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> words;
    const int n = static_cast<int>(rng.below(20));
    for (int i = 0; i < n; ++i)
      words.push_back(pool[static_cast<std::size_t>(rng.below(pool.size()))]);
    CHECK(decode(encode(words, v)) == join(words));
  }
}

TEST_CASE("vocab save load round trip") {
  const Vocab v = build_vocab({{"alpha", "beta", "gamma"}});
  const auto path =
      std::filesystem::temp_directory_path() / "reverso_vocab_test.txt";
  v.save(path);
  const Vocab u = Vocab::load(path);
  REQUIRE(u.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(u.string_of(i) == v.string_of(i));
  std::filesystem::remove(path);
}

TEST_CASE("random_partition basics") {
  Rng rng(1);
  CHECK(random_partition(0, 3, rng).spans.empty());
  const Segmentation unit = random_partition(7, 1, rng);
  REQUIRE(unit.spans.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CHECK(unit.spans[static_cast<std::size_t>(i)].start == i);
    CHECK(unit.spans[static_cast<std::size_t>(i)].end == i + 1);
  }
  CHECK_THROWS_AS(random_partition(5, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(random_partition(-1, 2, rng), std::invalid_argument);
}

TEST_CASE("random_partition is deterministic per seed") {
  Rng a(123), b(123);
  const Segmentation sa = random_partition(50, 4, a);
  const Segmentation sb = random_partition(50, 4, b);
  REQUIRE(sa.spans.size() == sb.spans.size());
  for (std::size_t i = 0; i < sa.spans.size(); ++i)
    CHECK(sa.spans[i] == sb.spans[i]);
}

TEST_CASE("random_partition output always partitions [0, n)") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.below(120));
    const int k = 1 + static_cast<int>(rng.below(10));
    const Segmentation seg = random_partition(n, k, rng);
    CHECK(seg.is_valid(n));
    for (const Span& s : seg.spans) {
      CHECK(s.length() >= 1);
      CHECK(s.length() <= k);
    }
  }
}

TEST_CASE("segmentation validity") {
  Segmentation seg;
  seg.spans = {{0, 2}, {2, 5}};
  CHECK(seg.is_valid(5));
  CHECK(!seg.is_valid(6));
  seg.spans = {{0, 2}, {3, 5}};  // gap
  CHECK(!seg.is_valid(5));
  CHECK_THROWS_AS(seg.validate(5), std::invalid_argument);
  CHECK(Segmentation::units(3).is_valid(3));
  CHECK(Segmentation::whole(3).is_valid(3));
  CHECK(Segmentation::whole(0).is_valid(0));
}
