#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "reverso/reversal.hpp"
#include "reverso/rng.hpp"
#include "reverso/textseg.hpp"

using namespace reverso;

namespace {

const std::string kSentence =
    "Cruise was born on July 3, 1962, in Syracuse, New York, to Mary Lee "
    "Pfeiffer.";

TokenSeq random_seq(const Vocab& v, Rng& rng, int max_len) {
  TokenSeq seq;
  seq.vocab = &v;
  const int n = static_cast<int>(rng.below(max_len + 1));
  for (int i = 0; i < n; ++i)
    seq.ids.push_back(Vocab::kNumSpecials +
                      static_cast<TokenId>(rng.below(
                          static_cast<std::uint64_t>(v.size()) -
                          Vocab::kNumSpecials)));
  return seq;
}

std::multiset<TokenId> multiset_of(const TokenSeq& s, bool drop_rev) {
  std::multiset<TokenId> out;
  for (TokenId id : s.ids)
    if (!drop_rev || id != Vocab::kRev) out.insert(id);
  return out;
}

CharSpan find_span(const std::string& text, const std::string& needle) {
  const std::size_t pos = text.find(needle);
  REQUIRE(pos != std::string::npos);
  return {pos, pos + needle.size()};
}

}  // namespace

TEST_CASE("reverse_token trivial cases and involution") {
  const Vocab v = build_vocab({{"a", "b", "c"}});
  CHECK(reverse_token(encode({}, v)).ids.empty());
  CHECK(reverse_token(encode({"a"}, v)).ids == encode({"a"}, v).ids);
  CHECK(reverse_token(encode({"a", "b", "c"}, v)).ids ==
        encode({"c", "b", "a"}, v).ids);
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const TokenSeq s = random_seq(v, rng, 30);
    CHECK(reverse_token(reverse_token(s)).ids == s.ids);
  }
}

TEST_CASE("reverse_word reproduces the word-reversal golden line") {
  CHECK(reverse_word(kSentence) ==
        ". Pfeiffer Lee Mary to , York New , Syracuse in , 1962 , 3 July on "
        "born was Cruise");
}

TEST_CASE("reverse_word basics and involution") {
  CHECK(reverse_word("hello") == "hello");
  CHECK(reverse_word("") == "");
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    // Oracle: plain list reversal of simple words.
    std::vector<std::string> words;
    const int n = static_cast<int>(rng.below(12));
    for (int j = 0; j < n; ++j)
      words.push_back("w" + std::to_string(rng.below(50)));
    std::string text;
    for (std::size_t j = 0; j < words.size(); ++j) {
      if (j) text += ' ';
      text += words[j];
    }
    std::vector<std::string> reversed = words;
    std::reverse(reversed.begin(), reversed.end());
    std::string expected;
    for (std::size_t j = 0; j < reversed.size(); ++j) {
      if (j) expected += ' ';
      expected += reversed[j];
    }
    CHECK(reverse_word(text) == expected);
    // Involution on whitespace-normalized text.
    CHECK(reverse_word(reverse_word(text)) == text);
  }
}

TEST_CASE("reverse_entity reproduces the entity-preserving golden line") {
  const std::vector<CharSpan> entities = {
      find_span(kSentence, "Cruise"), find_span(kSentence, "Syracuse"),
      find_span(kSentence, "New York"),
      find_span(kSentence, "Mary Lee Pfeiffer")};
  CHECK(reverse_entity(kSentence, entities) ==
        ". Mary Lee Pfeiffer to , New York , Syracuse in , 1962 , 3 July on "
        "born was Cruise");
}

TEST_CASE("reverse_entity edge cases") {
  CHECK(reverse_entity(kSentence, {}) == reverse_word(kSentence));
  const std::string text = "alpha beta gamma";
  CHECK(reverse_entity(text, {{0, text.size()}}) == text);
  CHECK_THROWS_AS(reverse_entity(text, {{0, 100}}), std::invalid_argument);
  CHECK_THROWS_AS(reverse_entity(text, {{0, 7}, {5, 10}}),
                  std::invalid_argument);
}

TEST_CASE("reverse_entity keeps every entity contiguous and in order") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    // Build a random sentence and pick random non-overlapping word runs as
    // entities.
    const int n_words = 3 + static_cast<int>(rng.below(12));
    std::vector<std::string> words;
    for (int i = 0; i < n_words; ++i)
      words.push_back("w" + std::to_string(i));
    std::string text;
    std::vector<std::size_t> starts;
    for (int i = 0; i < n_words; ++i) {
      if (i) text += ' ';
      starts.push_back(text.size());
      text += words[static_cast<std::size_t>(i)];
    }
    std::vector<CharSpan> entities;
    std::vector<std::string> surfaces;
    int w = 0;
    while (w < n_words) {
      if (rng.below(3) == 0) {
        const int len = 1 + static_cast<int>(rng.below(3));
        const int end = std::min(n_words, w + len);
        const std::size_t c0 = starts[static_cast<std::size_t>(w)];
        const std::size_t c1 =
            starts[static_cast<std::size_t>(end - 1)] +
            words[static_cast<std::size_t>(end - 1)].size();
        entities.push_back({c0, c1});
        surfaces.push_back(text.substr(c0, c1 - c0));
        w = end;
      } else {
        ++w;
      }
    }
    const std::string reversed = reverse_entity(text, entities);
    for (const std::string& surface : surfaces)
      CHECK(reversed.find(surface) != std::string::npos);
    // Multiset of words is preserved.
    auto sorted_words = [](std::string s) {
      auto ws = word_split(s);
      std::sort(ws.begin(), ws.end());
      return ws;
    };
    CHECK(sorted_words(reversed) == sorted_words(text));
  }
}

TEST_CASE("reverse_spans unit and whole segmentations") {
  const Vocab v = build_vocab({{"t1", "t2", "t3", "t4", "t5"}});
  const TokenSeq seq = encode({"t1", "t2", "t3", "t4", "t5"}, v);
  CHECK(reverse_spans(seq, Segmentation::units(5), false).ids ==
        reverse_token(seq).ids);
  CHECK(reverse_spans(seq, Segmentation::whole(5), false).ids == seq.ids);
  Segmentation bad;
  bad.spans = {{0, 2}};
  CHECK_THROWS_AS(reverse_spans(seq, bad, false), std::invalid_argument);
}

TEST_CASE("reverse_spans reproduces the random-segment golden line") {
  const std::vector<std::string> words = word_split(kSentence);
  const Vocab v = build_vocab({words});
  const TokenSeq seq = encode(words, v);
  REQUIRE(seq.ids.size() == 20);
  // Segments shown in the running example: |Cruise was|born|on July 3 , 1962 ,|
  // in Syracuse , New|York , to Mary Lee Pfeiffer .|
  Segmentation seg;
  seg.spans = {{0, 2}, {2, 3}, {3, 9}, {9, 13}, {13, 20}};
  const TokenSeq out = reverse_spans(seq, seg, /*insert_rev=*/true);
  CHECK(decode(out) ==
        "[REV] York , to Mary Lee Pfeiffer . [REV] in Syracuse , New [REV] on "
        "July 3 , 1962 , [REV] born [REV] Cruise was");
}

TEST_CASE("reverse_spans with unit segmentation equals reverse_token") {
  const Vocab v = build_vocab({{"x"}});
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const TokenSeq s = random_seq(v, rng, 40);
    CHECK(reverse_spans(s, Segmentation::units(static_cast<int>(s.size())),
                        false)
              .ids == reverse_token(s).ids);
  }
}

TEST_CASE("reverse_rand invariants over random inputs") {
  const Vocab v = build_vocab({{"a", "b", "c", "d", "e", "f"}});
  Rng data_rng(55), part_rng(56);
  for (int trial = 0; trial < 1000; ++trial) {
    const TokenSeq s = random_seq(v, data_rng, 50);
    const int k = 1 + static_cast<int>(data_rng.below(8));
    const TokenSeq out = reverse_rand(s, k, part_rng);
    long rev_count = std::count(out.ids.begin(), out.ids.end(), Vocab::kRev);
    // REV count equals segment count; segment count within bounds.
    const long n = static_cast<long>(s.size());
    if (n == 0) {
      CHECK(out.ids.empty());
    } else {
      CHECK(rev_count >= (n + k - 1) / k);
      CHECK(rev_count <= n);
      CHECK(static_cast<long>(out.size()) == n + rev_count);
    }
    // Multiset preserved after dropping REV.
    CHECK(multiset_of(out, true) == multiset_of(s, false));
  }
}

TEST_CASE("reverse_rand with k=1 is token reversal with REV markers") {
  const Vocab v = build_vocab({{"a", "b", "c"}});
  const TokenSeq s = encode({"a", "b", "c"}, v);
  Rng rng(9);
  const TokenSeq out = reverse_rand(s, 1, rng);
  CHECK(decode(out) == "[REV] c [REV] b [REV] a");
  CHECK_THROWS_AS(reverse_rand(s, 0, rng), std::invalid_argument);
}

TEST_CASE("apply dispatches on kind") {
  const Vocab v = build_vocab({{"a", "b", "c"}});
  const TokenSeq s = encode({"a", "b", "c"}, v);
  Rng rng(2);

  const TransformedExample none = apply(s, TransformSpec::none(), rng, "d0");
  CHECK(none.direction == Direction::forward);
  CHECK(none.ids.ids == s.ids);
  CHECK(none.source_id == "d0");

  const TransformedExample tok = apply(s, TransformSpec::token(), rng);
  CHECK(tok.direction == Direction::reverse);
  CHECK(tok.ids.ids == reverse_token(s).ids);

  const TransformedExample rnd = apply(s, TransformSpec::rand(2), rng);
  CHECK(rnd.direction == Direction::reverse);
  CHECK(multiset_of(rnd.ids, true) == multiset_of(s, false));

  CHECK_THROWS_AS(apply(s, TransformSpec::rand(0), rng),
                  std::invalid_argument);
}
