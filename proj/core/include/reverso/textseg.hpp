#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "reverso/rng.hpp"

namespace reverso {

using TokenId = std::int32_t;

/// Token vocabulary. Ids are dense in [0, size()); the five special tokens
/// always occupy ids 0-4 in the order PAD, BOS, EOS, REV, UNK. Their surface
/// forms are bracketed ("[PAD]", ...) and can never collide with
/// corpus-derived tokens because word_split() peels brackets off words.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kRev = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr int kNumSpecials = 5;

  Vocab();

  /// Adds a token string if absent; returns its id either way.
  TokenId add(std::string_view token);

  /// Id for a token string, or kUnk when absent.
  TokenId id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& string_of(TokenId id) const;
  int size() const { return static_cast<int>(id_to_string_.size()); }

  /// One token per line, UTF-8, line number = id; specials on lines 0-4.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  const std::vector<std::string>& tokens() const { return id_to_string_; }

 private:
  std::vector<std::string> id_to_string_;
  std::unordered_map<std::string, TokenId> string_to_id_;
};

/// A token id sequence together with the vocabulary it was encoded under.
/// The vocab pointer is non-owning; it must outlive the sequence.
struct TokenSeq {
  std::vector<TokenId> ids;
  const Vocab* vocab = nullptr;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

enum class SpanKind { plain, entity };

/// Half-open token index range [start, end).
struct Span {
  int start = 0;
  int end = 0;
  SpanKind kind = SpanKind::plain;

  int length() const { return end - start; }
  friend bool operator==(const Span& a, const Span& b) {
    return a.start == b.start && a.end == b.end && a.kind == b.kind;
  }
};

/// Ordered, contiguous, non-overlapping spans that exactly partition [0, n).
struct Segmentation {
  std::vector<Span> spans;

  /// Throws std::invalid_argument unless the spans partition [0, n) exactly
  /// with every span non-empty.
  void validate(int n) const;
  bool is_valid(int n) const;

  /// n unit-length spans.
  static Segmentation units(int n);
  /// One span covering [0, n) (empty segmentation when n == 0).
  static Segmentation whole(int n);
};

/// A word with its originating character range in the source text.
struct WordSpan {
  std::string word;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
};

/// Rule-based word splitter.
///
/// Rules, applied in order:
///   1. split on Unicode whitespace (ASCII space/tab/newlines plus NBSP,
///      the U+2000 block, U+2028/29, U+205F, U+3000);
///   2. peel leading and trailing punctuation characters .,;:!?"'()[] off
///      each chunk into standalone tokens;
///   3. if the remaining core is digits with embedded commas ("1,962"),
///      split at the commas, emitting the commas as tokens.
/// Internal hyphens and apostrophes stay inside their word. Idempotent under
/// re-joining with single spaces.
std::vector<std::string> word_split(std::string_view text);

/// word_split plus byte offsets into the original text. Offsets of peeled
/// punctuation point at the punctuation character itself.
std::vector<WordSpan> word_split_spans(std::string_view text);

/// Collects every distinct word over an iterated corpus; specials first,
/// then first-occurrence order.
class VocabBuilder {
 public:
  void add(const std::vector<std::string>& words);
  /// Throws std::invalid_argument if no word list was ever added.
  Vocab finish();

 private:
  Vocab vocab_;
  bool saw_input_ = false;
};

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus);

/// Unknown words map to UNK.
TokenSeq encode(const std::vector<std::string>& words, const Vocab& vocab);

/// Tokens joined by single spaces; specials render as their bracketed forms.
std::string decode(const TokenSeq& seq);

/// Partitions [0, n) into chunks whose lengths are drawn uniformly from
/// {1..k} left to right, the final chunk truncated to fit. Throws
/// std::invalid_argument when k < 1 or n < 0.
Segmentation random_partition(int n, int k, Rng& rng);

}  // namespace reverso
