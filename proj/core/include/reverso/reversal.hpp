#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "reverso/rng.hpp"
#include "reverso/textseg.hpp"

namespace reverso {

enum class TransformKind { none, token, word, entity, rand };

std::string_view to_string(TransformKind kind);
TransformKind transform_kind_from_string(std::string_view name);

/// Which reversal to apply. k is the maximum segment length and is only
/// meaningful for kind == rand, as is rev_separator (whether segments are
/// marked with a leading REV token).
struct TransformSpec {
  TransformKind kind = TransformKind::none;
  int k = 0;
  bool rev_separator = true;

  /// Throws std::invalid_argument when kind == rand and k < 1.
  void validate() const;

  static TransformSpec none() { return {TransformKind::none, 0, true}; }
  static TransformSpec token() { return {TransformKind::token, 0, true}; }
  static TransformSpec word() { return {TransformKind::word, 0, true}; }
  static TransformSpec entity() { return {TransformKind::entity, 0, true}; }
  static TransformSpec rand(int k, bool rev_separator = true) {
    return {TransformKind::rand, k, rev_separator};
  }
};

enum class Direction { forward, reverse };

std::string_view to_string(Direction d);

/// One training example as emitted by the data pipeline.
struct TransformedExample {
  TokenSeq ids;
  Direction direction = Direction::forward;
  TransformSpec transform;
  std::string source_id;
};

/// Character-offset entity extent, [start, end) in bytes.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Shared core of all four transforms: emits the spans of seg in reversed
/// span order, keeping intra-span token order. When insert_rev is set, a REV
/// token precedes each emitted span. seg must partition seq exactly.
TokenSeq reverse_spans(const TokenSeq& seq, const Segmentation& seg,
                       bool insert_rev);

/// Full token-order reversal (unit segmentation, no separators).
TokenSeq reverse_token(const TokenSeq& seq);

/// Word-order reversal; output words are joined with single spaces.
std::string reverse_word(std::string_view text);

/// Word-order reversal, except that maximal word runs covered by an entity
/// span move as one block with their internal order intact. Entity spans must
/// be non-overlapping and within bounds (throws std::invalid_argument).
std::string reverse_entity(std::string_view text,
                           const std::vector<CharSpan>& entities);

/// reverse_spans over a fresh random_partition(|seq|, k, rng); a new
/// partition is drawn on every call.
TokenSeq reverse_rand(const TokenSeq& seq, int k, Rng& rng);

/// Dispatch on a token sequence. kind == none tags the input as forward;
/// every other kind yields a reverse-direction example. Word- and
/// entity-level transforms need the source text and are dispatched from the
/// corpus pipeline (transform_document), which normalizes to TokenSeq
/// output; this overload treats kind == word as kind == token, which is
/// exact for word-tokenized sequences.
TransformedExample apply(const TokenSeq& seq, const TransformSpec& spec,
                         Rng& rng, std::string source_id = {});

}  // namespace reverso
