#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reverso/reversal.hpp"
#include "reverso/textseg.hpp"

namespace reverso {

/// Stand-off entity annotation: character (byte) offsets into Document::text.
struct EntitySpan {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::string label;

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

/// Corpus ingestion record. Entity spans are in-bounds, non-overlapping and
/// sorted by start offset (validate() enforces this).
struct Document {
  std::string id;
  std::string text;
  std::vector<EntitySpan> entities;
  std::map<std::string, std::string> meta;

  void validate() const;
  std::vector<CharSpan> entity_char_spans() const;
};

/// Streaming JSON-lines reader. Malformed input raises std::runtime_error
/// with the 1-based line number.
class JsonlReader {
 public:
  explicit JsonlReader(const std::filesystem::path& path);
  std::optional<Document> next();
  std::size_t line_number() const { return line_no_; }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
  std::size_t line_no_ = 0;
};

std::vector<Document> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::vector<Document>& docs,
                 const std::filesystem::path& path);
std::string document_to_json(const Document& doc);
Document document_from_json(const std::string& line);

/// Multi-word surface forms matched longest-first at word boundaries.
class Gazetteer {
 public:
  Gazetteer() = default;
  explicit Gazetteer(std::vector<std::string> entries);
  static Gazetteer load(const std::filesystem::path& path);  // one form per line

  const std::vector<std::string>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<std::string> entries_;
};

/// Adds non-overlapping longest-match spans for gazetteer entries; spans
/// already on the document are kept and take precedence.
Document annotate(Document doc, const Gazetteer& gaz);

/// Stream construction policy. mix is the fraction of emitted samples that
/// are reversed (0.5 doubles the set 1:1). entity_fraction substitutes the
/// entity transform for the configured one on that fraction of reversed
/// samples (the paper-style "entity*" mix uses kind word, fraction 0.05).
/// direction_marker prepends one REV token to every reversed sample.
struct StreamConfig {
  TransformSpec transform;
  double mix = 0.5;
  std::size_t shuffle_buffer = 10000;
  std::uint64_t seed = 0;
  double entity_fraction = 0.0;
  bool direction_marker = false;

  void validate() const;
};

/// Applies spec to one document, normalizing to token-sequence output under
/// vocab. Word/entity transforms run on doc.text (then encode); token/rand
/// run on the encoded tokens.
TransformedExample transform_document(const Document& doc, const Vocab& vocab,
                                      const TransformSpec& spec, Rng& rng);

/// Pull-based stream over a document collection: emits each document once
/// forward and/or once reversed according to cfg.mix, shuffled through a
/// bounded buffer. Deterministic given (docs, cfg). Not thread-safe; create
/// one per thread or epoch.
class ExampleStream {
 public:
  ExampleStream(const std::vector<Document>* docs, const Vocab* vocab,
                StreamConfig cfg);
  std::optional<TransformedExample> next();

 private:
  void refill();
  TransformedExample make_example(const Document& doc, bool reversed);

  const std::vector<Document>* docs_;
  const Vocab* vocab_;
  StreamConfig cfg_;
  Rng rng_;
  std::size_t doc_idx_ = 0;
  bool pending_reverse_ = false;
  std::vector<TransformedExample> buffer_;
  bool draining_ = false;
};

/// Materialized convenience wrapper over ExampleStream.
std::vector<TransformedExample> build_stream(const std::vector<Document>& docs,
                                             const Vocab& vocab,
                                             const StreamConfig& cfg);

}  // namespace reverso
