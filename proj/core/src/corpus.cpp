#include "reverso/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace reverso {

using json = nlohmann::ordered_json;

void Document::validate() const {
  std::int64_t prev_end = 0;
  for (const EntitySpan& s : entities) {
    if (s.start < 0 || s.end <= s.start ||
        s.end > static_cast<std::int64_t>(text.size()))
      throw std::invalid_argument("Document " + id + ": entity span [" +
                                  std::to_string(s.start) + ", " +
                                  std::to_string(s.end) + ") out of bounds");
    if (s.start < prev_end)
      throw std::invalid_argument("Document " + id +
                                  ": entity spans overlap or are unsorted");
    prev_end = s.end;
  }
}

std::vector<CharSpan> Document::entity_char_spans() const {
  std::vector<CharSpan> out;
  out.reserve(entities.size());
  for (const EntitySpan& s : entities)
    out.push_back({static_cast<std::size_t>(s.start),
                   static_cast<std::size_t>(s.end)});
  return out;
}

std::string document_to_json(const Document& doc) {
  json j;
  j["id"] = doc.id;
  j["text"] = doc.text;
  j["entities"] = json::array();
  for (const EntitySpan& s : doc.entities)
    j["entities"].push_back(json::array({s.start, s.end, s.label}));
  j["meta"] = json::object();
  for (const auto& [k, v] : doc.meta) j["meta"][k] = v;
  return j.dump();
}

Document document_from_json(const std::string& line) {
  const json j = json::parse(line);  // throws nlohmann::json::parse_error
  if (!j.is_object()) throw std::runtime_error("record is not a JSON object");
  if (!j.contains("text") || !j["text"].is_string())
    throw std::runtime_error("record missing string field \"text\"");
  Document doc;
  doc.text = j["text"].get<std::string>();
  if (j.contains("id")) doc.id = j["id"].get<std::string>();
  if (j.contains("entities")) {
    for (const auto& e : j["entities"]) {
      if (!e.is_array() || e.size() != 3)
        throw std::runtime_error("entity span must be [start, end, label]");
      doc.entities.push_back({e[0].get<std::int64_t>(),
                              e[1].get<std::int64_t>(),
                              e[2].get<std::string>()});
    }
  }
  if (j.contains("meta")) {
    for (const auto& [k, v] : j["meta"].items())
      doc.meta[k] = v.get<std::string>();
  }
  doc.validate();
  return doc;
}

JsonlReader::JsonlReader(const std::filesystem::path& path)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_)
    throw std::runtime_error("cannot open " + path.string());
}

std::optional<Document> JsonlReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      return document_from_json(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path_.string() + ":" + std::to_string(line_no_) +
                               ": " + e.what());
    }
  }
  return std::nullopt;
}

std::vector<Document> read_jsonl(const std::filesystem::path& path) {
  JsonlReader reader(path);
  std::vector<Document> docs;
  while (auto doc = reader.next()) docs.push_back(std::move(*doc));
  return docs;
}

void write_jsonl(const std::vector<Document>& docs,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() +
                                     " for writing");
  for (const Document& doc : docs) out << document_to_json(doc) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Gazetteer::Gazetteer(std::vector<std::string> entries)
    : entries_(std::move(entries)) {
  for (const std::string& e : entries_)
    if (e.empty())
      throw std::invalid_argument("Gazetteer: empty surface form");
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open gazetteer " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) entries.push_back(line);
  }
  return Gazetteer(std::move(entries));
}

namespace {

bool is_word_byte(unsigned char c) {
  return c >= 0x80 || std::isalnum(c) || c == '_';
}

bool at_word_boundary(const std::string& text, std::size_t start,
                      std::size_t end) {
  if (start > 0 && is_word_byte(static_cast<unsigned char>(text[start - 1])))
    return false;
  if (end < text.size() && is_word_byte(static_cast<unsigned char>(text[end])))
    return false;
  return true;
}

bool overlaps_any(const std::vector<EntitySpan>& spans, std::int64_t start,
                  std::int64_t end) {
  for (const EntitySpan& s : spans)
    if (start < s.end && s.start < end) return true;
  return false;
}

}  // namespace

Document annotate(Document doc, const Gazetteer& gaz) {
  doc.validate();
  struct Candidate {
    std::int64_t start, end;
    const std::string* entry;
  };
  std::vector<Candidate> candidates;
  for (const std::string& entry : gaz.entries()) {
    std::size_t pos = 0;
    while ((pos = doc.text.find(entry, pos)) != std::string::npos) {
      if (at_word_boundary(doc.text, pos, pos + entry.size()))
        candidates.push_back({static_cast<std::int64_t>(pos),
                              static_cast<std::int64_t>(pos + entry.size()),
                              &entry});
      ++pos;
    }
  }
  // Longest match wins; ties resolved by position then surface form.
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              const auto la = a.end - a.start, lb = b.end - b.start;
              if (la != lb) return la > lb;
              if (a.start != b.start) return a.start < b.start;
              return *a.entry < *b.entry;
            });
  std::vector<EntitySpan> accepted = doc.entities;
  for (const Candidate& c : candidates) {
    if (!overlaps_any(accepted, c.start, c.end))
      accepted.push_back({c.start, c.end, "gaz"});
  }
  std::sort(accepted.begin(), accepted.end(),
            [](const EntitySpan& a, const EntitySpan& b) {
              return a.start < b.start;
            });
  doc.entities = std::move(accepted);
  doc.validate();
  return doc;
}

void StreamConfig::validate() const {
  transform.validate();
  if (mix < 0.0 || mix > 1.0)
    throw std::invalid_argument("StreamConfig: mix must be in [0, 1]");
  if (entity_fraction < 0.0 || entity_fraction > 1.0)
    throw std::invalid_argument(
        "StreamConfig: entity_fraction must be in [0, 1]");
  if (shuffle_buffer < 1)
    throw std::invalid_argument("StreamConfig: shuffle_buffer must be >= 1");
}

TransformedExample transform_document(const Document& doc, const Vocab& vocab,
                                      const TransformSpec& spec, Rng& rng) {
  spec.validate();
  TransformedExample ex;
  ex.transform = spec;
  ex.source_id = doc.id;
  ex.direction =
      spec.kind == TransformKind::none ? Direction::forward : Direction::reverse;
  switch (spec.kind) {
    case TransformKind::none:
      ex.ids = encode(word_split(doc.text), vocab);
      break;
    case TransformKind::token:
      ex.ids = reverse_token(encode(word_split(doc.text), vocab));
      break;
    case TransformKind::word:
      ex.ids = encode(word_split(reverse_word(doc.text)), vocab);
      break;
    case TransformKind::entity:
      ex.ids = encode(
          word_split(reverse_entity(doc.text, doc.entity_char_spans())), vocab);
      break;
    case TransformKind::rand:
      ex.ids = reverse_rand(encode(word_split(doc.text), vocab), spec.k, rng);
      break;
  }
  return ex;
}

ExampleStream::ExampleStream(const std::vector<Document>* docs,
                             const Vocab* vocab, StreamConfig cfg)
    : docs_(docs), vocab_(vocab), cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
  buffer_.reserve(std::min<std::size_t>(cfg_.shuffle_buffer, 1 << 16));
}

TransformedExample ExampleStream::make_example(const Document& doc,
                                               bool reversed) {
  if (!reversed) return transform_document(doc, *vocab_, TransformSpec::none(), rng_);
  TransformSpec spec = cfg_.transform;
  if (cfg_.entity_fraction > 0.0 && rng_.real() < cfg_.entity_fraction)
    spec = TransformSpec::entity();
  TransformedExample ex = transform_document(doc, *vocab_, spec, rng_);
  if (cfg_.direction_marker)
    ex.ids.ids.insert(ex.ids.ids.begin(), Vocab::kRev);
  return ex;
}

void ExampleStream::refill() {
  // Per-doc emission probabilities chosen so that reversed samples make up
  // cfg_.mix of the expected stream: mix <= 0.5 keeps every forward sample
  // and thins reversed ones; mix > 0.5 does the opposite.
  double p_fwd = 1.0, p_rev = 1.0;
  if (cfg_.mix <= 0.5) {
    p_rev = cfg_.mix >= 0.5 ? 1.0 : cfg_.mix / (1.0 - cfg_.mix);
  } else {
    p_fwd = (1.0 - cfg_.mix) / cfg_.mix;
  }
  while (buffer_.size() < cfg_.shuffle_buffer && doc_idx_ < docs_->size()) {
    const Document& doc = (*docs_)[doc_idx_];
    if (!pending_reverse_) {
      pending_reverse_ = true;
      if (p_fwd >= 1.0 || rng_.real() < p_fwd)
        buffer_.push_back(make_example(doc, false));
      if (buffer_.size() >= cfg_.shuffle_buffer) return;
    }
    if (p_rev >= 1.0 || rng_.real() < p_rev)
      buffer_.push_back(make_example(doc, true));
    pending_reverse_ = false;
    ++doc_idx_;
  }
}

std::optional<TransformedExample> ExampleStream::next() {
  refill();
  if (buffer_.empty()) return std::nullopt;
  const std::size_t j = static_cast<std::size_t>(rng_.below(buffer_.size()));
  std::swap(buffer_[j], buffer_.back());
  TransformedExample out = std::move(buffer_.back());
  buffer_.pop_back();
  return out;
}

std::vector<TransformedExample> build_stream(const std::vector<Document>& docs,
                                             const Vocab& vocab,
                                             const StreamConfig& cfg) {
  ExampleStream stream(&docs, &vocab, cfg);
  std::vector<TransformedExample> out;
  while (auto ex = stream.next()) out.push_back(std::move(*ex));
  return out;
}

}  // namespace reverso
