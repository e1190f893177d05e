#include "reverso/textseg.hpp"

#include <fstream>
#include <stdexcept>

namespace reverso {

namespace {

const char* kSpecialForms[Vocab::kNumSpecials] = {"[PAD]", "[BOS]", "[EOS]",
                                                  "[REV]", "[UNK]"};

bool is_peel_punct(char32_t c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '"': case '\'': case '(': case ')': case '[': case ']':
      return true;
    default:
      return false;
  }
}

bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

// Decodes one UTF-8 codepoint at byte i; advances i past it. Invalid bytes
// are passed through as single-byte codepoints.
char32_t next_codepoint(std::string_view s, std::size_t& i) {
  const unsigned char b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = 1;
  char32_t cp = b0;
  if (b0 >= 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else if (b0 >= 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  }
  if (i + len > s.size()) len = 1, cp = b0;
  for (std::size_t j = 1; j < len; ++j) {
    const unsigned char bj = static_cast<unsigned char>(s[i + j]);
    if ((bj & 0xC0) != 0x80) {
      len = 1;
      cp = b0;
      break;
    }
    cp = (cp << 6) | (bj & 0x3F);
  }
  i += len;
  return cp;
}

bool all_digits_with_comma(std::string_view core) {
  bool has_comma = false, has_digit = false;
  for (char c : core) {
    if (c == ',') {
      has_comma = true;
    } else if (c >= '0' && c <= '9') {
      has_digit = true;
    } else {
      return false;
    }
  }
  return has_comma && has_digit;
}

// Splits one whitespace-free chunk according to rules 2-3.
void split_chunk(std::string_view text, std::size_t begin, std::size_t end,
                 std::vector<WordSpan>& out) {
  // Peel leading punctuation.
  while (begin < end && is_peel_punct(static_cast<unsigned char>(text[begin])) &&
         static_cast<unsigned char>(text[begin]) < 0x80) {
    out.push_back({std::string(1, text[begin]), begin, begin + 1});
    ++begin;
  }
  // Find trailing punctuation run (emitted after the core).
  std::size_t core_end = end;
  while (core_end > begin &&
         static_cast<unsigned char>(text[core_end - 1]) < 0x80 &&
         is_peel_punct(static_cast<unsigned char>(text[core_end - 1]))) {
    --core_end;
  }
  if (core_end > begin) {
    const std::string_view core = text.substr(begin, core_end - begin);
    if (all_digits_with_comma(core)) {
      std::size_t start = begin;
      for (std::size_t i = begin; i < core_end; ++i) {
        if (text[i] == ',') {
          if (i > start)
            out.push_back({std::string(text.substr(start, i - start)), start, i});
          out.push_back({",", i, i + 1});
          start = i + 1;
        }
      }
      if (core_end > start)
        out.push_back(
            {std::string(text.substr(start, core_end - start)), start, core_end});
    } else {
      out.push_back({std::string(core), begin, core_end});
    }
  }
  for (std::size_t i = core_end; i < end; ++i) {
    out.push_back({std::string(1, text[i]), i, i + 1});
  }
}

}  // namespace

Vocab::Vocab() {
  for (const char* form : kSpecialForms) {
    string_to_id_.emplace(form, static_cast<TokenId>(id_to_string_.size()));
    id_to_string_.emplace_back(form);
  }
}

TokenId Vocab::add(std::string_view token) {
  auto it = string_to_id_.find(std::string(token));
  if (it != string_to_id_.end()) return it->second;
  const TokenId id = static_cast<TokenId>(id_to_string_.size());
  id_to_string_.emplace_back(token);
  string_to_id_.emplace(id_to_string_.back(), id);
  return id;
}

TokenId Vocab::id_of(std::string_view token) const {
  auto it = string_to_id_.find(std::string(token));
  return it == string_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return string_to_id_.count(std::string(token)) > 0;
}

const std::string& Vocab::string_of(TokenId id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("Vocab::string_of: id " + std::to_string(id) +
                            " outside [0, " + std::to_string(size()) + ")");
  return id_to_string_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Vocab::save: cannot open " + path.string());
  for (const std::string& tok : id_to_string_) out << tok << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Vocab::load: cannot open " + path.string());
  Vocab v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no < kNumSpecials) {
      if (line != kSpecialForms[line_no])
        throw std::runtime_error("Vocab::load: line " + std::to_string(line_no) +
                                 " must be " + kSpecialForms[line_no] +
                                 ", got \"" + line + "\"");
    } else {
      if (v.contains(line))
        throw std::runtime_error("Vocab::load: duplicate token \"" + line +
                                 "\" at line " + std::to_string(line_no));
      v.add(line);
    }
    ++line_no;
  }
  if (line_no < kNumSpecials)
    throw std::runtime_error("Vocab::load: file has fewer than " +
                             std::to_string(kNumSpecials) + " lines");
  return v;
}

void Segmentation::validate(int n) const {
  if (!is_valid(n))
    throw std::invalid_argument(
        "Segmentation: spans do not partition [0, " + std::to_string(n) + ")");
}

bool Segmentation::is_valid(int n) const {
  int cursor = 0;
  for (const Span& s : spans) {
    if (s.start != cursor || s.end <= s.start) return false;
    cursor = s.end;
  }
  return cursor == n;
}

Segmentation Segmentation::units(int n) {
  Segmentation seg;
  seg.spans.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) seg.spans.push_back({i, i + 1, SpanKind::plain});
  return seg;
}

Segmentation Segmentation::whole(int n) {
  Segmentation seg;
  if (n > 0) seg.spans.push_back({0, n, SpanKind::plain});
  return seg;
}

std::vector<WordSpan> word_split_spans(std::string_view text) {
  std::vector<WordSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    char32_t cp = next_codepoint(text, i);
    if (is_unicode_space(cp)) continue;
    // Scan to the end of the whitespace-free chunk.
    std::size_t chunk_end = i;
    while (i < text.size()) {
      const std::size_t probe = i;
      cp = next_codepoint(text, i);
      if (is_unicode_space(cp)) {
        chunk_end = probe;
        break;
      }
      chunk_end = i;
    }
    split_chunk(text, start, chunk_end, out);
  }
  return out;
}

std::vector<std::string> word_split(std::string_view text) {
  std::vector<WordSpan> spans = word_split_spans(text);
  std::vector<std::string> words;
  words.reserve(spans.size());
  for (WordSpan& ws : spans) words.push_back(std::move(ws.word));
  return words;
}

void VocabBuilder::add(const std::vector<std::string>& words) {
  saw_input_ = true;
  for (const std::string& w : words) vocab_.add(w);
}

Vocab VocabBuilder::finish() {
  if (!saw_input_)
    throw std::invalid_argument("build_vocab: empty corpus");
  return std::move(vocab_);
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus) {
  VocabBuilder b;
  for (const auto& words : corpus) b.add(words);
  return b.finish();
}

TokenSeq encode(const std::vector<std::string>& words, const Vocab& vocab) {
  TokenSeq seq;
  seq.vocab = &vocab;
  seq.ids.reserve(words.size());
  for (const std::string& w : words) seq.ids.push_back(vocab.id_of(w));
  return seq;
}

std::string decode(const TokenSeq& seq) {
  if (seq.vocab == nullptr)
    throw std::invalid_argument("decode: TokenSeq has no vocab");
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += seq.vocab->string_of(seq.ids[i]);
  }
  return out;
}

Segmentation random_partition(int n, int k, Rng& rng) {
  if (n < 0) throw std::invalid_argument("random_partition: n < 0");
  if (k < 1) throw std::invalid_argument("random_partition: k < 1");
  Segmentation seg;
  int cursor = 0;
  while (cursor < n) {
    int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    if (cursor + len > n) len = n - cursor;
    seg.spans.push_back({cursor, cursor + len, SpanKind::plain});
    cursor += len;
  }
  return seg;
}

}  // namespace reverso
