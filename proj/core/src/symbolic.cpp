#include "reverso/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace reverso {

namespace {

// RNG stream indices derived from SymbolicConfig::seed.
enum : std::uint64_t { kStreamA = 0, kStreamB = 1, kStreamPair = 2, kStreamSplit = 3 };

// words_per_position^entity_len, saturating at 2^63-1.
std::uint64_t tuple_space(int words_per_position, int entity_len) {
  std::uint64_t space = 1;
  for (int i = 0; i < entity_len; ++i) {
    if (space > (std::uint64_t(1) << 63) / std::uint64_t(words_per_position))
      return std::uint64_t(1) << 63;
    space *= std::uint64_t(words_per_position);
  }
  return space;
}

// Decodes a flat tuple index into per-position word indices.
std::vector<int> decode_tuple(std::uint64_t flat, int words_per_position,
                              int entity_len) {
  std::vector<int> idx(static_cast<std::size_t>(entity_len));
  for (int p = entity_len - 1; p >= 0; --p) {
    idx[static_cast<std::size_t>(p)] =
        static_cast<int>(flat % std::uint64_t(words_per_position));
    flat /= std::uint64_t(words_per_position);
  }
  return idx;
}

std::vector<EntityTuple> sample_tuples(char prefix, const SymbolicConfig& cfg,
                                       Rng& rng) {
  const std::uint64_t space =
      tuple_space(cfg.words_per_position, cfg.entity_len);
  const std::uint64_t n = static_cast<std::uint64_t>(cfg.n_pairs);
  std::vector<std::uint64_t> flats;
  flats.reserve(static_cast<std::size_t>(n));
  if (space <= (1u << 22) || n * 2 >= space) {
    // Dense regime (e.g. 10,000 pairs over the 100^2 two-word space):
    // enumerate and shuffle.
    std::vector<std::uint64_t> all(static_cast<std::size_t>(space));
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    flats.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    std::set<std::uint64_t> seen;
    while (flats.size() < n) {
      const std::uint64_t f = rng.below(space);
      if (seen.insert(f).second) flats.push_back(f);
    }
  }
  std::vector<EntityTuple> tuples;
  tuples.reserve(flats.size());
  for (std::uint64_t f : flats) {
    const std::vector<int> idx =
        decode_tuple(f, cfg.words_per_position, cfg.entity_len);
    EntityTuple t;
    t.reserve(static_cast<std::size_t>(cfg.entity_len));
    for (int p = 0; p < cfg.entity_len; ++p)
      t.push_back(code_word(prefix, p, idx[static_cast<std::size_t>(p)],
                            cfg.words_per_position));
    tuples.push_back(std::move(t));
  }
  return tuples;
}

Document render_document(const SymbolicPair& pair, Direction dir,
                         std::string id) {
  Document doc;
  doc.id = std::move(id);
  const std::string a = entity_text(pair.a);
  const std::string b = entity_text(pair.b);
  if (dir == Direction::forward) {
    doc.text = a + " has a feature " + b;
    doc.entities.push_back({0, static_cast<std::int64_t>(a.size()), "a"});
    const std::int64_t b_start = static_cast<std::int64_t>(doc.text.size()) -
                                 static_cast<std::int64_t>(b.size());
    doc.entities.push_back(
        {b_start, static_cast<std::int64_t>(doc.text.size()), "b"});
  } else {
    doc.text = b + " is a feature of " + a;
    doc.entities.push_back({0, static_cast<std::int64_t>(b.size()), "b"});
    const std::int64_t a_start = static_cast<std::int64_t>(doc.text.size()) -
                                 static_cast<std::int64_t>(a.size());
    doc.entities.push_back(
        {a_start, static_cast<std::int64_t>(doc.text.size()), "a"});
  }
  doc.meta["direction"] = std::string(to_string(dir));
  return doc;
}

}  // namespace

void SymbolicConfig::validate() const {
  if (entity_len < 1)
    throw std::invalid_argument("SymbolicConfig: entity_len must be >= 1");
  if (words_per_position < 2)
    throw std::invalid_argument(
        "SymbolicConfig: words_per_position must be >= 2");
  if (n_pairs < 1)
    throw std::invalid_argument("SymbolicConfig: n_pairs must be >= 1");
  const std::uint64_t space = tuple_space(words_per_position, entity_len);
  if (static_cast<std::uint64_t>(n_pairs) > space)
    throw std::invalid_argument(
        "SymbolicConfig: n_pairs exceeds the entity space (" +
        std::to_string(words_per_position) + "^" + std::to_string(entity_len) +
        ")");
}

std::string entity_text(const EntityTuple& e) {
  std::string out;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (i > 0) out += ' ';
    out += e[i];
  }
  return out;
}

std::string code_word(char prefix, int position, int index,
                      int words_per_position) {
  const int block = std::max(100, words_per_position);
  return prefix + std::to_string((position + 1) * block + index);
}

std::pair<std::vector<EntityTuple>, std::vector<EntityTuple>> gen_entities(
    const SymbolicConfig& cfg) {
  cfg.validate();
  Rng rng_a(Rng::derive(cfg.seed, kStreamA));
  Rng rng_b(Rng::derive(cfg.seed, kStreamB));
  return {sample_tuples('a', cfg, rng_a), sample_tuples('b', cfg, rng_b)};
}

std::vector<SymbolicPair> pair_entities(std::vector<EntityTuple> a,
                                        std::vector<EntityTuple> b, Rng& rng) {
  if (a.size() != b.size())
    throw std::invalid_argument("pair_entities: size mismatch");
  rng.shuffle(b);
  std::vector<SymbolicPair> pairs;
  pairs.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    pairs.push_back({std::move(a[i]), std::move(b[i])});
  return pairs;
}

std::string render(const SymbolicPair& pair, Direction direction) {
  if (direction == Direction::forward)
    return entity_text(pair.a) + " has a feature " + entity_text(pair.b);
  return entity_text(pair.b) + " is a feature of " + entity_text(pair.a);
}

SymbolicDataset split(const SymbolicConfig& cfg,
                      std::vector<SymbolicPair> pairs) {
  const std::size_t n = pairs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::derive(cfg.seed, kStreamSplit));
  rng.shuffle(order);

  SymbolicDataset ds;
  ds.pairs = std::move(pairs);
  ds.train.reserve(n + n / 2);
  for (std::size_t i = 0; i < n; ++i)
    ds.train.push_back(render_document(ds.pairs[i], Direction::forward,
                                       "fwd-" + std::to_string(i)));
  const std::size_t n_train_backward = n / 2;
  for (std::size_t j = 0; j < n_train_backward; ++j) {
    const std::size_t i = order[j];
    ds.train.push_back(render_document(ds.pairs[i], Direction::reverse,
                                       "bwd-" + std::to_string(i)));
  }
  for (std::size_t j = n_train_backward; j < n; ++j) {
    const std::size_t i = order[j];
    TestItem item;
    item.prompt = entity_text(ds.pairs[i].b) + " is a feature of";
    item.target = entity_text(ds.pairs[i].a);
    item.pair_index = i;
    ds.test.push_back(std::move(item));
  }
  return ds;
}

SymbolicDataset make_dataset(const SymbolicConfig& cfg) {
  cfg.validate();
  auto [a, b] = gen_entities(cfg);
  Rng rng_pair(Rng::derive(cfg.seed, kStreamPair));
  return split(cfg, pair_entities(std::move(a), std::move(b), rng_pair));
}

std::vector<Document> test_documents(const SymbolicDataset& ds) {
  std::vector<Document> docs;
  docs.reserve(ds.test.size());
  for (const TestItem& item : ds.test) {
    Document doc;
    doc.id = "test-" + std::to_string(item.pair_index);
    doc.text = item.prompt;
    const std::string b = entity_text(ds.pairs[item.pair_index].b);
    doc.entities.push_back({0, static_cast<std::int64_t>(b.size()), "b"});
    doc.meta["target"] = item.target;
    docs.push_back(std::move(doc));
  }
  return docs;
}

TestItem test_item_from_document(const Document& doc) {
  TestItem item;
  item.prompt = doc.text;
  auto it = doc.meta.find("target");
  if (it == doc.meta.end())
    throw std::runtime_error("test document " + doc.id +
                             " missing meta.target");
  item.target = it->second;
  if (doc.id.rfind("test-", 0) == 0)
    item.pair_index =
        static_cast<std::size_t>(std::stoull(doc.id.substr(5)));
  return item;
}

}  // namespace reverso
