#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "reverso/corpus.hpp"
#include "reverso/rng.hpp"

namespace reverso {

/// Generator settings for the symbolic reverse task.
struct SymbolicConfig {
  int entity_len = 2;
  int words_per_position = 100;
  int n_pairs = 10000;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on invalid sizes or when n_pairs exceeds
  /// the combinatorial space words_per_position^entity_len.
  void validate() const;
};

using EntityTuple = std::vector<std::string>;

struct SymbolicPair {
  EntityTuple a;
  EntityTuple b;
};

struct TestItem {
  std::string prompt;   // "<b words> is a feature of"
  std::string target;   // "<a words>"
  std::size_t pair_index = 0;
};

/// Pairs split into train (all forward renderings plus floor(N/2) backward)
/// and test (the remaining backward mappings as prompt/target pairs). Train
/// documents carry one entity span per full entity (labels "a" and "b").
struct SymbolicDataset {
  std::vector<SymbolicPair> pairs;
  std::vector<Document> train;
  std::vector<TestItem> test;
};

std::string entity_text(const EntityTuple& e);

/// Code word for entity position `position` (0-based), index `index`:
/// "<prefix><block + index>" where block = (position + 1) * max(100,
/// words_per_position), e.g. the second word of an a-entity is drawn from
/// a200..a299 at the default 100 words per position.
std::string code_word(char prefix, int position, int index,
                      int words_per_position);

/// Distinct a- and b-entity tuples, sampled without replacement,
/// deterministic per cfg.seed.
std::pair<std::vector<EntityTuple>, std::vector<EntityTuple>> gen_entities(
    const SymbolicConfig& cfg);

/// Random one-to-one pairing of the two entity sets.
std::vector<SymbolicPair> pair_entities(std::vector<EntityTuple> a,
                                        std::vector<EntityTuple> b, Rng& rng);

/// Forward: "<a> has a feature <b>"; backward: "<b> is a feature of <a>".
std::string render(const SymbolicPair& pair, Direction direction);

/// Seeded half split of the backward mappings into train and test.
SymbolicDataset split(const SymbolicConfig& cfg,
                      std::vector<SymbolicPair> pairs);

/// gen_entities + pair_entities + split under streams derived from cfg.seed.
SymbolicDataset make_dataset(const SymbolicConfig& cfg);

/// Test items serialized as Documents: text = prompt, meta["target"].
std::vector<Document> test_documents(const SymbolicDataset& ds);
TestItem test_item_from_document(const Document& doc);

}  // namespace reverso
