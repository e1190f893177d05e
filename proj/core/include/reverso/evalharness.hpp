#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reverso/corpus.hpp"
#include "reverso/lm.hpp"
#include "reverso/symbolic.hpp"

namespace reverso {

/// True iff the first |target| predicted tokens equal the target exactly.
/// prediction holds generated tokens only (no prompt). target must be
/// non-empty.
bool exact_match_entity(const std::vector<TokenId>& prediction,
                        const std::vector<TokenId>& target);

/// True iff target_text occurs contiguously in the first 64 word tokens of
/// prediction_text. Both sides are whitespace-normalized (word_split + single
/// space join) before the substring check.
bool containment_at_64(const std::string& prediction_text,
                       const std::string& target_text);

/// OR of containment_at_64 over a sample pool.
bool best_at_n(const std::vector<std::string>& samples,
               const std::string& target_text);

/// One training method of the comparison table.
struct Method {
  TransformKind kind = TransformKind::none;  // none == standard training
  int k = 0;                                 // rand only
  std::string label() const;
};

struct ExperimentCell {
  Method method;
  int entity_len = 0;
};

/// Everything run_symbolic_experiment needs; desk_profile() /
/// full_profile() provide calibrated defaults.
struct ExperimentConfig {
  std::vector<ExperimentCell> cells;
  std::vector<std::uint64_t> seeds;
  int n_pairs = 2000;
  int words_per_position = 100;
  ModelConfig model;  // vocab_size filled per cell
  TrainConfig train;
  std::size_t shuffle_buffer = 10000;
  int jobs = 1;
  /// Paper-reported full-scale accuracy, keyed like the desk table; used only
  /// for display.
  std::vector<std::pair<ExperimentCell, double>> reference;
};

struct CellResult {
  ExperimentCell cell;
  std::vector<double> per_seed_accuracy;  // percent, one per seed
  double mean_accuracy = 0.0;
  std::vector<double> final_epoch_loss;   // one per seed
  bool failed = false;
  std::string error;
};

struct EvalReport {
  std::string metric = "exact_match_entity";
  std::vector<std::uint64_t> seeds;
  std::vector<CellResult> cells;

  const CellResult* find(const Method& m, int entity_len) const;
  std::string to_json() const;  // deterministic, timestamp-free
  /// Plain-text table; when reference cells are given, each value is shown
  /// as "measured (paper full-scale reference)".
  std::string render_table(
      const std::vector<std::pair<ExperimentCell, double>>* reference =
          nullptr) const;
  static EvalReport from_json(const std::string& text);
};

/// Trains one cell for one seed and returns exact-match accuracy in percent.
/// All randomness derives from seed.
double run_symbolic_cell(const ExperimentCell& cell,
                         const ExperimentConfig& cfg, std::uint64_t seed,
                         double* final_loss = nullptr,
                         std::ostream* log = nullptr);

/// Runs the whole matrix (cells x seeds). Per-cell failures are recorded in
/// the report and do not abort the run. Cells run on cfg.jobs worker
/// threads; results are keyed by cell, so the report is independent of
/// completion order.
EvalReport run_symbolic_experiment(
    const ExperimentConfig& cfg,
    const std::function<void(const std::string&)>& progress = {});

/// Desk-scale profile: 2,000 pairs, 4-layer/256-dim/4-head model, and the
/// acceptance cell subset (standard/word/entity/rand at the entity lengths
/// the thresholds pin down).
ExperimentConfig desk_profile();

/// Full-scale profile: 10,000 pairs, 8-layer/512-dim model, 500 epochs, the
/// complete 6x3 method/length matrix.
ExperimentConfig full_profile();

/// Builds the per-epoch training stream for the symbolic task: documents ->
/// transformed examples (seed re-derived per epoch) -> BOS/EOS-wrapped rows.
EpochSource make_epoch_source(const std::vector<Document>* train_docs,
                              const Vocab* vocab, StreamConfig base);

/// Greedy exact-match accuracy (percent) of a model over symbolic test items.
double evaluate_exact_match(const Model& m, const Vocab& vocab,
                            const std::vector<TestItem>& items,
                            int batch_size = 256);

}  // namespace reverso
