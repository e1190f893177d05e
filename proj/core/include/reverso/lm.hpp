#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "reverso/rng.hpp"
#include "reverso/textseg.hpp"

namespace reverso {

/// Decoder-only transformer shape: pre-layer-norm blocks, learned absolute
/// positional embeddings, GELU MLP with 4x expansion, untied output head.
struct ModelConfig {
  int n_layers = 4;
  int dim = 256;
  int n_heads = 4;
  int max_seq = 64;
  int vocab_size = 0;
  double dropout = 0.1;

  int head_dim() const { return dim / n_heads; }
  int mlp_dim() const { return 4 * dim; }
  void validate() const;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  // Adam moments; defaults follow the small-model settings used throughout.
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-6;
  // Decoupled weight decay on matrix-shaped tensors only; 0 disables.
  double weight_decay = 0.0;
  // Linear warmup to learning_rate over this many optimizer steps, then
  // constant; 0 disables.
  int warmup_steps = 0;

  void validate() const;
};

/// Entry in a model's canonical tensor registry (checkpoint order).
struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t numel = 0;
  bool decay = false;  // participates in weight decay
};

template <typename T>
struct ModelT {
  ModelConfig cfg;
  std::int64_t step = 0;
  std::vector<ParamInfo> registry;
  std::vector<T> params;
  std::vector<T> grads;
  std::vector<T> adam_m;
  std::vector<T> adam_v;

  T* param(const std::string& name);
  const T* param(const std::string& name) const;
  const ParamInfo& info(const std::string& name) const;
};

using Model = ModelT<float>;

/// Deterministic initialization: weights from normal(0, 0.02) (residual
/// output projections scaled by 1/sqrt(2 n_layers)), biases zero, layer-norm
/// gain one. Same seed gives bitwise-equal parameters.
template <typename T>
ModelT<T> lm_init(const ModelConfig& cfg, std::uint64_t seed);

/// Left-aligned PAD-padded batch of token rows, row-major [batch, seq].
struct Batch {
  std::vector<TokenId> tokens;
  int batch = 0;
  int seq = 0;

  TokenId at(int b, int t) const {
    return tokens[static_cast<std::size_t>(b) * static_cast<std::size_t>(seq) +
                  static_cast<std::size_t>(t)];
  }
};

Batch make_batch(const std::vector<std::vector<TokenId>>& rows);

/// Activation buffers, grown on demand and reused across steps.
template <typename T>
struct WorkspaceT {
  // sized state; see lm.cpp
  int batch = 0, seq = 0;
  std::vector<T> emb;
  std::vector<T> emb_mask;
  struct Layer {
    std::vector<T> ln1_out, ln1_mean, ln1_rstd;
    std::vector<T> q, k, v;
    std::vector<T> att_probs;
    std::vector<T> att_ctx, att_proj, att_mask;
    std::vector<T> res1;
    std::vector<T> ln2_out, ln2_mean, ln2_rstd;
    std::vector<T> fc1, gelu, fc2, mlp_mask;
    std::vector<T> res2;
  };
  std::vector<Layer> layers;
  std::vector<T> lnf_out, lnf_mean, lnf_rstd;
  std::vector<T> logits;
  // backward scratch
  std::vector<T> d_res, d_branch, d_ln, d_q, d_k, d_v, d_ctx, d_fc1, d_gelu;
  std::vector<T> d_scores_scratch;
};

using Workspace = WorkspaceT<float>;

/// Runs the model over a batch; logits land in ws.logits ([batch*seq,
/// vocab]). training enables dropout, which consumes dropout_rng. Throws when
/// batch.seq exceeds cfg.max_seq.
template <typename T>
void lm_forward(const ModelT<T>& m, const Batch& batch, WorkspaceT<T>& ws,
                bool training = false, Rng* dropout_rng = nullptr);

/// Copies the live [batch*seq, vocab] region out of the (capacity-sized)
/// workspace logits buffer.
template <typename T>
std::vector<T> extract_logits(const WorkspaceT<T>& ws, const Batch& batch,
                              int vocab_size);

/// Mean next-token negative log likelihood over positions whose target is
/// not PAD. targets must have batch*seq entries (inputs shifted left, PAD at
/// row tails). Throws when every position is masked or shapes disagree.
template <typename T>
T lm_loss(const std::vector<T>& logits, const Batch& batch,
          const std::vector<TokenId>& targets);

/// Builds shifted targets for a batch (next token within each row, PAD at
/// the last valid position and beyond).
std::vector<TokenId> shift_targets(const Batch& batch);

/// Fused forward + loss + backward; accumulates into m.grads (caller zeroes).
/// Returns the masked mean loss.
template <typename T>
T lm_loss_and_backward(ModelT<T>& m, const Batch& batch,
                       const std::vector<TokenId>& targets, WorkspaceT<T>& ws,
                       bool training = true, Rng* dropout_rng = nullptr);

/// One Adam step over the accumulated gradients (bias-corrected, with the
/// TrainConfig's warmup and decoupled weight decay), then zeroes grads.
template <typename T>
void lm_adam_step(ModelT<T>& m, const TrainConfig& tc);

struct TrainResult {
  std::vector<double> epoch_mean_loss;
  std::int64_t steps = 0;
};

/// Per-epoch example provider; called with the epoch index so callers can
/// re-randomize segmentation/shuffling per epoch. Returned rows are final
/// token sequences (BOS/EOS included by the caller's pipeline).
using EpochSource =
    std::function<std::vector<std::vector<TokenId>>(int epoch)>;

/// Training loop: length-bucketed batches, Adam, per-epoch mean loss.
/// Deterministic per tc.seed on a single thread. Throws on non-finite loss.
TrainResult lm_train(Model& m, const EpochSource& source,
                     const TrainConfig& tc, std::ostream* log = nullptr);

/// Argmax decoding; stops at EOS or after max_new tokens. Returns prompt +
/// continuation.
std::vector<TokenId> generate_greedy(const Model& m,
                                     const std::vector<TokenId>& prompt,
                                     int max_new);

/// Batched greedy decoding over same-length prompts (asserts uniformity).
std::vector<std::vector<TokenId>> generate_greedy_batch(
    const Model& m, const std::vector<std::vector<TokenId>>& prompts,
    int max_new);

/// n_samples independent ancestral samples at the given temperature,
/// reproducible per seed. Each returned row is prompt + continuation,
/// truncated at EOS.
std::vector<std::vector<TokenId>> lm_sample(const Model& m,
                                            const std::vector<TokenId>& prompt,
                                            double temperature, int n_samples,
                                            std::uint64_t seed, int max_new);

/// Binary checkpoint (named tensors; see docs/checkpoint-format in README)
/// plus a JSON sidecar at path + ".json" holding the model (and optionally
/// train) config.
void save_checkpoint(const Model& m, const std::filesystem::path& path,
                     const TrainConfig* tc = nullptr);

struct LoadedCheckpoint {
  Model model;
  std::optional<TrainConfig> train;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace reverso
