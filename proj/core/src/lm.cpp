#include "reverso/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mathkernels.hpp"
#include "reverso/blas.hpp"

namespace reverso {

using json = nlohmann::ordered_json;

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

// RNG stream tags under TrainConfig::seed.
enum : std::uint64_t { kStreamOrder = 11, kStreamDropout = 12 };

template <typename T>
void add_bias(T* y, const T* b, int m, int n) {
  for (int i = 0; i < m; ++i) {
    T* row = y + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) row[j] += b[j];
  }
}

template <typename T>
void bias_grad(const T* dy, T* db, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const T* row = dy + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) db[j] += row[j];
  }
}

template <typename T>
void layernorm_forward(const T* x, const T* g, const T* b, T* y, T* means,
                       T* rstds, int m, int n) {
  if constexpr (std::is_same_v<T, float>) {
    kernels::layernorm_rows(x, g, b, y, means, rstds, m, n,
                            static_cast<float>(kLnEps));
    return;
  }
  for (int i = 0; i < m; ++i) {
    const T* xr = x + static_cast<std::size_t>(i) * n;
    T* yr = y + static_cast<std::size_t>(i) * n;
    T mean = 0;
    for (int j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<T>(n);
    T var = 0;
    for (int j = 0; j < n; ++j) {
      const T d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(n);
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
    for (int j = 0; j < n; ++j) yr[j] = (xr[j] - mean) * rstd * g[j] + b[j];
    means[i] = mean;
    rstds[i] = rstd;
  }
}

// dx accumulates; dg/db accumulate.
template <typename T>
void layernorm_backward(const T* dy, const T* x, const T* means,
                        const T* rstds, const T* g, T* dx, T* dg, T* db, int m,
                        int n) {
  if constexpr (std::is_same_v<T, float>) {
    kernels::layernorm_rows_backward(dy, x, means, rstds, g, dx, dg, db, m, n);
    return;
  }
  for (int i = 0; i < m; ++i) {
    const T* dyr = dy + static_cast<std::size_t>(i) * n;
    const T* xr = x + static_cast<std::size_t>(i) * n;
    T* dxr = dx + static_cast<std::size_t>(i) * n;
    const T mean = means[i], rstd = rstds[i];
    T sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (int j = 0; j < n; ++j) {
      const T xhat = (xr[j] - mean) * rstd;
      const T dxhat = dyr[j] * g[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      dg[j] += dyr[j] * xhat;
      db[j] += dyr[j];
    }
    sum_dxhat /= static_cast<T>(n);
    sum_dxhat_xhat /= static_cast<T>(n);
    for (int j = 0; j < n; ++j) {
      const T xhat = (xr[j] - mean) * rstd;
      const T dxhat = dyr[j] * g[j];
      dxr[j] += rstd * (dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
    }
  }
}

// GELU, tanh form (the float hot path lives in mathkernels.cpp; this generic
// version backs the double-precision gradient checks).
template <typename T>
T gelu_value(T x) {
  const T u = T(0.79788456080286535588) * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  const T u = T(0.79788456080286535588) * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(u);
  const T du = T(0.79788456080286535588) * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

// Fills mask with 0 or 1/(1-p) and multiplies buf by it.
template <typename T>
void dropout_forward(T* buf, T* mask, std::size_t n, double p, Rng& rng) {
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < n; ++i) {
    const T m = rng.real() < p ? T(0) : scale;
    mask[i] = m;
    buf[i] *= m;
  }
}

template <typename T>
std::size_t resize_for(std::vector<T>& v, std::size_t n) {
  if (v.size() < n) v.resize(n);
  return n;
}

template <typename T>
void ensure_workspace(WorkspaceT<T>& ws, const ModelConfig& cfg, int batch,
                      int seq) {
  const std::size_t m = static_cast<std::size_t>(batch) * seq;
  const std::size_t md = m * cfg.dim;
  const std::size_t mf = m * cfg.mlp_dim();
  const std::size_t mv = m * cfg.vocab_size;
  const std::size_t probs =
      static_cast<std::size_t>(batch) * cfg.n_heads * seq * seq;
  ws.batch = batch;
  ws.seq = seq;
  resize_for(ws.emb, md);
  resize_for(ws.emb_mask, md);
  ws.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : ws.layers) {
    resize_for(l.ln1_out, md);
    resize_for(l.ln1_mean, m);
    resize_for(l.ln1_rstd, m);
    resize_for(l.q, md);
    resize_for(l.k, md);
    resize_for(l.v, md);
    resize_for(l.att_probs, probs);
    resize_for(l.att_ctx, md);
    resize_for(l.att_proj, md);
    resize_for(l.att_mask, md);
    resize_for(l.res1, md);
    resize_for(l.ln2_out, md);
    resize_for(l.ln2_mean, m);
    resize_for(l.ln2_rstd, m);
    resize_for(l.fc1, mf);
    resize_for(l.gelu, mf);
    resize_for(l.fc2, md);
    resize_for(l.mlp_mask, md);
    resize_for(l.res2, md);
  }
  resize_for(ws.lnf_out, md);
  resize_for(ws.lnf_mean, m);
  resize_for(ws.lnf_rstd, m);
  resize_for(ws.logits, mv);
  resize_for(ws.d_res, md);
  resize_for(ws.d_branch, md);
  resize_for(ws.d_ln, md);
  resize_for(ws.d_q, md);
  resize_for(ws.d_k, md);
  resize_for(ws.d_v, md);
  resize_for(ws.d_ctx, md);
  resize_for(ws.d_fc1, mf);
  resize_for(ws.d_gelu, mf);
  resize_for(ws.d_scores_scratch, static_cast<std::size_t>(seq) * seq);
}

std::vector<ParamInfo> build_registry(const ModelConfig& cfg) {
  std::vector<ParamInfo> reg;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    ParamInfo info;
    info.name = std::move(name);
    info.numel = 1;
    for (int d : shape) info.numel *= static_cast<std::size_t>(d);
    info.shape = std::move(shape);
    info.offset = offset;
    info.decay = info.shape.size() >= 2;
    offset += info.numel;
    reg.push_back(std::move(info));
  };
  const int d = cfg.dim, f = cfg.mlp_dim(), v = cfg.vocab_size;
  add("wte", {v, d});
  add("wpe", {cfg.max_seq, d});
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string p = "h" + std::to_string(i) + ".";
    add(p + "ln1.g", {d});
    add(p + "ln1.b", {d});
    add(p + "attn.wq", {d, d});
    add(p + "attn.bq", {d});
    add(p + "attn.wk", {d, d});
    add(p + "attn.bk", {d});
    add(p + "attn.wv", {d, d});
    add(p + "attn.bv", {d});
    add(p + "attn.wo", {d, d});
    add(p + "attn.bo", {d});
    add(p + "ln2.g", {d});
    add(p + "ln2.b", {d});
    add(p + "mlp.w1", {d, f});
    add(p + "mlp.b1", {f});
    add(p + "mlp.w2", {f, d});
    add(p + "mlp.b2", {d});
  }
  add("lnf.g", {d});
  add("lnf.b", {d});
  add("head.w", {d, v});
  add("head.b", {v});
  return reg;
}

std::size_t total_numel(const std::vector<ParamInfo>& reg) {
  return reg.empty() ? 0 : reg.back().offset + reg.back().numel;
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("ModelConfig: n_layers < 1");
  if (dim < 1) throw std::invalid_argument("ModelConfig: dim < 1");
  if (n_heads < 1) throw std::invalid_argument("ModelConfig: n_heads < 1");
  if (dim % n_heads != 0)
    throw std::invalid_argument("ModelConfig: dim must be divisible by n_heads");
  if (max_seq < 1) throw std::invalid_argument("ModelConfig: max_seq < 1");
  if (vocab_size < 1) throw std::invalid_argument("ModelConfig: vocab_size < 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("ModelConfig: dropout must be in [0, 1)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
  if (learning_rate < 0)
    throw std::invalid_argument("TrainConfig: learning_rate < 0");
  if (warmup_steps < 0)
    throw std::invalid_argument("TrainConfig: warmup_steps < 0");
}

template <typename T>
T* ModelT<T>::param(const std::string& name) {
  return params.data() + info(name).offset;
}

template <typename T>
const T* ModelT<T>::param(const std::string& name) const {
  return params.data() + info(name).offset;
}

template <typename T>
const ParamInfo& ModelT<T>::info(const std::string& name) const {
  for (const ParamInfo& p : registry)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
ModelT<T> lm_init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelT<T> m;
  m.cfg = cfg;
  m.registry = build_registry(cfg);
  const std::size_t n = total_numel(m.registry);
  m.params.assign(n, T(0));
  m.grads.assign(n, T(0));
  m.adam_m.assign(n, T(0));
  m.adam_v.assign(n, T(0));

  const T resid_scale =
      static_cast<T>(1.0 / std::sqrt(2.0 * cfg.n_layers));
  Rng rng(seed);
  for (const ParamInfo& info : m.registry) {
    T* p = m.params.data() + info.offset;
    if (info.shape.size() >= 2) {
      T std_dev = static_cast<T>(kInitStd);
      if (info.name.ends_with("attn.wo") || info.name.ends_with("mlp.w2"))
        std_dev *= resid_scale;
      for (std::size_t i = 0; i < info.numel; ++i)
        p[i] = static_cast<T>(rng.normal()) * std_dev;
    } else if (info.name.ends_with(".g")) {
      std::fill(p, p + info.numel, T(1));
    }
    // biases and ln offsets stay zero
  }
  return m;
}

Batch make_batch(const std::vector<std::vector<TokenId>>& rows) {
  if (rows.empty()) throw std::invalid_argument("make_batch: no rows");
  Batch b;
  b.batch = static_cast<int>(rows.size());
  std::size_t max_len = 0;
  for (const auto& r : rows) max_len = std::max(max_len, r.size());
  if (max_len == 0) throw std::invalid_argument("make_batch: all rows empty");
  b.seq = static_cast<int>(max_len);
  b.tokens.assign(static_cast<std::size_t>(b.batch) * b.seq, Vocab::kPad);
  for (int i = 0; i < b.batch; ++i)
    std::copy(rows[static_cast<std::size_t>(i)].begin(),
              rows[static_cast<std::size_t>(i)].end(),
              b.tokens.begin() + static_cast<std::size_t>(i) * b.seq);
  return b;
}

std::vector<TokenId> shift_targets(const Batch& batch) {
  std::vector<TokenId> targets(batch.tokens.size(), Vocab::kPad);
  for (int b = 0; b < batch.batch; ++b) {
    for (int t = 0; t + 1 < batch.seq; ++t) {
      targets[static_cast<std::size_t>(b) * batch.seq + t] =
          batch.at(b, t + 1);
    }
  }
  return targets;
}

template <typename T>
void lm_forward(const ModelT<T>& m, const Batch& batch, WorkspaceT<T>& ws,
                bool training, Rng* dropout_rng) {
  const ModelConfig& cfg = m.cfg;
  if (batch.seq > cfg.max_seq)
    throw std::invalid_argument("lm_forward: sequence length " +
                                std::to_string(batch.seq) + " exceeds max_seq " +
                                std::to_string(cfg.max_seq));
  for (TokenId id : batch.tokens)
    if (id < 0 || id >= cfg.vocab_size)
      throw std::invalid_argument("lm_forward: token id out of range");
  const bool use_dropout = training && cfg.dropout > 0.0;
  if (use_dropout && dropout_rng == nullptr)
    throw std::invalid_argument("lm_forward: dropout requires an rng");

  ensure_workspace(ws, cfg, batch.batch, batch.seq);
  const int B = batch.batch, S = batch.seq, D = cfg.dim, H = cfg.n_heads;
  const int HD = cfg.head_dim(), F = cfg.mlp_dim(), V = cfg.vocab_size;
  const int M = B * S;

  // Embeddings.
  const T* wte = m.param("wte");
  const T* wpe = m.param("wpe");
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < S; ++t) {
      const std::size_t row = static_cast<std::size_t>(b) * S + t;
      const TokenId id = batch.tokens[row];
      T* out = ws.emb.data() + row * D;
      const T* te = wte + static_cast<std::size_t>(id) * D;
      const T* pe = wpe + static_cast<std::size_t>(t) * D;
      for (int j = 0; j < D; ++j) out[j] = te[j] + pe[j];
    }
  }
  if (use_dropout)
    dropout_forward(ws.emb.data(), ws.emb_mask.data(),
                    static_cast<std::size_t>(M) * D, cfg.dropout, *dropout_rng);

  const T att_scale = T(1) / std::sqrt(static_cast<T>(HD));
  const T* x = ws.emb.data();
  for (int li = 0; li < cfg.n_layers; ++li) {
    auto& L = ws.layers[static_cast<std::size_t>(li)];
    const std::string p = "h" + std::to_string(li) + ".";

    layernorm_forward(x, m.param(p + "ln1.g"), m.param(p + "ln1.b"),
                      L.ln1_out.data(), L.ln1_mean.data(), L.ln1_rstd.data(),
                      M, D);
    gemm(false, false, M, D, D, T(1), L.ln1_out.data(), D,
         m.param(p + "attn.wq"), D, T(0), L.q.data(), D);
    add_bias(L.q.data(), m.param(p + "attn.bq"), M, D);
    gemm(false, false, M, D, D, T(1), L.ln1_out.data(), D,
         m.param(p + "attn.wk"), D, T(0), L.k.data(), D);
    add_bias(L.k.data(), m.param(p + "attn.bk"), M, D);
    gemm(false, false, M, D, D, T(1), L.ln1_out.data(), D,
         m.param(p + "attn.wv"), D, T(0), L.v.data(), D);
    add_bias(L.v.data(), m.param(p + "attn.bv"), M, D);

    // Causal attention per (batch row, head).
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        const T* qs = L.q.data() + (static_cast<std::size_t>(b) * S) * D + h * HD;
        const T* ks = L.k.data() + (static_cast<std::size_t>(b) * S) * D + h * HD;
        const T* vs = L.v.data() + (static_cast<std::size_t>(b) * S) * D + h * HD;
        T* probs = L.att_probs.data() +
                   (static_cast<std::size_t>(b) * H + h) *
                       static_cast<std::size_t>(S) * S;
        gemm(false, true, S, S, HD, att_scale, qs, D, ks, D, T(0), probs, S);
        for (int t = 0; t < S; ++t) {
          T* row = probs + static_cast<std::size_t>(t) * S;
          T max_v = row[0];
          for (int s = 1; s <= t; ++s) max_v = std::max(max_v, row[s]);
          T sum;
          if constexpr (std::is_same_v<T, float>) {
            sum = kernels::exp_sub_sum(row, max_v, t + 1);
          } else {
            sum = 0;
            for (int s = 0; s <= t; ++s) {
              row[s] = std::exp(row[s] - max_v);
              sum += row[s];
            }
          }
          const T inv = T(1) / sum;
          for (int s = 0; s <= t; ++s) row[s] *= inv;
          for (int s = t + 1; s < S; ++s) row[s] = T(0);
        }
        T* ctx = L.att_ctx.data() + (static_cast<std::size_t>(b) * S) * D + h * HD;
        gemm(false, false, S, HD, S, T(1), probs, S, vs, D, T(0), ctx, D);
      }
    }

    gemm(false, false, M, D, D, T(1), L.att_ctx.data(), D,
         m.param(p + "attn.wo"), D, T(0), L.att_proj.data(), D);
    add_bias(L.att_proj.data(), m.param(p + "attn.bo"), M, D);
    if (use_dropout)
      dropout_forward(L.att_proj.data(), L.att_mask.data(),
                      static_cast<std::size_t>(M) * D, cfg.dropout,
                      *dropout_rng);
    for (std::size_t i = 0; i < static_cast<std::size_t>(M) * D; ++i)
      L.res1[i] = x[i] + L.att_proj[i];

    layernorm_forward(L.res1.data(), m.param(p + "ln2.g"),
                      m.param(p + "ln2.b"), L.ln2_out.data(),
                      L.ln2_mean.data(), L.ln2_rstd.data(), M, D);
    gemm(false, false, M, F, D, T(1), L.ln2_out.data(), D,
         m.param(p + "mlp.w1"), F, T(0), L.fc1.data(), F);
    add_bias(L.fc1.data(), m.param(p + "mlp.b1"), M, F);
    if constexpr (std::is_same_v<T, float>) {
      kernels::gelu_forward(L.fc1.data(), L.gelu.data(),
                            static_cast<std::size_t>(M) * F);
    } else {
      for (std::size_t i = 0; i < static_cast<std::size_t>(M) * F; ++i)
        L.gelu[i] = gelu_value(L.fc1[i]);
    }
    gemm(false, false, M, D, F, T(1), L.gelu.data(), F,
         m.param(p + "mlp.w2"), D, T(0), L.fc2.data(), D);
    add_bias(L.fc2.data(), m.param(p + "mlp.b2"), M, D);
    if (use_dropout)
      dropout_forward(L.fc2.data(), L.mlp_mask.data(),
                      static_cast<std::size_t>(M) * D, cfg.dropout,
                      *dropout_rng);
    for (std::size_t i = 0; i < static_cast<std::size_t>(M) * D; ++i)
      L.res2[i] = L.res1[i] + L.fc2[i];

    x = L.res2.data();
  }

  layernorm_forward(x, m.param("lnf.g"), m.param("lnf.b"), ws.lnf_out.data(),
                    ws.lnf_mean.data(), ws.lnf_rstd.data(), M, D);
  gemm(false, false, M, V, D, T(1), ws.lnf_out.data(), D, m.param("head.w"), V,
       T(0), ws.logits.data(), V);
  add_bias(ws.logits.data(), m.param("head.b"), M, V);
}

template <typename T>
std::vector<T> extract_logits(const WorkspaceT<T>& ws, const Batch& batch,
                              int vocab_size) {
  const std::size_t n = static_cast<std::size_t>(batch.batch) * batch.seq *
                        static_cast<std::size_t>(vocab_size);
  if (ws.logits.size() < n)
    throw std::invalid_argument("extract_logits: workspace not populated");
  return std::vector<T>(ws.logits.begin(),
                        ws.logits.begin() + static_cast<std::ptrdiff_t>(n));
}

template <typename T>
T lm_loss(const std::vector<T>& logits, const Batch& batch,
          const std::vector<TokenId>& targets) {
  const int M = batch.batch * batch.seq;
  if (targets.size() != static_cast<std::size_t>(M))
    throw std::invalid_argument("lm_loss: targets/batch shape mismatch");
  if (M == 0 || logits.size() % static_cast<std::size_t>(M) != 0)
    throw std::invalid_argument("lm_loss: logits/batch shape mismatch");
  const std::size_t V = logits.size() / static_cast<std::size_t>(M);
  double total = 0;
  long count = 0;
  for (int i = 0; i < M; ++i) {
    const TokenId tgt = targets[static_cast<std::size_t>(i)];
    if (tgt == Vocab::kPad) continue;
    if (tgt < 0 || tgt >= static_cast<TokenId>(V))
      throw std::invalid_argument("lm_loss: target id out of range");
    const T* row = logits.data() + static_cast<std::size_t>(i) * V;
    T max_v = row[0];
    for (std::size_t j = 1; j < V; ++j) max_v = std::max(max_v, row[j]);
    double sum = 0;
    for (std::size_t j = 0; j < V; ++j)
      sum += std::exp(static_cast<double>(row[j] - max_v));
    total += std::log(sum) -
             static_cast<double>(row[static_cast<std::size_t>(tgt)] - max_v);
    ++count;
  }
  if (count == 0)
    throw std::invalid_argument("lm_loss: no unmasked target positions");
  return static_cast<T>(total / static_cast<double>(count));
}

template <typename T>
T lm_loss_and_backward(ModelT<T>& m, const Batch& batch,
                       const std::vector<TokenId>& targets, WorkspaceT<T>& ws,
                       bool training, Rng* dropout_rng) {
  lm_forward(m, batch, ws, training, dropout_rng);
  const ModelConfig& cfg = m.cfg;
  const int B = batch.batch, S = batch.seq, D = cfg.dim, H = cfg.n_heads;
  const int HD = cfg.head_dim(), F = cfg.mlp_dim(), V = cfg.vocab_size;
  const int M = B * S;
  const bool use_dropout = training && cfg.dropout > 0.0;
  if (targets.size() != static_cast<std::size_t>(M))
    throw std::invalid_argument("lm_loss_and_backward: target shape mismatch");

  // Softmax + cross entropy; ws.logits becomes dlogits in place.
  long count = 0;
  for (int i = 0; i < M; ++i)
    if (targets[static_cast<std::size_t>(i)] != Vocab::kPad) ++count;
  if (count == 0)
    throw std::invalid_argument(
        "lm_loss_and_backward: no unmasked target positions");
  const T inv_count = T(1) / static_cast<T>(count);
  double total = 0;
  for (int i = 0; i < M; ++i) {
    T* row = ws.logits.data() + static_cast<std::size_t>(i) * V;
    const TokenId tgt = targets[static_cast<std::size_t>(i)];
    if (tgt == Vocab::kPad) {
      std::fill(row, row + V, T(0));
      continue;
    }
    T max_v = row[0];
    for (int j = 1; j < V; ++j) max_v = std::max(max_v, row[j]);
    const T tgt_logit = row[tgt];
    T sum;
    if constexpr (std::is_same_v<T, float>) {
      sum = kernels::exp_sub_sum(row, max_v, V);
    } else {
      sum = 0;
      for (int j = 0; j < V; ++j) {
        row[j] = std::exp(row[j] - max_v);
        sum += row[j];
      }
    }
    total += std::log(static_cast<double>(sum)) -
             static_cast<double>(tgt_logit - max_v);
    const T scale = inv_count / sum;
    for (int j = 0; j < V; ++j) row[j] *= scale;
    row[tgt] -= inv_count;
  }
  const T loss = static_cast<T>(total / static_cast<double>(count));

  // Head backward.
  T* grads = m.grads.data();
  auto grad_of = [&](const std::string& name) {
    return grads + m.info(name).offset;
  };
  gemm(true, false, D, V, M, T(1), ws.lnf_out.data(), D, ws.logits.data(), V,
       T(1), grad_of("head.w"), V);
  bias_grad(ws.logits.data(), grad_of("head.b"), M, V);
  std::fill(ws.d_ln.begin(), ws.d_ln.begin() + static_cast<std::size_t>(M) * D,
            T(0));
  gemm(false, true, M, D, V, T(1), ws.logits.data(), V, m.param("head.w"), V,
       T(0), ws.d_ln.data(), D);

  // Final layer norm backward into the residual stream gradient.
  const T* x_last = cfg.n_layers > 0
                        ? ws.layers[static_cast<std::size_t>(cfg.n_layers - 1)]
                              .res2.data()
                        : ws.emb.data();
  std::fill(ws.d_res.begin(),
            ws.d_res.begin() + static_cast<std::size_t>(M) * D, T(0));
  layernorm_backward(ws.d_ln.data(), x_last, ws.lnf_mean.data(),
                     ws.lnf_rstd.data(), m.param("lnf.g"), ws.d_res.data(),
                     grad_of("lnf.g"), grad_of("lnf.b"), M, D);

  const T att_scale = T(1) / std::sqrt(static_cast<T>(HD));
  for (int li = cfg.n_layers - 1; li >= 0; --li) {
    auto& L = ws.layers[static_cast<std::size_t>(li)];
    const std::string p = "h" + std::to_string(li) + ".";
    const T* x_in = li == 0
                        ? ws.emb.data()
                        : ws.layers[static_cast<std::size_t>(li - 1)].res2.data();
    const std::size_t md = static_cast<std::size_t>(M) * D;

    // MLP branch. d_res holds d(res2).
    if (use_dropout) {
      for (std::size_t i = 0; i < md; ++i)
        ws.d_branch[i] = ws.d_res[i] * L.mlp_mask[i];
    } else {
      std::copy(ws.d_res.begin(), ws.d_res.begin() + md, ws.d_branch.begin());
    }
    gemm(true, false, F, D, M, T(1), L.gelu.data(), F, ws.d_branch.data(), D,
         T(1), grad_of(p + "mlp.w2"), D);
    bias_grad(ws.d_branch.data(), grad_of(p + "mlp.b2"), M, D);
    gemm(false, true, M, F, D, T(1), ws.d_branch.data(), D,
         m.param(p + "mlp.w2"), D, T(0), ws.d_gelu.data(), F);
    if constexpr (std::is_same_v<T, float>) {
      kernels::gelu_backward(L.fc1.data(), ws.d_gelu.data(), ws.d_fc1.data(),
                             static_cast<std::size_t>(M) * F);
    } else {
      for (std::size_t i = 0; i < static_cast<std::size_t>(M) * F; ++i)
        ws.d_fc1[i] = ws.d_gelu[i] * gelu_grad(L.fc1[i]);
    }
    gemm(true, false, D, F, M, T(1), L.ln2_out.data(), D, ws.d_fc1.data(), F,
         T(1), grad_of(p + "mlp.w1"), F);
    bias_grad(ws.d_fc1.data(), grad_of(p + "mlp.b1"), M, F);
    gemm(false, true, M, D, F, T(1), ws.d_fc1.data(), F, m.param(p + "mlp.w1"),
         F, T(0), ws.d_ln.data(), D);
    // d(res1) = d(res2) + ln2 backward.
    layernorm_backward(ws.d_ln.data(), L.res1.data(), L.ln2_mean.data(),
                       L.ln2_rstd.data(), m.param(p + "ln2.g"),
                       ws.d_res.data(), grad_of(p + "ln2.g"),
                       grad_of(p + "ln2.b"), M, D);

    // Attention branch. d_res now holds d(res1).
    if (use_dropout) {
      for (std::size_t i = 0; i < md; ++i)
        ws.d_branch[i] = ws.d_res[i] * L.att_mask[i];
    } else {
      std::copy(ws.d_res.begin(), ws.d_res.begin() + md, ws.d_branch.begin());
    }
    gemm(true, false, D, D, M, T(1), L.att_ctx.data(), D, ws.d_branch.data(),
         D, T(1), grad_of(p + "attn.wo"), D);
    bias_grad(ws.d_branch.data(), grad_of(p + "attn.bo"), M, D);
    gemm(false, true, M, D, D, T(1), ws.d_branch.data(), D,
         m.param(p + "attn.wo"), D, T(0), ws.d_ctx.data(), D);

    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        const std::size_t base = (static_cast<std::size_t>(b) * S) * D +
                                 static_cast<std::size_t>(h) * HD;
        const T* qs = L.q.data() + base;
        const T* ks = L.k.data() + base;
        const T* vs = L.v.data() + base;
        const T* dctx = ws.d_ctx.data() + base;
        T* dqs = ws.d_q.data() + base;
        T* dks = ws.d_k.data() + base;
        T* dvs = ws.d_v.data() + base;
        const T* probs = L.att_probs.data() +
                         (static_cast<std::size_t>(b) * H + h) *
                             static_cast<std::size_t>(S) * S;
        T* dprobs = ws.d_scores_scratch.data();
        // dprobs = dctx * v^T
        gemm(false, true, S, S, HD, T(1), dctx, D, vs, D, T(0), dprobs, S);
        // dv = probs^T * dctx
        gemm(true, false, S, HD, S, T(1), probs, S, dctx, D, T(0), dvs, D);
        // softmax backward (rows beyond t have probs == 0, giving 0).
        for (int t = 0; t < S; ++t) {
          const T* prow = probs + static_cast<std::size_t>(t) * S;
          T* drow = dprobs + static_cast<std::size_t>(t) * S;
          T dot = 0;
          for (int s = 0; s <= t; ++s) dot += drow[s] * prow[s];
          for (int s = 0; s <= t; ++s) drow[s] = prow[s] * (drow[s] - dot);
          for (int s = t + 1; s < S; ++s) drow[s] = T(0);
        }
        // dq = dscores * k * scale ; dk = dscores^T * q * scale
        gemm(false, false, S, HD, S, att_scale, dprobs, S, ks, D, T(0), dqs,
             D);
        gemm(true, false, S, HD, S, att_scale, dprobs, S, qs, D, T(0), dks,
             D);
      }
    }

    gemm(true, false, D, D, M, T(1), L.ln1_out.data(), D, ws.d_q.data(), D,
         T(1), grad_of(p + "attn.wq"), D);
    bias_grad(ws.d_q.data(), grad_of(p + "attn.bq"), M, D);
    gemm(true, false, D, D, M, T(1), L.ln1_out.data(), D, ws.d_k.data(), D,
         T(1), grad_of(p + "attn.wk"), D);
    bias_grad(ws.d_k.data(), grad_of(p + "attn.bk"), M, D);
    gemm(true, false, D, D, M, T(1), L.ln1_out.data(), D, ws.d_v.data(), D,
         T(1), grad_of(p + "attn.wv"), D);
    bias_grad(ws.d_v.data(), grad_of(p + "attn.bv"), M, D);
    gemm(false, true, M, D, D, T(1), ws.d_q.data(), D, m.param(p + "attn.wq"),
         D, T(0), ws.d_ln.data(), D);
    gemm(false, true, M, D, D, T(1), ws.d_k.data(), D, m.param(p + "attn.wk"),
         D, T(1), ws.d_ln.data(), D);
    gemm(false, true, M, D, D, T(1), ws.d_v.data(), D, m.param(p + "attn.wv"),
         D, T(1), ws.d_ln.data(), D);
    // d(x_in) = d(res1) + ln1 backward.
    layernorm_backward(ws.d_ln.data(), x_in, L.ln1_mean.data(),
                       L.ln1_rstd.data(), m.param(p + "ln1.g"),
                       ws.d_res.data(), grad_of(p + "ln1.g"),
                       grad_of(p + "ln1.b"), M, D);
  }

  // Embedding backward.
  if (use_dropout) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(M) * D; ++i)
      ws.d_res[i] *= ws.emb_mask[i];
  }
  T* d_wte = grad_of("wte");
  T* d_wpe = grad_of("wpe");
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < S; ++t) {
      const std::size_t row = static_cast<std::size_t>(b) * S + t;
      const TokenId id = batch.tokens[row];
      const T* src = ws.d_res.data() + row * D;
      T* te = d_wte + static_cast<std::size_t>(id) * D;
      T* pe = d_wpe + static_cast<std::size_t>(t) * D;
      for (int j = 0; j < D; ++j) {
        te[j] += src[j];
        pe[j] += src[j];
      }
    }
  }
  return loss;
}

template <typename T>
void lm_adam_step(ModelT<T>& m, const TrainConfig& tc) {
  m.step += 1;
  const double t = static_cast<double>(m.step);
  double lr = tc.learning_rate;
  if (tc.warmup_steps > 0 && m.step <= tc.warmup_steps)
    lr *= t / static_cast<double>(tc.warmup_steps);
  const double bc1 = 1.0 - std::pow(tc.beta1, t);
  const double bc2 = 1.0 - std::pow(tc.beta2, t);
  const T b1 = static_cast<T>(tc.beta1), b2 = static_cast<T>(tc.beta2);
  const T one_m_b1 = static_cast<T>(1.0 - tc.beta1);
  const T one_m_b2 = static_cast<T>(1.0 - tc.beta2);
  const T eps = static_cast<T>(tc.adam_eps);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));

  for (const ParamInfo& info : m.registry) {
    T* p = m.params.data() + info.offset;
    T* g = m.grads.data() + info.offset;
    T* mm = m.adam_m.data() + info.offset;
    T* vv = m.adam_v.data() + info.offset;
    const T decay =
        info.decay ? static_cast<T>(lr * tc.weight_decay) : T(0);
    if constexpr (std::is_same_v<T, float>) {
      kernels::adam_update(p, g, mm, vv, info.numel, b1, b2, eps, step_size,
                           inv_sqrt_bc2, decay);
    } else {
      for (std::size_t i = 0; i < info.numel; ++i) {
        mm[i] = b1 * mm[i] + one_m_b1 * g[i];
        vv[i] = b2 * vv[i] + one_m_b2 * g[i] * g[i];
        p[i] -= step_size * mm[i] / (std::sqrt(vv[i]) * inv_sqrt_bc2 + eps);
        if (decay != T(0)) p[i] -= decay * p[i];
      }
    }
  }
  std::fill(m.grads.begin(), m.grads.end(), T(0));
}

TrainResult lm_train(Model& m, const EpochSource& source,
                     const TrainConfig& tc, std::ostream* log) {
  tc.validate();
  Rng order_rng(Rng::derive(tc.seed, kStreamOrder));
  Rng dropout_rng(Rng::derive(tc.seed, kStreamDropout));
  Workspace ws;
  TrainResult result;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::vector<TokenId>> rows = source(epoch);
    if (rows.empty())
      throw std::runtime_error("lm_train: epoch " + std::to_string(epoch) +
                               " yielded no examples");
    // Length-bucketed batches; bucket order shuffled per epoch.
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return rows[a].size() < rows[b].size();
                     });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size();
         i += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end =
          std::min(order.size(), i + static_cast<std::size_t>(tc.batch_size));
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    order_rng.shuffle(batches);

    double loss_sum = 0;
    long token_sum = 0;
    for (const auto& batch_idx : batches) {
      std::vector<std::vector<TokenId>> batch_rows;
      batch_rows.reserve(batch_idx.size());
      for (std::size_t idx : batch_idx) batch_rows.push_back(rows[idx]);
      const Batch batch = make_batch(batch_rows);
      const std::vector<TokenId> targets = shift_targets(batch);
      long count = 0;
      for (TokenId tgt : targets)
        if (tgt != Vocab::kPad) ++count;
      const float loss = lm_loss_and_backward(m, batch, targets, ws,
                                              /*training=*/true, &dropout_rng);
      if (!std::isfinite(loss))
        throw std::runtime_error(
            "lm_train: non-finite loss " + std::to_string(loss) + " at epoch " +
            std::to_string(epoch) + ", step " + std::to_string(m.step + 1) +
            " (batch of " + std::to_string(batch.batch) + "x" +
            std::to_string(batch.seq) + ")");
      lm_adam_step(m, tc);
      loss_sum += static_cast<double>(loss) * static_cast<double>(count);
      token_sum += count;
    }
    result.epoch_mean_loss.push_back(loss_sum /
                                     static_cast<double>(token_sum));
    if (log)
      *log << "epoch " << epoch + 1 << "/" << tc.epochs << " loss "
           << result.epoch_mean_loss.back() << "\n";
  }
  result.steps = m.step;
  return result;
}

namespace {

// Appends one greedily- or temperature-sampled token per row.
std::vector<std::vector<TokenId>> decode_loop(
    const Model& m, std::vector<std::vector<TokenId>> rows, int max_new,
    double temperature, Rng* rng) {
  if (rows.empty()) return rows;
  const std::size_t prompt_len = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != prompt_len)
      throw std::invalid_argument("decode: prompts must share one length");
  if (prompt_len == 0) throw std::invalid_argument("decode: empty prompt");
  if (static_cast<int>(prompt_len) + max_new > m.cfg.max_seq)
    throw std::invalid_argument("decode: prompt plus max_new exceeds max_seq");

  const int V = m.cfg.vocab_size;
  Workspace ws;
  std::vector<bool> done(rows.size(), false);
  for (int step = 0; step < max_new; ++step) {
    const Batch batch = make_batch(rows);
    lm_forward(m, batch, ws, /*training=*/false, nullptr);
    const int S = batch.seq;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const float* row = ws.logits.data() +
                         (r * static_cast<std::size_t>(S) + (S - 1)) * V;
      TokenId next = 0;
      if (rng == nullptr) {
        for (int j = 1; j < V; ++j)
          if (row[j] > row[next]) next = j;
      } else {
        float max_v = row[0];
        for (int j = 1; j < V; ++j) max_v = std::max(max_v, row[j]);
        double sum = 0;
        std::vector<double> probs(static_cast<std::size_t>(V));
        for (int j = 0; j < V; ++j) {
          probs[static_cast<std::size_t>(j)] = std::exp(
              static_cast<double>(row[j] - max_v) / temperature);
          sum += probs[static_cast<std::size_t>(j)];
        }
        const double u = rng->real() * sum;
        double cdf = 0;
        next = V - 1;
        for (int j = 0; j < V; ++j) {
          cdf += probs[static_cast<std::size_t>(j)];
          if (u < cdf) {
            next = j;
            break;
          }
        }
      }
      if (done[r]) next = Vocab::kPad;
      rows[r].push_back(next);
      if (next == Vocab::kEos || next == Vocab::kPad) done[r] = true;
    }
    bool all_done = true;
    for (bool d : done) all_done &= d;
    if (all_done) break;
  }
  // Truncate at the first EOS/PAD in the continuation.
  for (auto& row : rows) {
    for (std::size_t i = prompt_len; i < row.size(); ++i) {
      if (row[i] == Vocab::kEos || row[i] == Vocab::kPad) {
        row.resize(i);
        break;
      }
    }
  }
  return rows;
}

}  // namespace

std::vector<TokenId> generate_greedy(const Model& m,
                                     const std::vector<TokenId>& prompt,
                                     int max_new) {
  if (max_new < 0) throw std::invalid_argument("generate_greedy: max_new < 0");
  if (max_new == 0) return prompt;
  return decode_loop(m, {prompt}, max_new, 0.0, nullptr).front();
}

std::vector<std::vector<TokenId>> generate_greedy_batch(
    const Model& m, const std::vector<std::vector<TokenId>>& prompts,
    int max_new) {
  if (max_new == 0) return prompts;
  return decode_loop(m, prompts, max_new, 0.0, nullptr);
}

std::vector<std::vector<TokenId>> lm_sample(const Model& m,
                                            const std::vector<TokenId>& prompt,
                                            double temperature, int n_samples,
                                            std::uint64_t seed, int max_new) {
  if (temperature <= 0)
    throw std::invalid_argument("lm_sample: temperature must be > 0");
  if (n_samples < 1)
    throw std::invalid_argument("lm_sample: n_samples must be >= 1");
  Rng rng(seed);
  std::vector<std::vector<TokenId>> rows(static_cast<std::size_t>(n_samples),
                                         prompt);
  return decode_loop(m, std::move(rows), max_new, temperature, &rng);
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, version, step, tensor count, then per tensor
// name / dtype / shape / row-major data, all little-endian. A JSON sidecar at
// <path>.json holds the configs.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'V', 'S', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF32 = 0;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"n_layers", cfg.n_layers}, {"dim", cfg.dim},
              {"n_heads", cfg.n_heads},   {"max_seq", cfg.max_seq},
              {"vocab_size", cfg.vocab_size}, {"dropout", cfg.dropout}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.dim = j.at("dim").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.max_seq = j.at("max_seq").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  return cfg;
}

json train_config_to_json(const TrainConfig& tc) {
  return json{{"epochs", tc.epochs},
              {"batch_size", tc.batch_size},
              {"learning_rate", tc.learning_rate},
              {"seed", tc.seed},
              {"beta1", tc.beta1},
              {"beta2", tc.beta2},
              {"adam_eps", tc.adam_eps},
              {"weight_decay", tc.weight_decay},
              {"warmup_steps", tc.warmup_steps}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig tc;
  tc.epochs = j.at("epochs").get<int>();
  tc.batch_size = j.at("batch_size").get<int>();
  tc.learning_rate = j.at("learning_rate").get<double>();
  tc.seed = j.at("seed").get<std::uint64_t>();
  tc.beta1 = j.at("beta1").get<double>();
  tc.beta2 = j.at("beta2").get<double>();
  tc.adam_eps = j.at("adam_eps").get<double>();
  tc.weight_decay = j.at("weight_decay").get<double>();
  tc.warmup_steps = j.at("warmup_steps").get<int>();
  return tc;
}

}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path,
                     const TrainConfig* tc) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::int64_t>(m.step));
  write_pod(out, static_cast<std::uint32_t>(m.registry.size()));
  for (const ParamInfo& info : m.registry) {
    write_pod(out, static_cast<std::uint32_t>(info.name.size()));
    out.write(info.name.data(),
              static_cast<std::streamsize>(info.name.size()));
    write_pod(out, kDtypeF32);
    write_pod(out, static_cast<std::uint32_t>(info.shape.size()));
    for (int d : info.shape) write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(m.params.data() + info.offset),
              static_cast<std::streamsize>(info.numel * sizeof(float)));
  }
  if (!out)
    throw std::runtime_error("save_checkpoint: write failed: " + path.string());
  out.close();

  json sidecar;
  sidecar["model"] = model_config_to_json(m.cfg);
  if (tc) sidecar["train"] = train_config_to_json(*tc);
  std::ofstream side(path.string() + ".json", std::ios::binary);
  if (!side)
    throw std::runtime_error("save_checkpoint: cannot open sidecar for " +
                             path.string());
  side << sidecar.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream side_in(path.string() + ".json", std::ios::binary);
  if (!side_in)
    throw std::runtime_error("load_checkpoint: missing sidecar " +
                             path.string() + ".json");
  json sidecar = json::parse(side_in);
  LoadedCheckpoint loaded;
  const ModelConfig cfg = model_config_from_json(sidecar.at("model"));
  if (sidecar.contains("train"))
    loaded.train = train_config_from_json(sidecar.at("train"));

  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  const auto step = read_pod<std::int64_t>(in);
  const auto n_tensors = read_pod<std::uint32_t>(in);

  loaded.model = lm_init<float>(cfg, 0);
  loaded.model.step = step;
  if (n_tensors != loaded.model.registry.size())
    throw std::runtime_error("load_checkpoint: tensor count mismatch");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = read_pod<std::uint32_t>(in);
    if (dtype != kDtypeF32)
      throw std::runtime_error("load_checkpoint: unsupported dtype for " +
                               name);
    const auto ndim = read_pod<std::uint32_t>(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape)
      d = static_cast<int>(read_pod<std::uint64_t>(in));
    const ParamInfo& info = loaded.model.info(name);
    if (shape != info.shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    in.read(
        reinterpret_cast<char*>(loaded.model.params.data() + info.offset),
        static_cast<std::streamsize>(info.numel * sizeof(float)));
  }
  if (!in)
    throw std::runtime_error("load_checkpoint: truncated file " +
                             path.string());
  return loaded;
}

// Explicit instantiations: float for production, double for gradient checks.
template struct ModelT<float>;
template struct ModelT<double>;
template ModelT<float> lm_init<float>(const ModelConfig&, std::uint64_t);
template ModelT<double> lm_init<double>(const ModelConfig&, std::uint64_t);
template void lm_forward<float>(const ModelT<float>&, const Batch&,
                                WorkspaceT<float>&, bool, Rng*);
template void lm_forward<double>(const ModelT<double>&, const Batch&,
                                 WorkspaceT<double>&, bool, Rng*);
template std::vector<float> extract_logits<float>(const WorkspaceT<float>&,
                                                  const Batch&, int);
template std::vector<double> extract_logits<double>(const WorkspaceT<double>&,
                                                    const Batch&, int);
template float lm_loss<float>(const std::vector<float>&, const Batch&,
                              const std::vector<TokenId>&);
template double lm_loss<double>(const std::vector<double>&, const Batch&,
                                const std::vector<TokenId>&);
template float lm_loss_and_backward<float>(ModelT<float>&, const Batch&,
                                           const std::vector<TokenId>&,
                                           WorkspaceT<float>&, bool, Rng*);
template double lm_loss_and_backward<double>(ModelT<double>&, const Batch&,
                                             const std::vector<TokenId>&,
                                             WorkspaceT<double>&, bool, Rng*);
template void lm_adam_step<float>(ModelT<float>&, const TrainConfig&);
template void lm_adam_step<double>(ModelT<double>&, const TrainConfig&);

}  // namespace reverso
