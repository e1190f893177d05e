#include "mathkernels.hpp"

#include <algorithm>
#include <cmath>

namespace reverso::kernels {

namespace {

constexpr float kGeluC0 = 0.79788456080286535588f;  // sqrt(2/pi)
constexpr float kGeluC1 = 0.044715f;

// tanh through exp so the loop vectorizes; the argument is clamped where
// tanh is saturated to +-1 at float precision anyway.
inline float fast_tanh(float u) {
  u = std::min(15.0f, std::max(-15.0f, u));
  const float e = std::exp(2.0f * u);
  return (e - 1.0f) / (e + 1.0f);
}

}  // namespace

void gelu_forward(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float v = x[i];
    const float t = fast_tanh(kGeluC0 * (v + kGeluC1 * v * v * v));
    y[i] = 0.5f * v * (1.0f + t);
  }
}

void gelu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float v = x[i];
    const float t = fast_tanh(kGeluC0 * (v + kGeluC1 * v * v * v));
    const float du = kGeluC0 * (1.0f + 3.0f * kGeluC1 * v * v);
    dx[i] = dy[i] * (0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du);
  }
}

float exp_sub_sum(float* row, float max_v, int n) {
  float sum = 0.0f;
  for (int i = 0; i < n; ++i) {
    const float e = std::exp(row[i] - max_v);
    row[i] = e;
    sum += e;
  }
  return sum;
}

void layernorm_rows(const float* x, const float* g, const float* b, float* y,
                    float* means, float* rstds, int m, int n, float eps) {
  for (int i = 0; i < m; ++i) {
    const float* xr = x + static_cast<std::size_t>(i) * n;
    float* yr = y + static_cast<std::size_t>(i) * n;
    float mean = 0.0f;
    for (int j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<float>(n);
    float var = 0.0f;
    for (int j = 0; j < n; ++j) {
      const float d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<float>(n);
    const float rstd = 1.0f / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) yr[j] = (xr[j] - mean) * rstd * g[j] + b[j];
    means[i] = mean;
    rstds[i] = rstd;
  }
}

void layernorm_rows_backward(const float* dy, const float* x,
                             const float* means, const float* rstds,
                             const float* g, float* dx, float* dg, float* db,
                             int m, int n) {
  for (int i = 0; i < m; ++i) {
    const float* dyr = dy + static_cast<std::size_t>(i) * n;
    const float* xr = x + static_cast<std::size_t>(i) * n;
    float* dxr = dx + static_cast<std::size_t>(i) * n;
    const float mean = means[i], rstd = rstds[i];
    float sum_dxhat = 0.0f, sum_dxhat_xhat = 0.0f;
    for (int j = 0; j < n; ++j) {
      const float xhat = (xr[j] - mean) * rstd;
      const float dxhat = dyr[j] * g[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      dg[j] += dyr[j] * xhat;
      db[j] += dyr[j];
    }
    sum_dxhat /= static_cast<float>(n);
    sum_dxhat_xhat /= static_cast<float>(n);
    for (int j = 0; j < n; ++j) {
      const float xhat = (xr[j] - mean) * rstd;
      const float dxhat = dyr[j] * g[j];
      dxr[j] += rstd * (dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
    }
  }
}

void adam_update(float* p, const float* grad, float* m, float* v,
                 std::size_t n, float beta1, float beta2, float eps,
                 float step_size, float inv_sqrt_bc2, float decay) {
  const float one_m_b1 = 1.0f - beta1;
  const float one_m_b2 = 1.0f - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    m[i] = beta1 * m[i] + one_m_b1 * g;
    v[i] = beta2 * v[i] + one_m_b2 * g * g;
    p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    p[i] -= decay * p[i];
  }
}

}  // namespace reverso::kernels
