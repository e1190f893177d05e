#pragma once

#include <cstddef>

// Vectorized float kernels for the training hot path. Built as a separate
// translation unit with -ffast-math so the compiler can use libmvec for exp;
// the templated double path in lm.cpp keeps strict semantics for the
// gradient checks.
namespace reverso::kernels {

// y = gelu(x), tanh form.
void gelu_forward(const float* x, float* y, std::size_t n);
// dx = dy * gelu'(x).
void gelu_backward(const float* x, const float* dy, float* dx, std::size_t n);

// row[i] := exp(row[i] - max_v); returns the sum.
float exp_sub_sum(float* row, float max_v, int n);

void layernorm_rows(const float* x, const float* g, const float* b, float* y,
                    float* means, float* rstds, int m, int n, float eps);
void layernorm_rows_backward(const float* dy, const float* x,
                             const float* means, const float* rstds,
                             const float* g, float* dx, float* dg, float* db,
                             int m, int n);

void adam_update(float* p, const float* grad, float* m, float* v,
                 std::size_t n, float beta1, float beta2, float eps,
                 float step_size, float inv_sqrt_bc2, float decay);

}  // namespace reverso::kernels
