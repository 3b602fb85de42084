#pragma once

#include <span>
#include <utility>
#include <vector>

#include "frspec/matrix.h"

namespace frspec {

// a: [m x k], b_transposed: [n x k]  ->  [m x n] with out[i][j] = dot(a.row(i), b_t.row(j)).
// The per-element accumulation order is fixed, so results are reproducible run to run.
Matrix matmul(const Matrix & a, const Matrix & b_transposed);

// Max-subtracted softmax of logits/temperature. Requires finite logits and temperature > 0
// (temperature 0 is handled by argmax at call sites, never here).
ProbVector softmax(std::span<const float> logits, float temperature);

// Top k entries by value descending, ties broken by ascending index. Requires 1 <= k <= size.
std::vector<std::pair<int, float>> topk(std::span<const float> values, int k);

// Single-head scaled dot-product attention with a per-query allowed-key bitset.
// q: [n x dh], k: [m x dh], v: [m x dv], allowed: n x m bits. Attention weights are exactly
// zero on masked-out keys; every query must permit at least one key.
Matrix masked_attention(const Matrix & q, const Matrix & k, const Matrix & v, const BitMask & allowed);

// Fixed-order dot product shared by the kernels above.
float dot_f32(const float * a, const float * b, int n);

// Index of the largest value, ties resolved to the lowest index.
int argmax(std::span<const float> values);

}  // namespace frspec
