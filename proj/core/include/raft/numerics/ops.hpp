#pragma once

#include <cstdint>
#include <span>

#include "raft/numerics/graph.hpp"
#include "raft/numerics/rng.hpp"

// Differentiable operations on Graph nodes. Every op validates shapes, throws
// DimensionError on mismatch, and records a backward closure on the tape.
// Matrices are rank-2 tensors; rank-1 tensors are accepted wherever a single
// row is meaningful. Broadcasting is limited to row-wise bias addition.
namespace raft::numerics {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

template <typename T>
Var<T> transpose(Var<T> a);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> sub(Var<T> a, Var<T> b);

// Elementwise (Hadamard) product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

// x[m x n] + bias[n] added to every row.
template <typename T>
Var<T> add_row(Var<T> x, Var<T> bias);

template <typename T>
Var<T> scale(Var<T> a, double factor);

template <typename T>
Var<T> sigmoid(Var<T> a);

template <typename T>
Var<T> tanh(Var<T> a);

template <typename T>
Var<T> relu(Var<T> a);

// tanh approximation used by BERT-family encoders.
template <typename T>
Var<T> gelu(Var<T> a);

// Softmax along `axis`, with max-subtraction.
template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis);

// Normalizes each row over the last axis, then applies gain and bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps = 1e-5);

// out[i] = table[indices[i]]; backward scatter-adds into the table.
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> indices);

// out[r] = s[r] * x[r]. `s` has one entry per row of x.
template <typename T>
Var<T> scale_rows(Var<T> x, Var<T> s);

// x is [groups*len x d]; returns [groups x d] with the mean of each group's
// rows where mask != 0. A group with an empty mask yields zeros.
template <typename T>
Var<T> masked_mean_rows(Var<T> x, std::span<const std::uint8_t> mask, std::size_t groups);

// Multi-head scaled dot-product attention over `batch` independent blocks.
// q is [batch*tq x d], k and v are [batch*tk x d]; key_mask has batch*tk
// entries and masked keys receive exactly zero weight. Head h uses columns
// [h*d/heads, (h+1)*d/heads). If `weights_out` is given it receives the
// attention probabilities with shape [batch, heads, tq, tk].
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::span<const std::uint8_t> key_mask,
                 std::size_t batch, std::size_t heads, Tensor<T>* weights_out = nullptr);

// Mean softmax cross-entropy of logits[b x c] against class indices.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels);

// Weighted mean of elementwise binary cross-entropy on logits:
// sum_i w_i * bce(z_i, y_i) / sum_i w_i. Zero total weight yields 0.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> targets, std::span<const T> weights);

template <typename T>
Var<T> sum(Var<T> a);

template <typename T>
Var<T> mean(Var<T> a);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

// Inverted dropout; rate 0 returns the input node unchanged.
template <typename T>
Var<T> dropout(Var<T> a, double rate, Rng& rng);

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  return add_row(matmul(x, weight), bias);
}

}  // namespace raft::numerics
