// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <vector>

#include "cassnat/tensor.hpp"

namespace cassnat {
namespace ops {

// Every primitive takes the tape first; pass nullptr for pure inference.
// All primitives validate shapes, reject non-finite outputs, and carry an
// exact reverse-mode rule.

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
// a + alpha * b
TensorPtr add_scaled(Tape* tape, const TensorPtr& a, const TensorPtr& b, double alpha);
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape* tape, const TensorPtr& a, double c);
// x[m×k] · w[k×n] + bias[n]
TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias);
TensorPtr embedding_lookup(Tape* tape, const TensorPtr& table, const std::vector<int>& ids);
TensorPtr swish(Tape* tape, const TensorPtr& x);
// Split last dim in half: out = first ⊙ sigmoid(second).
TensorPtr glu(Tape* tape, const TensorPtr& x);
// x[T×d] convolved per channel over time with kernel[w×d], zero padded, w odd.
TensorPtr depthwise_conv_time(Tape* tape, const TensorPtr& x, const TensorPtr& kernel);
// x[Cin×H×W], w[Cout×Cin×kh×kw], bias[Cout]; strides/padding per axis.
TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias,
                 int stride_h, int stride_w, int pad_h, int pad_w);
// Inverted dropout; identity when !training. Mask derives from (key, index).
TensorPtr dropout(Tape* tape, const TensorPtr& x, double p, bool training, uint64_t key);
TensorPtr softmax_lastdim(Tape* tape, const TensorPtr& x);
TensorPtr log_softmax_lastdim(Tape* tape, const TensorPtr& x);
// scores[nq×nk] with boolean allow matrix (1 = attend). Rows renormalize
// over permitted entries; masked entries come out exactly zero.
TensorPtr masked_softmax(Tape* tape, const TensorPtr& scores, const std::vector<uint8_t>& allow);
TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps);
TensorPtr concat_lastdim(Tape* tape, const std::vector<TensorPtr>& parts);
TensorPtr transpose2d(Tape* tape, const TensorPtr& x);
TensorPtr reshape(Tape* tape, const TensorPtr& x, const Shape& shape);
TensorPtr sum_all(Tape* tape, const TensorPtr& x);
TensorPtr mean_all(Tape* tape, const TensorPtr& x);
// Additive attention logits from clipped relative positions:
// out[i][j] = q_i · table[clip(pos_k[j] - pos_q[i], -k, k) + k] / sqrt(d_head)
// where table has 2k+1 rows.
TensorPtr relpos_scores(Tape* tape, const TensorPtr& q, const TensorPtr& table,
                        const std::vector<int>& pos_q, const std::vector<int>& pos_k);

// Raw accumulate kernels shared by forwards and backwards (C += ...).
void mm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n);
void mm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);  // a[m×k]·b[n×k]ᵀ
void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);  // a[k×m]ᵀ·b[k×n]

}  // namespace ops
}  // namespace cassnat
