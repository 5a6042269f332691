// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cassnat/ctc.hpp"
#include "cassnat/tensor.hpp"

namespace cassnat {

// Boolean attention mask, true = attention permitted. Construction rejects
// fully-masked query rows.
struct MaskMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> allow;

    MaskMatrix() = default;
    MaskMatrix(int rows_, int cols_, std::vector<uint8_t> allow_);

    static MaskMatrix all_true(int rows, int cols);
    bool at(int i, int j) const { return allow[static_cast<size_t>(i) * cols + j] != 0; }
};

// Row u is true exactly on that token's span.
MaskMatrix make_trigger_mask(const TokenSegmentation& segments, int frames);
// Bidirectional mask over the first `valid` positions; columns past `valid`
// are excluded everywhere (padding), rows carry no causal constraint.
MaskMatrix make_bimask(int n, int valid);
// Lower-triangular mask.
MaskMatrix make_causal_mask(int n);

// Learned embeddings for clipped relative distances in [-k, k].
struct RelPosTable {
    int max_dist = 0;     // k
    TensorPtr embeddings;  // (2k+1) × d_head
};

// Additive logit for one query vector at a signed key-minus-query distance.
double relpos_logit(const std::vector<double>& query, int distance, const RelPosTable& table);

// Per-head projections plus the output projection. Head h projects the
// d_model input into d_head = d_att / nh columns.
struct AttentionParams {
    int n_heads = 0;
    int d_model = 0;
    int d_head = 0;
    std::vector<TensorPtr> wq, bq, wk, bk, wv, bv;  // one entry per head
    TensorPtr wo, bo;                               // d_att -> d_model
};

struct AttentionOut {
    TensorPtr out;
    TensorPtr weights;  // n_q × n_k, rows sum to 1 over permitted entries
};

// Single-head scaled dot-product attention. The mask is applied before the
// softmax (permitted entries renormalize; masked weights are exactly zero).
// Optional clipped relative positions add a key-side logit; positions
// default to 0..n-1 when not given.
AttentionOut scaled_dot_attention(Tape* tape, const TensorPtr& q, const TensorPtr& k,
                                  const TensorPtr& v, const MaskMatrix& mask,
                                  const RelPosTable* relpos = nullptr,
                                  const std::vector<int>* pos_q = nullptr,
                                  const std::vector<int>* pos_k = nullptr);

struct MultiHeadOut {
    TensorPtr out;
    std::vector<TensorPtr> head_weights;
};

MultiHeadOut multi_head_attention(Tape* tape, const TensorPtr& x_q, const TensorPtr& x_kv,
                                  const MaskMatrix& mask, const AttentionParams& params,
                                  const RelPosTable* relpos = nullptr,
                                  const std::vector<int>* pos_q = nullptr,
                                  const std::vector<int>* pos_k = nullptr);

}  // namespace cassnat
