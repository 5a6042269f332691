// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/attention.hpp"

#include <algorithm>
#include <cmath>

#include "cassnat/ops.hpp"

namespace cassnat {

MaskMatrix::MaskMatrix(int rows_, int cols_, std::vector<uint8_t> allow_)
    : rows(rows_), cols(cols_), allow(std::move(allow_)) {
    if (rows < 1 || cols < 1 || allow.size() != static_cast<size_t>(rows) * cols) {
        throw MaskError("mask extents " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " do not match entry count " + std::to_string(allow.size()));
    }
    for (int i = 0; i < rows; ++i) {
        bool any = false;
        for (int j = 0; j < cols; ++j) {
            if (allow[static_cast<size_t>(i) * cols + j]) {
                any = true;
                break;
            }
        }
        if (!any) throw MaskError("mask: query row " + std::to_string(i) + " is fully masked");
    }
}

MaskMatrix MaskMatrix::all_true(int rows, int cols) {
    return MaskMatrix(rows, cols, std::vector<uint8_t>(static_cast<size_t>(rows) * cols, 1));
}

MaskMatrix make_trigger_mask(const TokenSegmentation& segments, int frames) {
    if (segments.empty()) throw EmptyAlignmentError("trigger mask: no token segments");
    int rows = static_cast<int>(segments.size());
    std::vector<uint8_t> allow(static_cast<size_t>(rows) * frames, 0);
    for (int u = 0; u < rows; ++u) {
        const auto& s = segments[static_cast<size_t>(u)];
        if (s.start < 1 || s.end > frames || s.start > s.end) {
            throw MaskError("trigger mask: span [" + std::to_string(s.start) + ", " +
                            std::to_string(s.end) + "] outside 1.." + std::to_string(frames));
        }
        for (int t = s.start; t <= s.end; ++t) {
            allow[static_cast<size_t>(u) * frames + (t - 1)] = 1;
        }
    }
    return MaskMatrix(rows, frames, std::move(allow));
}

MaskMatrix make_bimask(int n, int valid) {
    if (valid < 1 || valid > n) {
        throw MaskError("bimask: valid count " + std::to_string(valid) + " outside 1.." +
                        std::to_string(n));
    }
    std::vector<uint8_t> allow(static_cast<size_t>(n) * n, 0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < valid; ++j) allow[static_cast<size_t>(i) * n + j] = 1;
    }
    return MaskMatrix(n, n, std::move(allow));
}

MaskMatrix make_causal_mask(int n) {
    std::vector<uint8_t> allow(static_cast<size_t>(n) * n, 0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) allow[static_cast<size_t>(i) * n + j] = 1;
    }
    return MaskMatrix(n, n, std::move(allow));
}

double relpos_logit(const std::vector<double>& query, int distance, const RelPosTable& table) {
    int d = table.embeddings->cols();
    if (static_cast<int>(query.size()) != d) {
        throw DimensionError("relpos_logit: query width " + std::to_string(query.size()) +
                             " does not match table width " + std::to_string(d));
    }
    int k = table.max_dist;
    int row = std::clamp(distance, -k, k) + k;
    double dot = 0.0;
    for (int c = 0; c < d; ++c) dot += query[static_cast<size_t>(c)] * table.embeddings->at(row, c);
    return dot / std::sqrt(static_cast<double>(d));
}

AttentionOut scaled_dot_attention(Tape* tape, const TensorPtr& q, const TensorPtr& k,
                                  const TensorPtr& v, const MaskMatrix& mask,
                                  const RelPosTable* relpos, const std::vector<int>* pos_q,
                                  const std::vector<int>* pos_k) {
    if (q->rank() != 2 || k->rank() != 2 || v->rank() != 2 || q->cols() != k->cols() ||
        k->rows() != v->rows()) {
        throw DimensionError("attention: shapes " + shape_str(q->shape) + ", " + shape_str(k->shape) +
                             ", " + shape_str(v->shape) + " do not agree");
    }
    if (mask.rows != q->rows() || mask.cols != k->rows()) {
        throw MaskError("attention: mask " + std::to_string(mask.rows) + "x" +
                        std::to_string(mask.cols) + " does not cover " + std::to_string(q->rows()) +
                        " queries and " + std::to_string(k->rows()) + " keys");
    }
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q->cols()));
    auto scores = ops::scale(tape, ops::matmul(tape, q, ops::transpose2d(tape, k)), inv_sqrt_d);
    if (relpos) {
        std::vector<int> default_q, default_k;
        if (!pos_q) {
            default_q.resize(static_cast<size_t>(q->rows()));
            for (int i = 0; i < q->rows(); ++i) default_q[static_cast<size_t>(i)] = i;
        }
        if (!pos_k) {
            default_k.resize(static_cast<size_t>(k->rows()));
            for (int i = 0; i < k->rows(); ++i) default_k[static_cast<size_t>(i)] = i;
        }
        auto rel = ops::relpos_scores(tape, q, relpos->embeddings, pos_q ? *pos_q : default_q,
                                      pos_k ? *pos_k : default_k);
        scores = ops::add(tape, scores, rel);
    }
    auto weights = ops::masked_softmax(tape, scores, mask.allow);
    auto out = ops::matmul(tape, weights, v);
    return AttentionOut{out, weights};
}

MultiHeadOut multi_head_attention(Tape* tape, const TensorPtr& x_q, const TensorPtr& x_kv,
                                  const MaskMatrix& mask, const AttentionParams& params,
                                  const RelPosTable* relpos, const std::vector<int>* pos_q,
                                  const std::vector<int>* pos_k) {
    if (params.n_heads < 1 || params.d_model % params.n_heads != 0) {
        throw ConfigError("attention: width " + std::to_string(params.d_model) +
                          " not divisible by " + std::to_string(params.n_heads) + " heads");
    }
    MultiHeadOut result;
    std::vector<TensorPtr> head_outs;
    head_outs.reserve(static_cast<size_t>(params.n_heads));
    for (int h = 0; h < params.n_heads; ++h) {
        auto hq = ops::linear(tape, x_q, params.wq[static_cast<size_t>(h)], params.bq[static_cast<size_t>(h)]);
        auto hk = ops::linear(tape, x_kv, params.wk[static_cast<size_t>(h)], params.bk[static_cast<size_t>(h)]);
        auto hv = ops::linear(tape, x_kv, params.wv[static_cast<size_t>(h)], params.bv[static_cast<size_t>(h)]);
        auto att = scaled_dot_attention(tape, hq, hk, hv, mask, relpos, pos_q, pos_k);
        head_outs.push_back(att.out);
        result.head_weights.push_back(att.weights);
    }
    auto cat = head_outs.size() == 1 ? head_outs[0] : ops::concat_lastdim(tape, head_outs);
    result.out = ops::linear(tape, cat, params.wo, params.bo);
    return result;
}

}  // namespace cassnat
