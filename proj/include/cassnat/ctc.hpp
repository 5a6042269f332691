// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <vector>

#include "cassnat/tensor.hpp"

namespace cassnat {

// Blank label id, fixed project-wide.
constexpr int kBlankId = 0;

// Per-frame log-probabilities over vocabulary ∪ {blank}. Rows are
// renormalized in log space on construction so each frame log-sum-exps to 0.
struct LogPosteriorGrid {
    int frames = 0;
    int vocab = 0;
    std::vector<double> logp;  // frames × vocab

    LogPosteriorGrid() = default;
    LogPosteriorGrid(int frames_, int vocab_, std::vector<double> values);

    double at(int t, int k) const { return logp[static_cast<size_t>(t) * vocab + k]; }
};

// Frame-level label path with its joint log-probability.
struct AlignmentPath {
    std::vector<int> labels;
    double log_prob = 0.0;
};

// One token's acoustic span, frames 1-based inclusive.
struct TokenSpan {
    int token = 0;
    int start = 0;
    int end = 0;
    bool operator==(const TokenSpan&) const = default;
};
using TokenSegmentation = std::vector<TokenSpan>;

// Standard CTC collapse: merge repeated labels, then drop blanks.
std::vector<int> collapse(const std::vector<int>& labels);

// Fewest frames that can carry `labels` (length plus blanks forced between
// equal neighbors).
int min_frames_required(const std::vector<int>& labels);

// Exact -log sum over all alignments collapsing to `labels`, via the
// forward recursion over the blank-interleaved extended sequence.
double ctc_loss(const LogPosteriorGrid& grid, const std::vector<int>& labels);

// Loss together with its gradient w.r.t. every grid entry (same layout).
double ctc_loss_with_grad(const LogPosteriorGrid& grid, const std::vector<int>& labels,
                          std::vector<double>* grad);

// Maximum-probability alignment whose collapse equals `labels` (Viterbi over
// the extended sequence). Ties advance the label sequence as early as
// possible, giving leftmost emissions.
AlignmentPath ctc_forced_align(const LogPosteriorGrid& grid, const std::vector<int>& labels);

// Per-frame argmax path; ties prefer the lower label id.
AlignmentPath best_path_decode(const LogPosteriorGrid& grid);

// Top-`beam` frame-label paths by joint log-probability, frame-synchronous,
// distinct at the frame-path level, sorted by descending score.
std::vector<AlignmentPath> beam_align_nbest(const LogPosteriorGrid& grid, int beam);

// Maps an alignment to per-token spans: token u covers the frames after the
// previous token's last emission frame through its own last emission frame,
// so leading blanks attach to the following token and trailing blanks to
// no token.
TokenSegmentation alignment_to_segments(const AlignmentPath& path);

// Widens every span by `context` frames on both sides, clipped to [1, frames].
TokenSegmentation expand_segments(const TokenSegmentation& segments, int context, int frames);

// Differentiable CTC loss over a T×V log-probability tensor (rows already
// normalized by log_softmax upstream; entries are treated as free
// parameters, no renormalization here).
TensorPtr ctc_loss_op(Tape* tape, const TensorPtr& logprobs, const std::vector<int>& labels);

}  // namespace cassnat
