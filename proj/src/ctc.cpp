// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cassnat {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double mx = std::max(a, b);
    return mx + std::log1p(std::exp(std::min(a, b) - mx));
}

// Extended label sequence: blanks interleaved around every label.
std::vector<int> extend_labels(const std::vector<int>& labels) {
    std::vector<int> ext(2 * labels.size() + 1, kBlankId);
    for (size_t u = 0; u < labels.size(); ++u) ext[2 * u + 1] = labels[u];
    return ext;
}

void validate_labels(const LogPosteriorGrid& grid, const std::vector<int>& labels) {
    if (labels.empty()) throw UsageError("ctc: label sequence must be non-empty");
    for (int y : labels) {
        if (y == kBlankId) throw UsageError("ctc: blank id inside label sequence");
        if (y < 0 || y >= grid.vocab) {
            throw UsageError("ctc: label " + std::to_string(y) + " outside vocabulary of " +
                             std::to_string(grid.vocab));
        }
    }
    int need = min_frames_required(labels);
    if (grid.frames < need) {
        throw InfeasibleError("ctc: " + std::to_string(grid.frames) + " frames cannot carry " +
                              std::to_string(labels.size()) + " labels (minimum " +
                              std::to_string(need) + " frames)");
    }
}

// Whether the diagonal skip s-2 -> s is permitted (not into a blank, and not
// between equal labels).
bool allow_skip(const std::vector<int>& ext, size_t s) {
    return s >= 2 && ext[s] != kBlankId && ext[s] != ext[s - 2];
}

// Forward lattice of log alpha values, alpha including the emission at t.
std::vector<double> ctc_forward_lattice(const LogPosteriorGrid& grid, const std::vector<int>& ext) {
    size_t S = ext.size();
    size_t T = static_cast<size_t>(grid.frames);
    std::vector<double> alpha(T * S, kNegInf);
    alpha[0] = grid.at(0, ext[0]);
    if (S > 1) alpha[1] = grid.at(0, ext[1]);
    for (size_t t = 1; t < T; ++t) {
        for (size_t s = 0; s < S; ++s) {
            double best = alpha[(t - 1) * S + s];
            if (s >= 1) best = log_add(best, alpha[(t - 1) * S + (s - 1)]);
            if (allow_skip(ext, s)) best = log_add(best, alpha[(t - 1) * S + (s - 2)]);
            alpha[t * S + s] = best == kNegInf ? kNegInf : best + grid.at(static_cast<int>(t), ext[s]);
        }
    }
    return alpha;
}

}  // namespace

LogPosteriorGrid::LogPosteriorGrid(int frames_, int vocab_, std::vector<double> values)
    : frames(frames_), vocab(vocab_), logp(std::move(values)) {
    if (frames < 1 || vocab < 2) {
        throw DimensionError("log-posterior grid needs frames >= 1 and vocab >= 2, got " +
                             std::to_string(frames) + "x" + std::to_string(vocab));
    }
    if (logp.size() != static_cast<size_t>(frames) * vocab) {
        throw DimensionError("log-posterior grid: value count does not match " +
                             std::to_string(frames) + "x" + std::to_string(vocab));
    }
    // Renormalize each frame in log space.
    for (int t = 0; t < frames; ++t) {
        double* row = logp.data() + static_cast<size_t>(t) * vocab;
        double mx = *std::max_element(row, row + vocab);
        if (!std::isfinite(mx)) {
            throw NumericError("log-posterior grid: frame " + std::to_string(t) +
                               " has no finite entry");
        }
        double sum = 0.0;
        for (int k = 0; k < vocab; ++k) sum += std::exp(row[k] - mx);
        double lse = mx + std::log(sum);
        for (int k = 0; k < vocab; ++k) row[k] -= lse;
    }
}

std::vector<int> collapse(const std::vector<int>& labels) {
    std::vector<int> out;
    int prev = -1;
    for (int l : labels) {
        if (l != prev && l != kBlankId) out.push_back(l);
        prev = l;
    }
    return out;
}

int min_frames_required(const std::vector<int>& labels) {
    int repeats = 0;
    for (size_t i = 1; i < labels.size(); ++i) {
        if (labels[i] == labels[i - 1]) ++repeats;
    }
    return static_cast<int>(labels.size()) + repeats;
}

double ctc_loss(const LogPosteriorGrid& grid, const std::vector<int>& labels) {
    validate_labels(grid, labels);
    auto ext = extend_labels(labels);
    auto alpha = ctc_forward_lattice(grid, ext);
    size_t S = ext.size();
    size_t T = static_cast<size_t>(grid.frames);
    double total = log_add(alpha[(T - 1) * S + (S - 1)], alpha[(T - 1) * S + (S - 2)]);
    if (total == kNegInf) throw InfeasibleError("ctc: no feasible alignment path");
    return -total;
}

double ctc_loss_with_grad(const LogPosteriorGrid& grid, const std::vector<int>& labels,
                          std::vector<double>* grad) {
    validate_labels(grid, labels);
    auto ext = extend_labels(labels);
    size_t S = ext.size();
    size_t T = static_cast<size_t>(grid.frames);
    auto alpha = ctc_forward_lattice(grid, ext);
    double total = log_add(alpha[(T - 1) * S + (S - 1)], alpha[(T - 1) * S + (S - 2)]);
    if (total == kNegInf) throw InfeasibleError("ctc: no feasible alignment path");

    // beta excludes the emission at t (suffix mass over frames t+1..T-1), so
    // alpha_t(s) + beta_t(s) log-sums to the full likelihood at every t.
    std::vector<double> beta(T * S, kNegInf);
    beta[(T - 1) * S + (S - 1)] = 0.0;
    beta[(T - 1) * S + (S - 2)] = 0.0;
    for (size_t t = T - 1; t-- > 0;) {
        for (size_t s = 0; s < S; ++s) {
            double acc = beta[(t + 1) * S + s] + grid.at(static_cast<int>(t + 1), ext[s]);
            if (s + 1 < S) {
                acc = log_add(acc,
                              beta[(t + 1) * S + (s + 1)] + grid.at(static_cast<int>(t + 1), ext[s + 1]));
            }
            if (s + 2 < S && allow_skip(ext, s + 2)) {
                acc = log_add(acc,
                              beta[(t + 1) * S + (s + 2)] + grid.at(static_cast<int>(t + 1), ext[s + 2]));
            }
            beta[t * S + s] = acc;
        }
    }

    // d(-log P)/d logp[t][k] = -exp(logsum_{s: ext[s]=k} alpha_t(s)+beta_t(s) - log P)
    grad->assign(static_cast<size_t>(grid.frames) * grid.vocab, 0.0);
    for (size_t t = 0; t < T; ++t) {
        std::vector<double> acc(static_cast<size_t>(grid.vocab), kNegInf);
        for (size_t s = 0; s < S; ++s) {
            double ab = alpha[t * S + s] + beta[t * S + s];
            if (ab != kNegInf) {
                auto k = static_cast<size_t>(ext[s]);
                acc[k] = log_add(acc[k], ab);
            }
        }
        for (int k = 0; k < grid.vocab; ++k) {
            if (acc[static_cast<size_t>(k)] != kNegInf) {
                (*grad)[t * static_cast<size_t>(grid.vocab) + k] =
                    -std::exp(acc[static_cast<size_t>(k)] - total);
            }
        }
    }
    return -total;
}

AlignmentPath ctc_forced_align(const LogPosteriorGrid& grid, const std::vector<int>& labels) {
    validate_labels(grid, labels);
    auto ext = extend_labels(labels);
    size_t S = ext.size();
    size_t T = static_cast<size_t>(grid.frames);
    std::vector<double> delta(T * S, kNegInf);
    std::vector<int> back(T * S, -1);
    delta[0] = grid.at(0, ext[0]);
    delta[1] = grid.at(0, ext[1]);
    for (size_t t = 1; t < T; ++t) {
        for (size_t s = 0; s < S; ++s) {
            // Candidates in tie-break order: stay (label advanced earlier),
            // then step, then skip — strict > keeps the earliest advance.
            double best = delta[(t - 1) * S + s];
            int arg = static_cast<int>(s);
            if (s >= 1 && delta[(t - 1) * S + (s - 1)] > best) {
                best = delta[(t - 1) * S + (s - 1)];
                arg = static_cast<int>(s - 1);
            }
            if (allow_skip(ext, s) && delta[(t - 1) * S + (s - 2)] > best) {
                best = delta[(t - 1) * S + (s - 2)];
                arg = static_cast<int>(s - 2);
            }
            if (best == kNegInf) continue;
            delta[t * S + s] = best + grid.at(static_cast<int>(t), ext[s]);
            back[t * S + s] = arg;
        }
    }
    size_t end_state = S - 1;
    if (delta[(T - 1) * S + (S - 2)] > delta[(T - 1) * S + (S - 1)]) end_state = S - 2;
    double best = delta[(T - 1) * S + end_state];
    if (best == kNegInf) throw InfeasibleError("ctc: no feasible alignment path");

    AlignmentPath path;
    path.log_prob = best;
    path.labels.assign(T, kBlankId);
    size_t s = end_state;
    for (size_t t = T; t-- > 0;) {
        path.labels[t] = ext[s];
        if (t > 0) s = static_cast<size_t>(back[t * S + s]);
    }
    return path;
}

AlignmentPath best_path_decode(const LogPosteriorGrid& grid) {
    AlignmentPath path;
    path.labels.resize(static_cast<size_t>(grid.frames));
    for (int t = 0; t < grid.frames; ++t) {
        int arg = 0;
        double best = grid.at(t, 0);
        for (int k = 1; k < grid.vocab; ++k) {
            if (grid.at(t, k) > best) {
                best = grid.at(t, k);
                arg = k;
            }
        }
        path.labels[static_cast<size_t>(t)] = arg;
        path.log_prob += best;
    }
    return path;
}

std::vector<AlignmentPath> beam_align_nbest(const LogPosteriorGrid& grid, int beam) {
    if (beam < 1) throw ParameterError("beam_align_nbest: beam must be >= 1");
    struct Hyp {
        std::vector<int> labels;
        double score;
    };
    auto better = [](const Hyp& a, const Hyp& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.labels < b.labels;
    };
    std::vector<Hyp> beam_set{{{}, 0.0}};
    for (int t = 0; t < grid.frames; ++t) {
        std::vector<Hyp> next;
        next.reserve(beam_set.size() * static_cast<size_t>(grid.vocab));
        for (const auto& h : beam_set) {
            for (int k = 0; k < grid.vocab; ++k) {
                Hyp n;
                n.labels = h.labels;
                n.labels.push_back(k);
                n.score = h.score + grid.at(t, k);
                next.push_back(std::move(n));
            }
        }
        // Extensions of distinct frame paths stay distinct, so pruning needs
        // no merging.
        if (static_cast<int>(next.size()) > beam) {
            std::sort(next.begin(), next.end(), better);
            next.resize(static_cast<size_t>(beam));
        }
        beam_set = std::move(next);
    }
    std::sort(beam_set.begin(), beam_set.end(), better);
    std::vector<AlignmentPath> out;
    out.reserve(beam_set.size());
    for (auto& h : beam_set) out.push_back(AlignmentPath{std::move(h.labels), h.score});
    return out;
}

TokenSegmentation alignment_to_segments(const AlignmentPath& path) {
    if (collapse(path.labels).empty()) {
        throw EmptyAlignmentError("alignment collapses to zero tokens");
    }
    TokenSegmentation segments;
    int frames = static_cast<int>(path.labels.size());
    int prev_end = 0;  // last emission frame of the previous token, 1-based
    int t = 0;
    while (t < frames) {
        int label = path.labels[static_cast<size_t>(t)];
        if (label == kBlankId) {
            ++t;
            continue;
        }
        int run_end = t;
        while (run_end + 1 < frames && path.labels[static_cast<size_t>(run_end + 1)] == label) ++run_end;
        segments.push_back(TokenSpan{label, prev_end + 1, run_end + 1});
        prev_end = run_end + 1;
        t = run_end + 1;
    }
    return segments;
}

TokenSegmentation expand_segments(const TokenSegmentation& segments, int context, int frames) {
    if (context < 0) throw ParameterError("expand_segments: context must be >= 0");
    TokenSegmentation out;
    out.reserve(segments.size());
    for (const auto& s : segments) {
        out.push_back(
            TokenSpan{s.token, std::max(1, s.start - context), std::min(frames, s.end + context)});
    }
    return out;
}

TensorPtr ctc_loss_op(Tape* tape, const TensorPtr& logprobs, const std::vector<int>& labels) {
    if (logprobs->rank() != 2) {
        throw DimensionError("ctc_loss_op: log-probabilities must be T'xV, got " +
                             shape_str(logprobs->shape));
    }
    int frames = logprobs->rows(), vocab = logprobs->cols();
    auto out = make_tensor({1});
    auto grad = std::make_shared<std::vector<double>>();
    auto recompute = [=]() {
        // Entries are free parameters here; bypass the normalizing ctor.
        LogPosteriorGrid grid;
        grid.frames = frames;
        grid.vocab = vocab;
        grid.logp = logprobs->v;
        out->v[0] = ctc_loss_with_grad(grid, labels, grad.get());
    };
    auto backprop = [=]() {
        double g = out->g[0];
        for (size_t i = 0; i < grad->size(); ++i) logprobs->g[i] += g * (*grad)[i];
    };
    recompute();
    check_finite("ctc_loss_op", *out);
    if (tape) tape->record(Tape::Step{"ctc_loss_op", {logprobs}, out, recompute, backprop});
    return out;
}

}  // namespace cassnat
