// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cassnat/rng.hpp"

namespace cassnat {
namespace ops {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
}

// Records the step (when taped) after running the forward once.
TensorPtr finish(Tape* tape, const char* op, std::vector<TensorPtr> inputs, TensorPtr out,
                 std::function<void()> recompute, std::function<void()> backprop) {
    recompute();
    check_finite(op, *out);
    if (tape) {
        tape->record(Tape::Step{op, std::move(inputs), out, std::move(recompute), std::move(backprop)});
    }
    return out;
}

// Softmax over contiguous slices of length n; allow==nullptr means all permitted.
void softmax_slices(const char* op, const double* x, const uint8_t* allow, double* y, int64_t rows,
                    int n) {
    for (int64_t r = 0; r < rows; ++r) {
        const double* xs = x + r * n;
        const uint8_t* as = allow ? allow + r * n : nullptr;
        double* ys = y + r * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (!as || as[i]) mx = std::max(mx, xs[i]);
        }
        if (!std::isfinite(mx)) {
            throw MaskError(std::string(op) + ": query row " + std::to_string(r) + " is fully masked");
        }
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            if (!as || as[i]) {
                ys[i] = std::exp(xs[i] - mx);
                sum += ys[i];
            } else {
                ys[i] = 0.0;
            }
        }
        for (int i = 0; i < n; ++i) ys[i] /= sum;
    }
}

}  // namespace

void mm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * k;
        double* ci = c + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            double av = ai[l];
            if (av == 0.0) continue;
            const double* bl = b + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

void mm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * k;
        double* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<size_t>(j) * k;
            double dot = 0.0;
            for (int l = 0; l < k; ++l) dot += ai[l] * bj[l];
            ci[j] += dot;
        }
    }
}

void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int l = 0; l < k; ++l) {
        const double* al = a + static_cast<size_t>(l) * m;
        const double* bl = b + static_cast<size_t>(l) * n;
        for (int i = 0; i < m; ++i) {
            double av = al[i];
            if (av == 0.0) continue;
            double* ci = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->cols() != b->rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a->shape) + " and " +
                             shape_str(b->shape));
    }
    int m = a->rows(), k = a->cols(), n = b->cols();
    auto out = make_tensor({m, n});
    auto recompute = [=]() {
        std::fill(out->v.begin(), out->v.end(), 0.0);
        mm_nn_acc(a->v.data(), b->v.data(), out->v.data(), m, k, n);
    };
    auto backprop = [=]() {
        mm_nt_acc(out->g.data(), b->v.data(), a->g.data(), m, n, k);  // dA += G·Bᵀ
        mm_tn_acc(a->v.data(), out->g.data(), b->g.data(), k, m, n);  // dB += Aᵀ·G
    };
    return finish(tape, "matmul", {a, b}, out, recompute, backprop);
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("add", *a, *b);
    auto out = make_tensor(a->shape);
    auto recompute = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] + b->v[i];
    };
    auto backprop = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) {
            a->g[i] += out->g[i];
            b->g[i] += out->g[i];
        }
    };
    return finish(tape, "add", {a, b}, out, recompute, backprop);
}

TensorPtr add_scaled(Tape* tape, const TensorPtr& a, const TensorPtr& b, double alpha) {
    require_same_shape("add_scaled", *a, *b);
    auto out = make_tensor(a->shape);
    auto recompute = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] + alpha * b->v[i];
    };
    auto backprop = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) {
            a->g[i] += out->g[i];
            b->g[i] += alpha * out->g[i];
        }
    };
    return finish(tape, "add_scaled", {a, b}, out, recompute, backprop);
}

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("mul", *a, *b);
    auto out = make_tensor(a->shape);
    auto recompute = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] * b->v[i];
    };
    auto backprop = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) {
            a->g[i] += out->g[i] * b->v[i];
            b->g[i] += out->g[i] * a->v[i];
        }
    };
    return finish(tape, "mul", {a, b}, out, recompute, backprop);
}

TensorPtr scale(Tape* tape, const TensorPtr& a, double c) {
    auto out = make_tensor(a->shape);
    auto recompute = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = c * a->v[i];
    };
    auto backprop = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) a->g[i] += c * out->g[i];
    };
    return finish(tape, "scale", {a}, out, recompute, backprop);
}

TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias) {
    if (x->rank() != 2 || w->rank() != 2 || x->cols() != w->rows()) {
        throw DimensionError("linear: incompatible shapes " + shape_str(x->shape) + " and " +
                             shape_str(w->shape));
    }
    if (bias->rank() != 1 || bias->dim(0) != w->cols()) {
        throw DimensionError("linear: bias shape " + shape_str(bias->shape) + " does not match " +
                             shape_str(w->shape));
    }
    int m = x->rows(), k = x->cols(), n = w->cols();
    auto out = make_tensor({m, n});
    auto recompute = [=]() {
        for (int i = 0; i < m; ++i) {
            std::copy(bias->v.begin(), bias->v.end(), out->v.begin() + static_cast<size_t>(i) * n);
        }
        mm_nn_acc(x->v.data(), w->v.data(), out->v.data(), m, k, n);
    };
    auto backprop = [=]() {
        mm_nt_acc(out->g.data(), w->v.data(), x->g.data(), m, n, k);
        mm_tn_acc(x->v.data(), out->g.data(), w->g.data(), k, m, n);
        for (int i = 0; i < m; ++i) {
            const double* gi = out->g.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) bias->g[j] += gi[j];
        }
    };
    return finish(tape, "linear", {x, w, bias}, out, recompute, backprop);
}

TensorPtr embedding_lookup(Tape* tape, const TensorPtr& table, const std::vector<int>& ids) {
    if (table->rank() != 2) throw DimensionError("embedding_lookup: table must be 2-D");
    if (ids.empty()) throw UsageError("embedding_lookup: empty index list");
    int v = table->rows(), d = table->cols();
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw UsageError("embedding_lookup: index " + std::to_string(id) + " outside table of " +
                             std::to_string(v) + " rows");
        }
    }
    int n = static_cast<int>(ids.size());
    auto out = make_tensor({n, d});
    auto recompute = [=]() {
        for (int i = 0; i < n; ++i) {
            const double* row = table->v.data() + static_cast<size_t>(ids[i]) * d;
            std::copy(row, row + d, out->v.begin() + static_cast<size_t>(i) * d);
        }
    };
    auto backprop = [=]() {
        for (int i = 0; i < n; ++i) {
            double* dst = table->g.data() + static_cast<size_t>(ids[i]) * d;
            const double* src = out->g.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    };
    return finish(tape, "embedding_lookup", {table}, out, recompute, backprop);
}

TensorPtr swish(Tape* tape, const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    auto recompute = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = x->v[i] * sigmoid(x->v[i]);
    };
    auto backprop = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) {
            double s = sigmoid(x->v[i]);
            x->g[i] += out->g[i] * (s + x->v[i] * s * (1.0 - s));
        }
    };
    return finish(tape, "swish", {x}, out, recompute, backprop);
}

TensorPtr glu(Tape* tape, const TensorPtr& x) {
    int last = x->shape.back();
    if (last % 2 != 0) {
        throw DimensionError("glu: last extent must be even, got " + shape_str(x->shape));
    }
    int half = last / 2;
    int64_t rows = x->numel() / last;
    Shape out_shape = x->shape;
    out_shape.back() = half;
    auto out = make_tensor(out_shape);
    auto recompute = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* xa = x->v.data() + r * last;
            const double* xb = xa + half;
            double* o = out->v.data() + r * half;
            for (int i = 0; i < half; ++i) o[i] = xa[i] * sigmoid(xb[i]);
        }
    };
    auto backprop = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* xa = x->v.data() + r * last;
            const double* xb = xa + half;
            double* ga = x->g.data() + r * last;
            double* gb = ga + half;
            const double* go = out->g.data() + r * half;
            for (int i = 0; i < half; ++i) {
                double s = sigmoid(xb[i]);
                ga[i] += go[i] * s;
                gb[i] += go[i] * xa[i] * s * (1.0 - s);
            }
        }
    };
    return finish(tape, "glu", {x}, out, recompute, backprop);
}

TensorPtr depthwise_conv_time(Tape* tape, const TensorPtr& x, const TensorPtr& kernel) {
    if (x->rank() != 2 || kernel->rank() != 2 || kernel->cols() != x->cols()) {
        throw DimensionError("depthwise_conv_time: shapes " + shape_str(x->shape) + " and " +
                             shape_str(kernel->shape) + " do not agree");
    }
    int w = kernel->rows();
    if (w % 2 == 0) throw ParameterError("depthwise_conv_time: kernel width must be odd");
    int t_len = x->rows(), d = x->cols(), r = w / 2;
    auto out = make_tensor({t_len, d});
    auto recompute = [=]() {
        for (int t = 0; t < t_len; ++t) {
            double* o = out->v.data() + static_cast<size_t>(t) * d;
            std::fill(o, o + d, 0.0);
            for (int j = 0; j < w; ++j) {
                int src = t + j - r;
                if (src < 0 || src >= t_len) continue;
                const double* xs = x->v.data() + static_cast<size_t>(src) * d;
                const double* ks = kernel->v.data() + static_cast<size_t>(j) * d;
                for (int c = 0; c < d; ++c) o[c] += xs[c] * ks[c];
            }
        }
    };
    auto backprop = [=]() {
        for (int t = 0; t < t_len; ++t) {
            const double* go = out->g.data() + static_cast<size_t>(t) * d;
            for (int j = 0; j < w; ++j) {
                int src = t + j - r;
                if (src < 0 || src >= t_len) continue;
                double* gx = x->g.data() + static_cast<size_t>(src) * d;
                double* gk = kernel->g.data() + static_cast<size_t>(j) * d;
                const double* xs = x->v.data() + static_cast<size_t>(src) * d;
                const double* ks = kernel->v.data() + static_cast<size_t>(j) * d;
                for (int c = 0; c < d; ++c) {
                    gx[c] += go[c] * ks[c];
                    gk[c] += go[c] * xs[c];
                }
            }
        }
    };
    return finish(tape, "depthwise_conv_time", {x, kernel}, out, recompute, backprop);
}

TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias,
                 int stride_h, int stride_w, int pad_h, int pad_w) {
    if (x->rank() != 3 || w->rank() != 4 || w->dim(1) != x->dim(0)) {
        throw DimensionError("conv2d: shapes " + shape_str(x->shape) + " and " + shape_str(w->shape) +
                             " do not agree");
    }
    if (stride_h < 1 || stride_w < 1 || pad_h < 0 || pad_w < 0) {
        throw ParameterError("conv2d: invalid stride or padding");
    }
    int cin = x->dim(0), h = x->dim(1), wd = x->dim(2);
    int cout = w->dim(0), kh = w->dim(2), kw = w->dim(3);
    if (bias->rank() != 1 || bias->dim(0) != cout) {
        throw DimensionError("conv2d: bias shape " + shape_str(bias->shape) + " does not match " +
                             std::to_string(cout) + " output channels");
    }
    int ho = (h + 2 * pad_h - kh) / stride_h + 1;
    int wo = (wd + 2 * pad_w - kw) / stride_w + 1;
    if (ho <= 0 || wo <= 0) {
        throw DimensionError("conv2d: input " + shape_str(x->shape) + " too small for kernel " +
                             shape_str(w->shape));
    }
    auto out = make_tensor({cout, ho, wo});
    auto at_x = [=](int c, int i, int j) -> int64_t {
        return (static_cast<int64_t>(c) * h + i) * wd + j;
    };
    auto at_w = [=](int co, int ci, int i, int j) -> int64_t {
        return ((static_cast<int64_t>(co) * cin + ci) * kh + i) * kw + j;
    };
    auto recompute = [=]() {
        double* o = out->v.data();
        for (int co = 0; co < cout; ++co) {
            for (int i = 0; i < ho; ++i) {
                for (int j = 0; j < wo; ++j) {
                    double acc = bias->v[co];
                    int base_i = i * stride_h - pad_h;
                    int base_j = j * stride_w - pad_w;
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int ki = 0; ki < kh; ++ki) {
                            int src_i = base_i + ki;
                            if (src_i < 0 || src_i >= h) continue;
                            for (int kj = 0; kj < kw; ++kj) {
                                int src_j = base_j + kj;
                                if (src_j < 0 || src_j >= wd) continue;
                                acc += x->v[at_x(ci, src_i, src_j)] * w->v[at_w(co, ci, ki, kj)];
                            }
                        }
                    }
                    *o++ = acc;
                }
            }
        }
    };
    auto backprop = [=]() {
        const double* go = out->g.data();
        for (int co = 0; co < cout; ++co) {
            for (int i = 0; i < ho; ++i) {
                for (int j = 0; j < wo; ++j) {
                    double g = *go++;
                    if (g == 0.0) continue;
                    bias->g[co] += g;
                    int base_i = i * stride_h - pad_h;
                    int base_j = j * stride_w - pad_w;
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int ki = 0; ki < kh; ++ki) {
                            int src_i = base_i + ki;
                            if (src_i < 0 || src_i >= h) continue;
                            for (int kj = 0; kj < kw; ++kj) {
                                int src_j = base_j + kj;
                                if (src_j < 0 || src_j >= wd) continue;
                                x->g[at_x(ci, src_i, src_j)] += g * w->v[at_w(co, ci, ki, kj)];
                                w->g[at_w(co, ci, ki, kj)] += g * x->v[at_x(ci, src_i, src_j)];
                            }
                        }
                    }
                }
            }
        }
    };
    return finish(tape, "conv2d", {x, w, bias}, out, recompute, backprop);
}

TensorPtr dropout(Tape* tape, const TensorPtr& x, double p, bool training, uint64_t key) {
    if (p < 0.0 || p >= 1.0) throw ParameterError("dropout: rate must be in [0, 1)");
    if (!training || p == 0.0) return x;
    auto out = make_tensor(x->shape);
    double keep = 1.0 - p;
    auto recompute = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) {
            bool kept = prng::uniform(key, i) >= p;
            out->v[i] = kept ? x->v[i] / keep : 0.0;
        }
    };
    auto backprop = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) {
            bool kept = prng::uniform(key, i) >= p;
            if (kept) x->g[i] += out->g[i] / keep;
        }
    };
    return finish(tape, "dropout", {x}, out, recompute, backprop);
}

TensorPtr softmax_lastdim(Tape* tape, const TensorPtr& x) {
    if (x->rank() < 1 || x->shape.back() < 1) {
        throw DimensionError("softmax_lastdim: empty last dimension in " + shape_str(x->shape));
    }
    int n = x->shape.back();
    int64_t rows = x->numel() / n;
    auto out = make_tensor(x->shape);
    auto recompute = [=]() {
        softmax_slices("softmax_lastdim", x->v.data(), nullptr, out->v.data(), rows, n);
    };
    auto backprop = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = out->v.data() + r * n;
            const double* gy = out->g.data() + r * n;
            double* gx = x->g.data() + r * n;
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += gy[i] * y[i];
            for (int i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - dot);
        }
    };
    return finish(tape, "softmax_lastdim", {x}, out, recompute, backprop);
}

TensorPtr log_softmax_lastdim(Tape* tape, const TensorPtr& x) {
    if (x->rank() < 1 || x->shape.back() < 1) {
        throw DimensionError("log_softmax_lastdim: empty last dimension in " + shape_str(x->shape));
    }
    int n = x->shape.back();
    int64_t rows = x->numel() / n;
    auto out = make_tensor(x->shape);
    auto recompute = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* xs = x->v.data() + r * n;
            double* ys = out->v.data() + r * n;
            double mx = *std::max_element(xs, xs + n);
            double sum = 0.0;
            for (int i = 0; i < n; ++i) sum += std::exp(xs[i] - mx);
            double lse = mx + std::log(sum);
            for (int i = 0; i < n; ++i) ys[i] = xs[i] - lse;
        }
    };
    auto backprop = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = out->v.data() + r * n;
            const double* gy = out->g.data() + r * n;
            double* gx = x->g.data() + r * n;
            double gsum = 0.0;
            for (int i = 0; i < n; ++i) gsum += gy[i];
            for (int i = 0; i < n; ++i) gx[i] += gy[i] - std::exp(y[i]) * gsum;
        }
    };
    return finish(tape, "log_softmax_lastdim", {x}, out, recompute, backprop);
}

TensorPtr masked_softmax(Tape* tape, const TensorPtr& scores, const std::vector<uint8_t>& allow) {
    if (scores->rank() != 2) throw DimensionError("masked_softmax: scores must be 2-D");
    if (allow.size() != scores->v.size()) {
        throw DimensionError("masked_softmax: mask has " + std::to_string(allow.size()) +
                             " entries for scores " + shape_str(scores->shape));
    }
    int n = scores->cols();
    int64_t rows = scores->rows();
    auto out = make_tensor(scores->shape);
    auto mask = std::make_shared<std::vector<uint8_t>>(allow);
    auto recompute = [=]() {
        softmax_slices("masked_softmax", scores->v.data(), mask->data(), out->v.data(), rows, n);
    };
    auto backprop = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = out->v.data() + r * n;
            const double* gy = out->g.data() + r * n;
            const uint8_t* as = mask->data() + r * n;
            double* gx = scores->g.data() + r * n;
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += gy[i] * y[i];
            for (int i = 0; i < n; ++i) {
                if (as[i]) gx[i] += y[i] * (gy[i] - dot);
            }
        }
    };
    return finish(tape, "masked_softmax", {scores}, out, recompute, backprop);
}

TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps) {
    if (eps <= 0.0) throw ParameterError("layer_norm: eps must be positive");
    int n = x->shape.back();
    if (gamma->rank() != 1 || gamma->dim(0) != n || beta->rank() != 1 || beta->dim(0) != n) {
        throw DimensionError("layer_norm: affine shapes " + shape_str(gamma->shape) + "/" +
                             shape_str(beta->shape) + " do not match last extent " + std::to_string(n));
    }
    int64_t rows = x->numel() / n;
    auto out = make_tensor(x->shape);
    auto recompute = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* xs = x->v.data() + r * n;
            double* ys = out->v.data() + r * n;
            double mean = 0.0;
            for (int i = 0; i < n; ++i) mean += xs[i];
            mean /= n;
            double var = 0.0;
            for (int i = 0; i < n; ++i) var += (xs[i] - mean) * (xs[i] - mean);
            var /= n;
            double inv = 1.0 / std::sqrt(var + eps);
            for (int i = 0; i < n; ++i) ys[i] = gamma->v[i] * (xs[i] - mean) * inv + beta->v[i];
        }
    };
    auto backprop = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* xs = x->v.data() + r * n;
            const double* gy = out->g.data() + r * n;
            double* gx = x->g.data() + r * n;
            double mean = 0.0;
            for (int i = 0; i < n; ++i) mean += xs[i];
            mean /= n;
            double var = 0.0;
            for (int i = 0; i < n; ++i) var += (xs[i] - mean) * (xs[i] - mean);
            var /= n;
            double inv = 1.0 / std::sqrt(var + eps);
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (int i = 0; i < n; ++i) {
                double xhat = (xs[i] - mean) * inv;
                double dxhat = gy[i] * gamma->v[i];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xhat;
                gamma->g[i] += gy[i] * xhat;
                beta->g[i] += gy[i];
            }
            mean_dxhat /= n;
            mean_dxhat_xhat /= n;
            for (int i = 0; i < n; ++i) {
                double xhat = (xs[i] - mean) * inv;
                double dxhat = gy[i] * gamma->v[i];
                gx[i] += (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv;
            }
        }
    };
    return finish(tape, "layer_norm", {x, gamma, beta}, out, recompute, backprop);
}

TensorPtr concat_lastdim(Tape* tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw UsageError("concat_lastdim: no inputs");
    Shape lead = parts[0]->shape;
    lead.pop_back();
    int total = 0;
    for (auto& p : parts) {
        Shape pl = p->shape;
        int last = pl.back();
        pl.pop_back();
        if (pl != lead) {
            throw DimensionError("concat_lastdim: leading extents differ: " + shape_str(parts[0]->shape) +
                                 " vs " + shape_str(p->shape));
        }
        total += last;
    }
    Shape out_shape = parts[0]->shape;
    out_shape.back() = total;
    int64_t rows = shape_numel(out_shape) / total;
    auto out = make_tensor(out_shape);
    auto recompute = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            double* o = out->v.data() + r * total;
            for (auto& p : parts) {
                int last = p->shape.back();
                const double* src = p->v.data() + r * last;
                std::copy(src, src + last, o);
                o += last;
            }
        }
    };
    auto backprop = [=]() {
        for (int64_t r = 0; r < rows; ++r) {
            const double* go = out->g.data() + r * total;
            for (auto& p : parts) {
                int last = p->shape.back();
                double* dst = p->g.data() + r * last;
                for (int i = 0; i < last; ++i) dst[i] += go[i];
                go += last;
            }
        }
    };
    return finish(tape, "concat_lastdim", parts, out, recompute, backprop);
}

TensorPtr transpose2d(Tape* tape, const TensorPtr& x) {
    if (x->rank() != 2) throw DimensionError("transpose2d: input must be 2-D, got " + shape_str(x->shape));
    int m = x->rows(), n = x->cols();
    auto out = make_tensor({n, m});
    auto recompute = [=]() {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out->v[static_cast<size_t>(j) * m + i] = x->at(i, j);
    };
    auto backprop = [=]() {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                x->g[static_cast<size_t>(i) * n + j] += out->g[static_cast<size_t>(j) * m + i];
    };
    return finish(tape, "transpose2d", {x}, out, recompute, backprop);
}

TensorPtr reshape(Tape* tape, const TensorPtr& x, const Shape& shape) {
    if (shape_numel(shape) != x->numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(shape));
    }
    auto out = make_tensor(shape);
    auto recompute = [=]() { out->v = x->v; };
    auto backprop = [=]() {
        for (size_t i = 0; i < out->v.size(); ++i) x->g[i] += out->g[i];
    };
    return finish(tape, "reshape", {x}, out, recompute, backprop);
}

TensorPtr sum_all(Tape* tape, const TensorPtr& x) {
    auto out = make_tensor({1});
    auto recompute = [=]() {
        double acc = 0.0;
        for (double v : x->v) acc += v;
        out->v[0] = acc;
    };
    auto backprop = [=]() {
        for (size_t i = 0; i < x->v.size(); ++i) x->g[i] += out->g[0];
    };
    return finish(tape, "sum_all", {x}, out, recompute, backprop);
}

TensorPtr mean_all(Tape* tape, const TensorPtr& x) {
    double inv = 1.0 / static_cast<double>(x->numel());
    auto out = make_tensor({1});
    auto recompute = [=]() {
        double acc = 0.0;
        for (double v : x->v) acc += v;
        out->v[0] = acc * inv;
    };
    auto backprop = [=]() {
        for (size_t i = 0; i < x->v.size(); ++i) x->g[i] += out->g[0] * inv;
    };
    return finish(tape, "mean_all", {x}, out, recompute, backprop);
}

TensorPtr relpos_scores(Tape* tape, const TensorPtr& q, const TensorPtr& table,
                        const std::vector<int>& pos_q, const std::vector<int>& pos_k) {
    if (q->rank() != 2 || table->rank() != 2 || q->cols() != table->cols()) {
        throw DimensionError("relpos_scores: shapes " + shape_str(q->shape) + " and " +
                             shape_str(table->shape) + " do not agree");
    }
    if (table->rows() % 2 != 1) {
        throw DimensionError("relpos_scores: table must have 2k+1 rows, got " + shape_str(table->shape));
    }
    if (static_cast<int>(pos_q.size()) != q->rows()) {
        throw DimensionError("relpos_scores: query position count mismatch");
    }
    int k = (table->rows() - 1) / 2;
    int nq = q->rows(), nk = static_cast<int>(pos_k.size()), d = q->cols();
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    auto pq = std::make_shared<std::vector<int>>(pos_q);
    auto pk = std::make_shared<std::vector<int>>(pos_k);
    auto out = make_tensor({nq, nk});
    auto row_of = [=](int i, int j) {
        int dist = std::clamp((*pk)[j] - (*pq)[i], -k, k);
        return dist + k;
    };
    auto recompute = [=]() {
        for (int i = 0; i < nq; ++i) {
            const double* qi = q->v.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < nk; ++j) {
                const double* e = table->v.data() + static_cast<size_t>(row_of(i, j)) * d;
                double dot = 0.0;
                for (int c = 0; c < d; ++c) dot += qi[c] * e[c];
                out->v[static_cast<size_t>(i) * nk + j] = dot * inv_sqrt_d;
            }
        }
    };
    auto backprop = [=]() {
        for (int i = 0; i < nq; ++i) {
            const double* qi = q->v.data() + static_cast<size_t>(i) * d;
            double* gq = q->g.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < nk; ++j) {
                double g = out->g[static_cast<size_t>(i) * nk + j] * inv_sqrt_d;
                if (g == 0.0) continue;
                size_t row = static_cast<size_t>(row_of(i, j)) * d;
                for (int c = 0; c < d; ++c) {
                    gq[c] += g * table->v[row + c];
                    table->g[row + c] += g * qi[c];
                }
            }
        }
    };
    return finish(tape, "relpos_scores", {q, table}, out, recompute, backprop);
}

}  // namespace ops
}  // namespace cassnat
