// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace cassnat {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

TensorPtr make_tensor(const Shape& shape, double fill) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = shape;
    t->v.assign(static_cast<size_t>(shape_numel(shape)), fill);
    return t;
}

TensorPtr make_tensor(const Shape& shape, std::vector<double> values, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape));
    }
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
        throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                             shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = shape;
    t->v = std::move(values);
    t->requires_grad = requires_grad;
    check_finite("make_tensor", *t);
    return t;
}

void check_finite(const char* op, const Tensor& t) {
    for (size_t i = 0; i < t.v.size(); ++i) {
        if (!std::isfinite(t.v[i])) {
            throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

void Tape::replay() {
    for (auto& s : steps_) {
        if (s.recompute) s.recompute();
    }
}

void Tape::backward(const TensorPtr& loss) {
    if (!loss || loss->numel() != 1) {
        throw UsageError("backward: loss must be a scalar tensor");
    }
    // Tensors produced on this tape get fresh gradient buffers; leaves keep
    // theirs so repeated calls accumulate.
    std::unordered_set<Tensor*> produced;
    for (auto& s : steps_) produced.insert(s.out.get());

    bool reachable = false;
    for (auto& s : steps_) {
        s.out->zero_grad();
        for (auto& in : s.inputs) {
            if (produced.count(in.get()) == 0) in->ensure_grad();
        }
        if (s.out.get() == loss.get()) reachable = true;
    }
    if (!reachable && produced.count(loss.get()) == 0) {
        // A bare leaf used as loss is legal only if it is on the tape at all.
        throw UsageError("backward: loss tensor was not produced on this record");
    }

    loss->g.assign(1, 1.0);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        if (it->backprop) it->backprop();
    }
}

}  // namespace cassnat
