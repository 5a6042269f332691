// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cassnat/error.hpp"

namespace cassnat {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

// Dense row-major tensor. Values are double precision throughout; gradients
// share the shape and are allocated lazily. Immutable after construction
// except through ops that advertise in-place behavior.
struct Tensor {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;
    bool requires_grad = false;

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    // 2-D accessors; callers guarantee rank() == 2.
    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }

    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }
    void zero_grad() { g.assign(v.size(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(const Shape& shape, double fill = 0.0);
TensorPtr make_tensor(const Shape& shape, std::vector<double> values, bool requires_grad = false);

// Throws NumericError naming the op and the first offending index if any
// element is non-finite.
void check_finite(const char* op, const Tensor& t);

// Ordered record of applied primitive operations. Replaying the record
// recomputes every output from the current leaf values; walking it in
// reverse accumulates exact gradients. Leaf gradients accumulate across
// repeated backward() calls; produced tensors are re-zeroed each call.
class Tape {
public:
    struct Step {
        const char* op;
        std::vector<TensorPtr> inputs;
        TensorPtr out;
        std::function<void()> recompute;
        std::function<void()> backprop;
    };

    void record(Step step) { steps_.push_back(std::move(step)); }

    size_t size() const { return steps_.size(); }
    void clear() { steps_.clear(); }
    const std::vector<Step>& steps() const { return steps_; }

    // Re-executes every recorded forward computation in order.
    void replay();

    // Reverse-mode sweep from a scalar loss recorded on this tape.
    void backward(const TensorPtr& loss);

private:
    std::vector<Step> steps_;
};

}  // namespace cassnat
