// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cassnat/tensor.hpp"

namespace cassnat {

// Builds a scalar loss on the given tape from the current leaf values.
using ScalarFn = std::function<TensorPtr(Tape&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    // Identifies the worst element: which leaf and which flat index.
    int worst_leaf = -1;
    int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
    int64_t probed = 0;

    bool pass(double tol) const { return max_rel_err <= tol; }
    std::string summary() const;
};

// Compares reverse-mode gradients against central finite differences for
// every listed leaf. probes_per_leaf == 0 checks every element; otherwise
// that many randomly chosen elements per leaf (seeded). The error metric is
// |a - n| / max(1, |a| + |n|), i.e. relative for O(1) gradients and absolute
// for vanishing ones where the difference quotient loses precision.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<TensorPtr>& leaves, double step,
                           double tol, int probes_per_leaf = 0, uint64_t probe_seed = 0);

GradCheckReport grad_check(const ScalarFn& f, const TensorPtr& leaf, double step, double tol,
                           int probes_per_leaf = 0, uint64_t probe_seed = 0);

}  // namespace cassnat
