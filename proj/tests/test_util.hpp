// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <vector>

#include "cassnat/rng.hpp"
#include "cassnat/tensor.hpp"

namespace testutil {

inline cassnat::TensorPtr random_tensor(const cassnat::Shape& shape, uint64_t seed,
                                        double scale = 1.0) {
    cassnat::Rng rng(seed);
    auto numel = cassnat::shape_numel(shape);
    std::vector<double> vals(static_cast<size_t>(numel));
    for (auto& v : vals) v = rng.normal() * scale;
    return cassnat::make_tensor(shape, std::move(vals));
}

inline bool approx(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testutil
