// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cassnat/rng.hpp"

namespace cassnat {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << "max_rel_err=" << max_rel_err << " at leaf " << worst_leaf << " index " << worst_index
       << " (analytic=" << analytic << ", numeric=" << numeric << ", probed=" << probed << ")";
    return os.str();
}

namespace {

double eval_scalar(const ScalarFn& f, int64_t probe_tag) {
    Tape tape;
    TensorPtr loss;
    try {
        loss = f(tape);
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (while probing element " +
                           std::to_string(probe_tag) + ")");
    }
    if (!loss || loss->numel() != 1) throw UsageError("grad_check: function must return a scalar");
    return loss->v[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<TensorPtr>& leaves, double step,
                           double tol, int probes_per_leaf, uint64_t probe_seed) {
    if (step <= 0.0 || tol <= 0.0) throw ParameterError("grad_check: step and tol must be positive");

    // Analytic pass.
    Tape tape;
    TensorPtr loss = f(tape);
    if (!loss || loss->numel() != 1) throw UsageError("grad_check: function must return a scalar");
    for (auto& leaf : leaves) leaf->zero_grad();
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf->g);

    GradCheckReport report;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        int64_t n = leaf->numel();
        std::vector<int64_t> indices;
        if (probes_per_leaf <= 0 || probes_per_leaf >= n) {
            indices.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) indices[static_cast<size_t>(i)] = i;
        } else {
            // Distinct random indices.
            std::vector<int64_t> all(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
            Rng rng(prng::mix(probe_seed, li, 0x70726f6265ULL));
            rng.shuffle(all);
            indices.assign(all.begin(), all.begin() + probes_per_leaf);
        }
        for (int64_t idx : indices) {
            double saved = leaf->v[static_cast<size_t>(idx)];
            leaf->v[static_cast<size_t>(idx)] = saved + step;
            double up = eval_scalar(f, idx);
            leaf->v[static_cast<size_t>(idx)] = saved - step;
            double down = eval_scalar(f, idx);
            leaf->v[static_cast<size_t>(idx)] = saved;
            double numeric = (up - down) / (2.0 * step);
            double a = analytic[li][static_cast<size_t>(idx)];
            double err = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
            ++report.probed;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_leaf = static_cast<int>(li);
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

GradCheckReport grad_check(const ScalarFn& f, const TensorPtr& leaf, double step, double tol,
                           int probes_per_leaf, uint64_t probe_seed) {
    return grad_check(f, std::vector<TensorPtr>{leaf}, step, tol, probes_per_leaf, probe_seed);
}

}  // namespace cassnat
