// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0
//
// CTC dynamic programming against exhaustive path enumeration.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cassnat/ctc.hpp"
#include "cassnat/gradcheck.hpp"
#include "cassnat/ops.hpp"
#include "cassnat/rng.hpp"
#include "test_util.hpp"

using namespace cassnat;

namespace {

LogPosteriorGrid uniform_grid(int frames, int vocab) {
    return LogPosteriorGrid(frames, vocab,
                            std::vector<double>(static_cast<size_t>(frames) * vocab, 0.0));
}

LogPosteriorGrid random_grid(int frames, int vocab, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> vals(static_cast<size_t>(frames) * vocab);
    for (auto& v : vals) v = rng.normal() * 1.5;
    return LogPosteriorGrid(frames, vocab, std::move(vals));
}

// Enumerates every V^T frame path. Returns the log of the summed probability
// of collapsing paths, the max-probability collapsing path, and optionally
// every path sorted the way beam_align_nbest sorts.
struct EnumResult {
    double log_sum = -std::numeric_limits<double>::infinity();
    double log_max = -std::numeric_limits<double>::infinity();
    std::vector<int> argmax;
    std::vector<AlignmentPath> all_paths;
};

EnumResult enumerate_paths(const LogPosteriorGrid& grid, const std::vector<int>& target,
                           bool keep_all = false) {
    EnumResult res;
    int64_t total = 1;
    for (int t = 0; t < grid.frames; ++t) total *= grid.vocab;
    std::vector<int> path(static_cast<size_t>(grid.frames));
    for (int64_t code = 0; code < total; ++code) {
        int64_t c = code;
        double lp = 0.0;
        for (int t = 0; t < grid.frames; ++t) {
            path[static_cast<size_t>(t)] = static_cast<int>(c % grid.vocab);
            c /= grid.vocab;
            lp += grid.at(t, path[static_cast<size_t>(t)]);
        }
        if (keep_all) res.all_paths.push_back(AlignmentPath{path, lp});
        if (collapse(path) == target) {
            if (std::isinf(res.log_sum)) {
                res.log_sum = lp;
            } else {
                double mx = std::max(res.log_sum, lp);
                res.log_sum = mx + std::log(std::exp(res.log_sum - mx) + std::exp(lp - mx));
            }
            if (lp > res.log_max) {
                res.log_max = lp;
                res.argmax = path;
            }
        }
    }
    if (keep_all) {
        std::sort(res.all_paths.begin(), res.all_paths.end(), [](const auto& a, const auto& b) {
            if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
            return a.labels < b.labels;
        });
    }
    return res;
}

std::vector<int> random_feasible_labels(const LogPosteriorGrid& grid, Rng& rng, int max_len) {
    for (;;) {
        int len = rng.uniform_int(1, max_len);
        std::vector<int> labels(static_cast<size_t>(len));
        for (auto& l : labels) l = rng.uniform_int(1, grid.vocab - 1);
        if (min_frames_required(labels) <= grid.frames) return labels;
    }
}

}  // namespace

TEST_CASE("collapse merges repeats then drops blanks") {
    CHECK(collapse({0, 0, 0}) == std::vector<int>{});
    CHECK(collapse({1, 1, 0, 1}) == std::vector<int>{1, 1});
    CHECK(collapse({0, 1, 1, 0, 2}) == std::vector<int>{1, 2});
}

TEST_CASE("ctc_loss single-frame certainty is zero") {
    // p(a) = 1 on the only frame.
    LogPosteriorGrid grid(1, 2, {std::log(1e-300), 0.0});
    CHECK(ctc_loss(grid, {1}) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ctc_loss on uniform 3x3 grids matches hand enumeration") {
    auto grid = uniform_grid(3, 3);
    // Six of the 27 equiprobable paths collapse to [a].
    double loss_a = ctc_loss(grid, {1});
    CHECK(loss_a == doctest::Approx(-std::log(6.0 / 27.0)).epsilon(1e-12));
    auto oracle_a = enumerate_paths(grid, {1});
    CHECK(loss_a == doctest::Approx(-oracle_a.log_sum).epsilon(1e-12));

    // Only path (a, blank, a) collapses to [a, a].
    double loss_aa = ctc_loss(grid, {1, 1});
    CHECK(loss_aa == doctest::Approx(-std::log(1.0 / 27.0)).epsilon(1e-12));
}

TEST_CASE("ctc_loss errors") {
    auto grid = uniform_grid(2, 3);
    CHECK_THROWS_AS(ctc_loss(grid, {1, 0, 2}), UsageError);
    CHECK_THROWS_AS(ctc_loss(grid, {}), UsageError);
    // [a, a] needs 3 frames; the message names both counts.
    CHECK_THROWS_WITH_AS(ctc_loss(grid, {1, 1}), doctest::Contains("minimum 3"), InfeasibleError);
}

TEST_CASE("ctc oracle equivalence on random small grids") {
    Rng rng(2024);
    int instances = 0;
    while (instances < 60) {
        int frames = rng.uniform_int(1, 6);
        int vocab = rng.uniform_int(2, 3);
        auto grid = random_grid(frames, vocab, rng.next_u64());
        auto labels = random_feasible_labels(grid, rng, 3);
        auto oracle = enumerate_paths(grid, labels);
        double loss = ctc_loss(grid, labels);
        CHECK(loss == doctest::Approx(-oracle.log_sum).epsilon(1e-9));
        auto forced = ctc_forced_align(grid, labels);
        CHECK(forced.log_prob == doctest::Approx(oracle.log_max).epsilon(1e-9));
        CHECK(collapse(forced.labels) == labels);
        // Sum over paths always dominates the single best path.
        CHECK(loss <= -forced.log_prob + 1e-12);
        ++instances;
    }
}

TEST_CASE("forced alignment hand example") {
    // blank=0, a=1, b=2
    LogPosteriorGrid grid(3, 3,
                          {std::log(0.2), std::log(0.7), std::log(0.1),
                           std::log(0.3), std::log(0.6), std::log(0.1),
                           std::log(0.8), std::log(0.1), std::log(0.1)});
    auto path = ctc_forced_align(grid, {1});
    CHECK(path.labels == std::vector<int>{1, 1, 0});
    CHECK(std::exp(path.log_prob) == doctest::Approx(0.336).epsilon(1e-9));
    auto oracle = enumerate_paths(grid, {1});
    CHECK(path.log_prob == doctest::Approx(oracle.log_max).epsilon(1e-12));
}

TEST_CASE("forced alignment with exact frame budget is the labels verbatim") {
    // T = |labels|, distinct neighbors, one-hot correct frames.
    std::vector<double> vals(9, std::log(1e-12));
    vals[0 * 3 + 1] = 0.0;  // a
    vals[1 * 3 + 2] = 0.0;  // b
    vals[2 * 3 + 1] = 0.0;  // a
    LogPosteriorGrid grid(3, 3, std::move(vals));
    auto path = ctc_forced_align(grid, {1, 2, 1});
    CHECK(path.labels == std::vector<int>{1, 2, 1});
    CHECK(std::exp(path.log_prob) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("forced alignment ties advance labels as early as possible") {
    auto path = ctc_forced_align(uniform_grid(3, 3), {1});
    CHECK(path.labels == std::vector<int>{1, 0, 0});
    auto two = ctc_forced_align(uniform_grid(4, 3), {1, 2});
    CHECK(two.labels == std::vector<int>{1, 2, 0, 0});
}

TEST_CASE("best_path_decode") {
    SUBCASE("one-hot grid recovers the exact path") {
        std::vector<double> vals(8, std::log(1e-12));
        vals[0 * 2 + 1] = 0.0;
        vals[1 * 2 + 0] = 0.0;
        vals[2 * 2 + 1] = 0.0;
        vals[3 * 2 + 1] = 0.0;
        LogPosteriorGrid grid(4, 2, std::move(vals));
        CHECK(best_path_decode(grid).labels == std::vector<int>{1, 0, 1, 1});
    }
    SUBCASE("uniform grid ties break toward blank") {
        auto path = best_path_decode(uniform_grid(5, 4));
        CHECK(path.labels == std::vector<int>(5, 0));
    }
    SUBCASE("random grid matches per-frame argmax oracle") {
        auto grid = random_grid(7, 5, 99);
        auto path = best_path_decode(grid);
        double total = 0.0;
        for (int t = 0; t < 7; ++t) {
            int arg = 0;
            for (int k = 1; k < 5; ++k) {
                if (grid.at(t, k) > grid.at(t, arg)) arg = k;
            }
            CHECK(path.labels[static_cast<size_t>(t)] == arg);
            total += grid.at(t, arg);
        }
        CHECK(path.log_prob == doctest::Approx(total).epsilon(1e-12));
    }
}

TEST_CASE("beam_align_nbest") {
    SUBCASE("beam 1 equals best path decode") {
        auto grid = random_grid(5, 3, 7);
        auto nbest = beam_align_nbest(grid, 1);
        auto best = best_path_decode(grid);
        REQUIRE(nbest.size() == 1);
        CHECK(nbest[0].labels == best.labels);
        CHECK(nbest[0].log_prob == doctest::Approx(best.log_prob).epsilon(1e-12));
    }
    SUBCASE("huge beam reproduces full enumeration order") {
        auto grid = random_grid(4, 3, 8);
        auto oracle = enumerate_paths(grid, {1}, /*keep_all=*/true);
        auto nbest = beam_align_nbest(grid, 81);
        REQUIRE(nbest.size() == oracle.all_paths.size());
        for (size_t i = 0; i < nbest.size(); ++i) {
            CHECK(nbest[i].labels == oracle.all_paths[i].labels);
            CHECK(nbest[i].log_prob == doctest::Approx(oracle.all_paths[i].log_prob).epsilon(1e-10));
        }
    }
    SUBCASE("scores non-increasing and paths distinct") {
        auto grid = random_grid(6, 3, 9);
        auto nbest = beam_align_nbest(grid, 10);
        for (size_t i = 1; i < nbest.size(); ++i) {
            CHECK(nbest[i - 1].log_prob >= nbest[i].log_prob);
            CHECK(nbest[i - 1].labels != nbest[i].labels);
        }
    }
}

TEST_CASE("alignment_to_segments") {
    CHECK(alignment_to_segments({{0, 1, 1, 0, 2}, 0.0}) ==
          TokenSegmentation{{1, 1, 3}, {2, 4, 5}});
    CHECK(alignment_to_segments({{1, 0, 1}, 0.0}) == TokenSegmentation{{1, 1, 1}, {1, 2, 3}});
    // Trailing blanks belong to no token.
    CHECK(alignment_to_segments({{0, 1, 0, 0}, 0.0}) == TokenSegmentation{{1, 1, 2}});
    CHECK_THROWS_AS(alignment_to_segments({{0, 0}, 0.0}), EmptyAlignmentError);
}

TEST_CASE("segment spans are strictly ordered on random alignments") {
    Rng rng(55);
    for (int it = 0; it < 50; ++it) {
        int frames = rng.uniform_int(2, 12);
        std::vector<int> labels(static_cast<size_t>(frames));
        for (auto& l : labels) l = rng.uniform_int(0, 3);
        if (collapse(labels).empty()) continue;
        auto segs = alignment_to_segments({labels, 0.0});
        CHECK(!segs.empty());
        int prev_end = 0;
        for (auto& s : segs) {
            CHECK(s.start >= 1);
            CHECK(s.start <= s.end);
            CHECK(s.end <= frames);
            CHECK(s.start > prev_end);
            prev_end = s.end;
        }
        // Token column equals the collapsed alignment.
        std::vector<int> tokens;
        for (auto& s : segs) tokens.push_back(s.token);
        CHECK(tokens == collapse(labels));
    }
}

TEST_CASE("expand_segments") {
    TokenSegmentation segs{{1, 2, 3}, {2, 4, 5}};
    SUBCASE("context one widens both sides") {
        auto out = expand_segments(segs, 1, 5);
        CHECK(out == TokenSegmentation{{1, 1, 4}, {2, 3, 5}});
    }
    SUBCASE("context zero is the identity") {
        CHECK(expand_segments(segs, 0, 5) == segs);
    }
    SUBCASE("full-span segment is unchanged by clipping") {
        TokenSegmentation full{{3, 1, 9}};
        CHECK(expand_segments(full, 4, 9) == full);
    }
    SUBCASE("ordering of pairs and start<=end preserved") {
        auto out = expand_segments(segs, 3, 5);
        for (size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i].start <= out[i].end);
            if (i) {
                CHECK(out[i - 1].start <= out[i].start);
                CHECK(out[i - 1].end <= out[i].end);
            }
        }
    }
}

TEST_CASE("ctc loss gradient passes finite differences") {
    Rng rng(77);
    for (int it = 0; it < 5; ++it) {
        int frames = rng.uniform_int(3, 6);
        int vocab = rng.uniform_int(2, 4);
        auto logits = testutil::random_tensor({frames, vocab}, rng.next_u64());
        std::vector<int> labels;
        {
            auto grid = LogPosteriorGrid(frames, vocab, logits->v);
            Rng lr(rng.next_u64());
            labels = random_feasible_labels(grid, lr, 2);
        }
        auto f = [&](Tape& t) {
            auto lp = ops::log_softmax_lastdim(&t, logits);
            return ctc_loss_op(&t, lp, labels);
        };
        auto report = grad_check(f, logits, 1e-5, 1e-4);
        CHECK_MESSAGE(report.pass(1e-4), report.summary());
    }
}

TEST_CASE("ctc_loss_op value agrees with the grid-level loss") {
    auto grid = random_grid(5, 4, 31);
    auto t = make_tensor({5, 4}, grid.logp);
    auto out = ctc_loss_op(nullptr, t, {2, 1});
    CHECK(out->v[0] == doctest::Approx(ctc_loss(grid, {2, 1})).epsilon(1e-12));
}

TEST_CASE("grid rows renormalize on construction") {
    auto grid = random_grid(4, 5, 41);
    for (int t = 0; t < 4; ++t) {
        double s = 0;
        for (int k = 0; k < 5; ++k) s += std::exp(grid.at(t, k));
        CHECK(std::abs(std::log(s)) < 1e-9);
    }
    CHECK_THROWS_AS(LogPosteriorGrid(0, 2, {}), DimensionError);
    CHECK_THROWS_AS(LogPosteriorGrid(1, 1, {0.0}), DimensionError);
}
