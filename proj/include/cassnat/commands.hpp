// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

namespace cassnat {
namespace commands {

struct TrainArgs {
    std::string config;
    std::string out_dir;
    std::string init_encoder;  // AT checkpoint path, optional
    bool at_baseline = false;
};
int train(const TrainArgs& args);

struct DecodeArgs {
    std::string ckpt;
    std::string input;  // feature file or directory
    int beam = 0;       // 0 = greedy
};
int decode(const DecodeArgs& args);

struct AlignArgs {
    std::string ckpt;
    std::string input;
    std::string labels;
};
int align(const AlignArgs& args);

struct BenchArgs {
    std::string ckpt_nat;
    std::string ckpt_at;
    std::vector<int> lengths{10, 25, 50};
    int repeats = 5;
};
int bench(const BenchArgs& args);

struct GradcheckArgs {
    std::string config;  // optional; built-in toy dimensions otherwise
    std::string module;  // optional filter
    bool inject_fault = false;
};
int gradcheck(const GradcheckArgs& args);

struct AnalyzeArgs {
    std::string ckpt;
    std::string input;
    std::string labels;  // required for embed/pca/neighbors
    std::string mode = "attn";
    std::string layer = "last";
    std::string heads = "all";
    std::string modules = "sad,mad";
    int token = -1;
    int top_n = 4;
};
int analyze(const AnalyzeArgs& args);

// Maps a thrown error to the documented exit codes (1 usage, 2 data/format,
// 3 numeric) and prints the message to stderr.
int run_guarded(const std::function<int()>& body);

}  // namespace commands
}  // namespace cassnat
