// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cassnat/model.hpp"
#include "cassnat/training.hpp"

namespace cassnat {

// Everything one run needs, parsed from line-based `key = value` text.
// Unknown keys are rejected; every value is type-checked with its line
// number. CASSNAT_SEED in the environment overrides the seed.
struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    SyntheticTaskSpec task;
    OptimizerConfig opt;
    AugmentConfig aug;
    uint64_t seed = 1;
    int train_utts = 2000;
    int val_utts = 200;
    std::string precision = "f64";  // checkpoint storage width: f64 | f32
};

RunConfig parse_run_config_text(const std::string& text, bool apply_env_seed = true);
RunConfig load_run_config(const std::string& path, bool apply_env_seed = true);
std::string serialize_run_config(const RunConfig& rc);

// Binary feature file: magic "CNAT", version, T, F (u32 little-endian),
// then T·F float32 values row-major.
void write_feature_file(const std::string& path, const Tensor& features);
TensorPtr read_feature_file(const std::string& path);

enum class ModelKind : uint8_t { kCassNat = 0, kAtBaseline = 1 };

struct CheckpointParam {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

struct CheckpointData {
    ModelKind kind = ModelKind::kCassNat;
    std::string config_text;
    std::vector<CheckpointParam> params;
    bool has_trainer = false;
    TrainerState trainer;
};

// Checkpoint: magic "CNCK", version, model kind, embedded config text,
// named parameter table (f64 or f32 per the precision tag), optional
// trainer state, and a trailing CRC-32 over everything before it.
void save_checkpoint(const std::string& path, const RunConfig& rc, ModelKind kind,
                     const ParamStore& store, const TrainerState* trainer = nullptr);
CheckpointData load_checkpoint(const std::string& path);

// Copies checkpoint values into an already-built store; every parameter
// must exist with the same shape.
void load_params(const CheckpointData& data, ParamStore* store);

uint32_t crc32(const uint8_t* data, size_t n);

// Shared by the align/analyze commands: one utterance per line,
// space-separated token ids.
std::vector<std::vector<int>> read_labels_file(const std::string& path);

}  // namespace cassnat
