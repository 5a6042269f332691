// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cassnat/model.hpp"

namespace cassnat {

struct LossConfig {
    double lambda_ce = 0.9;    // final vs middle decoder CE
    double lambda_ctc = 0.5;   // final vs middle CTC
    double global_ctc_weight = 0.5;  // CTC vs CE balance of the whole objective
    double label_smoothing = 0.1;
    bool use_iterated = true;

    void validate() const;
};

// Mean over tokens of cross-entropy against the smoothed target that puts
// (1 - eps) on the true label and eps/(V'-1) on every other one.
TensorPtr smoothed_ce_op(Tape* tape, const TensorPtr& log_dist, const std::vector<int>& labels,
                         double eps);

// lambda · CTC(final grid) + (1 - lambda) · smoothed CE over the decoder
// rows, both against the same labels (the decoder rows already follow the
// max-approximation alignment embedded in the artifacts).
TensorPtr joint_loss(Tape* tape, const ForwardArtifacts& art, const std::vector<int>& labels,
                     double lambda, double eps);

// w·[λctc·CTC_f + (1-λctc)·CTC_m] + (1-w)·[λce·CE_f + (1-λce)·CE_m].
TensorPtr iterated_loss(Tape* tape, const ForwardArtifacts& art, const std::vector<int>& labels,
                        const LossConfig& cfg);

// The same combination over plain numbers, for linearity probes.
double combine_iterated(double ctc_final, double ctc_middle, double ce_final, double ce_middle,
                        const LossConfig& cfg);

// Sub-loss values of one forward, for the loss log.
struct LossParts {
    double total = 0, ctc_final = 0, ctc_middle = 0, ce_final = 0, ce_middle = 0;
};

// Dispatches to iterated_loss or joint_loss(global_ctc_weight) and reports
// the component values.
TensorPtr cassnat_loss(Tape* tape, const ForwardArtifacts& art, const std::vector<int>& labels,
                       const LossConfig& cfg, LossParts* parts);

// Hybrid objective for the baseline: w·CTC + (1-w)·CE over labels + eos.
TensorPtr at_loss(Tape* tape, const AtTeacherOut& out, const std::vector<int>& labels, int eos_id,
                  const LossConfig& cfg, LossParts* parts);

// ----- synthetic task --------------------------------------------------

struct SyntheticTaskSpec {
    int vocab = 13;  // 12 tokens + blank
    int feat_dim = 8;
    int dur_min = 3, dur_max = 8;       // frames per token
    double noise_sigma = 0.1;
    int len_min = 2, len_max = 8;       // tokens per utterance
    uint64_t seed = 1;
    double proto_separation = 0.9;      // distance between unrelated prototypes
    double similar_pair_dist = 0.4;     // the last two tokens sit this close
    double proto_min_dist = 0.3;        // hard floor between any two

    void validate() const;
    // The deliberately similar prototype pair (acoustic near-neighbors).
    int similar_a() const { return vocab - 2; }
    int similar_b() const { return vocab - 1; }
};

struct Utterance {
    TensorPtr features;
    std::vector<int> labels;
    std::string id;
};

// One characteristic feature template per token id (index 0 unused).
std::vector<std::vector<double>> make_prototypes(const SyntheticTaskSpec& spec);

// Deterministic under (spec.seed, stream, index). Durations are bumped until
// the reduced frame rate can carry the labels, so every utterance is
// feasible by construction.
std::vector<Utterance> generate_synthetic(const SyntheticTaskSpec& spec, int n, uint64_t stream);

// ----- augmentation -----------------------------------------------------

struct AugmentConfig {
    bool enabled = true;
    int time_masks = 1, time_max = 4;
    int freq_masks = 1, freq_max = 2;
};

// Zeroes random time spans and frequency bands; returns a fresh tensor.
TensorPtr spec_mask(const TensorPtr& features, const AugmentConfig& aug, uint64_t seed);

// ----- optimization ------------------------------------------------------

struct OptimizerConfig {
    double lr_factor = 1.0;
    int warmup_steps = 400;
    double beta1 = 0.9, beta2 = 0.98, adam_eps = 1e-9;
    int batch_size = 8;
    int epochs = 12;
    int keep_best = 3;  // checkpoints averaged for the final model
    int patience = 5;
    int log_interval = 25;
};

// Inverse-square-root schedule with linear warmup.
double lr_at(const OptimizerConfig& cfg, int d_att, int64_t step);

using ParamSnapshot = std::vector<std::vector<double>>;
ParamSnapshot take_snapshot(const ParamStore& store);
void apply_snapshot(ParamStore& store, const ParamSnapshot& snapshot);

// Optimizer moments and progress counters, serialized into checkpoints so a
// resumed run continues bit-for-bit.
struct TrainerState {
    int64_t step = 0;
    int next_epoch = 0;
    std::vector<std::vector<double>> adam_m, adam_v;
};

class Adam {
public:
    Adam(const ParamStore& store, const OptimizerConfig& cfg);
    // Applies one update from the accumulated gradients, scaled by
    // grad_scale (1/batch). Throws NumericError on non-finite values.
    void step(ParamStore& store, double lr, double grad_scale);
    int64_t steps() const { return step_; }
    void restore(const TrainerState& state);
    void save(TrainerState* state) const;

private:
    OptimizerConfig cfg_;
    int64_t step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// ----- evaluation and the loop -------------------------------------------

struct EvalResult {
    double token_accuracy = 0.0;  // 1 - edit distance / reference length
    double seq_error_rate = 0.0;
    int64_t edits = 0, ref_tokens = 0;
    int wrong_sequences = 0, count = 0;
};

int edit_distance(const std::vector<int>& a, const std::vector<int>& b);
EvalResult evaluate_cassnat(const CassNatModel& model, const std::vector<Utterance>& utts);
EvalResult evaluate_at(const AtModel& model, const std::vector<Utterance>& utts);

struct TrainLogEntry {
    int64_t step = 0;
    LossParts parts;
};

struct TrainOptions {
    OptimizerConfig opt;
    LossConfig loss;
    AugmentConfig aug;
    uint64_t seed = 1;
};

struct TrainResult {
    std::vector<TrainLogEntry> curve;
    std::vector<double> val_accuracy;  // per finished epoch
    ParamSnapshot best_params, averaged_params;
    // Live parameters at loop exit, before averaging was applied — the
    // state a resumed run continues from.
    ParamSnapshot final_params;
    double best_val_accuracy = 0.0;
    TrainerState final_state;
    bool diverged = false;
    int skipped = 0;  // infeasible utterances
    int epochs_run = 0;
};

// Trains the model in place. On return the live parameters are the
// averaged-best snapshot (the paper-style final model); `best_params` holds
// the single best epoch. Passing `resume` continues a previous run exactly.
TrainResult train_cassnat(CassNatModel* model, const std::vector<Utterance>& train_set,
                          const std::vector<Utterance>& val_set, const TrainOptions& opts,
                          const TrainerState* resume = nullptr);

TrainResult train_at(AtModel* model, const std::vector<Utterance>& train_set,
                     const std::vector<Utterance>& val_set, const TrainOptions& opts,
                     const TrainerState* resume = nullptr);

}  // namespace cassnat
