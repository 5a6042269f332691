// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cassnat/blocks.hpp"
#include "cassnat/ctc.hpp"

namespace cassnat {

// Full hyperparameter record. Token ids: blank = 0, real tokens 1..vocab-1;
// the AT baseline extends its own view by eos = vocab.
struct ModelConfig {
    int vocab = 13;
    int feat_dim = 8;
    int d_att = 32;
    int n_heads = 8;
    int d_ff = 64;
    int enc_blocks = 4;
    int tae_blocks = 1;
    int sad_blocks = 3;
    int mad_blocks = 4;
    int k_enc = 20;
    int k_dec = 8;
    int enc_kernel = 15;
    int dec_kernel = 7;
    double dropout = 0.1;
    double label_smoothing = 0.1;
    int trigger_context = 1;
    int enc_middle = 2;  // CTC tap after this encoder block (1-based)
    int mad_middle = 2;  // decoder tap after this MAD block (1-based)
    int at_dec_blocks = 5;

    static constexpr int kFrontendChannels = 64;

    int eos_id() const { return vocab; }
    void validate() const;
};

// Ordered, named parameter registry. Initial values derive from
// (seed, name), so construction order never affects them.
class ParamStore {
public:
    enum class Init { kZeros, kOnes, kXavier, kNormal };

    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    TensorPtr create(const std::string& name, const Shape& shape, Init init, double scale = 1.0);
    TensorPtr get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }
    void zero_grads();
    int64_t total_values() const;

private:
    uint64_t seed_;
    std::vector<std::pair<std::string, TensorPtr>> items_;
    std::unordered_map<std::string, size_t> index_;
};

// Frontend, encoder blocks, and the two CTC projections; shared verbatim
// between the CASS-NAT and the AT baseline so encoder initialization is a
// plain copy by name.
struct EncoderStack {
    FrontendParams frontend;
    std::vector<EncoderBlockParams> blocks;
    TensorPtr ctc_final_w, ctc_final_b;
    TensorPtr ctc_mid_w, ctc_mid_b;
    int middle = 0;
};

struct EncodeOut {
    TensorPtr h;           // T' × d_att
    TensorPtr ctc_final;   // T' × V log-probabilities
    TensorPtr ctc_middle;  // present only when requested
};

EncodeOut encode(RunContext& ctx, const EncoderStack& enc, const TensorPtr& features,
                 bool want_middle);

struct CassNatModel {
    ModelConfig cfg;
    ParamStore params;
    EncoderStack encoder;
    TaeParams tae;
    std::vector<SadBlockParams> sad;
    std::vector<MadBlockParams> mad;
    TensorPtr out_final_w, out_final_b;
    TensorPtr out_mid_w, out_mid_b;
};

CassNatModel build_cassnat(const ModelConfig& cfg, uint64_t seed);

// Everything the training losses and the analyses need from one forward.
struct ForwardArtifacts {
    TensorPtr enc_out;
    TensorPtr ctc_final, ctc_middle;
    AlignmentPath alignment;
    TokenSegmentation segments_raw, segments_expanded;
    TensorPtr token_embeddings;       // TAE output, U × d_att
    TensorPtr dec_final, dec_middle;  // U × V log-probabilities
};

// Encode, force-align against the final CTC grid, run the single decoder
// pass over the expanded trigger spans. Row count of dec_* equals |labels|.
ForwardArtifacts forward_train(RunContext& ctx, const CassNatModel& model, const TensorPtr& features,
                               const std::vector<int>& labels);

struct DecodeResult {
    std::vector<int> tokens;
    std::vector<double> token_logposts;
    int decoder_passes = 0;
};

// Single-step decode: best-path CTC alignment, one decoder pass. An
// all-blank alignment yields an empty result with zero decoder passes.
DecodeResult decode_greedy(const CassNatModel& model, const TensorPtr& features,
                           AttentionTrace* trace = nullptr);

struct Hypothesis {
    std::vector<int> tokens;
    double score = 0.0;         // mean per-token decoder log-posterior
    double ctc_log_prob = 0.0;  // source alignment score
    int ctc_rank = 0;
};

struct NBestResult {
    std::vector<Hypothesis> hyps;  // sorted by descending score
    int decoder_passes = 0;
};

// One decoder pass per candidate alignment, ranked by decoder confidence.
NBestResult decode_nbest(const CassNatModel& model, const TensorPtr& features, int beam);

// Autoregressive baseline decoder block (pre-norm).
struct AtDecBlockParams {
    AttentionParams self_attn, cross_attn;
    FfnParams ffn;
    LayerNormParams ln1, ln2, ln3;
    RelPosTable relpos;
};

struct AtModel {
    ModelConfig cfg;
    ParamStore params;
    EncoderStack encoder;
    TensorPtr embed;  // (vocab+1) × d_att, row vocab = eos/mystery start
    std::vector<AtDecBlockParams> dec;
    LayerNormParams ln_final;
    TensorPtr out_w, out_b;  // d_att → vocab+1
};

AtModel build_at(const ModelConfig& cfg, uint64_t seed);

struct AtTeacherOut {
    TensorPtr ctc_final;     // T' × V
    TensorPtr dec_logprobs;  // (U+1) × (V+1), teacher-forced
};

AtTeacherOut at_forward_teacher(RunContext& ctx, const AtModel& model, const TensorPtr& features,
                                const std::vector<int>& labels);

struct AtDecodeResult {
    std::vector<int> tokens;
    int decoder_passes = 0;
};

// Greedy decode until the end symbol or the 2·T' length cap. Each prefix
// re-runs the full decoder stack (no caching); the pass that reads the end
// symbol counts, so passes == emitted + 1 except on a cap hit. force_len
// >= 0 suppresses the end symbol until that many tokens were emitted
// (controlled-length latency measurement).
AtDecodeResult at_decode(const AtModel& model, const TensorPtr& features, int force_len = -1);

// Copies frontend, encoder blocks, and the final CTC head by name. Decoder
// parameters stay untouched. Shape mismatches name the parameter.
void init_encoder_from_at(const AtModel& at, CassNatModel* model);

}  // namespace cassnat
