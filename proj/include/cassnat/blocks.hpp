// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "cassnat/attention.hpp"
#include "cassnat/rng.hpp"
#include "cassnat/tensor.hpp"

namespace cassnat {

// Attention weights retained for analysis, keyed by the scope the model set
// when invoking the block ("sad.2.self", "mad.3.cross", ...).
struct AttentionTrace {
    struct Entry {
        std::string name;
        int head = 0;
        TensorPtr weights;
    };
    std::vector<Entry> entries;
};

// Per-forward execution state. Dropout keys derive from (dropout_key, site)
// so a run is reproducible from the seed material alone.
struct RunContext {
    Tape* tape = nullptr;
    bool training = false;
    double dropout = 0.0;
    uint64_t dropout_key = 0;
    uint64_t next_site = 0;
    AttentionTrace* trace = nullptr;
    std::string scope;

    uint64_t fresh_key() { return prng::mix(dropout_key, next_site++); }
};

struct FfnParams {
    TensorPtr w1, b1;  // d -> d_ff
    TensorPtr w2, b2;  // d_ff -> d
};

struct LayerNormParams {
    TensorPtr gamma, beta;
};

struct ConvModuleParams {
    TensorPtr pw1_w, pw1_b;  // d -> 2d, feeds the gate
    TensorPtr dw_kernel;     // w × d depthwise over time, w odd
    LayerNormParams ln;
    TensorPtr pw2_w, pw2_b;  // d -> d
};

struct EncoderBlockParams {
    FfnParams ffn1, ffn2;
    AttentionParams attn;
    LayerNormParams ln_attn, ln_final;
    ConvModuleParams conv;
    RelPosTable relpos;
};

struct MadBlockParams {
    FfnParams ffn1, ffn2;
    AttentionParams self_attn, cross_attn;
    LayerNormParams ln_self, ln_cross, ln_final;
    ConvModuleParams conv;
    RelPosTable relpos;
};

struct SadBlockParams {
    AttentionParams attn;
    FfnParams ffn;
    LayerNormParams ln1, ln2;
    RelPosTable relpos;
};

struct TaeParams {
    TensorPtr query_w, query_b;  // projection of the sinusoidal queries
    AttentionParams cross;
    FfnParams ffn;
};

struct FrontendParams {
    int channels = 0;
    TensorPtr conv1_w, conv1_b;  // channels × 1 × 3 × 3
    TensorPtr conv2_w, conv2_b;  // channels × channels × 3 × 3
    TensorPtr proj_w, proj_b;    // channels·ceil(F/4) -> d_att
};

constexpr double kLayerNormEps = 1e-6;

// Affine → swish → dropout → affine.
TensorPtr ffn_forward(RunContext& ctx, const TensorPtr& x, const FfnParams& p);
// Half-step residual: x + 0.5 · FFN(x).
TensorPtr ffn_half(RunContext& ctx, const TensorPtr& x, const FfnParams& p);

// Gated convolution branch: pointwise to 2d → GLU → depthwise conv over
// time → layer norm → swish → pointwise to d → dropout. Rows at or past
// `valid` are zeroed before the depthwise conv so padding cannot leak into
// valid frames through the kernel window.
TensorPtr conv_branch(RunContext& ctx, const TensorPtr& x, const ConvModuleParams& p, int valid);
// Residual form: x + branch(x).
TensorPtr conv_module(RunContext& ctx, const TensorPtr& x, const ConvModuleParams& p, int valid = -1);

// Convolution-augmented block: half FFN, self-attention with the layer norm
// on the attention output inside the residual, convolution module, then the
// closing half FFN wrapped in the final layer norm.
TensorPtr encoder_block(RunContext& ctx, const TensorPtr& x, const MaskMatrix& mask,
                        const EncoderBlockParams& p);

// Mixed-attention decoder block over token states s with access to the
// acoustic sequence h.
TensorPtr mad_block(RunContext& ctx, const TensorPtr& s, const TensorPtr& h,
                    const MaskMatrix& self_mask, const MaskMatrix& cross_mask,
                    const MadBlockParams& p);

// Pre-norm self-attention decoder block (no convolution, no access to h).
TensorPtr sad_block(RunContext& ctx, const TensorPtr& s, const MaskMatrix& mask,
                    const SadBlockParams& p);

// Token acoustic extractor: projected sinusoidal queries cross-attend to h
// under the trigger mask, followed by one half FFN.
TensorPtr token_acoustic_extractor(RunContext& ctx, const TensorPtr& h, const MaskMatrix& trigger,
                                   const TaeParams& p);

// Two stride-2 convolutions with swish, flattened and projected to d_att.
TensorPtr conv_frontend(RunContext& ctx, const TensorPtr& features, const FrontendParams& p);

// Output frame count of the two stride-2 reductions.
inline int frontend_out_frames(int t) { return (((t + 1) / 2) + 1) / 2; }

// Fixed sinusoidal position encodings for rows 0..n-1.
TensorPtr sinusoidal_positions(int n, int d);

}  // namespace cassnat
