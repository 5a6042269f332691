// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/blocks.hpp"

#include <cmath>

#include "cassnat/ops.hpp"

namespace cassnat {

namespace {

void trace_heads(RunContext& ctx, const char* kind, const std::vector<TensorPtr>& weights) {
    if (!ctx.trace) return;
    for (size_t h = 0; h < weights.size(); ++h) {
        ctx.trace->entries.push_back(
            AttentionTrace::Entry{ctx.scope + "." + kind, static_cast<int>(h), weights[h]});
    }
}

TensorPtr dropout_here(RunContext& ctx, const TensorPtr& x) {
    return ops::dropout(ctx.tape, x, ctx.dropout, ctx.training, ctx.fresh_key());
}

// Zeroes rows at or past `valid` (differentiably, via a constant 0/1 mask).
TensorPtr zero_padded_rows(RunContext& ctx, const TensorPtr& x, int valid) {
    if (valid < 0 || valid >= x->rows()) return x;
    auto mask = make_tensor(x->shape, 0.0);
    for (int i = 0; i < valid; ++i) {
        for (int c = 0; c < x->cols(); ++c) mask->at(i, c) = 1.0;
    }
    return ops::mul(ctx.tape, x, mask);
}

}  // namespace

TensorPtr ffn_forward(RunContext& ctx, const TensorPtr& x, const FfnParams& p) {
    auto h = ops::swish(ctx.tape, ops::linear(ctx.tape, x, p.w1, p.b1));
    h = dropout_here(ctx, h);
    return ops::linear(ctx.tape, h, p.w2, p.b2);
}

TensorPtr ffn_half(RunContext& ctx, const TensorPtr& x, const FfnParams& p) {
    return ops::add_scaled(ctx.tape, x, ffn_forward(ctx, x, p), 0.5);
}

TensorPtr conv_branch(RunContext& ctx, const TensorPtr& x, const ConvModuleParams& p, int valid) {
    if (p.dw_kernel->rows() % 2 == 0) {
        throw ConfigError("conv module: depthwise kernel width must be odd, got " +
                          std::to_string(p.dw_kernel->rows()));
    }
    auto gated = ops::glu(ctx.tape, ops::linear(ctx.tape, x, p.pw1_w, p.pw1_b));
    gated = zero_padded_rows(ctx, gated, valid);
    auto conv = ops::depthwise_conv_time(ctx.tape, gated, p.dw_kernel);
    auto normed = ops::layer_norm(ctx.tape, conv, p.ln.gamma, p.ln.beta, kLayerNormEps);
    auto out = ops::linear(ctx.tape, ops::swish(ctx.tape, normed), p.pw2_w, p.pw2_b);
    return dropout_here(ctx, out);
}

TensorPtr conv_module(RunContext& ctx, const TensorPtr& x, const ConvModuleParams& p, int valid) {
    return ops::add(ctx.tape, x, conv_branch(ctx, x, p, valid));
}

TensorPtr encoder_block(RunContext& ctx, const TensorPtr& x, const MaskMatrix& mask,
                        const EncoderBlockParams& p) {
    auto s = ffn_half(ctx, x, p.ffn1);
    auto att = multi_head_attention(ctx.tape, s, s, mask, p.attn, &p.relpos);
    trace_heads(ctx, "self", att.head_weights);
    auto normed_att = ops::layer_norm(ctx.tape, att.out, p.ln_attn.gamma, p.ln_attn.beta, kLayerNormEps);
    s = ops::add(ctx.tape, s, dropout_here(ctx, normed_att));
    s = conv_module(ctx, s, p.conv);
    s = ffn_half(ctx, s, p.ffn2);
    return ops::layer_norm(ctx.tape, s, p.ln_final.gamma, p.ln_final.beta, kLayerNormEps);
}

TensorPtr mad_block(RunContext& ctx, const TensorPtr& s, const TensorPtr& h,
                    const MaskMatrix& self_mask, const MaskMatrix& cross_mask,
                    const MadBlockParams& p) {
    if (self_mask.rows != s->rows() || self_mask.cols != s->rows() ||
        cross_mask.rows != s->rows() || cross_mask.cols != h->rows()) {
        throw DimensionError("mad block: masks " + std::to_string(self_mask.rows) + "x" +
                             std::to_string(self_mask.cols) + " / " + std::to_string(cross_mask.rows) +
                             "x" + std::to_string(cross_mask.cols) + " do not fit " +
                             std::to_string(s->rows()) + " tokens and " + std::to_string(h->rows()) +
                             " frames");
    }
    auto hat = ffn_half(ctx, s, p.ffn1);

    auto self_att = multi_head_attention(ctx.tape, hat, hat, self_mask, p.self_attn, &p.relpos);
    trace_heads(ctx, "self", self_att.head_weights);
    auto ln_self = ops::layer_norm(ctx.tape, self_att.out, p.ln_self.gamma, p.ln_self.beta, kLayerNormEps);
    auto s1 = ops::add(ctx.tape, hat, dropout_here(ctx, ln_self));

    auto s2 = conv_module(ctx, s1, p.conv);

    auto cross_att = multi_head_attention(ctx.tape, s2, h, cross_mask, p.cross_attn);
    trace_heads(ctx, "cross", cross_att.head_weights);
    auto ln_cross =
        ops::layer_norm(ctx.tape, cross_att.out, p.ln_cross.gamma, p.ln_cross.beta, kLayerNormEps);
    auto s3 = ops::add(ctx.tape, s2, dropout_here(ctx, ln_cross));

    auto closed = ops::add_scaled(ctx.tape, s3, ffn_forward(ctx, s3, p.ffn2), 0.5);
    return ops::layer_norm(ctx.tape, closed, p.ln_final.gamma, p.ln_final.beta, kLayerNormEps);
}

TensorPtr sad_block(RunContext& ctx, const TensorPtr& s, const MaskMatrix& mask,
                    const SadBlockParams& p) {
    auto normed = ops::layer_norm(ctx.tape, s, p.ln1.gamma, p.ln1.beta, kLayerNormEps);
    auto att = multi_head_attention(ctx.tape, normed, normed, mask, p.attn, &p.relpos);
    trace_heads(ctx, "self", att.head_weights);
    auto s1 = ops::add(ctx.tape, s, dropout_here(ctx, att.out));
    auto normed2 = ops::layer_norm(ctx.tape, s1, p.ln2.gamma, p.ln2.beta, kLayerNormEps);
    return ops::add(ctx.tape, s1, dropout_here(ctx, ffn_forward(ctx, normed2, p.ffn)));
}

TensorPtr token_acoustic_extractor(RunContext& ctx, const TensorPtr& h, const MaskMatrix& trigger,
                                   const TaeParams& p) {
    auto pe = sinusoidal_positions(trigger.rows, p.query_w->rows());
    auto queries = ops::linear(ctx.tape, pe, p.query_w, p.query_b);
    auto att = multi_head_attention(ctx.tape, queries, h, trigger, p.cross);
    trace_heads(ctx, "cross", att.head_weights);
    return ffn_half(ctx, att.out, p.ffn);
}

TensorPtr conv_frontend(RunContext& ctx, const TensorPtr& features, const FrontendParams& p) {
    if (features->rank() != 2) {
        throw DimensionError("frontend: features must be TxF, got " + shape_str(features->shape));
    }
    int t = features->rows(), f = features->cols();
    if (f < 4) {
        throw ConfigError("frontend: feature width " + std::to_string(f) +
                          " cannot survive two stride-2 reductions (need >= 4)");
    }
    auto img = ops::reshape(ctx.tape, features, {1, t, f});
    auto c1 = ops::swish(ctx.tape, ops::conv2d(ctx.tape, img, p.conv1_w, p.conv1_b, 2, 2, 1, 1));
    auto c2 = ops::swish(ctx.tape, ops::conv2d(ctx.tape, c1, p.conv2_w, p.conv2_b, 2, 2, 1, 1));
    int t_out = c2->dim(1), f_out = c2->dim(2);
    // [C × T' × F''] → rows (t, f) by channel → [T' × F''·C]
    auto flat = ops::reshape(ctx.tape, c2, {p.channels, t_out * f_out});
    auto by_time = ops::reshape(ctx.tape, ops::transpose2d(ctx.tape, flat), {t_out, f_out * p.channels});
    return ops::linear(ctx.tape, by_time, p.proj_w, p.proj_b);
}

TensorPtr sinusoidal_positions(int n, int d) {
    auto pe = make_tensor({n, d});
    for (int u = 0; u < n; ++u) {
        for (int i = 0; i < d; i += 2) {
            double angle = u / std::pow(10000.0, static_cast<double>(i) / d);
            pe->at(u, i) = std::sin(angle);
            if (i + 1 < d) pe->at(u, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

}  // namespace cassnat
