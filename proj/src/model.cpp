// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/model.hpp"

#include <algorithm>
#include <cmath>

#include "cassnat/ops.hpp"

namespace cassnat {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Fan counts for Xavier init: last extent is the output width for matrices,
// first is the output channel count for conv kernels.
void fans(const Shape& shape, double* fan_in, double* fan_out) {
    if (shape.size() == 2) {
        *fan_in = shape[0];
        *fan_out = shape[1];
    } else if (shape.size() == 4) {
        double rf = static_cast<double>(shape[2]) * shape[3];
        *fan_in = shape[1] * rf;
        *fan_out = shape[0] * rf;
    } else {
        *fan_in = *fan_out = static_cast<double>(shape_numel(shape));
    }
}

struct Builder {
    ParamStore& store;
    const ModelConfig& cfg;

    TensorPtr weight(const std::string& name, const Shape& shape) {
        return store.create(name, shape, ParamStore::Init::kXavier);
    }
    TensorPtr bias(const std::string& name, int n) {
        return store.create(name, {n}, ParamStore::Init::kZeros);
    }

    FfnParams ffn(const std::string& p) {
        return FfnParams{weight(p + ".w1", {cfg.d_att, cfg.d_ff}), bias(p + ".b1", cfg.d_ff),
                         weight(p + ".w2", {cfg.d_ff, cfg.d_att}), bias(p + ".b2", cfg.d_att)};
    }

    LayerNormParams ln(const std::string& p) {
        return LayerNormParams{store.create(p + ".gamma", {cfg.d_att}, ParamStore::Init::kOnes),
                               bias(p + ".beta", cfg.d_att)};
    }

    AttentionParams attention(const std::string& p) {
        AttentionParams a;
        a.n_heads = cfg.n_heads;
        a.d_model = cfg.d_att;
        a.d_head = cfg.d_att / cfg.n_heads;
        for (int h = 0; h < cfg.n_heads; ++h) {
            std::string hp = p + "." + std::to_string(h);
            a.wq.push_back(weight(hp + ".q.w", {cfg.d_att, a.d_head}));
            a.bq.push_back(bias(hp + ".q.b", a.d_head));
            a.wk.push_back(weight(hp + ".k.w", {cfg.d_att, a.d_head}));
            a.bk.push_back(bias(hp + ".k.b", a.d_head));
            a.wv.push_back(weight(hp + ".v.w", {cfg.d_att, a.d_head}));
            a.bv.push_back(bias(hp + ".v.b", a.d_head));
        }
        a.wo = weight(p + ".out.w", {cfg.d_att, cfg.d_att});
        a.bo = bias(p + ".out.b", cfg.d_att);
        return a;
    }

    ConvModuleParams conv(const std::string& p, int width) {
        ConvModuleParams c;
        c.pw1_w = weight(p + ".pw1.w", {cfg.d_att, 2 * cfg.d_att});
        c.pw1_b = bias(p + ".pw1.b", 2 * cfg.d_att);
        c.dw_kernel = store.create(p + ".dw", {width, cfg.d_att}, ParamStore::Init::kNormal,
                                   1.0 / std::sqrt(static_cast<double>(width)));
        c.ln = ln(p + ".ln");
        c.pw2_w = weight(p + ".pw2.w", {cfg.d_att, cfg.d_att});
        c.pw2_b = bias(p + ".pw2.b", cfg.d_att);
        return c;
    }

    RelPosTable relpos(const std::string& p, int k) {
        return RelPosTable{k, store.create(p, {2 * k + 1, cfg.d_att / cfg.n_heads},
                                           ParamStore::Init::kNormal, 0.02)};
    }

    EncoderBlockParams encoder_block(const std::string& p) {
        return EncoderBlockParams{ffn(p + ".ffn1"),       ffn(p + ".ffn2"),
                                  attention(p + ".attn"), ln(p + ".ln_attn"),
                                  ln(p + ".ln_final"),    conv(p + ".conv", cfg.enc_kernel),
                                  relpos(p + ".relpos", cfg.k_enc)};
    }

    MadBlockParams mad_block(const std::string& p) {
        return MadBlockParams{ffn(p + ".ffn1"),
                              ffn(p + ".ffn2"),
                              attention(p + ".attn_self"),
                              attention(p + ".attn_cross"),
                              ln(p + ".ln_self"),
                              ln(p + ".ln_cross"),
                              ln(p + ".ln_final"),
                              conv(p + ".conv", cfg.dec_kernel),
                              relpos(p + ".relpos", cfg.k_dec)};
    }

    SadBlockParams sad_block(const std::string& p) {
        return SadBlockParams{attention(p + ".attn"), ffn(p + ".ffn"), ln(p + ".ln1"),
                              ln(p + ".ln2"), relpos(p + ".relpos", cfg.k_dec)};
    }

    TaeParams tae(const std::string& p) {
        return TaeParams{weight(p + ".query.w", {cfg.d_att, cfg.d_att}),
                         bias(p + ".query.b", cfg.d_att), attention(p + ".attn"), ffn(p + ".ffn")};
    }

    FrontendParams frontend(const std::string& p) {
        int ch = ModelConfig::kFrontendChannels;
        int f_out = frontend_out_frames(cfg.feat_dim);
        FrontendParams fr;
        fr.channels = ch;
        fr.conv1_w = weight(p + ".conv1.w", {ch, 1, 3, 3});
        fr.conv1_b = bias(p + ".conv1.b", ch);
        fr.conv2_w = weight(p + ".conv2.w", {ch, ch, 3, 3});
        fr.conv2_b = bias(p + ".conv2.b", ch);
        fr.proj_w = weight(p + ".proj.w", {f_out * ch, cfg.d_att});
        fr.proj_b = bias(p + ".proj.b", cfg.d_att);
        return fr;
    }

    EncoderStack encoder_stack() {
        EncoderStack enc;
        enc.frontend = frontend("frontend");
        for (int i = 0; i < cfg.enc_blocks; ++i) {
            enc.blocks.push_back(encoder_block("enc." + std::to_string(i)));
        }
        enc.ctc_final_w = weight("ctc_final.w", {cfg.d_att, cfg.vocab});
        enc.ctc_final_b = bias("ctc_final.b", cfg.vocab);
        enc.ctc_mid_w = weight("ctc_mid.w", {cfg.d_att, cfg.vocab});
        enc.ctc_mid_b = bias("ctc_mid.b", cfg.vocab);
        enc.middle = cfg.enc_middle;
        return enc;
    }
};

// Shared decoder path: TAE, SAD stack, MAD stack, output projections.
struct DecoderOut {
    TensorPtr token_embeddings;
    TensorPtr dec_final;
    TensorPtr dec_middle;
};

DecoderOut decoder_pass(RunContext& ctx, const CassNatModel& model, const TensorPtr& h,
                        const TokenSegmentation& spans, bool want_middle) {
    DecoderOut out;
    ctx.scope = "tae.0";
    auto trigger = make_trigger_mask(spans, h->rows());
    out.token_embeddings = token_acoustic_extractor(ctx, h, trigger, model.tae);

    int tokens = static_cast<int>(spans.size());
    auto bimask = make_bimask(tokens, tokens);
    auto cross = MaskMatrix::all_true(tokens, h->rows());
    auto s = out.token_embeddings;
    for (size_t i = 0; i < model.sad.size(); ++i) {
        ctx.scope = "sad." + std::to_string(i);
        s = sad_block(ctx, s, bimask, model.sad[i]);
    }
    for (size_t i = 0; i < model.mad.size(); ++i) {
        ctx.scope = "mad." + std::to_string(i);
        s = mad_block(ctx, s, h, bimask, cross, model.mad[i]);
        if (want_middle && static_cast<int>(i) + 1 == model.cfg.mad_middle) {
            out.dec_middle = ops::log_softmax_lastdim(
                ctx.tape, ops::linear(ctx.tape, s, model.out_mid_w, model.out_mid_b));
        }
    }
    out.dec_final = ops::log_softmax_lastdim(
        ctx.tape, ops::linear(ctx.tape, s, model.out_final_w, model.out_final_b));
    return out;
}

LogPosteriorGrid grid_from_tensor(const TensorPtr& t) {
    return LogPosteriorGrid(t->rows(), t->cols(), t->v);
}

// Argmax over real tokens (blank column excluded).
void pick_tokens(const TensorPtr& dist, std::vector<int>* tokens, std::vector<double>* logposts) {
    for (int u = 0; u < dist->rows(); ++u) {
        int arg = 1;
        for (int k = 2; k < dist->cols(); ++k) {
            if (dist->at(u, k) > dist->at(u, arg)) arg = k;
        }
        tokens->push_back(arg);
        if (logposts) logposts->push_back(dist->at(u, arg));
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab < 2) throw ConfigError("config: vocab must be >= 2 (blank plus one token)");
    if (feat_dim < 4) throw ConfigError("config: feat_dim must be >= 4");
    if (d_att < 1 || n_heads < 1 || d_att % n_heads != 0) {
        throw ConfigError("config: d_att " + std::to_string(d_att) + " not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (d_ff < 1) throw ConfigError("config: d_ff must be >= 1");
    if (enc_blocks < 1 || tae_blocks != 1 || sad_blocks < 1 || mad_blocks < 1 || at_dec_blocks < 1) {
        throw ConfigError("config: block counts must be >= 1 (tae_blocks is fixed at 1)");
    }
    if (enc_middle < 1 || enc_middle >= enc_blocks) {
        throw ConfigError("config: enc_middle must lie strictly inside the encoder stack");
    }
    if (mad_middle < 1 || mad_middle >= mad_blocks) {
        throw ConfigError("config: mad_middle must lie strictly inside the MAD stack");
    }
    if (k_enc < 1 || k_dec < 1) throw ConfigError("config: relative position maxima must be >= 1");
    if (enc_kernel < 1 || enc_kernel % 2 == 0 || dec_kernel < 1 || dec_kernel % 2 == 0) {
        throw ConfigError("config: depthwise kernel widths must be odd and >= 1");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must be in [0, 1)");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
        throw ConfigError("config: label_smoothing must be in [0, 1)");
    }
    if (trigger_context < 0) throw ConfigError("config: trigger_context must be >= 0");
}

TensorPtr ParamStore::create(const std::string& name, const Shape& shape, Init init, double scale) {
    if (index_.count(name)) throw UsageError("parameter '" + name + "' already registered");
    auto t = make_tensor(shape, 0.0);
    t->requires_grad = true;
    uint64_t key = prng::mix(seed_, fnv1a(name));
    switch (init) {
        case Init::kZeros:
            break;
        case Init::kOnes:
            std::fill(t->v.begin(), t->v.end(), 1.0);
            break;
        case Init::kXavier: {
            double fan_in = 0, fan_out = 0;
            fans(shape, &fan_in, &fan_out);
            double a = std::sqrt(6.0 / (fan_in + fan_out)) * scale;
            for (size_t i = 0; i < t->v.size(); ++i) {
                t->v[i] = (2.0 * prng::uniform(key, i) - 1.0) * a;
            }
            break;
        }
        case Init::kNormal:
            for (size_t i = 0; i < t->v.size(); ++i) t->v[i] = prng::normal(key, i) * scale;
            break;
    }
    index_[name] = items_.size();
    items_.emplace_back(name, t);
    return t;
}

TensorPtr ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw CheckpointError("parameter '" + name + "' not found");
    return items_[it->second].second;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : items_) t->zero_grad();
}

int64_t ParamStore::total_values() const {
    int64_t n = 0;
    for (auto& [name, t] : items_) n += t->numel();
    return n;
}

EncodeOut encode(RunContext& ctx, const EncoderStack& enc, const TensorPtr& features,
                 bool want_middle) {
    if (features->rank() != 2 || features->rows() < 4) {
        throw DimensionError("encode: need at least 4 frames of features, got " +
                             shape_str(features->shape));
    }
    EncodeOut out;
    ctx.scope = "frontend";
    auto h = conv_frontend(ctx, features, enc.frontend);
    auto mask = MaskMatrix::all_true(h->rows(), h->rows());
    for (size_t i = 0; i < enc.blocks.size(); ++i) {
        ctx.scope = "enc." + std::to_string(i);
        h = encoder_block(ctx, h, mask, enc.blocks[i]);
        if (want_middle && static_cast<int>(i) + 1 == enc.middle) {
            out.ctc_middle = ops::log_softmax_lastdim(
                ctx.tape, ops::linear(ctx.tape, h, enc.ctc_mid_w, enc.ctc_mid_b));
        }
    }
    out.h = h;
    out.ctc_final = ops::log_softmax_lastdim(
        ctx.tape, ops::linear(ctx.tape, h, enc.ctc_final_w, enc.ctc_final_b));
    return out;
}

CassNatModel build_cassnat(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    CassNatModel m;
    m.cfg = cfg;
    m.params = ParamStore(seed);
    Builder b{m.params, m.cfg};
    m.encoder = b.encoder_stack();
    m.tae = b.tae("tae");
    for (int i = 0; i < cfg.sad_blocks; ++i) m.sad.push_back(b.sad_block("sad." + std::to_string(i)));
    for (int i = 0; i < cfg.mad_blocks; ++i) m.mad.push_back(b.mad_block("mad." + std::to_string(i)));
    m.out_final_w = b.weight("out_final.w", {cfg.d_att, cfg.vocab});
    m.out_final_b = b.bias("out_final.b", cfg.vocab);
    m.out_mid_w = b.weight("out_mid.w", {cfg.d_att, cfg.vocab});
    m.out_mid_b = b.bias("out_mid.b", cfg.vocab);
    return m;
}

ForwardArtifacts forward_train(RunContext& ctx, const CassNatModel& model, const TensorPtr& features,
                               const std::vector<int>& labels) {
    ForwardArtifacts art;
    auto enc = encode(ctx, model.encoder, features, /*want_middle=*/true);
    art.enc_out = enc.h;
    art.ctc_final = enc.ctc_final;
    art.ctc_middle = enc.ctc_middle;

    // The alignment is the max-probability path for the current grid; it is
    // treated as given downstream (no gradient through the argmax).
    art.alignment = ctc_forced_align(grid_from_tensor(enc.ctc_final), labels);
    art.segments_raw = alignment_to_segments(art.alignment);
    art.segments_expanded =
        expand_segments(art.segments_raw, model.cfg.trigger_context, enc.h->rows());

    auto dec = decoder_pass(ctx, model, enc.h, art.segments_expanded, /*want_middle=*/true);
    art.token_embeddings = dec.token_embeddings;
    art.dec_final = dec.dec_final;
    art.dec_middle = dec.dec_middle;
    return art;
}

DecodeResult decode_greedy(const CassNatModel& model, const TensorPtr& features,
                           AttentionTrace* trace) {
    RunContext ctx;
    ctx.trace = trace;
    DecodeResult res;
    auto enc = encode(ctx, model.encoder, features, /*want_middle=*/false);
    auto path = best_path_decode(grid_from_tensor(enc.ctc_final));
    if (collapse(path.labels).empty()) return res;

    auto spans =
        expand_segments(alignment_to_segments(path), model.cfg.trigger_context, enc.h->rows());
    auto dec = decoder_pass(ctx, model, enc.h, spans, /*want_middle=*/false);
    res.decoder_passes = 1;
    pick_tokens(dec.dec_final, &res.tokens, &res.token_logposts);
    return res;
}

NBestResult decode_nbest(const CassNatModel& model, const TensorPtr& features, int beam) {
    if (beam < 1) throw ParameterError("decode_nbest: beam must be >= 1");
    RunContext ctx;
    NBestResult res;
    auto enc = encode(ctx, model.encoder, features, /*want_middle=*/false);
    auto candidates = beam_align_nbest(grid_from_tensor(enc.ctc_final), beam);
    for (size_t rank = 0; rank < candidates.size(); ++rank) {
        Hypothesis hyp;
        hyp.ctc_rank = static_cast<int>(rank);
        hyp.ctc_log_prob = candidates[rank].log_prob;
        if (!collapse(candidates[rank].labels).empty()) {
            auto spans = expand_segments(alignment_to_segments(candidates[rank]),
                                         model.cfg.trigger_context, enc.h->rows());
            auto dec = decoder_pass(ctx, model, enc.h, spans, /*want_middle=*/false);
            ++res.decoder_passes;
            std::vector<double> posts;
            pick_tokens(dec.dec_final, &hyp.tokens, &posts);
            double sum = 0.0;
            for (double p : posts) sum += p;
            hyp.score = posts.empty() ? 0.0 : sum / static_cast<double>(posts.size());
        }
        res.hyps.push_back(std::move(hyp));
    }
    std::stable_sort(res.hyps.begin(), res.hyps.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
    return res;
}

AtModel build_at(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    AtModel m;
    m.cfg = cfg;
    m.params = ParamStore(seed);
    Builder b{m.params, m.cfg};
    m.encoder = b.encoder_stack();
    m.embed = m.params.create("at_embed", {cfg.vocab + 1, cfg.d_att}, ParamStore::Init::kNormal,
                              1.0 / std::sqrt(static_cast<double>(cfg.d_att)));
    for (int i = 0; i < cfg.at_dec_blocks; ++i) {
        std::string p = "at_dec." + std::to_string(i);
        m.dec.push_back(AtDecBlockParams{b.attention(p + ".attn_self"),
                                         b.attention(p + ".attn_cross"), b.ffn(p + ".ffn"),
                                         b.ln(p + ".ln1"), b.ln(p + ".ln2"), b.ln(p + ".ln3"),
                                         b.relpos(p + ".relpos", cfg.k_dec)});
    }
    m.ln_final = b.ln("at_ln_final");
    m.out_w = b.weight("at_out.w", {cfg.d_att, cfg.vocab + 1});
    m.out_b = b.bias("at_out.b", cfg.vocab + 1);
    return m;
}

namespace {

// Full-prefix decoder stack for the AT baseline; returns (n)×(V+1) log-probs.
TensorPtr at_decoder_stack(RunContext& ctx, const AtModel& model, const TensorPtr& h,
                           const std::vector<int>& input_ids) {
    auto s = ops::embedding_lookup(ctx.tape, model.embed, input_ids);
    int n = static_cast<int>(input_ids.size());
    auto causal = make_causal_mask(n);
    auto cross = MaskMatrix::all_true(n, h->rows());
    for (size_t i = 0; i < model.dec.size(); ++i) {
        ctx.scope = "at_dec." + std::to_string(i);
        const auto& p = model.dec[i];
        auto n1 = ops::layer_norm(ctx.tape, s, p.ln1.gamma, p.ln1.beta, kLayerNormEps);
        auto self_att = multi_head_attention(ctx.tape, n1, n1, causal, p.self_attn, &p.relpos);
        s = ops::add(ctx.tape, s,
                     ops::dropout(ctx.tape, self_att.out, ctx.dropout, ctx.training, ctx.fresh_key()));
        auto n2 = ops::layer_norm(ctx.tape, s, p.ln2.gamma, p.ln2.beta, kLayerNormEps);
        auto cross_att = multi_head_attention(ctx.tape, n2, h, cross, p.cross_attn);
        s = ops::add(ctx.tape, s,
                     ops::dropout(ctx.tape, cross_att.out, ctx.dropout, ctx.training, ctx.fresh_key()));
        auto n3 = ops::layer_norm(ctx.tape, s, p.ln3.gamma, p.ln3.beta, kLayerNormEps);
        s = ops::add(ctx.tape, s,
                     ops::dropout(ctx.tape, ffn_forward(ctx, n3, p.ffn), ctx.dropout, ctx.training,
                                  ctx.fresh_key()));
    }
    s = ops::layer_norm(ctx.tape, s, model.ln_final.gamma, model.ln_final.beta, kLayerNormEps);
    return ops::log_softmax_lastdim(ctx.tape, ops::linear(ctx.tape, s, model.out_w, model.out_b));
}

}  // namespace

AtTeacherOut at_forward_teacher(RunContext& ctx, const AtModel& model, const TensorPtr& features,
                                const std::vector<int>& labels) {
    AtTeacherOut out;
    auto enc = encode(ctx, model.encoder, features, /*want_middle=*/false);
    out.ctc_final = enc.ctc_final;
    std::vector<int> inputs{model.cfg.eos_id()};
    inputs.insert(inputs.end(), labels.begin(), labels.end());
    out.dec_logprobs = at_decoder_stack(ctx, model, enc.h, inputs);
    return out;
}

AtDecodeResult at_decode(const AtModel& model, const TensorPtr& features, int force_len) {
    RunContext ctx;
    AtDecodeResult res;
    auto enc = encode(ctx, model.encoder, features, /*want_middle=*/false);
    int cap = force_len >= 0 ? force_len : 2 * enc.h->rows();
    std::vector<int> inputs{model.cfg.eos_id()};
    for (;;) {
        auto dist = at_decoder_stack(ctx, model, enc.h, inputs);
        ++res.decoder_passes;
        int last = dist->rows() - 1;
        bool suppress_eos = force_len >= 0 && static_cast<int>(res.tokens.size()) < force_len;
        int hi = suppress_eos ? model.cfg.vocab - 1 : model.cfg.vocab;
        int arg = 1;
        for (int k = 2; k <= hi; ++k) {
            if (dist->at(last, k) > dist->at(last, arg)) arg = k;
        }
        if (arg == model.cfg.eos_id() || static_cast<int>(res.tokens.size()) >= cap) break;
        res.tokens.push_back(arg);
        inputs.push_back(arg);
    }
    return res;
}

void init_encoder_from_at(const AtModel& at, CassNatModel* model) {
    static const char* kPrefixes[] = {"frontend.", "enc.", "ctc_final."};
    for (auto& [name, tensor] : model->params.items()) {
        bool wanted = false;
        for (const char* p : kPrefixes) {
            if (name.rfind(p, 0) == 0) {
                wanted = true;
                break;
            }
        }
        if (!wanted) continue;
        auto src = at.params.get(name);
        if (src->shape != tensor->shape) {
            throw CheckpointError("encoder init: parameter '" + name + "' has shape " +
                                  shape_str(src->shape) + " in the checkpoint but " +
                                  shape_str(tensor->shape) + " in the model");
        }
        tensor->v = src->v;
    }
}

}  // namespace cassnat
