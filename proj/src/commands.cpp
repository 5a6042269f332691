// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cassnat/analysis.hpp"
#include "cassnat/gradcheck.hpp"
#include "cassnat/io.hpp"
#include "cassnat/ops.hpp"

namespace cassnat {
namespace commands {

namespace {

namespace fs = std::filesystem;

struct NamedFeatures {
    std::string id;
    TensorPtr features;
};

std::string utt_id_of(const fs::path& p) { return p.stem().string(); }

// A file is taken as-is; a directory contributes its *.feat files sorted by
// name so utterance order is stable.
std::vector<NamedFeatures> load_inputs(const std::string& input) {
    std::vector<NamedFeatures> out;
    fs::path p(input);
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(p)) {
            if (entry.is_regular_file() && entry.path().extension() == ".feat") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) out.push_back({utt_id_of(f), read_feature_file(f.string())});
    } else {
        out.push_back({utt_id_of(p), read_feature_file(input)});
    }
    if (out.empty()) throw UsageError("no .feat files found under '" + input + "'");
    return out;
}

std::string join_tokens(const std::vector<int>& tokens) {
    std::string s;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(tokens[i]);
    }
    return s;
}

CassNatModel load_cassnat_checkpoint(const std::string& path, RunConfig* rc_out = nullptr) {
    auto data = load_checkpoint(path);
    if (data.kind != ModelKind::kCassNat) {
        throw UsageError("checkpoint '" + path + "' does not hold a CASS-NAT model");
    }
    auto rc = parse_run_config_text(data.config_text, /*apply_env_seed=*/false);
    auto model = build_cassnat(rc.model, rc.seed);
    load_params(data, &model.params);
    if (rc_out) *rc_out = rc;
    return model;
}

AtModel load_at_checkpoint(const std::string& path, RunConfig* rc_out = nullptr) {
    auto data = load_checkpoint(path);
    if (data.kind != ModelKind::kAtBaseline) {
        throw UsageError("checkpoint '" + path + "' does not hold an AT baseline model");
    }
    auto rc = parse_run_config_text(data.config_text, /*apply_env_seed=*/false);
    auto model = build_at(rc.model, rc.seed);
    load_params(data, &model.params);
    if (rc_out) *rc_out = rc;
    return model;
}

void write_loss_log(const std::string& path, const TrainResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + path + "'");
    char line[160];
    for (const auto& e : result.curve) {
        std::snprintf(line, sizeof(line), "%lld\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n",
                      static_cast<long long>(e.step), e.parts.total, e.parts.ctc_final,
                      e.parts.ctc_middle, e.parts.ce_final, e.parts.ce_middle);
        out << line;
    }
}

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

int train(const TrainArgs& args) {
    auto rc = load_run_config(args.config);
    fs::create_directories(args.out_dir);

    auto train_set = generate_synthetic(rc.task, rc.train_utts, /*stream=*/1);
    auto val_set = generate_synthetic(rc.task, rc.val_utts, /*stream=*/2);

    TrainOptions opts;
    opts.opt = rc.opt;
    opts.loss = rc.loss;
    opts.aug = rc.aug;
    opts.seed = rc.seed;

    TrainResult result;
    EvalResult final_eval;
    if (args.at_baseline) {
        auto model = build_at(rc.model, rc.seed);
        result = train_at(&model, train_set, val_set, opts);
        auto save_with = [&](const ParamSnapshot& snap, const std::string& name) {
            apply_snapshot(model.params, snap);
            save_checkpoint((fs::path(args.out_dir) / name).string(), rc, ModelKind::kAtBaseline,
                            model.params);
        };
        save_with(result.best_params, "best.ckpt");
        save_with(result.averaged_params, "averaged.ckpt");
        final_eval = evaluate_at(model, val_set);
    } else {
        auto model = build_cassnat(rc.model, rc.seed);
        if (!args.init_encoder.empty()) {
            auto at = load_at_checkpoint(args.init_encoder);
            init_encoder_from_at(at, &model);
        }
        result = train_cassnat(&model, train_set, val_set, opts);
        auto save_with = [&](const ParamSnapshot& snap, const std::string& name) {
            apply_snapshot(model.params, snap);
            save_checkpoint((fs::path(args.out_dir) / name).string(), rc, ModelKind::kCassNat,
                            model.params);
        };
        save_with(result.best_params, "best.ckpt");
        save_with(result.averaged_params, "averaged.ckpt");
        final_eval = evaluate_cassnat(model, val_set);
    }
    write_loss_log((fs::path(args.out_dir) / "train_log.tsv").string(), result);

    if (result.diverged) {
        std::cerr << "training diverged (non-finite loss); kept the last good checkpoint\n";
        return 3;
    }
    std::printf("epochs=%d skipped=%d best_val_token_accuracy=%.4f\n", result.epochs_run,
                result.skipped, result.best_val_accuracy);
    std::printf("final validation token accuracy %.4f, sequence error %.4f over %d utterances\n",
                final_eval.token_accuracy, final_eval.seq_error_rate, final_eval.count);
    return 0;
}

int decode(const DecodeArgs& args) {
    auto model = load_cassnat_checkpoint(args.ckpt);
    auto inputs = load_inputs(args.input);
    for (const auto& in : inputs) {
        std::vector<int> tokens;
        double mean_logpost = 0.0;
        int passes = 0;
        if (args.beam <= 1) {
            auto res = decode_greedy(model, in.features);
            tokens = res.tokens;
            passes = res.decoder_passes;
            for (double p : res.token_logposts) mean_logpost += p;
            if (!res.token_logposts.empty()) mean_logpost /= static_cast<double>(res.token_logposts.size());
        } else {
            auto res = decode_nbest(model, in.features, args.beam);
            passes = res.decoder_passes;
            if (!res.hyps.empty()) {
                tokens = res.hyps[0].tokens;
                mean_logpost = res.hyps[0].score;
            }
        }
        std::printf("%s\t%s\t%.6f\t%d\n", in.id.c_str(), join_tokens(tokens).c_str(), mean_logpost,
                    passes);
    }
    return 0;
}

int align(const AlignArgs& args) {
    // Either model kind carries the encoder and CTC head needed here.
    auto data = load_checkpoint(args.ckpt);
    auto rc = parse_run_config_text(data.config_text, /*apply_env_seed=*/false);
    const EncoderStack* encoder = nullptr;
    CassNatModel nat;
    AtModel at;
    if (data.kind == ModelKind::kCassNat) {
        nat = build_cassnat(rc.model, rc.seed);
        load_params(data, &nat.params);
        encoder = &nat.encoder;
    } else {
        at = build_at(rc.model, rc.seed);
        load_params(data, &at.params);
        encoder = &at.encoder;
    }

    auto inputs = load_inputs(args.input);
    auto labels = read_labels_file(args.labels);
    if (labels.size() != inputs.size()) {
        throw FormatError("labels file has " + std::to_string(labels.size()) + " lines for " +
                          std::to_string(inputs.size()) + " utterances");
    }
    for (size_t i = 0; i < inputs.size(); ++i) {
        std::printf("# utt=%s\n", inputs[i].id.c_str());
        try {
            RunContext ctx;
            auto enc = encode(ctx, *encoder, inputs[i].features, /*want_middle=*/false);
            LogPosteriorGrid grid(enc.ctc_final->rows(), enc.ctc_final->cols(), enc.ctc_final->v);
            auto path = ctc_forced_align(grid, labels[i]);
            for (const auto& span : alignment_to_segments(path)) {
                std::printf("%d\t%d\t%d\n", span.token, span.start, span.end);
            }
        } catch (const InfeasibleError& e) {
            std::printf("# infeasible: %s\n", e.what());
        } catch (const UsageError& e) {
            std::printf("# error: %s\n", e.what());
        }
    }
    return 0;
}

int bench(const BenchArgs& args) {
    RunConfig rc_nat, rc_at;
    auto nat = load_cassnat_checkpoint(args.ckpt_nat, &rc_nat);
    auto at = load_at_checkpoint(args.ckpt_at, &rc_at);

    // The comparison only makes sense over a shared encoder configuration.
    const auto& a = rc_nat.model;
    const auto& b = rc_at.model;
    if (a.feat_dim != b.feat_dim || a.d_att != b.d_att || a.n_heads != b.n_heads ||
        a.d_ff != b.d_ff || a.enc_blocks != b.enc_blocks || a.enc_kernel != b.enc_kernel ||
        a.k_enc != b.k_enc || a.vocab != b.vocab) {
        throw ConfigError("bench: the two checkpoints use different encoder configurations");
    }
    if (args.repeats < 1) throw ParameterError("bench: repeats must be >= 1");

    std::printf("# len\tnat_ms\tat_ms\tnat_passes\tat_passes\tspeedup\n");
    for (int len : args.lengths) {
        if (len < 1) throw ParameterError("bench: lengths must be >= 1");
        auto task = rc_nat.task;
        task.len_min = len;
        task.len_max = len;
        auto utts = generate_synthetic(task, 1, /*stream=*/0xbe9c0000ull + static_cast<uint64_t>(len));
        const auto& feats = utts[0].features;

        std::vector<double> nat_ms, at_ms;
        int nat_passes = 0, at_passes = 0;
        for (int r = 0; r < args.repeats; ++r) {
            auto t0 = std::chrono::steady_clock::now();
            auto nat_res = decode_greedy(nat, feats);
            auto t1 = std::chrono::steady_clock::now();
            auto at_res = at_decode(at, feats, /*force_len=*/len);
            auto t2 = std::chrono::steady_clock::now();
            nat_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            at_ms.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
            nat_passes = nat_res.decoder_passes;
            at_passes = at_res.decoder_passes;
        }
        double nat_med = median_of(nat_ms);
        double at_med = median_of(at_ms);
        std::printf("%d\t%.3f\t%.3f\t%d\t%d\t%.2f\n", len, nat_med, at_med, nat_passes, at_passes,
                    at_med / nat_med);
    }
    std::printf("# context: full-scale systems of this architecture class report RTF 0.014 (single-"
                "step) vs 0.499 (autoregressive), about a 36x ratio; not asserted here.\n");
    return 0;
}

namespace {

// One named gradient check over a freshly built model piece.
struct CheckCase {
    std::string name;
    std::function<GradCheckReport()> run;
};

std::vector<CheckCase> build_check_suite(const ModelConfig& cfg, bool inject_fault) {
    std::vector<CheckCase> cases;
    const double step = 1e-5, tol = 1e-4;
    const int probes = 20;

    auto random_input = [](const Shape& shape, uint64_t seed, double scale = 0.5) {
        Rng rng(seed);
        std::vector<double> vals(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : vals) v = rng.normal() * scale;
        return make_tensor(shape, std::move(vals));
    };

    cases.push_back({"frontend", [=] {
        auto model = build_cassnat(cfg, 101);
        auto x = random_input({8, cfg.feat_dim}, 1);
        auto probe = random_input({frontend_out_frames(8), cfg.d_att}, 2, 1.0);
        auto f = [&](Tape& t) {
            RunContext ctx;
            ctx.tape = &t;
            return ops::sum_all(&t, ops::mul(&t, conv_frontend(ctx, x, model.encoder.frontend), probe));
        };
        return grad_check(f, {x, model.params.get("frontend.conv1.w"),
                              model.params.get("frontend.conv2.w"),
                              model.params.get("frontend.proj.w")}, step, tol, probes, 3);
    }});
    cases.push_back({"encoder", [=] {
        auto model = build_cassnat(cfg, 102);
        auto x = random_input({5, cfg.d_att}, 4);
        auto probe = random_input({5, cfg.d_att}, 5, 1.0);
        auto mask = MaskMatrix::all_true(5, 5);
        auto f = [&](Tape& t) {
            RunContext ctx;
            ctx.tape = &t;
            return ops::sum_all(
                &t, ops::mul(&t, encoder_block(ctx, x, mask, model.encoder.blocks[0]), probe));
        };
        return grad_check(f, {x, model.params.get("enc.0.ffn1.w1"),
                              model.params.get("enc.0.attn.0.q.w"), model.params.get("enc.0.conv.dw"),
                              model.params.get("enc.0.relpos")}, step, tol, probes, 6);
    }});
    cases.push_back({"conv", [=] {
        auto model = build_cassnat(cfg, 103);
        auto x = random_input({6, cfg.d_att}, 7);
        auto probe = random_input({6, cfg.d_att}, 8, 1.0);
        auto f = [&](Tape& t) {
            RunContext ctx;
            ctx.tape = &t;
            return ops::sum_all(
                &t, ops::mul(&t, conv_module(ctx, x, model.encoder.blocks[0].conv), probe));
        };
        return grad_check(f, {x, model.params.get("enc.0.conv.pw1.w"),
                              model.params.get("enc.0.conv.dw"),
                              model.params.get("enc.0.conv.pw2.w")}, step, tol, probes, 9);
    }});
    cases.push_back({"tae", [=] {
        auto model = build_cassnat(cfg, 104);
        auto h = random_input({6, cfg.d_att}, 10);
        auto trigger = make_trigger_mask({{1, 1, 3}, {2, 3, 6}}, 6);
        auto probe = random_input({2, cfg.d_att}, 11, 1.0);
        auto f = [&](Tape& t) {
            RunContext ctx;
            ctx.tape = &t;
            return ops::sum_all(
                &t, ops::mul(&t, token_acoustic_extractor(ctx, h, trigger, model.tae), probe));
        };
        return grad_check(f, {h, model.params.get("tae.query.w"), model.params.get("tae.attn.0.v.w"),
                              model.params.get("tae.ffn.w1")}, step, tol, probes, 12);
    }});
    cases.push_back({"sad", [=] {
        auto model = build_cassnat(cfg, 105);
        auto s = random_input({3, cfg.d_att}, 13);
        auto probe = random_input({3, cfg.d_att}, 14, 1.0);
        auto f = [&](Tape& t) {
            RunContext ctx;
            ctx.tape = &t;
            return ops::sum_all(
                &t, ops::mul(&t, sad_block(ctx, s, make_bimask(3, 3), model.sad[0]), probe));
        };
        return grad_check(f, {s, model.params.get("sad.0.attn.0.q.w"), model.params.get("sad.0.ffn.w1"),
                              model.params.get("sad.0.relpos")}, step, tol, probes, 15);
    }});
    cases.push_back({"mad", [=] {
        auto model = build_cassnat(cfg, 106);
        auto s = random_input({3, cfg.d_att}, 16);
        auto h = random_input({6, cfg.d_att}, 17);
        auto probe = random_input({3, cfg.d_att}, 18, 1.0);
        auto f = [&](Tape& t) {
            RunContext ctx;
            ctx.tape = &t;
            return ops::sum_all(
                &t, ops::mul(&t, mad_block(ctx, s, h, make_bimask(3, 3),
                                           MaskMatrix::all_true(3, 6), model.mad[0]), probe));
        };
        return grad_check(f, {s, h, model.params.get("mad.0.attn_self.0.q.w"),
                              model.params.get("mad.0.attn_cross.0.k.w"),
                              model.params.get("mad.0.conv.dw"), model.params.get("mad.0.ffn2.w2")},
                          step, tol, probes, 19);
    }});
    cases.push_back({"ctc", [=] {
        auto logits = random_input({6, cfg.vocab}, 20, 1.0);
        auto f = [&](Tape& t) {
            auto lp = ops::log_softmax_lastdim(&t, logits);
            return ctc_loss_op(&t, lp, {1, 2});
        };
        return grad_check(f, logits, step, tol, 0, 21);
    }});
    cases.push_back({"ce", [=] {
        auto logits = random_input({3, cfg.vocab}, 22, 1.0);
        auto f = [&](Tape& t) {
            auto lp = ops::log_softmax_lastdim(&t, logits);
            return smoothed_ce_op(&t, lp, {1, 2, 1}, 0.1);
        };
        return grad_check(f, logits, step, tol, 0, 23);
    }});
    cases.push_back({"full", [=] {
        auto quiet = cfg;
        quiet.dropout = 0.0;
        auto model = build_cassnat(quiet, 107);
        auto x = random_input({8, cfg.feat_dim}, 24);
        std::vector<int> labels{2, 1};
        LossConfig loss_cfg;
        auto f = [&](Tape& t) {
            RunContext ctx;
            ctx.tape = &t;
            auto art = forward_train(ctx, model, x, labels);
            return cassnat_loss(&t, art, labels, loss_cfg, nullptr);
        };
        return grad_check(f, {x, model.params.get("enc.0.ffn1.w1"),
                              model.params.get("tae.attn.0.v.w"), model.params.get("out_final.w"),
                              model.params.get("ctc_mid.w"), model.params.get("out_mid.w")},
                          step, tol, probes, 25);
    }});
    if (inject_fault) {
        cases.push_back({"fault_fixture", [=] {
            // Deliberately wrong backward rule: forward x^2, gradient 3x.
            auto x = random_input({4}, 26, 1.0);
            auto f = [&](Tape& t) {
                auto out = make_tensor({1});
                auto recompute = [=]() {
                    double acc = 0;
                    for (double v : x->v) acc += v * v;
                    out->v[0] = acc;
                };
                auto backprop = [=]() {
                    for (size_t i = 0; i < x->v.size(); ++i) x->g[i] += 3.0 * x->v[i] * out->g[0];
                };
                recompute();
                t.record(Tape::Step{"fault_fixture", {x}, out, recompute, backprop});
                return out;
            };
            return grad_check(f, x, step, tol, 0, 27);
        }});
    }
    return cases;
}

}  // namespace

int gradcheck(const GradcheckArgs& args) {
    ModelConfig cfg;
    if (!args.config.empty()) {
        cfg = load_run_config(args.config).model;
    } else {
        cfg.vocab = 5;
        cfg.feat_dim = 8;
        cfg.d_att = 8;
        cfg.n_heads = 2;
        cfg.d_ff = 12;
        cfg.enc_blocks = 2;
        cfg.enc_middle = 1;
        cfg.sad_blocks = 1;
        cfg.mad_blocks = 2;
        cfg.mad_middle = 1;
        cfg.at_dec_blocks = 1;
        cfg.enc_kernel = 3;
        cfg.dec_kernel = 3;
        cfg.k_enc = 4;
        cfg.k_dec = 4;
        cfg.dropout = 0.0;
    }
    auto cases = build_check_suite(cfg, args.inject_fault);
    bool any_ran = false, all_pass = true;
    for (auto& c : cases) {
        if (!args.module.empty() && c.name != args.module) continue;
        any_ran = true;
        auto report = c.run();
        bool ok = report.pass(1e-4);
        all_pass &= ok;
        std::printf("[%s] %s max_rel_err=%.3g (leaf %d index %lld, probed %lld)\n",
                    ok ? "PASS" : "FAIL", c.name.c_str(), report.max_rel_err, report.worst_leaf,
                    static_cast<long long>(report.worst_index), static_cast<long long>(report.probed));
    }
    if (!any_ran) throw UsageError("gradcheck: unknown module '" + args.module + "'");
    return all_pass ? 0 : 3;
}

int analyze(const AnalyzeArgs& args) {
    auto model = load_cassnat_checkpoint(args.ckpt);
    auto inputs = load_inputs(args.input);

    auto utterances_with_labels = [&]() {
        if (args.labels.empty()) {
            throw UsageError("analyze: mode '" + args.mode + "' needs --labels");
        }
        auto labels = read_labels_file(args.labels);
        if (labels.size() != inputs.size()) {
            throw FormatError("labels file has " + std::to_string(labels.size()) + " lines for " +
                              std::to_string(inputs.size()) + " utterances");
        }
        std::vector<Utterance> utts;
        for (size_t i = 0; i < inputs.size(); ++i) {
            utts.push_back(Utterance{inputs[i].features, labels[i], inputs[i].id});
        }
        return utts;
    };

    if (args.mode == "attn") {
        AttnSelector sel;
        sel.modules.clear();
        std::string mods = args.modules;
        for (size_t pos = 0; pos < mods.size();) {
            auto comma = mods.find(',', pos);
            if (comma == std::string::npos) comma = mods.size();
            sel.modules.push_back(mods.substr(pos, comma - pos));
            pos = comma + 1;
        }
        if (args.layer != "last") sel.layer = std::atoi(args.layer.c_str());
        if (args.heads != "all") {
            auto dash = args.heads.find('-');
            if (dash == std::string::npos) {
                sel.heads.push_back(std::atoi(args.heads.c_str()));
            } else {
                int lo = std::atoi(args.heads.substr(0, dash).c_str());
                int hi = std::atoi(args.heads.substr(dash + 1).c_str());
                for (int h = lo; h <= hi; ++h) sel.heads.push_back(h);
            }
        }
        // One utterance per figure-style dump: the first input.
        auto dumps = dump_attention(model, inputs[0].features, sel);
        std::fputs(format_attention_dumps(dumps).c_str(), stdout);
        return 0;
    }

    auto utts = utterances_with_labels();
    ExtractStats stats;
    auto table = extract_embeddings(model, utts, &stats);
    if (stats.skipped > 0) std::printf("# skipped=%d infeasible utterances\n", stats.skipped);

    if (args.mode == "embed") {
        for (int id : table.token_ids()) {
            auto mean = table.mean(id);
            std::printf("%d\t%lld\t", id, static_cast<long long>(table.count(id)));
            for (size_t i = 0; i < mean.size(); ++i) std::printf(i ? " %.17g" : "%.17g", mean[i]);
            std::printf("\n");
        }
        return 0;
    }
    if (args.mode == "pca") {
        auto ids = table.token_ids();
        std::vector<std::vector<double>> vectors;
        for (int id : ids) vectors.push_back(table.mean(id));
        auto res = pca_2d(vectors);
        std::printf("# explained_variance=%.6f %.6f\n", res.explained[0], res.explained[1]);
        for (size_t i = 0; i < ids.size(); ++i) {
            std::printf("%d\t%.17g\t%.17g\n", ids[i], res.coords[i][0], res.coords[i][1]);
        }
        return 0;
    }
    if (args.mode == "neighbors") {
        if (args.token < 0) throw UsageError("analyze: mode neighbors needs --token");
        auto neighbors = cosine_neighbors(table, args.token, args.top_n);
        for (const auto& nb : neighbors) std::printf("%d\t%.6f\n", nb.token, nb.similarity);
        return 0;
    }
    throw UsageError("analyze: unknown mode '" + args.mode + "'");
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DegenerateError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        // Format, checkpoint, config, dimension, mask, infeasible.
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace commands
}  // namespace cassnat
