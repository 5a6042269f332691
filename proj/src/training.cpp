// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/training.hpp"

#include <algorithm>
#include <cmath>

#include "cassnat/ops.hpp"

namespace cassnat {

void LossConfig::validate() const {
    for (double w : {lambda_ce, lambda_ctc, global_ctc_weight}) {
        if (w < 0.0 || w > 1.0) throw ConfigError("loss config: task ratios must lie in [0, 1]");
    }
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
        throw ConfigError("loss config: label_smoothing must lie in [0, 1)");
    }
}

TensorPtr smoothed_ce_op(Tape* tape, const TensorPtr& log_dist, const std::vector<int>& labels,
                         double eps) {
    if (log_dist->rank() != 2) throw DimensionError("smoothed_ce: predictions must be UxV'");
    int rows = log_dist->rows(), classes = log_dist->cols();
    if (static_cast<int>(labels.size()) != rows) {
        throw DimensionError("smoothed_ce: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " prediction rows");
    }
    for (int y : labels) {
        if (y < 0 || y >= classes) {
            throw UsageError("smoothed_ce: label " + std::to_string(y) + " outside " +
                             std::to_string(classes) + " classes");
        }
    }
    double off = eps / (classes - 1);
    double on = 1.0 - eps;
    auto ids = std::make_shared<std::vector<int>>(labels);
    auto out = make_tensor({1});
    auto recompute = [=]() {
        double acc = 0.0;
        for (int u = 0; u < rows; ++u) {
            for (int k = 0; k < classes; ++k) {
                double w = k == (*ids)[static_cast<size_t>(u)] ? on : off;
                acc -= w * log_dist->at(u, k);
            }
        }
        out->v[0] = acc / rows;
    };
    auto backprop = [=]() {
        double g = out->g[0] / rows;
        for (int u = 0; u < rows; ++u) {
            for (int k = 0; k < classes; ++k) {
                double w = k == (*ids)[static_cast<size_t>(u)] ? on : off;
                log_dist->g[static_cast<size_t>(u) * classes + k] -= g * w;
            }
        }
    };
    recompute();
    check_finite("smoothed_ce", *out);
    if (tape) tape->record(Tape::Step{"smoothed_ce", {log_dist}, out, recompute, backprop});
    return out;
}

TensorPtr joint_loss(Tape* tape, const ForwardArtifacts& art, const std::vector<int>& labels,
                     double lambda, double eps) {
    if (art.dec_final->rows() != static_cast<int>(labels.size())) {
        throw Error("joint loss: decoder produced " + std::to_string(art.dec_final->rows()) +
                    " rows for " + std::to_string(labels.size()) + " labels");
    }
    auto ctc = ctc_loss_op(tape, art.ctc_final, labels);
    auto ce = smoothed_ce_op(tape, art.dec_final, labels, eps);
    return ops::add(tape, ops::scale(tape, ctc, lambda), ops::scale(tape, ce, 1.0 - lambda));
}

TensorPtr iterated_loss(Tape* tape, const ForwardArtifacts& art, const std::vector<int>& labels,
                        const LossConfig& cfg) {
    cfg.validate();
    if (!art.ctc_middle || !art.dec_middle) {
        throw ConfigError("iterated loss: middle outputs missing from the forward artifacts");
    }
    auto ctc_f = ctc_loss_op(tape, art.ctc_final, labels);
    auto ctc_m = ctc_loss_op(tape, art.ctc_middle, labels);
    auto ce_f = smoothed_ce_op(tape, art.dec_final, labels, cfg.label_smoothing);
    auto ce_m = smoothed_ce_op(tape, art.dec_middle, labels, cfg.label_smoothing);
    auto ctc_part = ops::add(tape, ops::scale(tape, ctc_f, cfg.lambda_ctc),
                             ops::scale(tape, ctc_m, 1.0 - cfg.lambda_ctc));
    auto ce_part = ops::add(tape, ops::scale(tape, ce_f, cfg.lambda_ce),
                            ops::scale(tape, ce_m, 1.0 - cfg.lambda_ce));
    return ops::add(tape, ops::scale(tape, ctc_part, cfg.global_ctc_weight),
                    ops::scale(tape, ce_part, 1.0 - cfg.global_ctc_weight));
}

double combine_iterated(double ctc_final, double ctc_middle, double ce_final, double ce_middle,
                        const LossConfig& cfg) {
    double ctc_part = cfg.lambda_ctc * ctc_final + (1.0 - cfg.lambda_ctc) * ctc_middle;
    double ce_part = cfg.lambda_ce * ce_final + (1.0 - cfg.lambda_ce) * ce_middle;
    return cfg.global_ctc_weight * ctc_part + (1.0 - cfg.global_ctc_weight) * ce_part;
}

TensorPtr cassnat_loss(Tape* tape, const ForwardArtifacts& art, const std::vector<int>& labels,
                       const LossConfig& cfg, LossParts* parts) {
    TensorPtr total;
    if (cfg.use_iterated) {
        total = iterated_loss(tape, art, labels, cfg);
        if (parts) {
            parts->ctc_middle = ctc_loss_op(nullptr, art.ctc_middle, labels)->v[0];
            parts->ce_middle =
                smoothed_ce_op(nullptr, art.dec_middle, labels, cfg.label_smoothing)->v[0];
        }
    } else {
        total = joint_loss(tape, art, labels, cfg.global_ctc_weight, cfg.label_smoothing);
    }
    if (parts) {
        parts->total = total->v[0];
        parts->ctc_final = ctc_loss_op(nullptr, art.ctc_final, labels)->v[0];
        parts->ce_final = smoothed_ce_op(nullptr, art.dec_final, labels, cfg.label_smoothing)->v[0];
    }
    return total;
}

TensorPtr at_loss(Tape* tape, const AtTeacherOut& out, const std::vector<int>& labels, int eos_id,
                  const LossConfig& cfg, LossParts* parts) {
    std::vector<int> targets = labels;
    targets.push_back(eos_id);
    auto ctc = ctc_loss_op(tape, out.ctc_final, labels);
    auto ce = smoothed_ce_op(tape, out.dec_logprobs, targets, cfg.label_smoothing);
    auto total = ops::add(tape, ops::scale(tape, ctc, cfg.global_ctc_weight),
                          ops::scale(tape, ce, 1.0 - cfg.global_ctc_weight));
    if (parts) {
        parts->total = total->v[0];
        parts->ctc_final = ctc->v[0];
        parts->ce_final = ce->v[0];
    }
    return total;
}

// ----- synthetic task ------------------------------------------------------

void SyntheticTaskSpec::validate() const {
    if (vocab < 4) throw ConfigError("synthetic task: vocab must be >= 4 (blank plus 3 tokens)");
    if (feat_dim < 4) throw ConfigError("synthetic task: feat_dim must be >= 4");
    if (dur_min < 1 || dur_max < dur_min) throw ConfigError("synthetic task: bad duration range");
    if (len_min < 1 || len_max < len_min) throw ConfigError("synthetic task: bad length range");
    if (noise_sigma < 0.0) throw ConfigError("synthetic task: noise must be >= 0");
    if (proto_min_dist <= 0.0 || similar_pair_dist < proto_min_dist ||
        proto_separation < similar_pair_dist) {
        throw ConfigError("synthetic task: need 0 < min_dist <= pair_dist <= separation");
    }
}

namespace {

double vec_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::vector<double> unit_vector(Rng& rng, int d) {
    std::vector<double> v(static_cast<size_t>(d));
    double norm = 0;
    do {
        norm = 0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

}  // namespace

std::vector<std::vector<double>> make_prototypes(const SyntheticTaskSpec& spec) {
    spec.validate();
    Rng rng(prng::mix(spec.seed, 0x70726f746fULL));
    std::vector<std::vector<double>> protos(static_cast<size_t>(spec.vocab));
    // Unrelated prototypes keep the full separation; the last one is placed
    // deliberately close to its pair partner.
    for (int id = 1; id <= spec.vocab - 2; ++id) {
        for (int attempt = 0;; ++attempt) {
            auto cand = unit_vector(rng, spec.feat_dim);
            bool ok = true;
            for (int j = 1; j < id; ++j) {
                if (vec_dist(cand, protos[static_cast<size_t>(j)]) < spec.proto_separation) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                protos[static_cast<size_t>(id)] = std::move(cand);
                break;
            }
            if (attempt > 10000) {
                throw ConfigError("synthetic task: cannot place distinguishable prototypes; lower "
                                  "proto_separation or raise feat_dim");
            }
        }
    }
    const auto& anchor = protos[static_cast<size_t>(spec.similar_a())];
    for (int attempt = 0;; ++attempt) {
        auto dir = unit_vector(rng, spec.feat_dim);
        std::vector<double> cand(anchor);
        double norm = 0;
        for (size_t i = 0; i < cand.size(); ++i) {
            cand[i] += spec.similar_pair_dist * dir[i];
            norm += cand[i] * cand[i];
        }
        norm = std::sqrt(norm);
        for (auto& x : cand) x /= norm;
        bool ok = vec_dist(cand, anchor) >= spec.proto_min_dist &&
                  vec_dist(cand, anchor) <= spec.similar_pair_dist * 1.5;
        for (int j = 1; ok && j < spec.vocab - 1; ++j) {
            if (j != spec.similar_a() &&
                vec_dist(cand, protos[static_cast<size_t>(j)]) < spec.proto_min_dist) {
                ok = false;
            }
        }
        if (ok) {
            protos[static_cast<size_t>(spec.similar_b())] = std::move(cand);
            break;
        }
        if (attempt > 10000) {
            throw ConfigError("synthetic task: cannot place the similar prototype pair");
        }
    }
    return protos;
}

std::vector<Utterance> generate_synthetic(const SyntheticTaskSpec& spec, int n, uint64_t stream) {
    auto protos = make_prototypes(spec);
    std::vector<Utterance> utts;
    utts.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(prng::mix(spec.seed, stream, static_cast<uint64_t>(i)));
        int len = rng.uniform_int(spec.len_min, spec.len_max);
        std::vector<int> labels(static_cast<size_t>(len));
        for (auto& l : labels) l = rng.uniform_int(1, spec.vocab - 1);
        std::vector<int> durations(static_cast<size_t>(len));
        for (auto& d : durations) d = rng.uniform_int(spec.dur_min, spec.dur_max);
        // Stretch until the 4x-reduced frame count carries the labels with a
        // frame to spare, and the frontend has its minimum input.
        int need = min_frames_required(labels) + 1;
        for (;;) {
            int total = 0;
            for (int d : durations) total += d;
            if (total >= 4 && frontend_out_frames(total) >= need) break;
            for (auto& d : durations) ++d;
        }
        int total = 0;
        for (int d : durations) total += d;
        auto feats = make_tensor({total, spec.feat_dim});
        int t = 0;
        for (int u = 0; u < len; ++u) {
            const auto& proto = protos[static_cast<size_t>(labels[static_cast<size_t>(u)])];
            for (int rep = 0; rep < durations[static_cast<size_t>(u)]; ++rep, ++t) {
                for (int f = 0; f < spec.feat_dim; ++f) {
                    feats->at(t, f) = proto[static_cast<size_t>(f)] + spec.noise_sigma * rng.normal();
                }
            }
        }
        char id[32];
        std::snprintf(id, sizeof(id), "utt%06d", i);
        utts.push_back(Utterance{feats, std::move(labels), id});
    }
    return utts;
}

// ----- augmentation ----------------------------------------------------------

TensorPtr spec_mask(const TensorPtr& features, const AugmentConfig& aug, uint64_t seed) {
    int t = features->rows(), f = features->cols();
    if (aug.time_max >= t || aug.freq_max >= f) {
        throw ParameterError("spec_mask: mask extents must be smaller than the feature tensor");
    }
    auto out = make_tensor(features->shape, features->v);
    if (!aug.enabled) return out;
    Rng rng(seed);
    for (int m = 0; m < aug.time_masks; ++m) {
        int len = rng.uniform_int(0, aug.time_max);
        int start = rng.uniform_int(0, t - len);
        for (int i = start; i < start + len; ++i) {
            for (int c = 0; c < f; ++c) out->at(i, c) = 0.0;
        }
    }
    for (int m = 0; m < aug.freq_masks; ++m) {
        int len = rng.uniform_int(0, aug.freq_max);
        int start = rng.uniform_int(0, f - len);
        for (int c = start; c < start + len; ++c) {
            for (int i = 0; i < t; ++i) out->at(i, c) = 0.0;
        }
    }
    return out;
}

// ----- optimization -----------------------------------------------------------

double lr_at(const OptimizerConfig& cfg, int d_att, int64_t step) {
    double s = static_cast<double>(std::max<int64_t>(step, 1));
    double w = static_cast<double>(std::max(cfg.warmup_steps, 1));
    return cfg.lr_factor / std::sqrt(static_cast<double>(d_att)) *
           std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

ParamSnapshot take_snapshot(const ParamStore& store) {
    ParamSnapshot snap;
    snap.reserve(store.items().size());
    for (auto& [name, t] : store.items()) snap.push_back(t->v);
    return snap;
}

void apply_snapshot(ParamStore& store, const ParamSnapshot& snapshot) {
    if (snapshot.size() != store.items().size()) {
        throw CheckpointError("snapshot has " + std::to_string(snapshot.size()) +
                              " entries for " + std::to_string(store.items().size()) + " parameters");
    }
    for (size_t i = 0; i < snapshot.size(); ++i) {
        auto& t = store.items()[i].second;
        if (snapshot[i].size() != t->v.size()) {
            throw CheckpointError("snapshot entry " + store.items()[i].first + " has wrong size");
        }
        t->v = snapshot[i];
    }
}

Adam::Adam(const ParamStore& store, const OptimizerConfig& cfg) : cfg_(cfg) {
    for (auto& [name, t] : store.items()) {
        m_.emplace_back(t->v.size(), 0.0);
        v_.emplace_back(t->v.size(), 0.0);
    }
}

void Adam::step(ParamStore& store, double lr, double grad_scale) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t p = 0; p < store.items().size(); ++p) {
        auto& t = store.items()[p].second;
        t->ensure_grad();
        auto& m = m_[p];
        auto& v = v_[p];
        for (size_t i = 0; i < t->v.size(); ++i) {
            double g = t->g[i] * grad_scale;
            if (!std::isfinite(g)) {
                throw NumericError("adam: non-finite gradient in " + store.items()[p].first);
            }
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_eps);
            t->v[i] -= update;
            if (!std::isfinite(t->v[i])) {
                throw NumericError("adam: parameter " + store.items()[p].first + " diverged");
            }
        }
    }
}

void Adam::restore(const TrainerState& state) {
    if (state.adam_m.size() != m_.size() || state.adam_v.size() != v_.size()) {
        throw CheckpointError("trainer state does not match the parameter set");
    }
    m_ = state.adam_m;
    v_ = state.adam_v;
    step_ = state.step;
}

void Adam::save(TrainerState* state) const {
    state->adam_m = m_;
    state->adam_v = v_;
    state->step = step_;
}

// ----- evaluation ----------------------------------------------------------

int edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= b.size(); ++j) {
            int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

namespace {

template <typename DecodeFn>
EvalResult evaluate_with(const std::vector<Utterance>& utts, DecodeFn&& decode) {
    EvalResult res;
    for (const auto& utt : utts) {
        auto hyp = decode(utt);
        int ed = edit_distance(hyp, utt.labels);
        res.edits += ed;
        res.ref_tokens += static_cast<int64_t>(utt.labels.size());
        if (hyp != utt.labels) ++res.wrong_sequences;
        ++res.count;
    }
    res.token_accuracy =
        res.ref_tokens == 0 ? 0.0
                            : 1.0 - static_cast<double>(res.edits) / static_cast<double>(res.ref_tokens);
    res.seq_error_rate = res.count == 0 ? 0.0
                                        : static_cast<double>(res.wrong_sequences) /
                                              static_cast<double>(res.count);
    return res;
}

}  // namespace

EvalResult evaluate_cassnat(const CassNatModel& model, const std::vector<Utterance>& utts) {
    return evaluate_with(utts, [&](const Utterance& u) { return decode_greedy(model, u.features).tokens; });
}

EvalResult evaluate_at(const AtModel& model, const std::vector<Utterance>& utts) {
    return evaluate_with(utts, [&](const Utterance& u) { return at_decode(model, u.features).tokens; });
}

// ----- shared loop ----------------------------------------------------------

namespace {

struct BestEntry {
    double accuracy;
    int epoch;
    ParamSnapshot params;
};

ParamSnapshot average_snapshots(const std::vector<BestEntry>& entries) {
    ParamSnapshot avg = entries.front().params;
    for (size_t e = 1; e < entries.size(); ++e) {
        for (size_t p = 0; p < avg.size(); ++p) {
            for (size_t i = 0; i < avg[p].size(); ++i) avg[p][i] += entries[e].params[p][i];
        }
    }
    double inv = 1.0 / static_cast<double>(entries.size());
    for (auto& p : avg) {
        for (auto& x : p) x *= inv;
    }
    return avg;
}

// One training run over either model; the two wrappers below supply the
// per-utterance loss and the validation metric.
TrainResult train_loop(ParamStore& store, int d_att, double dropout,
                       const std::vector<Utterance>& train_set,
                       const std::vector<Utterance>& val_set, const TrainOptions& opts,
                       const TrainerState* resume,
                       const std::function<TensorPtr(Tape&, RunContext&, const Utterance&,
                                                     LossParts*)>& loss_fn,
                       const std::function<double()>& validate) {
    opts.loss.validate();
    TrainResult result;
    Adam adam(store, opts.opt);
    int start_epoch = 0;
    if (resume) {
        adam.restore(*resume);
        start_epoch = resume->next_epoch;
    }
    std::vector<BestEntry> best;
    int stale_epochs = 0;

    for (int epoch = start_epoch; epoch < opts.opt.epochs; ++epoch) {
        std::vector<size_t> order(train_set.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(prng::mix(opts.seed, 0x73687566ULL, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        size_t pos = 0;
        while (pos < order.size()) {
            size_t batch_end = std::min(pos + static_cast<size_t>(opts.opt.batch_size), order.size());
            store.zero_grads();
            LossParts batch_parts;
            int used = 0;
            for (size_t b = pos; b < batch_end; ++b) {
                const Utterance& utt = train_set[order[b]];
                auto feats = opts.aug.enabled
                                 ? spec_mask(utt.features, opts.aug,
                                             prng::mix(opts.seed, 0x617567ULL,
                                                       static_cast<uint64_t>(epoch), b))
                                 : utt.features;
                Utterance masked{feats, utt.labels, utt.id};
                Tape tape;
                RunContext ctx;
                ctx.tape = &tape;
                ctx.training = true;
                ctx.dropout = dropout;
                ctx.dropout_key = prng::mix(opts.seed, static_cast<uint64_t>(epoch), b);
                LossParts parts;
                TensorPtr loss;
                try {
                    loss = loss_fn(tape, ctx, masked, &parts);
                } catch (const InfeasibleError&) {
                    ++result.skipped;
                    continue;
                } catch (const NumericError&) {
                    result.diverged = true;
                    break;
                }
                try {
                    tape.backward(loss);
                } catch (const NumericError&) {
                    result.diverged = true;
                    break;
                }
                batch_parts.total += parts.total;
                batch_parts.ctc_final += parts.ctc_final;
                batch_parts.ctc_middle += parts.ctc_middle;
                batch_parts.ce_final += parts.ce_final;
                batch_parts.ce_middle += parts.ce_middle;
                ++used;
            }
            if (result.diverged) break;
            if (used > 0) {
                double lr = lr_at(opts.opt, d_att, adam.steps() + 1);
                try {
                    adam.step(store, lr, 1.0 / used);
                } catch (const NumericError&) {
                    result.diverged = true;
                    break;
                }
                if (adam.steps() % opts.opt.log_interval == 0) {
                    double inv = 1.0 / used;
                    result.curve.push_back(TrainLogEntry{
                        adam.steps(),
                        LossParts{batch_parts.total * inv, batch_parts.ctc_final * inv,
                                  batch_parts.ctc_middle * inv, batch_parts.ce_final * inv,
                                  batch_parts.ce_middle * inv}});
                }
            }
            pos = batch_end;
        }
        if (result.diverged) break;
        result.epochs_run = epoch + 1;

        double acc = val_set.empty() ? 0.0 : validate();
        result.val_accuracy.push_back(acc);
        bool improved = best.empty() || acc > best.front().accuracy;
        BestEntry entry{acc, epoch, take_snapshot(store)};
        best.push_back(std::move(entry));
        std::stable_sort(best.begin(), best.end(), [](const BestEntry& a, const BestEntry& b) {
            return a.accuracy > b.accuracy;
        });
        if (static_cast<int>(best.size()) > opts.opt.keep_best) best.resize(opts.opt.keep_best);
        stale_epochs = improved ? 0 : stale_epochs + 1;
        if (stale_epochs >= opts.opt.patience) break;
    }

    if (best.empty()) {
        // Diverged before the first validation point: keep the live values.
        best.push_back(BestEntry{0.0, -1, take_snapshot(store)});
    }
    result.best_val_accuracy = best.front().accuracy;
    result.best_params = best.front().params;
    result.final_params = take_snapshot(store);
    result.averaged_params = average_snapshots(best);
    apply_snapshot(store, result.averaged_params);
    adam.save(&result.final_state);
    result.final_state.next_epoch = result.epochs_run;
    return result;
}

}  // namespace

TrainResult train_cassnat(CassNatModel* model, const std::vector<Utterance>& train_set,
                          const std::vector<Utterance>& val_set, const TrainOptions& opts,
                          const TrainerState* resume) {
    return train_loop(
        model->params, model->cfg.d_att, model->cfg.dropout, train_set, val_set, opts, resume,
        [model, &opts](Tape& tape, RunContext& ctx, const Utterance& utt, LossParts* parts) {
            auto art = forward_train(ctx, *model, utt.features, utt.labels);
            return cassnat_loss(&tape, art, utt.labels, opts.loss, parts);
        },
        [model, &val_set]() { return evaluate_cassnat(*model, val_set).token_accuracy; });
}

TrainResult train_at(AtModel* model, const std::vector<Utterance>& train_set,
                     const std::vector<Utterance>& val_set, const TrainOptions& opts,
                     const TrainerState* resume) {
    return train_loop(
        model->params, model->cfg.d_att, model->cfg.dropout, train_set, val_set, opts, resume,
        [model, &opts](Tape& tape, RunContext& ctx, const Utterance& utt, LossParts* parts) {
            auto out = at_forward_teacher(ctx, *model, utt.features, utt.labels);
            return at_loss(&tape, out, utt.labels, model->cfg.eos_id(), opts.loss, parts);
        },
        [model, &val_set]() { return evaluate_at(*model, val_set).token_accuracy; });
}

}  // namespace cassnat
