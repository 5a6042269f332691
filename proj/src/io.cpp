// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/io.hpp"

#include <array>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cassnat {

namespace {

// ----- little-endian buffer helpers -----------------------------------------

void put_u32(std::string* buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string* buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string* buf, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
}

void put_f32(std::string* buf, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const uint8_t* data;
    size_t size;
    size_t pos = 0;
    const char* what;  // "feature file" or "checkpoint"
    bool checkpoint;

    [[noreturn]] void fail(const std::string& msg) const {
        std::string full = std::string(what) + ": " + msg + " at offset " + std::to_string(pos);
        if (checkpoint) throw CheckpointError(full);
        throw FormatError(full);
    }
    void need(size_t n) const {
        if (pos + n > size) {
            std::string full = std::string(what) + ": truncated (need " + std::to_string(n) +
                               " bytes at offset " + std::to_string(pos) + ", file ends at " +
                               std::to_string(size) + ")";
            if (checkpoint) throw CheckpointError(full);
            throw FormatError(full);
        }
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    uint8_t u8() {
        need(1);
        return data[pos++];
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data + pos), n);
        pos += n;
        return s;
    }
};

std::string read_file(const std::string& path, const char* what, bool checkpoint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::string msg = std::string(what) + ": cannot open '" + path + "'";
        if (checkpoint) throw CheckpointError(msg);
        throw FormatError(msg);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to '" + path + "'");
}

// ----- run config -------------------------------------------------------------

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KeyHandlers {
    std::map<std::string, std::function<void(RunConfig&, const std::string&, int)>> set;

    static int to_int(const std::string& v, const std::string& key, int line) {
        try {
            size_t used = 0;
            int out = std::stoi(v, &used);
            if (used != v.size()) throw std::invalid_argument("");
            return out;
        } catch (...) {
            throw FormatError("config line " + std::to_string(line) + ": expected integer for '" +
                              key + "', got '" + v + "'");
        }
    }
    static double to_double(const std::string& v, const std::string& key, int line) {
        try {
            size_t used = 0;
            double out = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("");
            return out;
        } catch (...) {
            throw FormatError("config line " + std::to_string(line) + ": expected number for '" +
                              key + "', got '" + v + "'");
        }
    }
    static uint64_t to_u64(const std::string& v, const std::string& key, int line) {
        try {
            size_t used = 0;
            uint64_t out = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument("");
            return out;
        } catch (...) {
            throw FormatError("config line " + std::to_string(line) +
                              ": expected unsigned integer for '" + key + "', got '" + v + "'");
        }
    }
    static bool to_bool(const std::string& v, const std::string& key, int line) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw FormatError("config line " + std::to_string(line) + ": expected true/false for '" +
                          key + "', got '" + v + "'");
    }

    template <typename Setter>
    void on(const std::string& key, Setter setter) {
        set[key] = setter;
    }
};

const KeyHandlers& handlers() {
    static const KeyHandlers h = [] {
        KeyHandlers h;
        auto I = KeyHandlers::to_int;
        auto D = KeyHandlers::to_double;
        auto B = KeyHandlers::to_bool;
        auto U = KeyHandlers::to_u64;
        // model
        h.on("vocab_size", [I](RunConfig& rc, const std::string& v, int l) {
            rc.model.vocab = I(v, "vocab_size", l);
        });
        h.on("feat_dim", [I](RunConfig& rc, const std::string& v, int l) {
            rc.model.feat_dim = I(v, "feat_dim", l);
        });
        h.on("d_att", [I](RunConfig& rc, const std::string& v, int l) { rc.model.d_att = I(v, "d_att", l); });
        h.on("n_heads", [I](RunConfig& rc, const std::string& v, int l) { rc.model.n_heads = I(v, "n_heads", l); });
        h.on("d_ff", [I](RunConfig& rc, const std::string& v, int l) { rc.model.d_ff = I(v, "d_ff", l); });
        h.on("enc_blocks", [I](RunConfig& rc, const std::string& v, int l) { rc.model.enc_blocks = I(v, "enc_blocks", l); });
        h.on("tae_blocks", [I](RunConfig& rc, const std::string& v, int l) { rc.model.tae_blocks = I(v, "tae_blocks", l); });
        h.on("sad_blocks", [I](RunConfig& rc, const std::string& v, int l) { rc.model.sad_blocks = I(v, "sad_blocks", l); });
        h.on("mad_blocks", [I](RunConfig& rc, const std::string& v, int l) { rc.model.mad_blocks = I(v, "mad_blocks", l); });
        h.on("k_enc", [I](RunConfig& rc, const std::string& v, int l) { rc.model.k_enc = I(v, "k_enc", l); });
        h.on("k_dec", [I](RunConfig& rc, const std::string& v, int l) { rc.model.k_dec = I(v, "k_dec", l); });
        h.on("enc_kernel", [I](RunConfig& rc, const std::string& v, int l) { rc.model.enc_kernel = I(v, "enc_kernel", l); });
        h.on("dec_kernel", [I](RunConfig& rc, const std::string& v, int l) { rc.model.dec_kernel = I(v, "dec_kernel", l); });
        h.on("dropout", [D](RunConfig& rc, const std::string& v, int l) { rc.model.dropout = D(v, "dropout", l); });
        h.on("label_smoothing", [D](RunConfig& rc, const std::string& v, int l) {
            rc.model.label_smoothing = D(v, "label_smoothing", l);
            rc.loss.label_smoothing = rc.model.label_smoothing;
        });
        h.on("trigger_context", [I](RunConfig& rc, const std::string& v, int l) {
            rc.model.trigger_context = I(v, "trigger_context", l);
        });
        h.on("enc_middle", [I](RunConfig& rc, const std::string& v, int l) { rc.model.enc_middle = I(v, "enc_middle", l); });
        h.on("mad_middle", [I](RunConfig& rc, const std::string& v, int l) { rc.model.mad_middle = I(v, "mad_middle", l); });
        h.on("at_dec_blocks", [I](RunConfig& rc, const std::string& v, int l) {
            rc.model.at_dec_blocks = I(v, "at_dec_blocks", l);
        });
        // loss
        h.on("lambda_ce", [D](RunConfig& rc, const std::string& v, int l) { rc.loss.lambda_ce = D(v, "lambda_ce", l); });
        h.on("lambda_ctc", [D](RunConfig& rc, const std::string& v, int l) { rc.loss.lambda_ctc = D(v, "lambda_ctc", l); });
        h.on("global_ctc_weight", [D](RunConfig& rc, const std::string& v, int l) {
            rc.loss.global_ctc_weight = D(v, "global_ctc_weight", l);
        });
        h.on("use_iterated_loss", [B](RunConfig& rc, const std::string& v, int l) {
            rc.loss.use_iterated = B(v, "use_iterated_loss", l);
        });
        // synthetic task
        h.on("dur_min", [I](RunConfig& rc, const std::string& v, int l) { rc.task.dur_min = I(v, "dur_min", l); });
        h.on("dur_max", [I](RunConfig& rc, const std::string& v, int l) { rc.task.dur_max = I(v, "dur_max", l); });
        h.on("noise_sigma", [D](RunConfig& rc, const std::string& v, int l) { rc.task.noise_sigma = D(v, "noise_sigma", l); });
        h.on("len_min", [I](RunConfig& rc, const std::string& v, int l) { rc.task.len_min = I(v, "len_min", l); });
        h.on("len_max", [I](RunConfig& rc, const std::string& v, int l) { rc.task.len_max = I(v, "len_max", l); });
        h.on("proto_separation", [D](RunConfig& rc, const std::string& v, int l) {
            rc.task.proto_separation = D(v, "proto_separation", l);
        });
        h.on("similar_pair_dist", [D](RunConfig& rc, const std::string& v, int l) {
            rc.task.similar_pair_dist = D(v, "similar_pair_dist", l);
        });
        h.on("proto_min_dist", [D](RunConfig& rc, const std::string& v, int l) {
            rc.task.proto_min_dist = D(v, "proto_min_dist", l);
        });
        h.on("train_utts", [I](RunConfig& rc, const std::string& v, int l) { rc.train_utts = I(v, "train_utts", l); });
        h.on("val_utts", [I](RunConfig& rc, const std::string& v, int l) { rc.val_utts = I(v, "val_utts", l); });
        // optimizer
        h.on("lr_factor", [D](RunConfig& rc, const std::string& v, int l) { rc.opt.lr_factor = D(v, "lr_factor", l); });
        h.on("warmup_steps", [I](RunConfig& rc, const std::string& v, int l) { rc.opt.warmup_steps = I(v, "warmup_steps", l); });
        h.on("beta1", [D](RunConfig& rc, const std::string& v, int l) { rc.opt.beta1 = D(v, "beta1", l); });
        h.on("beta2", [D](RunConfig& rc, const std::string& v, int l) { rc.opt.beta2 = D(v, "beta2", l); });
        h.on("adam_eps", [D](RunConfig& rc, const std::string& v, int l) { rc.opt.adam_eps = D(v, "adam_eps", l); });
        h.on("batch_size", [I](RunConfig& rc, const std::string& v, int l) { rc.opt.batch_size = I(v, "batch_size", l); });
        h.on("epochs", [I](RunConfig& rc, const std::string& v, int l) { rc.opt.epochs = I(v, "epochs", l); });
        h.on("keep_best", [I](RunConfig& rc, const std::string& v, int l) { rc.opt.keep_best = I(v, "keep_best", l); });
        h.on("patience", [I](RunConfig& rc, const std::string& v, int l) { rc.opt.patience = I(v, "patience", l); });
        h.on("log_interval", [I](RunConfig& rc, const std::string& v, int l) { rc.opt.log_interval = I(v, "log_interval", l); });
        // augmentation
        h.on("augment", [B](RunConfig& rc, const std::string& v, int l) { rc.aug.enabled = B(v, "augment", l); });
        h.on("time_masks", [I](RunConfig& rc, const std::string& v, int l) { rc.aug.time_masks = I(v, "time_masks", l); });
        h.on("time_max", [I](RunConfig& rc, const std::string& v, int l) { rc.aug.time_max = I(v, "time_max", l); });
        h.on("freq_masks", [I](RunConfig& rc, const std::string& v, int l) { rc.aug.freq_masks = I(v, "freq_masks", l); });
        h.on("freq_max", [I](RunConfig& rc, const std::string& v, int l) { rc.aug.freq_max = I(v, "freq_max", l); });
        // misc
        h.on("seed", [U](RunConfig& rc, const std::string& v, int l) { rc.seed = U(v, "seed", l); });
        h.on("precision", [](RunConfig& rc, const std::string& v, int l) {
            if (v != "f64" && v != "f32") {
                throw FormatError("config line " + std::to_string(l) +
                                  ": precision must be f64 or f32, got '" + v + "'");
            }
            rc.precision = v;
        });
        return h;
    }();
    return h;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, bool apply_env_seed) {
    RunConfig rc;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        std::string line = trim(raw);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = handlers().set.find(key);
        if (it == handlers().set.end()) {
            throw FormatError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        it->second(rc, value, line_no);
    }
    if (apply_env_seed) {
        if (const char* env = std::getenv("CASSNAT_SEED")) {
            rc.seed = KeyHandlers::to_u64(env, "CASSNAT_SEED", 0);
        }
    }
    // The synthetic task mirrors the model's vocabulary and feature width
    // and draws from the master seed.
    rc.task.vocab = rc.model.vocab;
    rc.task.feat_dim = rc.model.feat_dim;
    rc.task.seed = rc.seed;
    rc.model.validate();
    rc.loss.validate();
    rc.task.validate();
    return rc;
}

RunConfig load_run_config(const std::string& path, bool apply_env_seed) {
    return parse_run_config_text(read_file(path, "config", false), apply_env_seed);
}

std::string serialize_run_config(const RunConfig& rc) {
    std::ostringstream out;
    out << "# model\n"
        << "vocab_size = " << rc.model.vocab << "\n"
        << "feat_dim = " << rc.model.feat_dim << "\n"
        << "d_att = " << rc.model.d_att << "\n"
        << "n_heads = " << rc.model.n_heads << "\n"
        << "d_ff = " << rc.model.d_ff << "\n"
        << "enc_blocks = " << rc.model.enc_blocks << "\n"
        << "tae_blocks = " << rc.model.tae_blocks << "\n"
        << "sad_blocks = " << rc.model.sad_blocks << "\n"
        << "mad_blocks = " << rc.model.mad_blocks << "\n"
        << "k_enc = " << rc.model.k_enc << "\n"
        << "k_dec = " << rc.model.k_dec << "\n"
        << "enc_kernel = " << rc.model.enc_kernel << "\n"
        << "dec_kernel = " << rc.model.dec_kernel << "\n"
        << "dropout = " << rc.model.dropout << "\n"
        << "label_smoothing = " << rc.model.label_smoothing << "\n"
        << "trigger_context = " << rc.model.trigger_context << "\n"
        << "enc_middle = " << rc.model.enc_middle << "\n"
        << "mad_middle = " << rc.model.mad_middle << "\n"
        << "at_dec_blocks = " << rc.model.at_dec_blocks << "\n"
        << "# loss\n"
        << "lambda_ce = " << rc.loss.lambda_ce << "\n"
        << "lambda_ctc = " << rc.loss.lambda_ctc << "\n"
        << "global_ctc_weight = " << rc.loss.global_ctc_weight << "\n"
        << "use_iterated_loss = " << (rc.loss.use_iterated ? "true" : "false") << "\n"
        << "# synthetic task\n"
        << "dur_min = " << rc.task.dur_min << "\n"
        << "dur_max = " << rc.task.dur_max << "\n"
        << "noise_sigma = " << rc.task.noise_sigma << "\n"
        << "len_min = " << rc.task.len_min << "\n"
        << "len_max = " << rc.task.len_max << "\n"
        << "proto_separation = " << rc.task.proto_separation << "\n"
        << "similar_pair_dist = " << rc.task.similar_pair_dist << "\n"
        << "proto_min_dist = " << rc.task.proto_min_dist << "\n"
        << "train_utts = " << rc.train_utts << "\n"
        << "val_utts = " << rc.val_utts << "\n"
        << "# optimizer\n"
        << "lr_factor = " << rc.opt.lr_factor << "\n"
        << "warmup_steps = " << rc.opt.warmup_steps << "\n"
        << "beta1 = " << rc.opt.beta1 << "\n"
        << "beta2 = " << rc.opt.beta2 << "\n"
        << "adam_eps = " << rc.opt.adam_eps << "\n"
        << "batch_size = " << rc.opt.batch_size << "\n"
        << "epochs = " << rc.opt.epochs << "\n"
        << "keep_best = " << rc.opt.keep_best << "\n"
        << "patience = " << rc.opt.patience << "\n"
        << "log_interval = " << rc.opt.log_interval << "\n"
        << "# augmentation\n"
        << "augment = " << (rc.aug.enabled ? "true" : "false") << "\n"
        << "time_masks = " << rc.aug.time_masks << "\n"
        << "time_max = " << rc.aug.time_max << "\n"
        << "freq_masks = " << rc.aug.freq_masks << "\n"
        << "freq_max = " << rc.aug.freq_max << "\n"
        << "# run\n"
        << "seed = " << rc.seed << "\n"
        << "precision = " << rc.precision << "\n";
    return out.str();
}

// ----- feature files -------------------------------------------------------------

void write_feature_file(const std::string& path, const Tensor& features) {
    if (features.rank() != 2) throw DimensionError("feature file: features must be TxF");
    std::string buf;
    buf += "CNAT";
    put_u32(&buf, 1);
    put_u32(&buf, static_cast<uint32_t>(features.rows()));
    put_u32(&buf, static_cast<uint32_t>(features.cols()));
    for (double v : features.v) put_f32(&buf, static_cast<float>(v));
    write_file(path, buf);
}

TensorPtr read_feature_file(const std::string& path) {
    std::string bytes = read_file(path, "feature file", false);
    Reader r{reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size(), 0, "feature file", false};
    if (r.bytes(4) != "CNAT") {
        r.pos = 0;
        r.fail("bad magic");
    }
    uint32_t version = r.u32();
    if (version != 1) {
        r.pos = 4;
        r.fail("unsupported version " + std::to_string(version));
    }
    uint32_t t = r.u32();
    uint32_t f = r.u32();
    if (t < 1 || f < 1) r.fail("degenerate extents " + std::to_string(t) + "x" + std::to_string(f));
    size_t expect = 16 + 4ull * t * f;
    if (bytes.size() != expect) {
        throw FormatError("feature file: size " + std::to_string(bytes.size()) + " does not match " +
                          std::to_string(expect) + " for " + std::to_string(t) + "x" +
                          std::to_string(f) + " (at offset 16)");
    }
    std::vector<double> vals(static_cast<size_t>(t) * f);
    for (auto& v : vals) v = static_cast<double>(r.f32());
    return make_tensor({static_cast<int>(t), static_cast<int>(f)}, std::move(vals));
}

// ----- checkpoints -------------------------------------------------------------

uint32_t crc32(const uint8_t* data, size_t n) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const std::string& path, const RunConfig& rc, ModelKind kind,
                     const ParamStore& store, const TrainerState* trainer) {
    bool f32 = rc.precision == "f32";
    std::string buf;
    buf += "CNCK";
    put_u32(&buf, 1);
    buf.push_back(static_cast<char>(kind));
    buf.push_back(static_cast<char>(trainer ? 1 : 0));
    std::string cfg = serialize_run_config(rc);
    put_u32(&buf, static_cast<uint32_t>(cfg.size()));
    buf += cfg;
    put_u32(&buf, static_cast<uint32_t>(store.items().size()));
    for (auto& [name, t] : store.items()) {
        put_u32(&buf, static_cast<uint32_t>(name.size()));
        buf += name;
        buf.push_back(static_cast<char>(f32 ? 1 : 0));
        put_u32(&buf, static_cast<uint32_t>(t->shape.size()));
        for (int d : t->shape) put_u32(&buf, static_cast<uint32_t>(d));
        if (f32) {
            for (double v : t->v) put_f32(&buf, static_cast<float>(v));
        } else {
            for (double v : t->v) put_f64(&buf, v);
        }
    }
    if (trainer) {
        if (trainer->adam_m.size() != store.items().size()) {
            throw CheckpointError("trainer state does not cover every parameter");
        }
        put_u64(&buf, static_cast<uint64_t>(trainer->step));
        put_u32(&buf, static_cast<uint32_t>(trainer->next_epoch));
        for (auto& m : trainer->adam_m) {
            for (double v : m) put_f64(&buf, v);
        }
        for (auto& v2 : trainer->adam_v) {
            for (double v : v2) put_f64(&buf, v);
        }
    }
    put_u32(&buf, crc32(reinterpret_cast<const uint8_t*>(buf.data()), buf.size()));
    write_file(path, buf);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::string bytes = read_file(path, "checkpoint", true);
    if (bytes.size() < 4) throw CheckpointError("checkpoint: truncated header in '" + path + "'");
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) {
        stored |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[bytes.size() - 4 + i])) << (8 * i);
    }
    uint32_t actual = crc32(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size() - 4);
    if (stored != actual) {
        throw CheckpointError("checkpoint: checksum mismatch in '" + path + "' (file corrupt)");
    }

    Reader r{reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size() - 4, 0, "checkpoint", true};
    if (r.bytes(4) != "CNCK") {
        r.pos = 0;
        r.fail("bad magic");
    }
    uint32_t version = r.u32();
    if (version != 1) r.fail("unsupported version " + std::to_string(version));
    CheckpointData data;
    uint8_t kind = r.u8();
    if (kind > 1) r.fail("unknown model kind " + std::to_string(kind));
    data.kind = static_cast<ModelKind>(kind);
    uint8_t flags = r.u8();
    data.has_trainer = (flags & 1) != 0;
    uint32_t cfg_len = r.u32();
    data.config_text = r.bytes(cfg_len);
    uint32_t n_params = r.u32();
    data.params.reserve(n_params);
    for (uint32_t p = 0; p < n_params; ++p) {
        CheckpointParam param;
        uint32_t name_len = r.u32();
        param.name = r.bytes(name_len);
        uint8_t dtype = r.u8();
        if (dtype > 1) r.fail("parameter '" + param.name + "' has unknown dtype");
        uint32_t rank = r.u32();
        int64_t numel = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            param.shape.push_back(static_cast<int>(r.u32()));
            numel *= param.shape.back();
        }
        param.values.resize(static_cast<size_t>(numel));
        for (auto& v : param.values) v = dtype == 1 ? static_cast<double>(r.f32()) : r.f64();
        data.params.push_back(std::move(param));
    }
    if (data.has_trainer) {
        data.trainer.step = static_cast<int64_t>(r.u64());
        data.trainer.next_epoch = static_cast<int>(r.u32());
        for (auto& p : data.params) {
            std::vector<double> m(p.values.size());
            for (auto& v : m) v = r.f64();
            data.trainer.adam_m.push_back(std::move(m));
        }
        for (auto& p : data.params) {
            std::vector<double> v2(p.values.size());
            for (auto& v : v2) v = r.f64();
            data.trainer.adam_v.push_back(std::move(v2));
        }
    }
    if (r.pos != r.size) r.fail("trailing bytes");
    return data;
}

void load_params(const CheckpointData& data, ParamStore* store) {
    if (data.params.size() != store->items().size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(data.params.size()) +
                              " parameters, model expects " + std::to_string(store->items().size()));
    }
    for (const auto& param : data.params) {
        auto t = store->get(param.name);
        if (t->shape != param.shape) {
            throw CheckpointError("checkpoint parameter '" + param.name + "' has shape " +
                                  shape_str(param.shape) + ", model expects " + shape_str(t->shape));
        }
        t->v = param.values;
    }
}

std::vector<std::vector<int>> read_labels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("labels file: cannot open '" + path + "'");
    std::vector<std::vector<int>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::vector<int> labels;
        std::string tok;
        while (ss >> tok) {
            try {
                size_t used = 0;
                labels.push_back(std::stoi(tok, &used));
                if (used != tok.size()) throw std::invalid_argument("");
            } catch (...) {
                throw FormatError("labels file line " + std::to_string(line_no) +
                                  ": bad token id '" + tok + "'");
            }
        }
        out.push_back(std::move(labels));
    }
    return out;
}

}  // namespace cassnat
