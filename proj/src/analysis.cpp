// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#include "cassnat/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cassnat {

void EmbeddingTable::add(int token, const std::vector<double>& vec) {
    auto it = rows_.find(token);
    if (it == rows_.end()) {
        rows_.emplace(token, std::make_pair(vec, int64_t{1}));
        return;
    }
    if (it->second.first.size() != vec.size()) {
        throw DimensionError("embedding table: width changed for token " + std::to_string(token));
    }
    for (size_t i = 0; i < vec.size(); ++i) it->second.first[i] += vec[i];
    ++it->second.second;
}

std::vector<double> EmbeddingTable::mean(int token) const {
    auto it = rows_.find(token);
    if (it == rows_.end()) throw UsageError("embedding table: token " + std::to_string(token) + " absent");
    std::vector<double> out = it->second.first;
    double inv = 1.0 / static_cast<double>(it->second.second);
    for (auto& v : out) v *= inv;
    return out;
}

int64_t EmbeddingTable::count(int token) const {
    auto it = rows_.find(token);
    return it == rows_.end() ? 0 : it->second.second;
}

std::vector<int> EmbeddingTable::token_ids() const {
    std::vector<int> ids;
    ids.reserve(rows_.size());
    for (auto& [id, row] : rows_) ids.push_back(id);
    return ids;
}

namespace {

// Trace kind and layer extraction: entries are named "<module>.<layer>.<kind>".
struct ParsedName {
    std::string module;
    int layer = -1;
    std::string kind;
};

ParsedName parse_trace_name(const std::string& name) {
    ParsedName p;
    auto first = name.find('.');
    auto second = name.find('.', first + 1);
    if (first == std::string::npos || second == std::string::npos) return p;
    p.module = name.substr(0, first);
    p.layer = std::atoi(name.substr(first + 1, second - first - 1).c_str());
    p.kind = name.substr(second + 1);
    return p;
}

}  // namespace

std::vector<AttnDump> dump_attention(const CassNatModel& model, const TensorPtr& features,
                                     const AttnSelector& sel) {
    AttentionTrace trace;
    decode_greedy(model, features, &trace);

    std::vector<AttnDump> dumps;
    for (const auto& module : sel.modules) {
        std::string want_module = module;
        std::string want_kind = "self";
        if (module == "tae") want_kind = "cross";
        if (module == "mad_cross") {
            want_module = "mad";
            want_kind = "cross";
        }
        int max_layer = -1;
        for (const auto& e : trace.entries) {
            auto p = parse_trace_name(e.name);
            if (p.module == want_module && p.kind == want_kind) max_layer = std::max(max_layer, p.layer);
        }
        if (max_layer < 0) {
            throw UsageError("attention dump: no '" + module + "' weights retained (unknown module "
                             "or the utterance decoded to the empty sequence)");
        }
        int layer = sel.layer < 0 ? max_layer : sel.layer;
        if (layer > max_layer) {
            throw UsageError("attention dump: layer " + std::to_string(layer) + " out of range for '" +
                             module + "' (have 0.." + std::to_string(max_layer) + ")");
        }
        int n_heads = 0;
        for (const auto& e : trace.entries) {
            auto p = parse_trace_name(e.name);
            if (p.module == want_module && p.kind == want_kind && p.layer == layer) {
                ++n_heads;
            }
        }
        std::vector<int> heads = sel.heads;
        if (heads.empty()) {
            for (int h = 1; h <= n_heads; ++h) heads.push_back(h);
        }
        for (int h : heads) {
            if (h < 1 || h > n_heads) {
                throw UsageError("attention dump: head " + std::to_string(h) + " out of range 1.." +
                                 std::to_string(n_heads));
            }
            for (const auto& e : trace.entries) {
                auto p = parse_trace_name(e.name);
                if (p.module == want_module && p.kind == want_kind && p.layer == layer &&
                    e.head == h - 1) {
                    dumps.push_back(AttnDump{module + std::to_string(layer), h, e.weights});
                }
            }
        }
    }
    return dumps;
}

std::string format_attention_dumps(const std::vector<AttnDump>& dumps) {
    std::string out;
    char buf[64];
    for (const auto& d : dumps) {
        std::snprintf(buf, sizeof(buf), "# layer=%s head=%d rows=%d cols=%d\n", d.tag.c_str(), d.head,
                      d.weights->rows(), d.weights->cols());
        out += buf;
        for (int i = 0; i < d.weights->rows(); ++i) {
            for (int j = 0; j < d.weights->cols(); ++j) {
                std::snprintf(buf, sizeof(buf), j ? " %.17g" : "%.17g", d.weights->at(i, j));
                out += buf;
            }
            out += '\n';
        }
    }
    return out;
}

EmbeddingTable extract_embeddings(const CassNatModel& model, const std::vector<Utterance>& utts,
                                  ExtractStats* stats) {
    EmbeddingTable table;
    for (const auto& utt : utts) {
        RunContext ctx;
        ForwardArtifacts art;
        try {
            art = forward_train(ctx, model, utt.features, utt.labels);
        } catch (const InfeasibleError&) {
            if (stats) ++stats->skipped;
            continue;
        }
        for (size_t u = 0; u < utt.labels.size(); ++u) {
            std::vector<double> row(art.token_embeddings->v.begin() + static_cast<int64_t>(u) * art.token_embeddings->cols(),
                                    art.token_embeddings->v.begin() + static_cast<int64_t>(u + 1) * art.token_embeddings->cols());
            table.add(utt.labels[u], row);
        }
        if (stats) ++stats->used;
    }
    return table;
}

std::vector<Neighbor> cosine_neighbors(const EmbeddingTable& table, int token, int n) {
    if (n < 1) throw ParameterError("cosine_neighbors: need n >= 1");
    auto norm_of = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    auto query = table.mean(token);
    double qn = norm_of(query);
    if (qn < 1e-12) {
        throw DegenerateError("cosine_neighbors: token " + std::to_string(token) +
                              " has a zero-norm embedding");
    }
    std::vector<Neighbor> all;
    for (int id : table.token_ids()) {
        if (id == token) continue;
        auto cand = table.mean(id);
        double cn = norm_of(cand);
        if (cn < 1e-12) {
            throw DegenerateError("cosine_neighbors: token " + std::to_string(id) +
                                  " has a zero-norm embedding");
        }
        double dot = 0;
        for (size_t i = 0; i < cand.size(); ++i) dot += query[i] * cand[i];
        all.push_back(Neighbor{id, dot / (qn * cn)});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.token < b.token;
    });
    if (static_cast<int>(all.size()) > n) all.resize(static_cast<size_t>(n));
    return all;
}

Pca2dResult pca_2d(const std::vector<std::vector<double>>& vectors) {
    if (vectors.size() < 2) throw DegenerateError("pca: need at least 2 vectors");
    int n = static_cast<int>(vectors.size());
    int d = static_cast<int>(vectors[0].size());
    if (d < 2) throw DegenerateError("pca: need dimension >= 2");
    for (const auto& v : vectors) {
        if (static_cast<int>(v.size()) != d) throw DimensionError("pca: ragged input vectors");
    }

    Pca2dResult res;
    res.mean.assign(static_cast<size_t>(d), 0.0);
    for (const auto& v : vectors) {
        for (int i = 0; i < d; ++i) res.mean[static_cast<size_t>(i)] += v[static_cast<size_t>(i)];
    }
    for (auto& m : res.mean) m /= n;

    // Sample covariance of the centered data.
    std::vector<double> a(static_cast<size_t>(d) * d, 0.0);
    for (const auto& v : vectors) {
        for (int i = 0; i < d; ++i) {
            double ci = v[static_cast<size_t>(i)] - res.mean[static_cast<size_t>(i)];
            for (int j = i; j < d; ++j) {
                double cj = v[static_cast<size_t>(j)] - res.mean[static_cast<size_t>(j)];
                a[static_cast<size_t>(i) * d + j] += ci * cj;
            }
        }
    }
    double inv = 1.0 / static_cast<double>(n - 1);
    double trace = 0;
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            a[static_cast<size_t>(i) * d + j] *= inv;
            a[static_cast<size_t>(j) * d + i] = a[static_cast<size_t>(i) * d + j];
        }
        trace += a[static_cast<size_t>(i) * d + i];
    }
    if (trace < 1e-24) throw DegenerateError("pca: data has rank 0");

    // Cyclic Jacobi on the symmetric matrix, eigenvectors accumulated in v.
    std::vector<double> vecs(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) vecs[static_cast<size_t>(i) * d + i] = 1.0;
    auto off_norm = [&]() {
        double s = 0;
        for (int i = 0; i < d; ++i) {
            for (int j = i + 1; j < d; ++j) s += 2.0 * a[static_cast<size_t>(i) * d + j] * a[static_cast<size_t>(i) * d + j];
        }
        return std::sqrt(s);
    };
    for (int sweep = 0; sweep < 100 && off_norm() > 1e-12; ++sweep) {
        for (int p = 0; p < d - 1; ++p) {
            for (int q = p + 1; q < d; ++q) {
                double apq = a[static_cast<size_t>(p) * d + q];
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a[static_cast<size_t>(q) * d + q] - a[static_cast<size_t>(p) * d + p]) /
                               (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                double app = a[static_cast<size_t>(p) * d + p];
                double aqq = a[static_cast<size_t>(q) * d + q];
                a[static_cast<size_t>(p) * d + p] = app - t * apq;
                a[static_cast<size_t>(q) * d + q] = aqq + t * apq;
                a[static_cast<size_t>(p) * d + q] = 0.0;
                a[static_cast<size_t>(q) * d + p] = 0.0;
                for (int i = 0; i < d; ++i) {
                    if (i != p && i != q) {
                        double aip = a[static_cast<size_t>(i) * d + p];
                        double aiq = a[static_cast<size_t>(i) * d + q];
                        a[static_cast<size_t>(i) * d + p] = c * aip - s * aiq;
                        a[static_cast<size_t>(p) * d + i] = a[static_cast<size_t>(i) * d + p];
                        a[static_cast<size_t>(i) * d + q] = s * aip + c * aiq;
                        a[static_cast<size_t>(q) * d + i] = a[static_cast<size_t>(i) * d + q];
                    }
                    double vip = vecs[static_cast<size_t>(i) * d + p];
                    double viq = vecs[static_cast<size_t>(i) * d + q];
                    vecs[static_cast<size_t>(i) * d + p] = c * vip - s * viq;
                    vecs[static_cast<size_t>(i) * d + q] = s * vip + c * viq;
                }
            }
        }
    }

    // Top-2 eigenpairs by value.
    std::vector<int> order(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return a[static_cast<size_t>(x) * d + x] > a[static_cast<size_t>(y) * d + y];
    });
    auto column = [&](int idx) {
        std::vector<double> col(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) col[static_cast<size_t>(i)] = vecs[static_cast<size_t>(i) * d + idx];
        // Sign convention: first non-negligible coordinate positive.
        for (double x : col) {
            if (std::abs(x) > 1e-12) {
                if (x < 0) {
                    for (auto& y : col) y = -y;
                }
                break;
            }
        }
        return col;
    };
    res.axis1 = column(order[0]);
    res.axis2 = column(order[1]);
    double l1 = std::max(0.0, a[static_cast<size_t>(order[0]) * d + order[0]]);
    double l2 = std::max(0.0, a[static_cast<size_t>(order[1]) * d + order[1]]);
    res.explained = {l1 / trace, l2 / trace};

    res.coords.reserve(vectors.size());
    for (const auto& v : vectors) {
        double x = 0, y = 0;
        for (int i = 0; i < d; ++i) {
            double ci = v[static_cast<size_t>(i)] - res.mean[static_cast<size_t>(i)];
            x += ci * res.axis1[static_cast<size_t>(i)];
            y += ci * res.axis2[static_cast<size_t>(i)];
        }
        res.coords.push_back({x, y});
    }
    return res;
}

}  // namespace cassnat
