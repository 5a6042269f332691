// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "cassnat/model.hpp"
#include "cassnat/training.hpp"

namespace cassnat {

// Running per-token mean of acoustic embeddings. Sums are kept exactly;
// the mean materializes on read, so streaming and two-pass means agree.
class EmbeddingTable {
public:
    void add(int token, const std::vector<double>& vec);
    std::vector<double> mean(int token) const;
    int64_t count(int token) const;
    std::vector<int> token_ids() const;
    size_t size() const { return rows_.size(); }
    bool has(int token) const { return rows_.count(token) != 0; }

private:
    std::map<int, std::pair<std::vector<double>, int64_t>> rows_;
};

// Which attention matrices to export. Modules: "enc", "sad", "mad" select
// self-attention; "mad_cross" and "tae" select cross-attention. Layer -1
// means the last block of that module; heads are 1-based, empty = all.
struct AttnSelector {
    std::vector<std::string> modules{"sad", "mad"};
    int layer = -1;
    std::vector<int> heads;
};

struct AttnDump {
    std::string tag;  // module + layer, e.g. "sad2"
    int head = 0;     // 1-based
    TensorPtr weights;
};

// Runs a greedy decode with weight retention and extracts the selected
// matrices. Ill-formed selectors (unknown module, head/layer out of range)
// raise UsageError.
std::vector<AttnDump> dump_attention(const CassNatModel& model, const TensorPtr& features,
                                     const AttnSelector& sel);

// Text form: "# layer=<tag> head=<h> rows=<n_q> cols=<n_k>" then one
// space-separated line per query row.
std::string format_attention_dumps(const std::vector<AttnDump>& dumps);

struct ExtractStats {
    int used = 0;
    int skipped = 0;  // infeasible utterances
};

// Teacher-aligned forward per utterance; TAE outputs accumulate under their
// ground-truth token ids.
EmbeddingTable extract_embeddings(const CassNatModel& model, const std::vector<Utterance>& utts,
                                  ExtractStats* stats = nullptr);

struct Neighbor {
    int token = 0;
    double similarity = 0.0;
};

// Tokens ranked by descending cosine similarity to the query's mean
// embedding, the query itself excluded. Zero-norm embeddings are an error.
std::vector<Neighbor> cosine_neighbors(const EmbeddingTable& table, int token, int n);

struct Pca2dResult {
    std::vector<std::array<double, 2>> coords;
    std::array<double, 2> explained{};  // fraction of total variance
    std::vector<double> mean;
    std::vector<double> axis1, axis2;  // eigenvectors with positive leading sign
};

// Centers the vectors, eigendecomposes the sample covariance by cyclic
// Jacobi rotations (off-diagonal norm 1e-12, at most 100 sweeps), projects
// onto the top-2 eigenvectors. Requires >= 2 vectors of dimension >= 2 and
// data of rank >= 1.
Pca2dResult pca_2d(const std::vector<std::vector<double>>& vectors);

}  // namespace cassnat
