#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "deepform/cluster.hpp"
#include "deepform/contrastive.hpp"
#include "deepform/dataset.hpp"
#include "deepform/encoder.hpp"
#include "deepform/graph.hpp"

namespace deepform::trainer {

// Flat key = value config; keys match field names, unknown keys are fatal.
struct TrainConfig {
    double lr = 1e-5;
    int epochs = 200;
    int hops = 2;
    int dim = 64;
    int h1 = 256;
    int h2 = 128;
    int k_max = 128;
    double delta = 1.0;
    double tau = 0.5;
    int n_neg = 5;
    double w_gcn_z = 1.0;
    double w_gcn_a = 1.0;
    double w_ae = 1.0;
    double w_align = 1.0;
    double w_cluster = 1.0;
    double w_contrast = 1.0;
    uint64_t seed = 42;
    int k_resample_every = 1;
    std::string optimizer = "gd";  // gd | adam
    std::string nce_denominator = "with_positive";  // | negatives_only
    std::string loss_sampling = "sampled";          // | exact
    int graph_top_k = 50;
    int kmeans_max_iter = 100;
    double kmeans_tol = 1e-6;

    void validate() const;
    contrastive::NceDenominator nce_mode() const;
    bool exact_sampling() const { return loss_sampling == "exact"; }
};

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string dump_config(const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    int k = 0;
    double loss_total = 0;
    double loss_align = 0;
    double loss_cluster = 0;
    double loss_triplet = 0;
    double loss_nce = 0;
    double grad_norm = 0;
    double wall_ms = 0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;

    static const char* header();
    std::string to_tsv() const;
};

struct TrainResult {
    encoder::ModelParams params;
    TrainLog log;
    double wall_ms = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Full-batch optimization of the composite loss. Deterministic given
// (config, seed) at threads = 1; per-epoch randomness is derived from
// (seed, epoch) so resuming from a checkpoint at epoch e reproduces the
// uninterrupted run exactly under the default resample cadence.
TrainResult train(const ingest::Dataset& ds, const graph::UserGraph& g, const TrainConfig& cfg,
                  int threads = 1, int start_epoch = 0,
                  const encoder::ModelParams* resume_params = nullptr,
                  const EpochCallback& on_epoch = nullptr);

struct GradCheckEntry {
    std::string term;    // loss term
    std::string tensor;  // parameter tensor
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool pass(double tol = 1e-4) const { return max_rel_err <= tol; }
    std::string to_text() const;
};

// Compare analytic gradients of each loss term (and the composite)
// against central finite differences on a small random instance.
GradCheckReport grad_check(size_t n_users, size_t n_items, size_t d, size_t h1, size_t h2,
                           uint64_t seed, int coords_per_tensor = 20);

}  // namespace deepform::trainer
