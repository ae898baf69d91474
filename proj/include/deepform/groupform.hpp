#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepform/dataset.hpp"
#include "deepform/encoder.hpp"
#include "deepform/graph.hpp"
#include "deepform/mat.hpp"

namespace deepform::groupform {

struct GroupAssignment {
    int k = 0;
    std::vector<uint32_t> membership;  // user -> group id in [0, K)
    std::vector<size_t> group_sizes;
    double wall_ms = 0.0;
};

struct BenchRow {
    int k = 0;
    double wall_ms = 0.0;  // per formation
    int reps = 1;
};

// Single forward pass; Z_final = Z_gcn + Z_AE, quantized to f32 rows.
Mat embed(const encoder::ModelParams& params, const ingest::Dataset& ds,
          const graph::UserGraph& g, int hops, int threads = 1);

// K-Means on the fixed embedding; any K without retraining.
GroupAssignment form_groups(const Mat& z_final, int k, uint64_t seed, int max_iter = 100,
                            double tol = 1e-6, int threads = 1);

// Optional max-group-size repair: oversize groups are split by
// sub-K-Means until every group fits. Off unless max_size > 0.
GroupAssignment form_groups_constrained(const Mat& z_final, int k, uint64_t seed,
                                        size_t max_size, int max_iter = 100, double tol = 1e-6);

// Formation-only timing per requested K. Formations faster than ~5 ms are
// repeated and averaged so the table is stable at desk scale.
std::vector<BenchRow> bench_formation(const Mat& z_final, const std::vector<int>& k_list,
                                      uint64_t seed, int min_reps = 3);

std::string bench_to_tsv(const std::vector<BenchRow>& rows);

void save_embedding(const Mat& z_final, const std::string& path);
Mat load_embedding(const std::string& path);

// Text output `user_id,group_id`; user ids come from the dataset when
// given, else the dense row index.
void save_groups_csv(const GroupAssignment& ga, const std::string& path,
                     const ingest::Dataset* ds = nullptr);
GroupAssignment load_groups_csv(const std::string& path, const ingest::Dataset* ds = nullptr);

}  // namespace deepform::groupform
