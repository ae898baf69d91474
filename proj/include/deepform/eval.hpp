#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepform/dataset.hpp"
#include "deepform/groupform.hpp"
#include "deepform/grouprec.hpp"

namespace deepform::eval {

struct MetricsAtK {
    int k = 0;
    double ndcg = 0.0;
    double hr = 0.0;
};

struct MetricsReport {
    std::vector<MetricsAtK> at_k;   // per requested cutoff
    size_t group_count = 0;
    size_t user_coverage = 0;       // users with >= 1 test item
    uint64_t seed = 0;

    std::string to_tsv() const;
    std::string to_table() const;
};

// binary-relevance DCG / IDCG; 0 when the relevant set is empty
double ndcg_at_k(const std::vector<uint32_t>& ranked, const std::vector<uint32_t>& relevant,
                 size_t k);

double hr_at_k(const std::vector<uint32_t>& ranked, const std::vector<uint32_t>& relevant,
               size_t k);

struct EvalOptions {
    std::vector<int> k_list = {5, 10, 20};
    // 0 = rank the full candidate set; > 0 = sampled-candidate mode with
    // this many non-interacted items per member
    int sampled_negatives = 0;
    uint64_t seed = 0;
};

// Build each group's list once, score it against every member's held-out
// items, average per-user.
MetricsReport evaluate_pipeline(const groupform::GroupAssignment& ga, grouprec::Strategy strategy,
                                const ingest::Dataset& ds, const EvalOptions& opts);

// adjusted Rand index and normalized mutual information (geometric-mean
// normalization) from the contingency table
double adjusted_rand_index(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b);
double normalized_mutual_info(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b);

}  // namespace deepform::eval
