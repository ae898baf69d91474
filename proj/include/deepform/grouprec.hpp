#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepform/csr.hpp"
#include "deepform/groupform.hpp"

namespace deepform::grouprec {

enum class Strategy { Avg, Borda, LeastMisery };

Strategy strategy_from_name(const std::string& name);
const char* strategy_name(Strategy s);

// Items absent from every member's training profile.
std::vector<uint32_t> candidate_items(const std::vector<uint32_t>& members, const Csr& x_train);

// score(i) = mean over members of the member's training rating (missing = 0)
std::vector<double> aggregate_avg(const std::vector<uint32_t>& members, const Csr& x_train,
                                  const std::vector<uint32_t>& candidates);

// rank-position points per member (best of m candidates gets m-1, ties
// share the mean of their positions' points), summed over members
std::vector<double> aggregate_borda(const std::vector<uint32_t>& members, const Csr& x_train,
                                    const std::vector<uint32_t>& candidates);

// score(i) = min over members of the member's rating (missing = 0)
std::vector<double> aggregate_least_misery(const std::vector<uint32_t>& members,
                                           const Csr& x_train,
                                           const std::vector<uint32_t>& candidates);

std::vector<double> aggregate(Strategy s, const std::vector<uint32_t>& members,
                              const Csr& x_train, const std::vector<uint32_t>& candidates);

// Candidates ordered by descending score, ties by ascending item index.
std::vector<uint32_t> rank_items(const std::vector<uint32_t>& candidates,
                                 const std::vector<double>& scores, size_t top_k);

struct RankedList {
    uint32_t group_id = 0;
    std::vector<uint32_t> items;   // best first
    std::vector<double> scores;    // aligned with items
};

std::vector<RankedList> recommend(const groupform::GroupAssignment& ga, const Csr& x_train,
                                  Strategy s, size_t top_k);

// `group_id,rank,item_id,score`
void save_ranked_lists(const std::vector<RankedList>& lists, const std::string& path,
                       const std::vector<std::string>* item_ids = nullptr);

// --- classical group-formation baselines ---

// Farthest-first seeds under Pearson-correlation similarity; remaining
// users join the seed they correlate with best (>= 2 co-rated items
// required, degenerate variance counts as 0).
groupform::GroupAssignment baseline_similarity_groups(const Csr& x_train, int k, uint64_t seed);

// K-Means directly on the normalized rating rows.
groupform::GroupAssignment baseline_kmeans_groups(const Csr& x_train, int k, uint64_t seed);

// Diagonal-covariance EM on a truncated spectral projection of X.
groupform::GroupAssignment baseline_gmm_groups(const Csr& x_train, int k, uint64_t seed,
                                               size_t reduce_dim = 32);

// power-iteration projection of the rows of x onto its top-r right
// singular subspace (exposed for tests)
Mat spectral_project(const Csr& x, size_t r, uint64_t seed, int iterations = 12);

struct GmmModel {
    Mat means;          // K x d
    Mat variances;      // K x d, floored
    std::vector<double> weights;
    std::vector<double> log_likelihood_path;  // per EM iteration
};

GmmModel gmm_fit(const Mat& points, int k, uint64_t seed, int max_iter = 100,
                 double var_floor = 1e-6);
std::vector<uint32_t> gmm_hard_assign(const GmmModel& m, const Mat& points);

// Pearson correlation over co-rated items (0 when < 2 co-rated or a
// degenerate variance)
double pearson_corated(const Csr& x, size_t u, size_t v);

}  // namespace deepform::grouprec
