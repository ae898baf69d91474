#pragma once

#include <cstdint>
#include <vector>

#include "deepform/mat.hpp"
#include "deepform/rng.hpp"

namespace deepform::cluster {

// Current cluster count, centroids and the soft/target assignments used
// by the KL loss. Replaced wholesale whenever K is resampled.
struct ClusterState {
    int k = 0;
    Mat centroids;                     // K x d
    Mat q;                             // |U| x K soft assignments
    Mat p;                             // |U| x K sharpened targets
    std::vector<uint32_t> hard_assign; // |U|
};

struct KMeansResult {
    Mat centroids;
    std::vector<uint32_t> assign;
    double inertia = 0.0;
    int iterations = 0;
};

// integer uniform on [2, k_max] inclusive
int sample_k(int k_max, Rng& rng);

// Lloyd with k-means++ seeding. Seeding draws walk a (distance^2, point)
// sorted order so the outcome is invariant to input permutation up to
// label permutation. Empty clusters are re-seeded from the farthest point
// of any cluster with >= 2 members.
KMeansResult kmeans(const Mat& points, int k, uint64_t seed, int max_iter = 100,
                    double tol = 1e-6, int threads = 1);

// q_uc = (1 + ||z_u - mu_c||^2)^{-1}, normalized over c
Mat soft_assign(const Mat& z, const Mat& centroids);

// p_uc = Norm_c[ q_uc^2 / sum_i q_ic ]
Mat target_distribution(const Mat& q);

// KL(P || Q), P treated as constant; gradients flow through Q only.
double cluster_loss(const Mat& p, const Mat& q);

// Gradients of cluster_loss w.r.t. the embeddings and centroids that
// produced q = soft_assign(z, mu).
void cluster_loss_grad(const Mat& z, const Mat& centroids, const Mat& p, const Mat& q,
                       Mat& gz_out, Mat& gmu_out);

}  // namespace deepform::cluster
