#pragma once

#include <cstdint>
#include <vector>

#include "deepform/mat.hpp"
#include "deepform/rng.hpp"

namespace deepform::contrastive {

enum class NceDenominator { WithPositive, NegativesOnly };

struct Triplet {
    uint32_t anchor;
    uint32_t cluster;
    uint32_t negative;
};

struct NceTuple {
    uint32_t anchor;
    uint32_t positive;
    std::vector<uint32_t> negatives;
};

// One triplet per anchor with >= 1 user outside its cluster; one nce tuple
// per anchor whose cluster has >= 2 members.
struct ContrastBatch {
    std::vector<Triplet> triplets;
    std::vector<NceTuple> nce_tuples;
};

ContrastBatch sample_batch(const std::vector<uint32_t>& hard_assign, int k, Rng& rng,
                           int n_neg);

// mean over triplets of max{0, ||z_u - mu_c|| - ||z_n - mu_c|| + delta}
double triplet_loss(const ContrastBatch& batch, const Mat& z, const Mat& centroids,
                    double delta);
double triplet_loss_grad(const ContrastBatch& batch, const Mat& z, const Mat& centroids,
                         double delta, Mat& gz_out, Mat& gmu_out);

// mean over tuples of -log( exp(s+/tau) / denominator ). The denominator
// includes the positive by default (bounds the loss at >= 0); the
// negatives-only printed form stays available for fidelity checks.
double infonce_loss(const ContrastBatch& batch, const Mat& z, double tau,
                    NceDenominator denom = NceDenominator::WithPositive);
double infonce_loss_grad(const ContrastBatch& batch, const Mat& z, double tau,
                         NceDenominator denom, Mat& gz_out);

}  // namespace deepform::contrastive
