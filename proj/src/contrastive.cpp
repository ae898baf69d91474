#include "deepform/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "deepform/error.hpp"

namespace deepform::contrastive {

namespace {

double dist(const double* a, const double* b, size_t d) {
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) {
        double t = a[j] - b[j];
        s += t * t;
    }
    return std::sqrt(s);
}

double dot(const double* a, const double* b, size_t d) {
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) s += a[j] * b[j];
    return s;
}

}  // namespace

ContrastBatch sample_batch(const std::vector<uint32_t>& hard_assign, int k, Rng& rng,
                           int n_neg) {
    ContrastBatch batch;
    size_t n = hard_assign.size();
    std::vector<std::vector<uint32_t>> members(k);
    for (uint32_t u = 0; u < n; ++u) members[hard_assign[u]].push_back(u);

    std::vector<std::vector<uint32_t>> outside(k);
    for (int c = 0; c < k; ++c) {
        outside[c].reserve(n - members[c].size());
        for (uint32_t u = 0; u < n; ++u)
            if (hard_assign[u] != static_cast<uint32_t>(c)) outside[c].push_back(u);
    }

    bool any_outside = false;
    for (int c = 0; c < k; ++c)
        if (!outside[c].empty() && !members[c].empty()) any_outside = true;
    if (!any_outside) {
        std::cerr << "warning: all users share one cluster, skipping contrastive batch\n";
        return batch;
    }

    for (uint32_t u = 0; u < n; ++u) {
        uint32_t c = hard_assign[u];
        const auto& out = outside[c];
        if (out.empty()) continue;

        uint32_t neg = out[rng.uniform_u64(out.size())];
        batch.triplets.push_back({u, c, neg});

        const auto& mem = members[c];
        if (mem.size() < 2) continue;  // singleton cluster: no positive
        uint32_t pos_idx = static_cast<uint32_t>(rng.uniform_u64(mem.size() - 1));
        uint32_t pos = mem[pos_idx] == u ? mem[mem.size() - 1] : mem[pos_idx];
        NceTuple t;
        t.anchor = u;
        t.positive = pos;
        t.negatives.resize(static_cast<size_t>(n_neg));
        for (auto& g : t.negatives) g = out[rng.uniform_u64(out.size())];
        batch.nce_tuples.push_back(std::move(t));
    }
    return batch;
}

double triplet_loss(const ContrastBatch& batch, const Mat& z, const Mat& centroids,
                    double delta) {
    if (batch.triplets.empty()) return 0.0;
    size_t d = z.cols;
    double sum = 0.0;
    for (const auto& t : batch.triplets) {
        double du = dist(z.row(t.anchor), centroids.row(t.cluster), d);
        double dn = dist(z.row(t.negative), centroids.row(t.cluster), d);
        sum += std::max(0.0, du - dn + delta);
    }
    return sum / static_cast<double>(batch.triplets.size());
}

double triplet_loss_grad(const ContrastBatch& batch, const Mat& z, const Mat& centroids,
                         double delta, Mat& gz_out, Mat& gmu_out) {
    gz_out = Mat(z.rows, z.cols);
    gmu_out = Mat(centroids.rows, centroids.cols);
    if (batch.triplets.empty()) return 0.0;

    size_t d = z.cols;
    double inv = 1.0 / static_cast<double>(batch.triplets.size());
    double sum = 0.0;
    for (const auto& t : batch.triplets) {
        const double* zu = z.row(t.anchor);
        const double* zn = z.row(t.negative);
        const double* mu = centroids.row(t.cluster);
        double du = dist(zu, mu, d);
        double dn = dist(zn, mu, d);
        double term = du - dn + delta;
        if (term <= 0.0) continue;
        sum += term;
        double* gu = gz_out.row(t.anchor);
        double* gn = gz_out.row(t.negative);
        double* gm = gmu_out.row(t.cluster);
        for (size_t j = 0; j < d; ++j) {
            if (du > 0.0) {
                double dir = (zu[j] - mu[j]) / du;
                gu[j] += inv * dir;
                gm[j] -= inv * dir;
            }
            if (dn > 0.0) {
                double dir = (zn[j] - mu[j]) / dn;
                gn[j] -= inv * dir;
                gm[j] += inv * dir;
            }
        }
    }
    return sum * inv;
}

double infonce_loss(const ContrastBatch& batch, const Mat& z, double tau,
                    NceDenominator denom) {
    if (tau <= 0.0) throw UsageError("tau must be > 0");
    if (batch.nce_tuples.empty()) return 0.0;
    size_t d = z.cols;
    double sum = 0.0;
    for (const auto& t : batch.nce_tuples) {
        const double* zu = z.row(t.anchor);
        double sp = dot(zu, z.row(t.positive), d) / tau;
        double m = denom == NceDenominator::WithPositive
                       ? sp
                       : -std::numeric_limits<double>::infinity();
        std::vector<double> sn(t.negatives.size());
        for (size_t j = 0; j < sn.size(); ++j) {
            sn[j] = dot(zu, z.row(t.negatives[j]), d) / tau;
            m = std::max(m, sn[j]);
        }
        double lse = denom == NceDenominator::WithPositive ? std::exp(sp - m) : 0.0;
        for (double s : sn) lse += std::exp(s - m);
        sum += -sp + m + std::log(lse);
    }
    return sum / static_cast<double>(batch.nce_tuples.size());
}

double infonce_loss_grad(const ContrastBatch& batch, const Mat& z, double tau,
                         NceDenominator denom, Mat& gz_out) {
    gz_out = Mat(z.rows, z.cols);
    if (batch.nce_tuples.empty()) return 0.0;

    size_t d = z.cols;
    double inv = 1.0 / static_cast<double>(batch.nce_tuples.size());
    double sum = 0.0;
    for (const auto& t : batch.nce_tuples) {
        const double* zu = z.row(t.anchor);
        const double* zp = z.row(t.positive);
        double sp = dot(zu, zp, d) / tau;
        double m = denom == NceDenominator::WithPositive
                       ? sp
                       : -std::numeric_limits<double>::infinity();
        std::vector<double> sn(t.negatives.size());
        for (size_t j = 0; j < sn.size(); ++j) {
            sn[j] = dot(zu, z.row(t.negatives[j]), d) / tau;
            m = std::max(m, sn[j]);
        }
        double lse = denom == NceDenominator::WithPositive ? std::exp(sp - m) : 0.0;
        for (double s : sn) lse += std::exp(s - m);
        sum += -sp + m + std::log(lse);

        // d loss / d s+ and d s-_j, then chain through the dot products
        double gp = denom == NceDenominator::WithPositive ? std::exp(sp - m) / lse - 1.0 : -1.0;
        double* gu = gz_out.row(t.anchor);
        double* gpos = gz_out.row(t.positive);
        double cu = inv * gp / tau;
        for (size_t j = 0; j < d; ++j) {
            gu[j] += cu * zp[j];
            gpos[j] += cu * zu[j];
        }
        for (size_t j = 0; j < sn.size(); ++j) {
            double gn = std::exp(sn[j] - m) / lse;
            const double* zn = z.row(t.negatives[j]);
            double* gneg = gz_out.row(t.negatives[j]);
            double cn = inv * gn / tau;
            for (size_t jj = 0; jj < d; ++jj) {
                gu[jj] += cn * zn[jj];
                gneg[jj] += cn * zu[jj];
            }
        }
    }
    return sum * inv;
}

}  // namespace deepform::contrastive
