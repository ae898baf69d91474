#include "deepform/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepform/error.hpp"
#include "deepform/parallel.hpp"

namespace deepform::cluster {

namespace {

double dist_sq(const double* a, const double* b, size_t d) {
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) {
        double t = a[j] - b[j];
        s += t * t;
    }
    return s;
}

bool row_less(const Mat& m, size_t a, size_t b) {
    return std::lexicographical_compare(m.row(a), m.row(a) + m.cols, m.row(b),
                                        m.row(b) + m.cols);
}

// k-means++ D^2 sampling walked over a (value, point)-sorted order so the
// chosen centroids do not depend on input permutation.
Mat seed_centroids(const Mat& points, int k, Rng& rng, const std::vector<uint32_t>& order) {
    size_t n = points.rows, d = points.cols;
    Mat centroids(k, d);
    std::vector<double> min_d(n, std::numeric_limits<double>::infinity());

    for (int c = 0; c < k; ++c) {
        size_t pick = order[0];
        if (c == 0) {
            pick = order[rng.uniform_u64(n)];
        } else {
            double total = 0.0;
            for (size_t i = 0; i < n; ++i) total += min_d[order[i]];
            if (total > 0.0) {
                double u = rng.uniform() * total;
                double acc = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    acc += min_d[order[i]];
                    if (u < acc || i == n - 1) {
                        pick = order[i];
                        break;
                    }
                }
            } else {
                pick = order[rng.uniform_u64(n)];  // all points already covered
            }
        }
        std::copy(points.row(pick), points.row(pick) + d, centroids.row(c));
        for (size_t i = 0; i < n; ++i) {
            double ds = dist_sq(points.row(i), centroids.row(c), d);
            min_d[i] = std::min(min_d[i], ds);
        }
    }
    return centroids;
}

void assign_points(const Mat& points, const Mat& centroids, std::vector<uint32_t>& assign,
                   int threads) {
    size_t d = points.cols;
    parallel_for(points.rows, threads, [&](size_t u) {
        double best = std::numeric_limits<double>::infinity();
        uint32_t bc = 0;
        for (size_t c = 0; c < centroids.rows; ++c) {
            double ds = dist_sq(points.row(u), centroids.row(c), d);
            if (ds < best) {
                best = ds;
                bc = static_cast<uint32_t>(c);
            }
        }
        assign[u] = bc;
    });
}

// Fill every empty cluster with the farthest point of a donor cluster
// that has at least two members.
void repair_empty(const Mat& points, Mat& centroids, std::vector<uint32_t>& assign,
                  const std::vector<uint32_t>& order) {
    size_t d = points.cols;
    size_t k = centroids.rows;
    std::vector<size_t> sizes(k, 0);
    for (uint32_t a : assign) sizes[a]++;

    for (size_t e = 0; e < k; ++e) {
        if (sizes[e] > 0) continue;
        double best_d = -1.0;
        size_t best_u = points.rows;
        for (uint32_t u : order) {
            if (sizes[assign[u]] < 2) continue;
            double ds = dist_sq(points.row(u), centroids.row(assign[u]), d);
            if (ds > best_d) {
                best_d = ds;
                best_u = u;
            }
        }
        if (best_u == points.rows) continue;  // k > n, caller rejects this
        sizes[assign[best_u]]--;
        assign[best_u] = static_cast<uint32_t>(e);
        sizes[e] = 1;
        std::copy(points.row(best_u), points.row(best_u) + d, centroids.row(e));
    }
}

double total_inertia(const Mat& points, const Mat& centroids,
                     const std::vector<uint32_t>& assign) {
    double s = 0.0;
    for (size_t u = 0; u < points.rows; ++u)
        s += dist_sq(points.row(u), centroids.row(assign[u]), points.cols);
    return s;
}

}  // namespace

int sample_k(int k_max, Rng& rng) {
    if (k_max < 2) throw UsageError("k_max must be >= 2");
    return rng.uniform_int(2, k_max);
}

KMeansResult kmeans(const Mat& points, int k, uint64_t seed, int max_iter, double tol,
                    int threads) {
    size_t n = points.rows;
    if (k < 1) throw UsageError("K must be >= 1");
    if (static_cast<size_t>(k) > n) throw DataError("K exceeds the number of points");

    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](uint32_t a, uint32_t b) { return row_less(points, a, b); });

    Rng rng(splitmix64(seed));
    KMeansResult res;
    res.centroids = seed_centroids(points, k, rng, order);
    res.assign.assign(n, 0);

    size_t d = points.cols;
    assign_points(points, res.centroids, res.assign, threads);
    repair_empty(points, res.centroids, res.assign, order);

    std::vector<uint32_t> prev = res.assign;
    for (int iter = 1; iter <= max_iter; ++iter) {
        res.iterations = iter;

        // means, accumulated in sorted order for permutation stability
        Mat next(k, d);
        std::vector<size_t> sizes(k, 0);
        for (uint32_t u : order) {
            double* crow = next.row(res.assign[u]);
            const double* prow = points.row(u);
            for (size_t j = 0; j < d; ++j) crow[j] += prow[j];
            sizes[res.assign[u]]++;
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            double* crow = next.row(c);
            for (size_t j = 0; j < d; ++j) crow[j] /= static_cast<double>(sizes[c]);
            shift = std::max(shift, dist_sq(crow, res.centroids.row(c), d));
        }
        res.centroids = std::move(next);

        assign_points(points, res.centroids, res.assign, threads);
        repair_empty(points, res.centroids, res.assign, order);

        bool stable = res.assign == prev;
        prev = res.assign;
        if (stable || shift < tol * tol) break;
    }

    res.inertia = total_inertia(points, res.centroids, res.assign);
    return res;
}

Mat soft_assign(const Mat& z, const Mat& centroids) {
    size_t n = z.rows, k = centroids.rows, d = z.cols;
    Mat q(n, k);
    for (size_t u = 0; u < n; ++u) {
        double sum = 0.0;
        double* qrow = q.row(u);
        for (size_t c = 0; c < k; ++c) {
            qrow[c] = 1.0 / (1.0 + dist_sq(z.row(u), centroids.row(c), d));
            sum += qrow[c];
        }
        for (size_t c = 0; c < k; ++c) qrow[c] /= sum;
    }
    return q;
}

Mat target_distribution(const Mat& q) {
    size_t n = q.rows, k = q.cols;
    std::vector<double> col_mass(k, 0.0);
    for (size_t u = 0; u < n; ++u)
        for (size_t c = 0; c < k; ++c) col_mass[c] += q(u, c);

    Mat p(n, k);
    for (size_t u = 0; u < n; ++u) {
        double sum = 0.0;
        for (size_t c = 0; c < k; ++c) {
            p(u, c) = q(u, c) * q(u, c) / col_mass[c];
            sum += p(u, c);
        }
        for (size_t c = 0; c < k; ++c) p(u, c) /= sum;
    }
    return p;
}

double cluster_loss(const Mat& p, const Mat& q) {
    double s = 0.0;
    for (size_t i = 0; i < p.a.size(); ++i) {
        if (p.a[i] > 0.0) s += p.a[i] * std::log(p.a[i] / q.a[i]);
    }
    return s;
}

void cluster_loss_grad(const Mat& z, const Mat& centroids, const Mat& p, const Mat& q,
                       Mat& gz_out, Mat& gmu_out) {
    size_t n = z.rows, k = centroids.rows, d = z.cols;
    gz_out = Mat(n, d);
    gmu_out = Mat(k, d);
    for (size_t u = 0; u < n; ++u) {
        const double* zrow = z.row(u);
        double* gzrow = gz_out.row(u);
        for (size_t c = 0; c < k; ++c) {
            const double* mu = centroids.row(c);
            double kappa = 1.0 / (1.0 + dist_sq(zrow, mu, d));
            double coef = 2.0 * kappa * (p(u, c) - q(u, c));
            double* gmu = gmu_out.row(c);
            for (size_t j = 0; j < d; ++j) {
                double diff = zrow[j] - mu[j];
                gzrow[j] += coef * diff;
                gmu[j] -= coef * diff;
            }
        }
    }
}

}  // namespace deepform::cluster
