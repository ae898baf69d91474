#include "deepform/grouprec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "deepform/cluster.hpp"
#include "deepform/io.hpp"
#include "deepform/rng.hpp"

namespace deepform::grouprec {

namespace {

using Clock = std::chrono::steady_clock;

}  // namespace

Strategy strategy_from_name(const std::string& name) {
    if (name == "avg") return Strategy::Avg;
    if (name == "bc") return Strategy::Borda;
    if (name == "lm") return Strategy::LeastMisery;
    throw UsageError("unknown strategy '" + name + "' (expected avg|bc|lm)");
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Avg: return "avg";
        case Strategy::Borda: return "bc";
        default: return "lm";
    }
}

std::vector<uint32_t> candidate_items(const std::vector<uint32_t>& members, const Csr& x_train) {
    std::vector<bool> rated(x_train.cols, false);
    for (uint32_t u : members)
        for (size_t k = x_train.offs[u]; k < x_train.offs[u + 1]; ++k) rated[x_train.col[k]] = true;
    std::vector<uint32_t> out;
    for (uint32_t i = 0; i < x_train.cols; ++i)
        if (!rated[i]) out.push_back(i);
    return out;
}

std::vector<double> aggregate_avg(const std::vector<uint32_t>& members, const Csr& x_train,
                                  const std::vector<uint32_t>& candidates) {
    if (members.empty()) throw DataError("empty group");
    std::vector<double> scores(candidates.size(), 0.0);
    for (uint32_t u : members) {
        for (size_t k = x_train.offs[u]; k < x_train.offs[u + 1]; ++k) {
            auto it = std::lower_bound(candidates.begin(), candidates.end(), x_train.col[k]);
            if (it != candidates.end() && *it == x_train.col[k])
                scores[static_cast<size_t>(it - candidates.begin())] += x_train.val[k];
        }
    }
    double inv = 1.0 / static_cast<double>(members.size());
    for (double& s : scores) s *= inv;
    return scores;
}

std::vector<double> aggregate_least_misery(const std::vector<uint32_t>& members,
                                           const Csr& x_train,
                                           const std::vector<uint32_t>& candidates) {
    if (members.empty()) throw DataError("empty group");
    std::vector<double> scores(candidates.size(), std::numeric_limits<double>::infinity());
    std::vector<size_t> raters(candidates.size(), 0);
    for (uint32_t u : members) {
        for (size_t k = x_train.offs[u]; k < x_train.offs[u + 1]; ++k) {
            auto it = std::lower_bound(candidates.begin(), candidates.end(), x_train.col[k]);
            if (it != candidates.end() && *it == x_train.col[k]) {
                size_t pos = static_cast<size_t>(it - candidates.begin());
                scores[pos] = std::min(scores[pos], x_train.val[k]);
                raters[pos]++;
            }
        }
    }
    // any member without a rating pulls the minimum to 0
    for (size_t i = 0; i < scores.size(); ++i)
        if (raters[i] < members.size()) scores[i] = 0.0;
    return scores;
}

std::vector<double> aggregate_borda(const std::vector<uint32_t>& members, const Csr& x_train,
                                    const std::vector<uint32_t>& candidates) {
    if (members.empty()) throw DataError("empty group");
    size_t m = candidates.size();
    std::vector<double> totals(m, 0.0);
    std::vector<double> ratings(m);
    std::vector<size_t> order(m);

    for (uint32_t u : members) {
        std::fill(ratings.begin(), ratings.end(), 0.0);
        for (size_t k = x_train.offs[u]; k < x_train.offs[u + 1]; ++k) {
            auto it = std::lower_bound(candidates.begin(), candidates.end(), x_train.col[k]);
            if (it != candidates.end() && *it == x_train.col[k])
                ratings[static_cast<size_t>(it - candidates.begin())] = x_train.val[k];
        }
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (ratings[a] != ratings[b]) return ratings[a] > ratings[b];
            return a < b;
        });
        // tied ratings share the mean of their positions' points
        size_t pos = 0;
        while (pos < m) {
            size_t end = pos;
            while (end < m && ratings[order[end]] == ratings[order[pos]]) ++end;
            // positions pos..end-1 (0-based); points m-1-position
            double mean_pts =
                static_cast<double>(m - 1) - 0.5 * static_cast<double>(pos + end - 1);
            for (size_t i = pos; i < end; ++i) totals[order[i]] += mean_pts;
            pos = end;
        }
    }
    return totals;
}

std::vector<double> aggregate(Strategy s, const std::vector<uint32_t>& members,
                              const Csr& x_train, const std::vector<uint32_t>& candidates) {
    switch (s) {
        case Strategy::Avg: return aggregate_avg(members, x_train, candidates);
        case Strategy::Borda: return aggregate_borda(members, x_train, candidates);
        default: return aggregate_least_misery(members, x_train, candidates);
    }
}

std::vector<uint32_t> rank_items(const std::vector<uint32_t>& candidates,
                                 const std::vector<double>& scores, size_t top_k) {
    std::vector<size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a] < candidates[b];
    });
    size_t n = std::min(top_k, order.size());
    std::vector<uint32_t> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = candidates[order[i]];
    return out;
}

std::vector<RankedList> recommend(const groupform::GroupAssignment& ga, const Csr& x_train,
                                  Strategy s, size_t top_k) {
    std::vector<std::vector<uint32_t>> members(ga.k);
    for (uint32_t u = 0; u < ga.membership.size(); ++u) members[ga.membership[u]].push_back(u);

    std::vector<RankedList> lists;
    lists.reserve(ga.k);
    for (int gid = 0; gid < ga.k; ++gid) {
        if (members[gid].empty()) continue;
        auto candidates = candidate_items(members[gid], x_train);
        auto scores = aggregate(s, members[gid], x_train, candidates);
        auto ranked = rank_items(candidates, scores, top_k);

        RankedList rl;
        rl.group_id = static_cast<uint32_t>(gid);
        rl.items = ranked;
        rl.scores.reserve(ranked.size());
        for (uint32_t item : ranked) {
            auto it = std::lower_bound(candidates.begin(), candidates.end(), item);
            rl.scores.push_back(scores[static_cast<size_t>(it - candidates.begin())]);
        }
        lists.push_back(std::move(rl));
    }
    return lists;
}

void save_ranked_lists(const std::vector<RankedList>& lists, const std::string& path,
                       const std::vector<std::string>* item_ids) {
    std::ostringstream os;
    os << "group_id,rank,item_id,score\n";
    char buf[64];
    for (const auto& rl : lists) {
        for (size_t r = 0; r < rl.items.size(); ++r) {
            os << rl.group_id << ',' << (r + 1) << ',';
            if (item_ids)
                os << (*item_ids)[rl.items[r]];
            else
                os << rl.items[r];
            std::snprintf(buf, sizeof(buf), ",%.9g\n", rl.scores[r]);
            os << buf;
        }
    }
    write_text_file_atomic(path, os.str());
}

double pearson_corated(const Csr& x, size_t u, size_t v) {
    size_t i = x.offs[u], ie = x.offs[u + 1];
    size_t j = x.offs[v], je = x.offs[v + 1];
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    size_t n = 0;
    while (i < ie && j < je) {
        if (x.col[i] < x.col[j]) {
            ++i;
        } else if (x.col[i] > x.col[j]) {
            ++j;
        } else {
            double a = x.val[i], b = x.val[j];
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
            ++n;
            ++i;
            ++j;
        }
    }
    if (n < 2) return 0.0;
    double nn = static_cast<double>(n);
    double cov = sxy - sx * sy / nn;
    double vx = sxx - sx * sx / nn;
    double vy = syy - sy * sy / nn;
    if (vx <= 1e-12 || vy <= 1e-12) return 0.0;
    return cov / std::sqrt(vx * vy);
}

groupform::GroupAssignment baseline_similarity_groups(const Csr& x_train, int k, uint64_t seed) {
    size_t n = x_train.rows;
    if (k < 1) throw UsageError("K must be >= 1");
    if (static_cast<size_t>(k) > n) throw DataError("K exceeds the number of users");
    auto t0 = Clock::now();

    Rng rng(splitmix64(seed));
    std::vector<uint32_t> seeds;
    seeds.reserve(k);
    std::vector<bool> is_seed(n, false);
    uint32_t first = static_cast<uint32_t>(rng.uniform_u64(n));
    seeds.push_back(first);
    is_seed[first] = true;

    // farthest-first: next seed maximizes its distance (1 - corr) to the
    // closest chosen seed
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    while (seeds.size() < static_cast<size_t>(k)) {
        uint32_t last = seeds.back();
        for (size_t u = 0; u < n; ++u) {
            if (is_seed[u]) continue;
            double dist = 1.0 - pearson_corated(x_train, u, last);
            min_dist[u] = std::min(min_dist[u], dist);
        }
        double best = -1.0;
        uint32_t pick = 0;
        bool found = false;
        for (size_t u = 0; u < n; ++u) {
            if (is_seed[u]) continue;
            if (min_dist[u] > best) {
                best = min_dist[u];
                pick = static_cast<uint32_t>(u);
                found = true;
            }
        }
        if (!found) break;
        seeds.push_back(pick);
        is_seed[pick] = true;
    }

    groupform::GroupAssignment ga;
    ga.k = static_cast<int>(seeds.size());
    ga.membership.assign(n, 0);
    for (size_t s = 0; s < seeds.size(); ++s) ga.membership[seeds[s]] = static_cast<uint32_t>(s);
    for (size_t u = 0; u < n; ++u) {
        if (is_seed[u]) continue;
        double best = -std::numeric_limits<double>::infinity();
        uint32_t best_s = 0;
        for (size_t s = 0; s < seeds.size(); ++s) {
            double corr = pearson_corated(x_train, u, seeds[s]);
            if (corr > best) {
                best = corr;
                best_s = static_cast<uint32_t>(s);
            }
        }
        ga.membership[u] = best_s;
    }
    ga.group_sizes.assign(ga.k, 0);
    for (uint32_t m : ga.membership) ga.group_sizes[m]++;
    ga.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return ga;
}

groupform::GroupAssignment baseline_kmeans_groups(const Csr& x_train, int k, uint64_t seed) {
    auto t0 = Clock::now();
    Mat dense = x_train.to_dense();
    auto km = cluster::kmeans(dense, k, seed);
    groupform::GroupAssignment ga;
    ga.k = k;
    ga.membership = std::move(km.assign);
    ga.group_sizes.assign(k, 0);
    for (uint32_t m : ga.membership) ga.group_sizes[m]++;
    ga.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return ga;
}

Mat spectral_project(const Csr& x, size_t r, uint64_t seed, int iterations) {
    size_t n_items = x.cols;
    size_t r_eff = std::min({r, x.rows, x.cols});
    Rng rng(splitmix64(seed));

    Mat v(n_items, r_eff);
    for (double& e : v.a) e = rng.normal();

    auto orthonormalize = [&](Mat& m) {
        for (size_t j = 0; j < m.cols; ++j) {
            for (size_t p = 0; p < j; ++p) {
                double dot = 0.0;
                for (size_t i = 0; i < m.rows; ++i) dot += m(i, j) * m(i, p);
                for (size_t i = 0; i < m.rows; ++i) m(i, j) -= dot * m(i, p);
            }
            double norm = 0.0;
            for (size_t i = 0; i < m.rows; ++i) norm += m(i, j) * m(i, j);
            norm = std::sqrt(norm);
            if (norm < 1e-12) {
                // degenerate direction; reset to a unit axis
                for (size_t i = 0; i < m.rows; ++i) m(i, j) = 0.0;
                m(j % m.rows, j) = 1.0;
            } else {
                for (size_t i = 0; i < m.rows; ++i) m(i, j) /= norm;
            }
        }
    };

    orthonormalize(v);
    for (int it = 0; it < iterations; ++it) {
        // v <- orth(X^T (X v))
        Mat w = graph::spmv(x, v);  // |U| x r
        Mat v_next(n_items, r_eff);
        for (size_t u = 0; u < x.rows; ++u) {
            const double* wrow = w.row(u);
            for (size_t kk = x.offs[u]; kk < x.offs[u + 1]; ++kk) {
                double xv = x.val[kk];
                double* vrow = v_next.row(x.col[kk]);
                for (size_t c = 0; c < r_eff; ++c) vrow[c] += xv * wrow[c];
            }
        }
        v = std::move(v_next);
        orthonormalize(v);
    }
    return graph::spmv(x, v);  // user scores
}

GmmModel gmm_fit(const Mat& points, int k, uint64_t seed, int max_iter, double var_floor) {
    size_t n = points.rows, d = points.cols;
    if (k < 1) throw UsageError("K must be >= 1");
    if (static_cast<size_t>(k) > n) throw DataError("K exceeds the number of points");

    for (int attempt = 0; attempt < 4; ++attempt) {
        Rng rng(splitmix64(seed + static_cast<uint64_t>(attempt)));

        GmmModel m;
        m.means = Mat(k, d);
        m.variances = Mat(k, d);
        m.weights.assign(k, 1.0 / k);

        // k-means++ style seeding for the means
        std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
        for (int c = 0; c < k; ++c) {
            size_t pick;
            if (c == 0) {
                pick = rng.uniform_u64(n);
            } else {
                double total = std::accumulate(min_d.begin(), min_d.end(), 0.0);
                if (total > 0.0) {
                    double u = rng.uniform() * total;
                    double acc = 0.0;
                    pick = n - 1;
                    for (size_t i = 0; i < n; ++i) {
                        acc += min_d[i];
                        if (u < acc) {
                            pick = i;
                            break;
                        }
                    }
                } else {
                    pick = rng.uniform_u64(n);
                }
            }
            std::copy(points.row(pick), points.row(pick) + d, m.means.row(c));
            for (size_t i = 0; i < n; ++i) {
                double ds = 0.0;
                for (size_t j = 0; j < d; ++j) {
                    double t = points(i, j) - m.means(c, j);
                    ds += t * t;
                }
                min_d[i] = std::min(min_d[i], ds);
            }
        }

        // global per-dim variance as the initial spread
        std::vector<double> mean(d, 0.0), var(d, 0.0);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < d; ++j) mean[j] += points(i, j);
        for (size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < d; ++j) {
                double t = points(i, j) - mean[j];
                var[j] += t * t;
            }
        for (int c = 0; c < k; ++c)
            for (size_t j = 0; j < d; ++j)
                m.variances(c, j) = std::max(var[j] / static_cast<double>(n), var_floor);

        Mat resp(n, k);
        bool failed = false;
        double prev_ll = -std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < max_iter; ++iter) {
            // E step
            double ll = 0.0;
            for (size_t i = 0; i < n; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (int c = 0; c < k; ++c) {
                    double lp = std::log(std::max(m.weights[c], 1e-300));
                    for (size_t j = 0; j < d; ++j) {
                        double v = m.variances(c, j);
                        double t = points(i, j) - m.means(c, j);
                        lp += -0.5 * (std::log(2.0 * M_PI * v) + t * t / v);
                    }
                    resp(i, c) = lp;
                    mx = std::max(mx, lp);
                }
                double sum = 0.0;
                for (int c = 0; c < k; ++c) sum += std::exp(resp(i, c) - mx);
                double lse = mx + std::log(sum);
                ll += lse;
                for (int c = 0; c < k; ++c) resp(i, c) = std::exp(resp(i, c) - lse);
            }
            if (!std::isfinite(ll)) {
                failed = true;
                break;
            }
            m.log_likelihood_path.push_back(ll);

            // M step
            for (int c = 0; c < k; ++c) {
                double nc = 0.0;
                for (size_t i = 0; i < n; ++i) nc += resp(i, c);
                nc = std::max(nc, 1e-10);
                m.weights[c] = nc / static_cast<double>(n);
                for (size_t j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (size_t i = 0; i < n; ++i) s += resp(i, c) * points(i, j);
                    m.means(c, j) = s / nc;
                }
                for (size_t j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (size_t i = 0; i < n; ++i) {
                        double t = points(i, j) - m.means(c, j);
                        s += resp(i, c) * t * t;
                    }
                    m.variances(c, j) = std::max(s / nc, var_floor);
                }
            }

            if (iter > 0 && std::abs(ll - prev_ll) < 1e-9 * std::max(1.0, std::abs(ll))) break;
            prev_ll = ll;
        }
        if (!failed) return m;
    }
    throw NumericError("GMM: non-finite likelihood after 3 restarts");
}

std::vector<uint32_t> gmm_hard_assign(const GmmModel& m, const Mat& points) {
    size_t n = points.rows, d = points.cols;
    int k = static_cast<int>(m.means.rows);
    std::vector<uint32_t> assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            double lp = std::log(std::max(m.weights[c], 1e-300));
            for (size_t j = 0; j < d; ++j) {
                double v = m.variances(c, j);
                double t = points(i, j) - m.means(c, j);
                lp += -0.5 * (std::log(2.0 * M_PI * v) + t * t / v);
            }
            if (lp > best) {
                best = lp;
                assign[i] = static_cast<uint32_t>(c);
            }
        }
    }
    return assign;
}

groupform::GroupAssignment baseline_gmm_groups(const Csr& x_train, int k, uint64_t seed,
                                               size_t reduce_dim) {
    auto t0 = Clock::now();
    Mat reduced = spectral_project(x_train, reduce_dim, seed);
    GmmModel m = gmm_fit(reduced, k, seed);
    groupform::GroupAssignment ga;
    ga.k = k;
    ga.membership = gmm_hard_assign(m, reduced);
    ga.group_sizes.assign(k, 0);
    for (uint32_t mm : ga.membership) ga.group_sizes[mm]++;
    ga.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return ga;
}

}  // namespace deepform::grouprec
