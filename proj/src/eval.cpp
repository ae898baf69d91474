#include "deepform/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_set>

#include "deepform/rng.hpp"

namespace deepform::eval {

namespace {

double log2d(double x) { return std::log(x) / std::log(2.0); }

double binom2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double ndcg_at_k(const std::vector<uint32_t>& ranked, const std::vector<uint32_t>& relevant,
                 size_t k) {
    if (relevant.empty()) return 0.0;
    std::unordered_set<uint32_t> rel(relevant.begin(), relevant.end());
    double dcg = 0.0;
    size_t top = std::min(k, ranked.size());
    for (size_t r = 0; r < top; ++r) {
        if (rel.count(ranked[r])) dcg += 1.0 / log2d(static_cast<double>(r) + 2.0);
    }
    double idcg = 0.0;
    size_t ideal = std::min(k, rel.size());
    for (size_t r = 0; r < ideal; ++r) idcg += 1.0 / log2d(static_cast<double>(r) + 2.0);
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

double hr_at_k(const std::vector<uint32_t>& ranked, const std::vector<uint32_t>& relevant,
               size_t k) {
    if (relevant.empty()) return 0.0;
    std::unordered_set<uint32_t> rel(relevant.begin(), relevant.end());
    size_t top = std::min(k, ranked.size());
    for (size_t r = 0; r < top; ++r)
        if (rel.count(ranked[r])) return 1.0;
    return 0.0;
}

MetricsReport evaluate_pipeline(const groupform::GroupAssignment& ga, grouprec::Strategy strategy,
                                const ingest::Dataset& ds, const EvalOptions& opts) {
    if (ga.membership.size() != ds.n_users())
        throw DataError("group assignment does not cover the dataset's users");

    int max_k = 0;
    for (int k : opts.k_list) max_k = std::max(max_k, k);

    std::vector<std::vector<uint32_t>> members(ga.k);
    for (uint32_t u = 0; u < ga.membership.size(); ++u) members[ga.membership[u]].push_back(u);

    MetricsReport rep;
    rep.seed = opts.seed;
    rep.group_count = 0;
    for (const auto& m : members)
        if (!m.empty()) rep.group_count++;

    std::vector<double> ndcg_sum(opts.k_list.size(), 0.0), hr_sum(opts.k_list.size(), 0.0);
    size_t covered = 0;

    for (int gid = 0; gid < ga.k; ++gid) {
        if (members[gid].empty()) continue;

        std::vector<uint32_t> candidates;
        if (opts.sampled_negatives > 0) {
            // member test items plus sampled non-interacted items
            std::unordered_set<uint32_t> cset;
            Rng rng = derived_rng(opts.seed, 1000003ull + static_cast<uint64_t>(gid));
            for (uint32_t u : members[gid]) {
                std::unordered_set<uint32_t> seen;
                for (size_t k = ds.x_train.offs[u]; k < ds.x_train.offs[u + 1]; ++k)
                    seen.insert(ds.x_train.col[k]);
                for (uint32_t t : ds.test_items[u]) {
                    seen.insert(t);
                    cset.insert(t);
                }
                int added = 0;
                int guard = 0;
                while (added < opts.sampled_negatives && guard++ < 100000) {
                    uint32_t cand = static_cast<uint32_t>(rng.uniform_u64(ds.n_items()));
                    if (seen.count(cand)) continue;
                    if (cset.insert(cand).second) ++added;
                }
            }
            candidates.assign(cset.begin(), cset.end());
            std::sort(candidates.begin(), candidates.end());
        } else {
            candidates = grouprec::candidate_items(members[gid], ds.x_train);
        }

        auto scores = grouprec::aggregate(strategy, members[gid], ds.x_train, candidates);
        auto ranked = grouprec::rank_items(candidates, scores, static_cast<size_t>(max_k));

        for (uint32_t u : members[gid]) {
            if (ds.test_items[u].empty()) continue;
            ++covered;
            for (size_t i = 0; i < opts.k_list.size(); ++i) {
                ndcg_sum[i] += ndcg_at_k(ranked, ds.test_items[u],
                                         static_cast<size_t>(opts.k_list[i]));
                hr_sum[i] += hr_at_k(ranked, ds.test_items[u],
                                     static_cast<size_t>(opts.k_list[i]));
            }
        }
    }

    rep.user_coverage = covered;
    for (size_t i = 0; i < opts.k_list.size(); ++i) {
        MetricsAtK m;
        m.k = opts.k_list[i];
        m.ndcg = covered ? ndcg_sum[i] / static_cast<double>(covered) : 0.0;
        m.hr = covered ? hr_sum[i] / static_cast<double>(covered) : 0.0;
        rep.at_k.push_back(m);
    }
    return rep;
}

double adjusted_rand_index(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
    if (a.size() != b.size()) throw DataError("label vectors differ in length");
    size_t n = a.size();
    if (n == 0) return 1.0;

    std::map<std::pair<uint32_t, uint32_t>, size_t> cont;
    std::map<uint32_t, size_t> ra, rb;
    for (size_t i = 0; i < n; ++i) {
        cont[{a[i], b[i]}]++;
        ra[a[i]]++;
        rb[b[i]]++;
    }

    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, c] : cont) sum_ij += binom2(static_cast<double>(c));
    for (const auto& [key, c] : ra) sum_a += binom2(static_cast<double>(c));
    for (const auto& [key, c] : rb) sum_b += binom2(static_cast<double>(c));

    double total = binom2(static_cast<double>(n));
    double expected = sum_a * sum_b / total;
    double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // both labelings trivial
    return (sum_ij - expected) / (max_index - expected);
}

double normalized_mutual_info(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
    if (a.size() != b.size()) throw DataError("label vectors differ in length");
    size_t n = a.size();
    if (n == 0) return 1.0;

    std::map<std::pair<uint32_t, uint32_t>, size_t> cont;
    std::map<uint32_t, size_t> ra, rb;
    for (size_t i = 0; i < n; ++i) {
        cont[{a[i], b[i]}]++;
        ra[a[i]]++;
        rb[b[i]]++;
    }

    double nn = static_cast<double>(n);
    double mi = 0.0;
    for (const auto& [key, c] : cont) {
        double pij = c / nn;
        double pi = ra[key.first] / nn;
        double pj = rb[key.second] / nn;
        mi += pij * std::log(pij / (pi * pj));
    }
    double ha = 0.0, hb = 0.0;
    for (const auto& [key, c] : ra) {
        double p = c / nn;
        ha -= p * std::log(p);
    }
    for (const auto& [key, c] : rb) {
        double p = c / nn;
        hb -= p * std::log(p);
    }
    if (ha <= 0.0 && hb <= 0.0) return 1.0;  // both single-cluster
    if (ha <= 0.0 || hb <= 0.0) return 0.0;
    return mi / std::sqrt(ha * hb);
}

std::string MetricsReport::to_tsv() const {
    std::ostringstream os;
    os << "k\tndcg\thr\n";
    char buf[96];
    for (const auto& m : at_k) {
        std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\n", m.k, m.ndcg, m.hr);
        os << buf;
    }
    os << "# group_count\t" << group_count << "\n";
    os << "# user_coverage\t" << user_coverage << "\n";
    os << "# seed\t" << seed << "\n";
    return os.str();
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    os << "  k      NDCG@k        HR@k\n";
    char buf[96];
    for (const auto& m : at_k) {
        std::snprintf(buf, sizeof(buf), "%3d  %10.6f  %10.6f\n", m.k, m.ndcg, m.hr);
        os << buf;
    }
    os << "groups: " << group_count << "  users evaluated: " << user_coverage << "\n";
    return os.str();
}

}  // namespace deepform::eval
