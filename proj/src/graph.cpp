#include "deepform/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "deepform/error.hpp"
#include "deepform/parallel.hpp"

namespace deepform::graph {

namespace {

// column -> rows inverted index for the similarity accumulation
struct ColIndex {
    std::vector<uint64_t> offs;
    std::vector<uint32_t> row;
    std::vector<double> val;
};

ColIndex build_col_index(const Csr& x) {
    ColIndex ci;
    ci.offs.assign(x.cols + 1, 0);
    for (uint32_t c : x.col) ci.offs[c + 1]++;
    for (size_t c = 0; c < x.cols; ++c) ci.offs[c + 1] += ci.offs[c];
    ci.row.resize(x.nnz());
    ci.val.resize(x.nnz());
    std::vector<uint64_t> cursor(ci.offs.begin(), ci.offs.end() - 1);
    for (size_t r = 0; r < x.rows; ++r) {
        for (size_t k = x.offs[r]; k < x.offs[r + 1]; ++k) {
            uint64_t pos = cursor[x.col[k]]++;
            ci.row[pos] = static_cast<uint32_t>(r);
            ci.val[pos] = x.val[k];
        }
    }
    return ci;
}

}  // namespace

Csr build_adjacency(const Csr& x, std::optional<size_t> top_k, int threads) {
    size_t n = x.rows;
    ColIndex ci = build_col_index(x);

    // per-row surviving neighbors after the optional top_k cut
    std::vector<std::vector<std::pair<uint32_t, double>>> kept(n);

    parallel_for(n, threads, [&](size_t u) {
        std::vector<double> acc(n, 0.0);
        std::vector<uint32_t> touched;
        for (size_t k = x.offs[u]; k < x.offs[u + 1]; ++k) {
            uint32_t c = x.col[k];
            double xv = x.val[k];
            for (uint64_t j = ci.offs[c]; j < ci.offs[c + 1]; ++j) {
                uint32_t v = ci.row[j];
                if (acc[v] == 0.0 && v != u) touched.push_back(v);
                acc[v] += xv * ci.val[j];
            }
        }
        auto& row = kept[u];
        row.reserve(touched.size());
        for (uint32_t v : touched) {
            double a = std::max(acc[v], 0.0);
            if (a > 0.0) row.emplace_back(v, a);
        }
        if (top_k && row.size() > *top_k) {
            std::nth_element(row.begin(), row.begin() + *top_k, row.end(),
                             [](const auto& a, const auto& b) {
                                 if (a.second != b.second) return a.second > b.second;
                                 return a.first < b.first;
                             });
            row.resize(*top_k);
        }
        std::sort(row.begin(), row.end());
    });

    // re-symmetrize: an edge survives if either direction kept it, with
    // the original (symmetric) value
    std::vector<std::tuple<uint32_t, uint32_t, double>> trips;
    for (size_t u = 0; u < n; ++u) {
        for (const auto& [v, a] : kept[u]) {
            bool mirrored = std::binary_search(
                kept[v].begin(), kept[v].end(), std::make_pair(static_cast<uint32_t>(u), 0.0),
                [](const auto& lhs, const auto& rhs) { return lhs.first < rhs.first; });
            trips.emplace_back(static_cast<uint32_t>(u), v, a);
            if (!mirrored) trips.emplace_back(v, static_cast<uint32_t>(u), a);
        }
    }
    return csr_from_triplets(n, n, std::move(trips));
}

Csr normalize_adjacency(const Csr& adj, std::vector<double>* degree_out) {
    size_t n = adj.rows;
    std::vector<double> deg(n, 1.0);  // self-loop
    for (size_t u = 0; u < n; ++u)
        for (size_t k = adj.offs[u]; k < adj.offs[u + 1]; ++k) deg[u] += adj.val[k];

    std::vector<std::tuple<uint32_t, uint32_t, double>> trips;
    trips.reserve(adj.nnz() + n);
    for (size_t u = 0; u < n; ++u) {
        trips.emplace_back(static_cast<uint32_t>(u), static_cast<uint32_t>(u), 1.0 / deg[u]);
        for (size_t k = adj.offs[u]; k < adj.offs[u + 1]; ++k) {
            uint32_t v = adj.col[k];
            trips.emplace_back(static_cast<uint32_t>(u), v,
                               adj.val[k] / std::sqrt(deg[u] * deg[v]));
        }
    }
    if (degree_out) *degree_out = std::move(deg);
    return csr_from_triplets(n, n, std::move(trips));
}

UserGraph build_user_graph(const Csr& x, std::optional<size_t> top_k, int threads) {
    UserGraph g;
    g.adj = build_adjacency(x, top_k, threads);
    g.norm = normalize_adjacency(g.adj, &g.degree);
    return g;
}

Mat spmv(const Csr& m, const Mat& dense, int threads) {
    if (m.cols != dense.rows) throw NumericError("spmv dimension mismatch");
    Mat out(m.rows, dense.cols);
    parallel_for(m.rows, threads, [&](size_t r) {
        double* orow = out.row(r);
        for (size_t k = m.offs[r]; k < m.offs[r + 1]; ++k) {
            const double* drow = dense.row(m.col[k]);
            double w = m.val[k];
            for (size_t c = 0; c < dense.cols; ++c) orow[c] += w * drow[c];
        }
    });
    return out;
}

std::string nnz_histogram(const Csr& m) {
    std::vector<size_t> buckets;
    for (size_t r = 0; r < m.rows; ++r) {
        size_t nnz = m.row_nnz(r);
        size_t b = 0;
        while ((1u << b) <= nnz) ++b;
        if (buckets.size() <= b) buckets.resize(b + 1, 0);
        buckets[b]++;
    }
    std::ostringstream os;
    os << "row_nnz\tcount\n";
    for (size_t b = 0; b < buckets.size(); ++b) {
        size_t lo = b == 0 ? 0 : (1u << (b - 1));
        size_t hi = (1u << b) - 1;
        os << lo << "-" << hi << "\t" << buckets[b] << "\n";
    }
    return os.str();
}

}  // namespace deepform::graph
