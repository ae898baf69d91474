#pragma once

#include <cstdint>
#include <optional>

#include "deepform/csr.hpp"
#include "deepform/mat.hpp"

namespace deepform::graph {

// User-user similarity graph. `adj` holds the raw similarities (symmetric,
// zero diagonal); `norm` is D^{-1/2}(A+I)D^{-1/2} and includes self-loops.
struct UserGraph {
    Csr adj;
    Csr norm;
    std::vector<double> degree;  // degree of A + I
};

// a_uv = max(x_u . x_v, 0) for u != v, zero diagonal. When top_k is set,
// each row keeps its top_k largest entries and the result is
// re-symmetrized by max(a_uv, a_vu).
Csr build_adjacency(const Csr& x, std::optional<size_t> top_k, int threads = 1);

Csr normalize_adjacency(const Csr& adj, std::vector<double>* degree_out = nullptr);

UserGraph build_user_graph(const Csr& x, std::optional<size_t> top_k, int threads = 1);

// Sparse-dense product, per output row in ascending column order.
Mat spmv(const Csr& m, const Mat& dense, int threads = 1);

// nnz-per-row histogram, one "bucket count" line per power-of-two bucket
std::string nnz_histogram(const Csr& m);

}  // namespace deepform::graph
