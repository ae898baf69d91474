#pragma once

#include <cstdint>
#include <vector>

#include "deepform/mat.hpp"

namespace deepform {

// Sparse row storage. Column indices are kept in ascending order per row
// so summation order is fixed and results are bit-stable across runs.
struct Csr {
    size_t rows = 0, cols = 0;
    std::vector<uint64_t> offs;  // rows + 1
    std::vector<uint32_t> col;
    std::vector<double> val;

    Csr() = default;
    Csr(size_t r, size_t c) : rows(r), cols(c), offs(r + 1, 0) {}

    size_t nnz() const { return col.size(); }
    size_t row_nnz(size_t r) const { return offs[r + 1] - offs[r]; }

    // dot product of two rows (indices ascending)
    static double row_dot(const Csr& x, size_t u, const Csr& y, size_t v) {
        size_t i = x.offs[u], ie = x.offs[u + 1];
        size_t j = y.offs[v], je = y.offs[v + 1];
        double s = 0.0;
        while (i < ie && j < je) {
            if (x.col[i] < y.col[j]) {
                ++i;
            } else if (x.col[i] > y.col[j]) {
                ++j;
            } else {
                s += x.val[i] * y.val[j];
                ++i;
                ++j;
            }
        }
        return s;
    }

    Mat to_dense() const {
        Mat m(rows, cols);
        for (size_t r = 0; r < rows; ++r)
            for (size_t k = offs[r]; k < offs[r + 1]; ++k) m(r, col[k]) = val[k];
        return m;
    }
};

// Build a CSR from unsorted (row, col, val) triplets; duplicates are not
// merged, callers must not produce them.
Csr csr_from_triplets(size_t rows, size_t cols,
                      std::vector<std::tuple<uint32_t, uint32_t, double>> trips);

}  // namespace deepform
