#include "deepform/csr.hpp"

#include <algorithm>
#include <tuple>

namespace deepform {

Csr csr_from_triplets(size_t rows, size_t cols,
                      std::vector<std::tuple<uint32_t, uint32_t, double>> trips) {
    std::sort(trips.begin(), trips.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        return std::get<1>(a) < std::get<1>(b);
    });
    Csr m(rows, cols);
    m.col.reserve(trips.size());
    m.val.reserve(trips.size());
    for (const auto& [r, c, v] : trips) {
        m.offs[r + 1]++;
        m.col.push_back(c);
        m.val.push_back(v);
    }
    for (size_t r = 0; r < rows; ++r) m.offs[r + 1] += m.offs[r];
    return m;
}

}  // namespace deepform
