#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace deepform {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// mt19937_64 with hand-rolled draw functions so results do not depend on
// the standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // unbiased integer in [0, n)
    uint64_t uniform_u64(uint64_t n) {
        if (n == 0) return 0;
        uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= lim);
        return x % n;
    }

    // inclusive range
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform_u64(static_cast<uint64_t>(hi - lo) + 1));
    }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform_u64(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

// Independent stream derived from (seed, stream id); used to make each
// training epoch's randomness stateless for exact checkpoint resume.
inline Rng derived_rng(uint64_t seed, uint64_t stream) {
    return Rng(splitmix64(seed ^ splitmix64(stream + 0x51ed2701)));
}

}  // namespace deepform
