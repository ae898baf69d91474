#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace deepform {

// Row-major dense matrix of doubles. All heavy math runs in double;
// persisted tensors are f32 (see TensorF).
struct Mat {
    size_t rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(size_t r, size_t c) { return a[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return a[r * cols + c]; }
    double* row(size_t r) { return a.data() + r * cols; }
    const double* row(size_t r) const { return a.data() + r * cols; }
    size_t size() const { return a.size(); }

    void set_zero() { a.assign(a.size(), 0.0); }
};

inline Mat operator+(const Mat& x, const Mat& y) {
    Mat r(x.rows, x.cols);
    for (size_t i = 0; i < r.a.size(); ++i) r.a[i] = x.a[i] + y.a[i];
    return r;
}

inline Mat operator-(const Mat& x, const Mat& y) {
    Mat r(x.rows, x.cols);
    for (size_t i = 0; i < r.a.size(); ++i) r.a[i] = x.a[i] - y.a[i];
    return r;
}

inline void add_scaled(Mat& dst, const Mat& src, double s) {
    for (size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += s * src.a[i];
}

inline double frob_sq(const Mat& m) {
    double s = 0.0;
    for (double v : m.a) s += v * v;
    return s;
}

// f32 parameter tensor. Storage is f32 so checkpoints round-trip
// bit-exactly; arithmetic promotes to double.
struct TensorF {
    size_t rows = 0, cols = 0;
    std::vector<float> v;

    TensorF() = default;
    TensorF(size_t r, size_t c) : rows(r), cols(c), v(r * c, 0.0f) {}

    float& operator()(size_t r, size_t c) { return v[r * cols + c]; }
    float operator()(size_t r, size_t c) const { return v[r * cols + c]; }
    size_t size() const { return v.size(); }
};

inline Mat to_mat(const TensorF& t) {
    Mat m(t.rows, t.cols);
    for (size_t i = 0; i < t.v.size(); ++i) m.a[i] = static_cast<double>(t.v[i]);
    return m;
}

}  // namespace deepform
