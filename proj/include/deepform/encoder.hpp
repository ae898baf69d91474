#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepform/csr.hpp"
#include "deepform/graph.hpp"
#include "deepform/mat.hpp"
#include "deepform/rng.hpp"

namespace deepform::encoder {

enum class Activation { Tanh, Linear };

// Learnable user embedding table plus the 3-layer AE (encoder w1..w3,
// decoder w4..w6, biases b1..b6). Stored f32 so checkpoints round-trip
// exactly; math promotes to double.
struct ModelParams {
    TensorF z;                   // |U| x d
    TensorF w1, w2, w3;          // |I|xh1, h1xh2, h2xd
    TensorF b1, b2, b3;          // 1xh1, 1xh2, 1xd
    TensorF w4, w5, w6;          // dxh2, h2xh1, h1x|I|
    TensorF b4, b5, b6;          // 1xh2, 1xh1, 1x|I|
    Activation act = Activation::Tanh;

    size_t n_users() const { return z.rows; }
    size_t n_items() const { return w1.rows; }
    size_t dim() const { return z.cols; }
    size_t h1() const { return w1.cols; }
    size_t h2() const { return w2.cols; }
};

struct Gradients {
    Mat z, w1, b1, w2, b2, w3, b3, w4, b4, w5, b5, w6, b6;

    void init_like(const ModelParams& p);
    void add(const Gradients& o, double scale = 1.0);
    double sq_norm() const;
};

// Visit (name, param tensor, grad mat) pairs in declaration order.
template <class F>
void for_each_param(ModelParams& p, Gradients& g, F&& f) {
    f("z", p.z, g.z);
    f("w1", p.w1, g.w1);
    f("b1", p.b1, g.b1);
    f("w2", p.w2, g.w2);
    f("b2", p.b2, g.b2);
    f("w3", p.w3, g.w3);
    f("b3", p.b3, g.b3);
    f("w4", p.w4, g.w4);
    f("b4", p.b4, g.b4);
    f("w5", p.w5, g.w5);
    f("b5", p.b5, g.b5);
    f("w6", p.w6, g.w6);
    f("b6", p.b6, g.b6);
}

// Entry set for the dense reconstruction terms: pairs (row, col) with the
// target value at that position. Sampled mode keeps every observed
// nonzero plus an equal count of uniformly drawn zero entries.
struct EntrySample {
    std::vector<uint32_t> row, col;
    std::vector<double> target;

    size_t size() const { return row.size(); }
    void push(uint32_t r, uint32_t c, double t) {
        row.push_back(r);
        col.push_back(c);
        target.push_back(t);
    }
};

EntrySample sample_entries(const Csr& m, Rng& rng, bool exact);

struct EncoderCache {
    Mat h1a, h2a, z_ae;   // encoder activations and code
    Mat g1, g2;           // decoder activations
    Mat z_gcn, z_hat, z_final;
    std::vector<double> xhat;  // X_hat at the x_sample entries passed to forward
};

struct AlignWeights {
    double gcn_z = 1.0, gcn_a = 1.0, ae = 1.0, align = 1.0;
};

// Weighted contributions of the four alignment terms.
struct AlignLossParts {
    double gcn_z = 0, gcn_a = 0, ae = 0, align = 0;
    double total() const { return gcn_z + gcn_a + ae + align; }
};

ModelParams init_params(size_t n_users, size_t n_items, size_t d, size_t h1, size_t h2,
                        uint64_t seed);

// Mean of propagated powers: (1/(L+1)) sum_{l=0..L} A_norm^l M, computed
// iteratively as a running sum.
Mat propagate(const Csr& a_norm, const Mat& m, int hops, int threads = 1);

// Forward + backward GCN representations from the embedding table.
void gcn_forward(const Csr& a_norm, const TensorF& z, int hops, Mat& z_gcn_out, Mat& z_hat_out,
                 int threads = 1);

// Three-layer encoder / mirrored decoder; xhat evaluated densely (desk
// scale only, |U| x |I| output).
void ae_forward_dense(const Csr& x, const ModelParams& p, Mat& z_ae_out, Mat& xhat_out);

EncoderCache forward(const Csr& x, const graph::UserGraph& g, const ModelParams& p, int hops,
                     const EntrySample* x_sample = nullptr, int threads = 1);

AlignLossParts align_loss(const ModelParams& p, const EncoderCache& cache,
                          const EntrySample& a_sample, const EntrySample& x_sample,
                          const AlignWeights& w);

// Analytic gradients of the weighted alignment loss plus, optionally, an
// external gradient w.r.t. Z_final (the cluster/contrastive path) pulled
// back through Z_gcn and the AE encoder.
Gradients backward(const Csr& x, const graph::UserGraph& g, const ModelParams& p,
                   const EncoderCache& cache, int hops, const AlignWeights& w,
                   const EntrySample& a_sample, const EntrySample& x_sample,
                   const Mat* gz_final_external = nullptr, int threads = 1);

void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace deepform::encoder
