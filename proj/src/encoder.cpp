#include "deepform/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "deepform/io.hpp"
#include "deepform/parallel.hpp"

namespace deepform::encoder {

namespace {

double act_fn(double x, Activation a) { return a == Activation::Tanh ? std::tanh(x) : x; }

// derivative expressed through the activated value
double act_grad(double y, Activation a) { return a == Activation::Tanh ? 1.0 - y * y : 1.0; }

double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

Mat mul_sparse_param(const Csr& x, const TensorF& w, int threads) {
    Mat out(x.rows, w.cols);
    parallel_for(x.rows, threads, [&](size_t r) {
        double* orow = out.row(r);
        for (size_t k = x.offs[r]; k < x.offs[r + 1]; ++k) {
            const float* wrow = w.v.data() + static_cast<size_t>(x.col[k]) * w.cols;
            double v = x.val[k];
            for (size_t c = 0; c < w.cols; ++c) orow[c] += v * static_cast<double>(wrow[c]);
        }
    });
    return out;
}

Mat mul_dense_param(const Mat& a, const TensorF& w, int threads) {
    Mat out(a.rows, w.cols);
    parallel_for(a.rows, threads, [&](size_t r) {
        const double* arow = a.row(r);
        double* orow = out.row(r);
        for (size_t k = 0; k < a.cols; ++k) {
            double v = arow[k];
            if (v == 0.0) continue;
            const float* wrow = w.v.data() + k * w.cols;
            for (size_t c = 0; c < w.cols; ++c) orow[c] += v * static_cast<double>(wrow[c]);
        }
    });
    return out;
}

// a * w^T
Mat mul_dense_paramT(const Mat& a, const TensorF& w, int threads) {
    Mat out(a.rows, w.rows);
    parallel_for(a.rows, threads, [&](size_t r) {
        const double* arow = a.row(r);
        double* orow = out.row(r);
        for (size_t j = 0; j < w.rows; ++j) {
            const float* wrow = w.v.data() + j * w.cols;
            double s = 0.0;
            for (size_t k = 0; k < w.cols; ++k) s += arow[k] * static_cast<double>(wrow[k]);
            orow[j] = s;
        }
    });
    return out;
}

// a^T * b, accumulated in row order of the operands
Mat mul_matT_mat(const Mat& a, const Mat& b, int threads) {
    Mat out(a.cols, b.cols);
    parallel_for(a.cols, threads, [&](size_t j) {
        double* orow = out.row(j);
        for (size_t u = 0; u < a.rows; ++u) {
            double v = a(u, j);
            if (v == 0.0) continue;
            const double* brow = b.row(u);
            for (size_t c = 0; c < b.cols; ++c) orow[c] += v * brow[c];
        }
    });
    return out;
}

// x^T * d  (|I| x cols of d)
Mat mul_sparseT_dense(const Csr& x, const Mat& d, int threads) {
    Mat out(x.cols, d.cols);
    // column-partitioned so each worker owns whole output rows via a
    // col->entries index would be needed; keep it serial in row order
    (void)threads;
    for (size_t r = 0; r < x.rows; ++r) {
        const double* drow = d.row(r);
        for (size_t k = x.offs[r]; k < x.offs[r + 1]; ++k) {
            double v = x.val[k];
            double* orow = out.row(x.col[k]);
            for (size_t c = 0; c < d.cols; ++c) orow[c] += v * drow[c];
        }
    }
    return out;
}

void add_bias(Mat& m, const TensorF& b) {
    for (size_t r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        for (size_t c = 0; c < m.cols; ++c) row[c] += static_cast<double>(b.v[c]);
    }
}

void apply_act(Mat& m, Activation a) {
    if (a == Activation::Linear) return;
    for (double& v : m.a) v = act_fn(v, a);
}

Mat colsum(const Mat& m) {
    Mat out(1, m.cols);
    for (size_t r = 0; r < m.rows; ++r)
        for (size_t c = 0; c < m.cols; ++c) out(0, c) += m(r, c);
    return out;
}

// dL/d(pre-activation) from dL/d(activated) and the activated values
Mat act_backward(const Mat& grad_act, const Mat& activated, Activation a) {
    Mat out = grad_act;
    if (a == Activation::Linear) return out;
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] *= act_grad(activated.a[i], a);
    return out;
}

void init_uniform(TensorF& t, double limit, Rng& rng) {
    for (float& v : t.v) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * limit);
}

}  // namespace

void Gradients::init_like(const ModelParams& p) {
    z = Mat(p.z.rows, p.z.cols);
    w1 = Mat(p.w1.rows, p.w1.cols);
    b1 = Mat(p.b1.rows, p.b1.cols);
    w2 = Mat(p.w2.rows, p.w2.cols);
    b2 = Mat(p.b2.rows, p.b2.cols);
    w3 = Mat(p.w3.rows, p.w3.cols);
    b3 = Mat(p.b3.rows, p.b3.cols);
    w4 = Mat(p.w4.rows, p.w4.cols);
    b4 = Mat(p.b4.rows, p.b4.cols);
    w5 = Mat(p.w5.rows, p.w5.cols);
    b5 = Mat(p.b5.rows, p.b5.cols);
    w6 = Mat(p.w6.rows, p.w6.cols);
    b6 = Mat(p.b6.rows, p.b6.cols);
}

void Gradients::add(const Gradients& o, double scale) {
    add_scaled(z, o.z, scale);
    add_scaled(w1, o.w1, scale);
    add_scaled(b1, o.b1, scale);
    add_scaled(w2, o.w2, scale);
    add_scaled(b2, o.b2, scale);
    add_scaled(w3, o.w3, scale);
    add_scaled(b3, o.b3, scale);
    add_scaled(w4, o.w4, scale);
    add_scaled(b4, o.b4, scale);
    add_scaled(w5, o.w5, scale);
    add_scaled(b5, o.b5, scale);
    add_scaled(w6, o.w6, scale);
    add_scaled(b6, o.b6, scale);
}

double Gradients::sq_norm() const {
    return frob_sq(z) + frob_sq(w1) + frob_sq(b1) + frob_sq(w2) + frob_sq(b2) + frob_sq(w3) +
           frob_sq(b3) + frob_sq(w4) + frob_sq(b4) + frob_sq(w5) + frob_sq(b5) + frob_sq(w6) +
           frob_sq(b6);
}

ModelParams init_params(size_t n_users, size_t n_items, size_t d, size_t h1, size_t h2,
                        uint64_t seed) {
    ModelParams p;
    p.z = TensorF(n_users, d);
    p.w1 = TensorF(n_items, h1);
    p.b1 = TensorF(1, h1);
    p.w2 = TensorF(h1, h2);
    p.b2 = TensorF(1, h2);
    p.w3 = TensorF(h2, d);
    p.b3 = TensorF(1, d);
    p.w4 = TensorF(d, h2);
    p.b4 = TensorF(1, h2);
    p.w5 = TensorF(h2, h1);
    p.b5 = TensorF(1, h1);
    p.w6 = TensorF(h1, n_items);
    p.b6 = TensorF(1, n_items);

    Rng rng(splitmix64(seed));
    init_uniform(p.z, 0.1 / std::sqrt(static_cast<double>(d)), rng);
    init_uniform(p.w1, 1.0 / std::sqrt(static_cast<double>(n_items)), rng);
    init_uniform(p.w2, 1.0 / std::sqrt(static_cast<double>(h1)), rng);
    init_uniform(p.w3, 1.0 / std::sqrt(static_cast<double>(h2)), rng);
    init_uniform(p.w4, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    init_uniform(p.w5, 1.0 / std::sqrt(static_cast<double>(h2)), rng);
    init_uniform(p.w6, 1.0 / std::sqrt(static_cast<double>(h1)), rng);
    return p;
}

Mat propagate(const Csr& a_norm, const Mat& m, int hops, int threads) {
    Mat acc = m;
    Mat cur = m;
    for (int l = 1; l <= hops; ++l) {
        cur = graph::spmv(a_norm, cur, threads);
        for (size_t i = 0; i < acc.a.size(); ++i) acc.a[i] += cur.a[i];
    }
    double inv = 1.0 / static_cast<double>(hops + 1);
    for (double& v : acc.a) v *= inv;
    return acc;
}

void gcn_forward(const Csr& a_norm, const TensorF& z, int hops, Mat& z_gcn_out, Mat& z_hat_out,
                 int threads) {
    Mat zm = to_mat(z);
    z_gcn_out = propagate(a_norm, zm, hops, threads);
    z_hat_out = propagate(a_norm, z_gcn_out, hops, threads);
}

void ae_forward_dense(const Csr& x, const ModelParams& p, Mat& z_ae_out, Mat& xhat_out) {
    Mat h1a = mul_sparse_param(x, p.w1, 1);
    add_bias(h1a, p.b1);
    apply_act(h1a, p.act);
    Mat h2a = mul_dense_param(h1a, p.w2, 1);
    add_bias(h2a, p.b2);
    apply_act(h2a, p.act);
    z_ae_out = mul_dense_param(h2a, p.w3, 1);
    add_bias(z_ae_out, p.b3);

    Mat g1 = mul_dense_param(z_ae_out, p.w4, 1);
    add_bias(g1, p.b4);
    apply_act(g1, p.act);
    Mat g2 = mul_dense_param(g1, p.w5, 1);
    add_bias(g2, p.b5);
    apply_act(g2, p.act);
    xhat_out = mul_dense_param(g2, p.w6, 1);
    add_bias(xhat_out, p.b6);
}

EntrySample sample_entries(const Csr& m, Rng& rng, bool exact) {
    EntrySample s;
    if (exact) {
        for (size_t r = 0; r < m.rows; ++r) {
            size_t k = m.offs[r];
            for (size_t c = 0; c < m.cols; ++c) {
                double t = 0.0;
                if (k < m.offs[r + 1] && m.col[k] == c) t = m.val[k++];
                s.push(static_cast<uint32_t>(r), static_cast<uint32_t>(c), t);
            }
        }
        return s;
    }
    for (size_t r = 0; r < m.rows; ++r)
        for (size_t k = m.offs[r]; k < m.offs[r + 1]; ++k)
            s.push(static_cast<uint32_t>(r), m.col[k], m.val[k]);

    size_t want = m.nnz();
    for (size_t i = 0; i < want; ++i) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            uint32_t r = static_cast<uint32_t>(rng.uniform_u64(m.rows));
            uint32_t c = static_cast<uint32_t>(rng.uniform_u64(m.cols));
            bool hit = std::binary_search(m.col.begin() + static_cast<long>(m.offs[r]),
                                          m.col.begin() + static_cast<long>(m.offs[r + 1]), c);
            if (!hit) {
                s.push(r, c, 0.0);
                break;
            }
        }
    }
    return s;
}

EncoderCache forward(const Csr& x, const graph::UserGraph& g, const ModelParams& p, int hops,
                     const EntrySample* x_sample, int threads) {
    EncoderCache c;
    gcn_forward(g.norm, p.z, hops, c.z_gcn, c.z_hat, threads);

    c.h1a = mul_sparse_param(x, p.w1, threads);
    add_bias(c.h1a, p.b1);
    apply_act(c.h1a, p.act);
    c.h2a = mul_dense_param(c.h1a, p.w2, threads);
    add_bias(c.h2a, p.b2);
    apply_act(c.h2a, p.act);
    c.z_ae = mul_dense_param(c.h2a, p.w3, threads);
    add_bias(c.z_ae, p.b3);

    c.g1 = mul_dense_param(c.z_ae, p.w4, threads);
    add_bias(c.g1, p.b4);
    apply_act(c.g1, p.act);
    c.g2 = mul_dense_param(c.g1, p.w5, threads);
    add_bias(c.g2, p.b5);
    apply_act(c.g2, p.act);

    if (x_sample) {
        size_t h1 = p.h1();
        c.xhat.resize(x_sample->size());
        parallel_for(x_sample->size(), threads, [&](size_t k) {
            uint32_t u = x_sample->row[k];
            uint32_t i = x_sample->col[k];
            const double* g2row = c.g2.row(u);
            double s = static_cast<double>(p.b6.v[i]);
            for (size_t j = 0; j < h1; ++j)
                s += g2row[j] * static_cast<double>(p.w6.v[j * p.w6.cols + i]);
            c.xhat[k] = s;
        });
    }

    c.z_final = c.z_gcn + c.z_ae;
    return c;
}

AlignLossParts align_loss(const ModelParams& p, const EncoderCache& cache,
                          const EntrySample& a_sample, const EntrySample& x_sample,
                          const AlignWeights& w) {
    AlignLossParts parts;

    Mat zm = to_mat(p.z);
    parts.gcn_z = w.gcn_z * frob_sq(cache.z_hat - zm);

    double a_term = 0.0;
    size_t d = cache.z_gcn.cols;
    for (size_t k = 0; k < a_sample.size(); ++k) {
        const double* zu = cache.z_gcn.row(a_sample.row[k]);
        const double* zv = cache.z_gcn.row(a_sample.col[k]);
        double s = 0.0;
        for (size_t j = 0; j < d; ++j) s += zu[j] * zv[j];
        double r = logistic(s) - a_sample.target[k];
        a_term += r * r;
    }
    parts.gcn_a = w.gcn_a * a_term;

    double x_term = 0.0;
    for (size_t k = 0; k < x_sample.size(); ++k) {
        double r = cache.xhat[k] - x_sample.target[k];
        x_term += r * r;
    }
    parts.ae = w.ae * x_term;

    parts.align = w.align * frob_sq(cache.z_gcn - cache.z_ae);
    return parts;
}

Gradients backward(const Csr& x, const graph::UserGraph& g, const ModelParams& p,
                   const EncoderCache& cache, int hops, const AlignWeights& w,
                   const EntrySample& a_sample, const EntrySample& x_sample,
                   const Mat* gz_final_external, int threads) {
    Gradients grads;
    grads.init_like(p);

    size_t d = p.dim();

    // term 1: ||Z_hat - Z||^2, Z_hat = P(P(Z))
    {
        Mat r1 = cache.z_hat - to_mat(p.z);
        Mat pulled = propagate(g.norm, propagate(g.norm, r1, hops, threads), hops, threads);
        for (size_t i = 0; i < grads.z.a.size(); ++i)
            grads.z.a[i] += 2.0 * w.gcn_z * (pulled.a[i] - r1.a[i]);
    }

    // term 2: ||sigma(Z_gcn Z_gcn^T) - A||^2 on the sampled entries
    Mat g_zgcn(p.z.rows, d);
    for (size_t k = 0; k < a_sample.size(); ++k) {
        uint32_t u = a_sample.row[k];
        uint32_t v = a_sample.col[k];
        const double* zu = cache.z_gcn.row(u);
        const double* zv = cache.z_gcn.row(v);
        double s = 0.0;
        for (size_t j = 0; j < d; ++j) s += zu[j] * zv[j];
        double sig = logistic(s);
        double e = 2.0 * w.gcn_a * (sig - a_sample.target[k]) * sig * (1.0 - sig);
        double* gu = g_zgcn.row(u);
        double* gv = g_zgcn.row(v);
        for (size_t j = 0; j < d; ++j) {
            gu[j] += e * zv[j];
            gv[j] += e * zu[j];
        }
    }

    // term 4 residual, shared by the Z_gcn and Z_AE paths
    Mat r4w(p.z.rows, d);
    for (size_t i = 0; i < r4w.a.size(); ++i)
        r4w.a[i] = 2.0 * w.align * (cache.z_gcn.a[i] - cache.z_ae.a[i]);

    add_scaled(g_zgcn, r4w, 1.0);
    if (gz_final_external) add_scaled(g_zgcn, *gz_final_external, 1.0);
    {
        Mat pulled = propagate(g.norm, g_zgcn, hops, threads);
        add_scaled(grads.z, pulled, 1.0);
    }

    // term 3: decoder chain from the sampled X_hat entries
    Mat dg2(cache.g2.rows, cache.g2.cols);
    for (size_t k = 0; k < x_sample.size(); ++k) {
        uint32_t u = x_sample.row[k];
        uint32_t i = x_sample.col[k];
        double e = 2.0 * w.ae * (cache.xhat[k] - x_sample.target[k]);
        const double* g2row = cache.g2.row(u);
        double* dg2row = dg2.row(u);
        for (size_t j = 0; j < p.w6.rows; ++j) {
            grads.w6(j, i) += e * g2row[j];
            dg2row[j] += e * static_cast<double>(p.w6.v[j * p.w6.cols + i]);
        }
        grads.b6(0, i) += e;
    }

    Mat dp2 = act_backward(dg2, cache.g2, p.act);
    grads.w5 = mul_matT_mat(cache.g1, dp2, threads);
    grads.b5 = colsum(dp2);
    Mat dg1 = mul_dense_paramT(dp2, p.w5, threads);

    Mat dp1 = act_backward(dg1, cache.g1, p.act);
    grads.w4 = mul_matT_mat(cache.z_ae, dp1, threads);
    grads.b4 = colsum(dp1);
    Mat dz_ae = mul_dense_paramT(dp1, p.w4, threads);

    // gradient reaching the code: decoder chain - alignment + external
    add_scaled(dz_ae, r4w, -1.0);
    if (gz_final_external) add_scaled(dz_ae, *gz_final_external, 1.0);

    grads.w3 = mul_matT_mat(cache.h2a, dz_ae, threads);
    grads.b3 = colsum(dz_ae);
    Mat dh2 = mul_dense_paramT(dz_ae, p.w3, threads);

    Mat dq2 = act_backward(dh2, cache.h2a, p.act);
    grads.w2 = mul_matT_mat(cache.h1a, dq2, threads);
    grads.b2 = colsum(dq2);
    Mat dh1 = mul_dense_paramT(dq2, p.w2, threads);

    Mat dq1 = act_backward(dh1, cache.h1a, p.act);
    grads.w1 = mul_sparseT_dense(x, dq1, threads);
    grads.b1 = colsum(dq1);

    return grads;
}

void save_checkpoint(const ModelParams& p, const std::string& path) {
    AtomicFile f(path);
    std::ofstream& os = f.stream();
    os.write("DFCK", 4);
    write_le<uint16_t>(os, 1);
    write_le<uint32_t>(os, static_cast<uint32_t>(p.n_users()));
    write_le<uint32_t>(os, static_cast<uint32_t>(p.n_items()));
    write_le<uint32_t>(os, static_cast<uint32_t>(p.dim()));
    write_le<uint32_t>(os, static_cast<uint32_t>(p.h1()));
    write_le<uint32_t>(os, static_cast<uint32_t>(p.h2()));
    ModelParams& mp = const_cast<ModelParams&>(p);
    Gradients dummy;
    dummy.init_like(p);
    for_each_param(mp, dummy, [&](const char*, TensorF& t, Mat&) {
        for (float v : t.v) write_le<float>(os, v);
    });
    f.commit();
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    expect_magic(is, "DFCK", path);
    uint16_t version = read_le<uint16_t>(is);
    if (version != 1) throw DataError("unsupported checkpoint version");
    uint32_t n_users = read_le<uint32_t>(is);
    uint32_t n_items = read_le<uint32_t>(is);
    uint32_t d = read_le<uint32_t>(is);
    uint32_t h1 = read_le<uint32_t>(is);
    uint32_t h2 = read_le<uint32_t>(is);

    ModelParams p = init_params(n_users, n_items, d, h1, h2, 0);
    Gradients dummy;
    dummy.init_like(p);
    for_each_param(p, dummy, [&](const char*, TensorF& t, Mat&) {
        for (float& v : t.v) v = read_le<float>(is);
    });
    return p;
}

}  // namespace deepform::encoder
