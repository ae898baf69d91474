#include "deepform/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "deepform/io.hpp"

namespace deepform::trainer {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (...) {
        throw UsageError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

int to_int(const std::string& key, const std::string& v) {
    double d = to_double(key, v);
    if (d != std::floor(d)) throw UsageError("config: " + key + " must be an integer");
    return static_cast<int>(d);
}

bool params_finite(encoder::ModelParams& p) {
    encoder::Gradients dummy;
    dummy.init_like(p);
    bool ok = true;
    encoder::for_each_param(p, dummy, [&](const char*, TensorF& t, Mat&) {
        for (float v : t.v)
            if (!std::isfinite(v)) ok = false;
    });
    return ok;
}

struct AdamState {
    encoder::Gradients m, v;
    bool ready = false;
};

void sgd_step(encoder::ModelParams& p, encoder::Gradients& g, double lr) {
    encoder::for_each_param(p, g, [&](const char*, TensorF& t, Mat& grad) {
        for (size_t i = 0; i < t.v.size(); ++i)
            t.v[i] = static_cast<float>(static_cast<double>(t.v[i]) - lr * grad.a[i]);
    });
}

void adam_step(encoder::ModelParams& p, encoder::Gradients& g, AdamState& st, double lr,
               int step) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (!st.ready) {
        st.m.init_like(p);
        st.v.init_like(p);
        st.ready = true;
    }
    double c1 = 1.0 - std::pow(b1, step);
    double c2 = 1.0 - std::pow(b2, step);
    auto upd = [&](TensorF& t, Mat& grad, Mat& m, Mat& v) {
        for (size_t i = 0; i < t.v.size(); ++i) {
            double gi = grad.a[i];
            m.a[i] = b1 * m.a[i] + (1.0 - b1) * gi;
            v.a[i] = b2 * v.a[i] + (1.0 - b2) * gi * gi;
            double mh = m.a[i] / c1, vh = v.a[i] / c2;
            t.v[i] =
                static_cast<float>(static_cast<double>(t.v[i]) - lr * mh / (std::sqrt(vh) + eps));
        }
    };
    upd(p.z, g.z, st.m.z, st.v.z);
    upd(p.w1, g.w1, st.m.w1, st.v.w1);
    upd(p.b1, g.b1, st.m.b1, st.v.b1);
    upd(p.w2, g.w2, st.m.w2, st.v.w2);
    upd(p.b2, g.b2, st.m.b2, st.v.b2);
    upd(p.w3, g.w3, st.m.w3, st.v.w3);
    upd(p.b3, g.b3, st.m.b3, st.v.b3);
    upd(p.w4, g.w4, st.m.w4, st.v.w4);
    upd(p.b4, g.b4, st.m.b4, st.v.b4);
    upd(p.w5, g.w5, st.m.w5, st.v.w5);
    upd(p.b5, g.b5, st.m.b5, st.v.b5);
    upd(p.w6, g.w6, st.m.w6, st.v.w6);
    upd(p.b6, g.b6, st.m.b6, st.v.b6);
}

}  // namespace

void TrainConfig::validate() const {
    if (lr <= 0.0) throw UsageError("lr must be > 0");
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (hops < 0) throw UsageError("hops must be >= 0");
    if (dim < 1 || h1 < 1 || h2 < 1) throw UsageError("dims must be >= 1");
    if (k_max < 2) throw UsageError("k_max must be >= 2");
    if (delta <= 0.0) throw UsageError("delta must be > 0");
    if (tau <= 0.0) throw UsageError("tau must be > 0");
    if (n_neg < 1) throw UsageError("n_neg must be >= 1");
    if (w_gcn_z < 0 || w_gcn_a < 0 || w_ae < 0 || w_align < 0 || w_cluster < 0 ||
        w_contrast < 0)
        throw UsageError("loss weights must be >= 0");
    if (k_resample_every < 1) throw UsageError("k_resample_every must be >= 1");
    if (optimizer != "gd" && optimizer != "adam")
        throw UsageError("optimizer must be gd or adam");
    if (nce_denominator != "with_positive" && nce_denominator != "negatives_only")
        throw UsageError("nce_denominator must be with_positive or negatives_only");
    if (loss_sampling != "sampled" && loss_sampling != "exact")
        throw UsageError("loss_sampling must be sampled or exact");
    if (graph_top_k < 0) throw UsageError("graph_top_k must be >= 0");
    if (kmeans_max_iter < 1) throw UsageError("kmeans_max_iter must be >= 1");
    if (kmeans_tol < 0.0) throw UsageError("kmeans_tol must be >= 0");
}

contrastive::NceDenominator TrainConfig::nce_mode() const {
    return nce_denominator == "with_positive" ? contrastive::NceDenominator::WithPositive
                                              : contrastive::NceDenominator::NegativesOnly;
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));

        if (key == "lr") cfg.lr = to_double(key, val);
        else if (key == "epochs") cfg.epochs = to_int(key, val);
        else if (key == "hops") cfg.hops = to_int(key, val);
        else if (key == "dim") cfg.dim = to_int(key, val);
        else if (key == "h1") cfg.h1 = to_int(key, val);
        else if (key == "h2") cfg.h2 = to_int(key, val);
        else if (key == "k_max") cfg.k_max = to_int(key, val);
        else if (key == "delta") cfg.delta = to_double(key, val);
        else if (key == "tau") cfg.tau = to_double(key, val);
        else if (key == "n_neg") cfg.n_neg = to_int(key, val);
        else if (key == "w_gcn_z") cfg.w_gcn_z = to_double(key, val);
        else if (key == "w_gcn_a") cfg.w_gcn_a = to_double(key, val);
        else if (key == "w_ae") cfg.w_ae = to_double(key, val);
        else if (key == "w_align") cfg.w_align = to_double(key, val);
        else if (key == "w_cluster") cfg.w_cluster = to_double(key, val);
        else if (key == "w_contrast") cfg.w_contrast = to_double(key, val);
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_double(key, val));
        else if (key == "k_resample_every") cfg.k_resample_every = to_int(key, val);
        else if (key == "optimizer") cfg.optimizer = val;
        else if (key == "nce_denominator") cfg.nce_denominator = val;
        else if (key == "loss_sampling") cfg.loss_sampling = val;
        else if (key == "graph_top_k") cfg.graph_top_k = to_int(key, val);
        else if (key == "kmeans_max_iter") cfg.kmeans_max_iter = to_int(key, val);
        else if (key == "kmeans_tol") cfg.kmeans_tol = to_double(key, val);
        else throw UsageError("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

std::string dump_config(const TrainConfig& c) {
    std::ostringstream os;
    os << "lr = " << c.lr << "\n"
       << "epochs = " << c.epochs << "\n"
       << "hops = " << c.hops << "\n"
       << "dim = " << c.dim << "\n"
       << "h1 = " << c.h1 << "\n"
       << "h2 = " << c.h2 << "\n"
       << "k_max = " << c.k_max << "\n"
       << "delta = " << c.delta << "\n"
       << "tau = " << c.tau << "\n"
       << "n_neg = " << c.n_neg << "\n"
       << "w_gcn_z = " << c.w_gcn_z << "\n"
       << "w_gcn_a = " << c.w_gcn_a << "\n"
       << "w_ae = " << c.w_ae << "\n"
       << "w_align = " << c.w_align << "\n"
       << "w_cluster = " << c.w_cluster << "\n"
       << "w_contrast = " << c.w_contrast << "\n"
       << "seed = " << c.seed << "\n"
       << "k_resample_every = " << c.k_resample_every << "\n"
       << "optimizer = " << c.optimizer << "\n"
       << "nce_denominator = " << c.nce_denominator << "\n"
       << "loss_sampling = " << c.loss_sampling << "\n"
       << "graph_top_k = " << c.graph_top_k << "\n"
       << "kmeans_max_iter = " << c.kmeans_max_iter << "\n"
       << "kmeans_tol = " << c.kmeans_tol << "\n";
    return os.str();
}

const char* TrainLog::header() {
    return "epoch\tk\tloss_total\tloss_align\tloss_cluster\tloss_triplet\tloss_nce\tgrad_norm"
           "\twall_ms";
}

std::string TrainLog::to_tsv() const {
    std::ostringstream os;
    os << header() << "\n";
    char buf[320];
    for (const auto& r : epochs) {
        std::snprintf(buf, sizeof(buf), "%d\t%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.3f\n",
                      r.epoch, r.k, r.loss_total, r.loss_align, r.loss_cluster, r.loss_triplet,
                      r.loss_nce, r.grad_norm, r.wall_ms);
        os << buf;
    }
    return os.str();
}

TrainResult train(const ingest::Dataset& ds, const graph::UserGraph& g, const TrainConfig& cfg,
                  int threads, int start_epoch,
                  const encoder::ModelParams* resume_params, const EpochCallback& on_epoch) {
    cfg.validate();
    if (ds.n_users() != g.norm.rows)
        throw DataError("dataset and graph disagree on user count");
    if (static_cast<size_t>(cfg.k_max) > ds.n_users())
        throw UsageError("k_max exceeds the number of users");

    auto train_t0 = Clock::now();
    const Csr& x = ds.x_train;

    encoder::ModelParams params =
        resume_params ? *resume_params
                      : encoder::init_params(ds.n_users(), ds.n_items(), cfg.dim, cfg.h1,
                                             cfg.h2, cfg.seed);

    encoder::AlignWeights aw{cfg.w_gcn_z, cfg.w_gcn_a, cfg.w_ae, cfg.w_align};
    bool exact = cfg.exact_sampling();

    struct Snapshot {
        encoder::ModelParams params;
        Mat mu;
        std::vector<uint32_t> hard;
        int k = 0;
    };

    Mat mu;
    std::vector<uint32_t> hard;
    int k = 0;

    Snapshot snap{params, mu, hard, k};
    AdamState adam;
    double lr = cfg.lr;
    int halvings = 0;

    TrainResult out;
    int e = start_epoch;
    while (e < cfg.epochs) {
        auto t0 = Clock::now();
        Rng erng = derived_rng(cfg.seed, static_cast<uint64_t>(e));

        bool resample = (e % cfg.k_resample_every) == 0 || mu.rows == 0;
        int k_next = resample ? cluster::sample_k(cfg.k_max > static_cast<int>(ds.n_users())
                                                      ? static_cast<int>(ds.n_users())
                                                      : cfg.k_max,
                                                  erng)
                              : k;
        uint64_t kmeans_seed = erng.next_u64();
        encoder::EntrySample a_sample = encoder::sample_entries(g.adj, erng, exact);
        encoder::EntrySample x_sample = encoder::sample_entries(x, erng, exact);

        encoder::EncoderCache cache = encoder::forward(x, g, params, cfg.hops, &x_sample, threads);

        if (resample) {
            k = k_next;
            auto km = cluster::kmeans(cache.z_final, k, kmeans_seed, cfg.kmeans_max_iter,
                                      cfg.kmeans_tol, threads);
            mu = std::move(km.centroids);
            hard = std::move(km.assign);
        }

        Mat q = cluster::soft_assign(cache.z_final, mu);
        Mat p = cluster::target_distribution(q);
        double kl = cluster::cluster_loss(p, q);

        contrastive::ContrastBatch batch = contrastive::sample_batch(hard, k, erng, cfg.n_neg);

        Mat gz_cluster, gmu_cluster;
        cluster::cluster_loss_grad(cache.z_final, mu, p, q, gz_cluster, gmu_cluster);

        Mat gz_triplet, gmu_triplet, gz_nce;
        double l_triplet =
            contrastive::triplet_loss_grad(batch, cache.z_final, mu, cfg.delta, gz_triplet,
                                           gmu_triplet);
        double l_nce =
            contrastive::infonce_loss_grad(batch, cache.z_final, cfg.tau, cfg.nce_mode(), gz_nce);

        Mat gz_final(ds.n_users(), cfg.dim);
        add_scaled(gz_final, gz_cluster, cfg.w_cluster);
        add_scaled(gz_final, gz_triplet, cfg.w_contrast);
        add_scaled(gz_final, gz_nce, cfg.w_contrast);

        Mat gmu(mu.rows, mu.cols);
        add_scaled(gmu, gmu_cluster, cfg.w_cluster);
        add_scaled(gmu, gmu_triplet, cfg.w_contrast);

        encoder::AlignLossParts parts = encoder::align_loss(params, cache, a_sample, x_sample, aw);
        encoder::Gradients grads = encoder::backward(x, g, params, cache, cfg.hops, aw, a_sample,
                                                     x_sample, &gz_final, threads);

        EpochRecord rec;
        rec.epoch = e;
        rec.k = k;
        rec.loss_align = parts.total();
        rec.loss_cluster = cfg.w_cluster * kl;
        rec.loss_triplet = cfg.w_contrast * l_triplet;
        rec.loss_nce = cfg.w_contrast * l_nce;
        rec.loss_total = rec.loss_align + rec.loss_cluster + rec.loss_triplet + rec.loss_nce;
        rec.grad_norm = std::sqrt(grads.sq_norm() + frob_sq(gmu));

        if (cfg.optimizer == "adam")
            adam_step(params, grads, adam, lr, e - start_epoch + 1);
        else
            sgd_step(params, grads, lr);
        add_scaled(mu, gmu, -lr);

        bool finite = std::isfinite(rec.loss_total) && params_finite(params);
        for (double v : mu.a)
            if (!std::isfinite(v)) finite = false;

        if (!finite) {
            if (++halvings > 3) {
                std::ostringstream msg;
                msg << "non-finite state persists after 3 lr halvings at epoch " << e
                    << " (loss=" << rec.loss_total << ", grad_norm=" << rec.grad_norm << ")";
                throw NumericError(msg.str());
            }
            lr *= 0.5;
            params = snap.params;
            mu = snap.mu;
            hard = snap.hard;
            k = snap.k;
            adam = AdamState{};
            continue;  // redo this epoch with the halved lr
        }

        snap = Snapshot{params, mu, hard, k};
        rec.wall_ms = ms_since(t0);
        out.log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
        ++e;
    }

    out.params = std::move(params);
    out.wall_ms = ms_since(train_t0);
    return out;
}

// ---- gradient verification ----

namespace {

struct CheckInstance {
    ingest::Dataset ds;
    graph::UserGraph g;
    encoder::ModelParams params;
    Mat mu;
    Mat p_frozen;
    contrastive::ContrastBatch batch;
    encoder::EntrySample a_sample, x_sample;
    encoder::AlignWeights aw;
    double delta = 1.0, tau = 0.5;
    double w_cluster = 1.0, w_contrast = 1.0;
    int hops = 2;
};

CheckInstance make_instance(size_t n_users, size_t n_items, size_t d, size_t h1, size_t h2,
                            uint64_t seed) {
    CheckInstance ins;
    Rng rng(splitmix64(seed));

    std::vector<std::tuple<uint32_t, uint32_t, double>> trips;
    for (size_t u = 0; u < n_users; ++u) {
        for (size_t i = 0; i < n_items; ++i)
            if (rng.uniform() < 0.5)
                trips.emplace_back(static_cast<uint32_t>(u), static_cast<uint32_t>(i),
                                   0.2 + 0.8 * rng.uniform());
        if (trips.empty() || std::get<0>(trips.back()) != u)
            trips.emplace_back(static_cast<uint32_t>(u),
                               static_cast<uint32_t>(rng.uniform_u64(n_items)), 1.0);
    }
    ins.ds.x_train = csr_from_triplets(n_users, n_items, std::move(trips));
    for (size_t u = 0; u < n_users; ++u) {
        ins.ds.user_ids.push_back("u" + std::to_string(u));
        ins.ds.test_items.push_back({});
    }
    for (size_t i = 0; i < n_items; ++i) ins.ds.item_ids.push_back("i" + std::to_string(i));
    ingest::normalize_ratings(ins.ds);

    ins.g = graph::build_user_graph(ins.ds.x_train, std::nullopt);
    ins.params = encoder::init_params(n_users, n_items, d, h1, h2, seed);

    // spread the embeddings so cluster distances are O(1)
    for (float& v : ins.params.z.v)
        v = static_cast<float>(2.0 * rng.uniform() - 1.0);

    encoder::EncoderCache cache = encoder::forward(ins.ds.x_train, ins.g, ins.params, ins.hops);
    auto km = cluster::kmeans(cache.z_final, 3, seed, 50, 1e-8);
    ins.mu = km.centroids;

    Mat q = cluster::soft_assign(cache.z_final, ins.mu);
    ins.p_frozen = cluster::target_distribution(q);

    Rng brng = derived_rng(seed, 1);
    ins.batch = contrastive::sample_batch(km.assign, 3, brng, 3);

    // keep finite differences away from the hinge kink and the norm kink
    auto& trs = ins.batch.triplets;
    trs.erase(std::remove_if(trs.begin(), trs.end(),
                             [&](const contrastive::Triplet& t) {
                                 auto norm_to = [&](uint32_t u) {
                                     double s = 0.0;
                                     for (size_t j = 0; j < d; ++j) {
                                         double v = cache.z_final(u, j) - ins.mu(t.cluster, j);
                                         s += v * v;
                                     }
                                     return std::sqrt(s);
                                 };
                                 double du = norm_to(t.anchor), dn = norm_to(t.negative);
                                 double margin = du - dn + ins.delta;
                                 return du < 1e-3 || dn < 1e-3 || std::abs(margin) < 0.05;
                             }),
              trs.end());

    Rng srng = derived_rng(seed, 2);
    ins.a_sample = encoder::sample_entries(ins.g.adj, srng, true);
    ins.x_sample = encoder::sample_entries(ins.ds.x_train, srng, true);
    return ins;
}

enum TermMask : unsigned {
    kAlign = 1u,
    kCluster = 2u,
    kTriplet = 4u,
    kNce = 8u,
    kAll = 15u
};

double term_loss(CheckInstance& ins, unsigned mask) {
    encoder::EncoderCache cache =
        encoder::forward(ins.ds.x_train, ins.g, ins.params, ins.hops, &ins.x_sample);
    double total = 0.0;
    if (mask & kAlign)
        total += encoder::align_loss(ins.params, cache, ins.a_sample, ins.x_sample, ins.aw).total();
    if (mask & kCluster) {
        Mat q = cluster::soft_assign(cache.z_final, ins.mu);
        total += ins.w_cluster * cluster::cluster_loss(ins.p_frozen, q);
    }
    if (mask & kTriplet)
        total += ins.w_contrast *
                 contrastive::triplet_loss(ins.batch, cache.z_final, ins.mu, ins.delta);
    if (mask & kNce)
        total += ins.w_contrast * contrastive::infonce_loss(
                                      ins.batch, cache.z_final, ins.tau,
                                      contrastive::NceDenominator::WithPositive);
    return total;
}

void term_grads(CheckInstance& ins, unsigned mask, encoder::Gradients& grads, Mat& gmu) {
    encoder::EncoderCache cache =
        encoder::forward(ins.ds.x_train, ins.g, ins.params, ins.hops, &ins.x_sample);
    size_t n = ins.params.n_users(), d = ins.params.dim();

    Mat gz_final(n, d);
    gmu = Mat(ins.mu.rows, ins.mu.cols);

    if (mask & kCluster) {
        Mat q = cluster::soft_assign(cache.z_final, ins.mu);
        Mat gz, gm;
        cluster::cluster_loss_grad(cache.z_final, ins.mu, ins.p_frozen, q, gz, gm);
        add_scaled(gz_final, gz, ins.w_cluster);
        add_scaled(gmu, gm, ins.w_cluster);
    }
    if (mask & kTriplet) {
        Mat gz, gm;
        contrastive::triplet_loss_grad(ins.batch, cache.z_final, ins.mu, ins.delta, gz, gm);
        add_scaled(gz_final, gz, ins.w_contrast);
        add_scaled(gmu, gm, ins.w_contrast);
    }
    if (mask & kNce) {
        Mat gz;
        contrastive::infonce_loss_grad(ins.batch, cache.z_final, ins.tau,
                                       contrastive::NceDenominator::WithPositive, gz);
        add_scaled(gz_final, gz, ins.w_contrast);
    }

    encoder::AlignWeights aw = (mask & kAlign) ? ins.aw : encoder::AlignWeights{0, 0, 0, 0};
    bool z_path = (mask & (kCluster | kTriplet | kNce)) != 0;
    grads = encoder::backward(ins.ds.x_train, ins.g, ins.params, cache, ins.hops, aw,
                              ins.a_sample, ins.x_sample, z_path ? &gz_final : nullptr);
}

double rel_err(double a, double b) {
    double scale = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / scale;
}

}  // namespace

GradCheckReport grad_check(size_t n_users, size_t n_items, size_t d, size_t h1, size_t h2,
                           uint64_t seed, int coords_per_tensor) {
    CheckInstance ins = make_instance(n_users, n_items, d, h1, h2, seed);
    GradCheckReport report;

    struct TermSpec {
        const char* name;
        unsigned mask;
    };
    const TermSpec terms[] = {
        {"align", kAlign},   {"cluster", kCluster},     {"triplet", kTriplet},
        {"infonce", kNce},   {"composite", kAll},
    };

    Rng crng = derived_rng(seed, 99);
    auto pick_coords = [&](size_t total) {
        std::vector<size_t> idx(total);
        for (size_t i = 0; i < total; ++i) idx[i] = i;
        crng.shuffle(idx);
        idx.resize(std::min<size_t>(static_cast<size_t>(coords_per_tensor), total));
        return idx;
    };

    for (const auto& term : terms) {
        encoder::Gradients analytic;
        Mat gmu_analytic;
        term_grads(ins, term.mask, analytic, gmu_analytic);

        auto record = [&](const std::string& tensor, double err, int n) {
            report.entries.push_back({term.name, tensor, err, n});
            report.max_rel_err = std::max(report.max_rel_err, err);
        };

        encoder::for_each_param(ins.params, analytic, [&](const char* name, TensorF& t,
                                                          Mat& grad) {
            double worst = 0.0;
            auto coords = pick_coords(t.v.size());
            for (size_t idx : coords) {
                float orig = t.v[idx];
                double h = 1e-4 * std::max(std::abs(static_cast<double>(orig)), 1e-2);

                t.v[idx] = static_cast<float>(static_cast<double>(orig) + h);
                double hp = static_cast<double>(t.v[idx]) - static_cast<double>(orig);
                double fp = term_loss(ins, term.mask);
                t.v[idx] = static_cast<float>(static_cast<double>(orig) - h);
                double hm = static_cast<double>(orig) - static_cast<double>(t.v[idx]);
                double fm = term_loss(ins, term.mask);
                t.v[idx] = orig;

                double fd = (fp - fm) / (hp + hm);
                worst = std::max(worst, rel_err(grad.a[idx], fd));
            }
            record(name, worst, static_cast<int>(coords.size()));
        });

        if (term.mask & (kCluster | kTriplet)) {
            double worst = 0.0;
            auto coords = pick_coords(ins.mu.a.size());
            for (size_t idx : coords) {
                double orig = ins.mu.a[idx];
                double h = 1e-4 * std::max(std::abs(orig), 1e-2);
                ins.mu.a[idx] = orig + h;
                double fp = term_loss(ins, term.mask);
                ins.mu.a[idx] = orig - h;
                double fm = term_loss(ins, term.mask);
                ins.mu.a[idx] = orig;
                double fd = (fp - fm) / (2.0 * h);
                worst = std::max(worst, rel_err(gmu_analytic.a[idx], fd));
            }
            record("mu", worst, static_cast<int>(coords.size()));
        }
    }
    return report;
}

std::string GradCheckReport::to_text() const {
    std::ostringstream os;
    for (const auto& e : entries) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-10s %-4s max_rel_err=%.3e (%d coords)\n",
                      e.term.c_str(), e.tensor.c_str(), e.max_rel_err, e.coords_checked);
        os << buf;
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "overall max_rel_err=%.3e\n", max_rel_err);
    os << buf;
    return os.str();
}

}  // namespace deepform::trainer
