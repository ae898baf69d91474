#include "deepform/groupform.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "deepform/cluster.hpp"
#include "deepform/io.hpp"

namespace deepform::groupform {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<size_t> count_sizes(const std::vector<uint32_t>& membership, int k) {
    std::vector<size_t> sizes(k, 0);
    for (uint32_t m : membership) sizes[m]++;
    return sizes;
}

}  // namespace

Mat embed(const encoder::ModelParams& params, const ingest::Dataset& ds,
          const graph::UserGraph& g, int hops, int threads) {
    if (params.n_users() != ds.n_users() || params.n_items() != ds.n_items()) {
        std::ostringstream msg;
        msg << "checkpoint shape (" << params.n_users() << ", " << params.n_items()
            << ") does not match dataset (" << ds.n_users() << ", " << ds.n_items() << ")";
        throw DataError(msg.str());
    }
    encoder::EncoderCache cache = encoder::forward(ds.x_train, g, params, hops, nullptr, threads);
    // quantize to f32 so the in-memory rows equal the persisted file
    Mat z = cache.z_final;
    for (double& v : z.a) v = static_cast<double>(static_cast<float>(v));
    return z;
}

GroupAssignment form_groups(const Mat& z_final, int k, uint64_t seed, int max_iter, double tol,
                            int threads) {
    if (k < 2 || static_cast<size_t>(k) > z_final.rows)
        throw UsageError("K must be in [2, number of users]");
    auto t0 = Clock::now();
    auto km = cluster::kmeans(z_final, k, seed, max_iter, tol, threads);
    GroupAssignment ga;
    ga.k = k;
    ga.membership = std::move(km.assign);
    ga.group_sizes = count_sizes(ga.membership, k);
    ga.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return ga;
}

GroupAssignment form_groups_constrained(const Mat& z_final, int k, uint64_t seed,
                                        size_t max_size, int max_iter, double tol) {
    GroupAssignment ga = form_groups(z_final, k, seed, max_iter, tol);
    if (max_size == 0) return ga;

    auto t0 = Clock::now();
    bool changed = true;
    while (changed) {
        changed = false;
        int next_id = ga.k;
        for (int gid = 0; gid < ga.k; ++gid) {
            if (ga.group_sizes[gid] <= max_size) continue;
            // split the oversize group with a sub-K-Means
            std::vector<uint32_t> members;
            for (uint32_t u = 0; u < ga.membership.size(); ++u)
                if (ga.membership[u] == static_cast<uint32_t>(gid)) members.push_back(u);
            int parts = static_cast<int>((members.size() + max_size - 1) / max_size);
            parts = std::min<int>(parts, static_cast<int>(members.size()));
            Mat sub(members.size(), z_final.cols);
            for (size_t i = 0; i < members.size(); ++i)
                std::copy(z_final.row(members[i]), z_final.row(members[i]) + z_final.cols,
                          sub.row(i));
            auto km = cluster::kmeans(sub, parts, seed + static_cast<uint64_t>(gid) + 1,
                                      max_iter, tol);
            for (size_t i = 0; i < members.size(); ++i) {
                if (km.assign[i] == 0) continue;  // part 0 keeps the original id
                ga.membership[members[i]] =
                    static_cast<uint32_t>(next_id + static_cast<int>(km.assign[i]) - 1);
            }
            next_id += parts - 1;
            changed = true;
        }
        ga.k = next_id;
        ga.group_sizes = count_sizes(ga.membership, ga.k);
    }
    ga.wall_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return ga;
}

std::vector<BenchRow> bench_formation(const Mat& z_final, const std::vector<int>& k_list,
                                      uint64_t seed, int min_reps) {
    if (k_list.empty()) throw UsageError("k list must not be empty");
    std::vector<BenchRow> rows;
    rows.reserve(k_list.size());
    for (int k : k_list) {
        // one untimed run to estimate cost, then enough reps for a stable
        // per-formation figure
        auto t0 = Clock::now();
        form_groups(z_final, k, seed);
        double probe_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

        int reps = min_reps;
        if (probe_ms < 5.0)
            reps = std::max<int>(reps, std::min(200, static_cast<int>(5.0 / std::max(probe_ms, 1e-3))));

        auto t1 = Clock::now();
        for (int r = 0; r < reps; ++r) form_groups(z_final, k, seed + static_cast<uint64_t>(r));
        double total = std::chrono::duration<double, std::milli>(Clock::now() - t1).count();
        rows.push_back({k, total / reps, reps});
    }
    return rows;
}

std::string bench_to_tsv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "k\twall_ms\treps\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d\t%.4f\t%d\n", r.k, r.wall_ms, r.reps);
        os << buf;
    }
    return os.str();
}

void save_embedding(const Mat& z_final, const std::string& path) {
    AtomicFile f(path);
    std::ofstream& os = f.stream();
    os.write("DFEM", 4);
    write_le<uint16_t>(os, 1);
    write_le<uint32_t>(os, static_cast<uint32_t>(z_final.rows));
    write_le<uint32_t>(os, static_cast<uint32_t>(z_final.cols));
    for (double v : z_final.a) write_le<float>(os, static_cast<float>(v));
    f.commit();
}

Mat load_embedding(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open embedding file: " + path);
    expect_magic(is, "DFEM", path);
    uint16_t version = read_le<uint16_t>(is);
    if (version != 1) throw DataError("unsupported embedding version");
    uint32_t n = read_le<uint32_t>(is);
    uint32_t d = read_le<uint32_t>(is);
    Mat z(n, d);
    for (double& v : z.a) v = static_cast<double>(read_le<float>(is));
    return z;
}

void save_groups_csv(const GroupAssignment& ga, const std::string& path,
                     const ingest::Dataset* ds) {
    std::ostringstream os;
    os << "user_id,group_id\n";
    for (uint32_t u = 0; u < ga.membership.size(); ++u) {
        if (ds)
            os << ds->user_ids[u];
        else
            os << u;
        os << ',' << ga.membership[u] << '\n';
    }
    write_text_file_atomic(path, os.str());
}

GroupAssignment load_groups_csv(const std::string& path, const ingest::Dataset* ds) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open groups file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty groups file: " + path);

    size_t n = ds ? ds->n_users() : 0;
    std::vector<std::pair<uint32_t, uint32_t>> pairs;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        size_t comma = line.rfind(',');
        if (comma == std::string::npos) throw DataError("bad groups line: " + line);
        std::string uid = line.substr(0, comma);
        uint32_t gid = static_cast<uint32_t>(std::stoul(line.substr(comma + 1)));
        uint32_t u;
        if (ds) {
            auto it = ds->user_index.find(uid);
            if (it != ds->user_index.end()) {
                u = it->second;
            } else {
                u = static_cast<uint32_t>(std::stoul(uid));
                if (u >= n) throw DataError("unknown user id in groups file: " + uid);
            }
        } else {
            u = static_cast<uint32_t>(std::stoul(uid));
            n = std::max<size_t>(n, u + 1);
        }
        pairs.emplace_back(u, gid);
    }

    GroupAssignment ga;
    ga.membership.assign(n, 0);
    std::vector<bool> seen(n, false);
    uint32_t max_gid = 0;
    for (auto [u, gid] : pairs) {
        if (seen[u]) throw DataError("duplicate user in groups file");
        seen[u] = true;
        ga.membership[u] = gid;
        max_gid = std::max(max_gid, gid);
    }
    for (size_t u = 0; u < n; ++u)
        if (!seen[u]) throw DataError("groups file does not cover every user");
    ga.k = static_cast<int>(max_gid) + 1;
    ga.group_sizes = count_sizes(ga.membership, ga.k);
    return ga;
}

}  // namespace deepform::groupform
