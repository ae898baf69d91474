#include "deepform/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "deepform/io.hpp"
#include "deepform/rng.hpp"

namespace deepform::ingest {

namespace {

constexpr size_t kMaxReportedLines = 20;

std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

char detect_delimiter(const std::vector<std::string>& lines) {
    size_t tabs = 0, commas = 0, scanned = 0;
    for (const auto& l : lines) {
        if (l.empty()) continue;
        tabs += static_cast<size_t>(std::count(l.begin(), l.end(), '\t'));
        commas += static_cast<size_t>(std::count(l.begin(), l.end(), ','));
        if (++scanned >= 100) break;
    }
    return commas > tabs ? ',' : '\t';
}

bool parse_rating(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return false;
    return std::isfinite(out) && out >= 0.0;
}

bool parse_timestamp(const std::string& s, int64_t& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return end == s.c_str() + s.size();
}

}  // namespace

std::vector<InteractionRecord> parse_interactions(const std::string& path, char delimiter,
                                                  ParseStats* stats_out) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read interaction file: " + path);

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }

    char delim = delimiter ? delimiter : detect_delimiter(lines);

    ParseStats stats;
    std::vector<InteractionRecord> records;
    records.reserve(lines.size());

    for (size_t i = 0; i < lines.size(); ++i) {
        const std::string& l = lines[i];
        if (l.empty()) continue;
        stats.total_lines++;

        auto fields = split_fields(l, delim);
        bool ok = fields.size() >= 3 && !fields[0].empty() && !fields[1].empty();
        InteractionRecord rec;
        if (ok) {
            rec.user_id = fields[0];
            rec.item_id = fields[1];
            ok = parse_rating(fields[2], rec.rating);
        }
        if (ok && fields.size() >= 4 && !fields[3].empty()) {
            int64_t ts;
            if (parse_timestamp(fields[3], ts))
                rec.timestamp = ts;
            else
                ok = false;
        }
        if (ok) {
            records.push_back(std::move(rec));
            stats.parsed++;
        } else {
            stats.malformed++;
            if (stats.malformed_lines.size() < kMaxReportedLines)
                stats.malformed_lines.push_back(i + 1);
        }
    }

    if (stats.total_lines == 0)
        std::cerr << "warning: " << path << " contains no interactions\n";

    if (stats.malformed > 0 &&
        static_cast<double>(stats.malformed) > 0.01 * static_cast<double>(stats.total_lines)) {
        std::ostringstream msg;
        msg << path << ": " << stats.malformed << " of " << stats.total_lines
            << " lines malformed (> 1%); first bad lines:";
        for (size_t n : stats.malformed_lines) msg << ' ' << n;
        throw DataError(msg.str());
    }
    if (stats.malformed > 0)
        std::cerr << "warning: skipped " << stats.malformed << " malformed line(s) in " << path
                  << "\n";

    if (stats_out) *stats_out = stats;
    return records;
}

void dedup_records(std::vector<InteractionRecord>& records) {
    std::unordered_map<std::string, size_t> last;  // "user\x1fitem" -> kept index
    std::vector<InteractionRecord> kept;
    kept.reserve(records.size());
    for (auto& rec : records) {
        std::string key = rec.user_id + '\x1f' + rec.item_id;
        auto it = last.find(key);
        if (it == last.end()) {
            last.emplace(std::move(key), kept.size());
            kept.push_back(std::move(rec));
            continue;
        }
        InteractionRecord& old = kept[it->second];
        bool replace = true;
        if (old.timestamp && rec.timestamp) replace = *rec.timestamp >= *old.timestamp;
        if (replace) old = std::move(rec);
    }
    records = std::move(kept);
}

std::vector<InteractionRecord> filter_min_interactions(std::vector<InteractionRecord> records,
                                                       size_t min_count) {
    if (min_count < 1) throw UsageError("min_count must be >= 1");
    bool changed = true;
    while (changed && !records.empty()) {
        std::unordered_map<std::string, size_t> ucount, icount;
        for (const auto& r : records) {
            ucount[r.user_id]++;
            icount[r.item_id]++;
        }
        std::vector<InteractionRecord> next;
        next.reserve(records.size());
        for (auto& r : records) {
            if (ucount[r.user_id] >= min_count && icount[r.item_id] >= min_count)
                next.push_back(std::move(r));
        }
        changed = next.size() != records.size();
        records = std::move(next);
    }
    if (records.empty()) throw DataError("filter removed all data (min_count too high)");
    return records;
}

Dataset split_train_test(const std::vector<InteractionRecord>& records,
                         const SplitOptions& opts) {
    if (!(opts.ratio > 0.0 && opts.ratio < 1.0)) throw UsageError("split ratio must be in (0,1)");
    if (records.empty()) throw DataError("no records to split");

    Dataset ds;
    auto user_of = [&](const std::string& id) -> uint32_t {
        auto it = ds.user_index.find(id);
        if (it != ds.user_index.end()) return it->second;
        uint32_t idx = static_cast<uint32_t>(ds.user_ids.size());
        ds.user_index.emplace(id, idx);
        ds.user_ids.push_back(id);
        return idx;
    };
    auto item_of = [&](const std::string& id) -> uint32_t {
        auto it = ds.item_index.find(id);
        if (it != ds.item_index.end()) return it->second;
        uint32_t idx = static_cast<uint32_t>(ds.item_ids.size());
        ds.item_index.emplace(id, idx);
        ds.item_ids.push_back(id);
        return idx;
    };

    bool all_timestamped = true;
    for (const auto& r : records)
        if (!r.timestamp) {
            all_timestamped = false;
            break;
        }

    struct Entry {
        uint32_t item;
        double rating;
        int64_t ts;
        size_t order;
    };
    std::vector<std::vector<Entry>> per_user;
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        uint32_t u = user_of(r.user_id);
        uint32_t it = item_of(r.item_id);
        if (per_user.size() <= u) per_user.resize(u + 1);
        per_user[u].push_back({it, r.rating, r.timestamp.value_or(0), i});
    }

    size_t n_users = ds.user_ids.size();
    size_t n_items = ds.item_ids.size();
    ds.test_items.assign(n_users, {});
    std::vector<std::tuple<uint32_t, uint32_t, double>> train_trips;
    size_t single_users = 0;

    for (size_t u = 0; u < n_users; ++u) {
        auto& entries = per_user[u];
        size_t n = entries.size();
        size_t n_test = 0;
        if (n >= 2) {
            n_test = static_cast<size_t>(
                std::ceil((1.0 - opts.ratio) * static_cast<double>(n)));
            n_test = std::min(std::max<size_t>(n_test, 1), n - 1);
        } else {
            single_users++;
        }

        if (all_timestamped) {
            std::stable_sort(entries.begin(), entries.end(),
                             [](const Entry& a, const Entry& b) { return a.ts < b.ts; });
        } else {
            // seeded per-user shuffle; latest positions become test
            std::vector<size_t> idx(n);
            for (size_t i = 0; i < n; ++i) idx[i] = i;
            Rng rng = derived_rng(opts.seed, u);
            rng.shuffle(idx);
            std::vector<Entry> shuffled(n);
            for (size_t i = 0; i < n; ++i) shuffled[i] = entries[idx[i]];
            entries = std::move(shuffled);
        }

        for (size_t i = 0; i < n; ++i) {
            if (i < n - n_test) {
                if (entries[i].rating > 0.0)
                    train_trips.emplace_back(static_cast<uint32_t>(u), entries[i].item,
                                             entries[i].rating);
            } else {
                ds.test_items[u].push_back(entries[i].item);
            }
        }
        std::sort(ds.test_items[u].begin(), ds.test_items[u].end());
    }

    if (single_users > 0)
        std::cerr << "warning: " << single_users
                  << " user(s) with a single interaction kept in train, excluded from test\n";

    ds.x_train = csr_from_triplets(n_users, n_items, std::move(train_trips));

    ds.stats.n_users = n_users;
    ds.stats.n_items = n_items;
    ds.stats.nnz_train = ds.x_train.nnz();
    size_t n_test_total = 0;
    for (const auto& t : ds.test_items) n_test_total += t.size();
    ds.stats.n_test = n_test_total;
    return ds;
}

void normalize_ratings(Dataset& ds) {
    Csr& x = ds.x_train;
    for (size_t u = 0; u < x.rows; ++u) {
        double sq = 0.0;
        for (size_t k = x.offs[u]; k < x.offs[u + 1]; ++k) sq += x.val[k] * x.val[k];
        if (sq == 0.0)
            throw DataError("user " + ds.user_ids[u] + " has no positive training ratings");
        double inv = 1.0 / std::sqrt(sq);
        for (size_t k = x.offs[u]; k < x.offs[u + 1]; ++k)
            x.val[k] = static_cast<double>(static_cast<float>(x.val[k] * inv));
    }
}

Dataset build_dataset(const std::string& path, size_t min_count, const SplitOptions& opts,
                      char delimiter) {
    auto records = parse_interactions(path, delimiter);
    dedup_records(records);
    records = filter_min_interactions(std::move(records), min_count);
    Dataset ds = split_train_test(records, opts);
    normalize_ratings(ds);
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    AtomicFile f(path);
    std::ofstream& os = f.stream();
    os.write("DFRM", 4);
    write_le<uint16_t>(os, 1);
    write_le<uint32_t>(os, static_cast<uint32_t>(ds.n_users()));
    write_le<uint32_t>(os, static_cast<uint32_t>(ds.n_items()));
    write_le<uint64_t>(os, ds.x_train.nnz());
    for (uint64_t v : ds.x_train.offs) write_le<uint64_t>(os, v);
    for (uint32_t c : ds.x_train.col) write_le<uint32_t>(os, c);
    for (double v : ds.x_train.val) write_le<float>(os, static_cast<float>(v));
    for (const auto& s : ds.user_ids) write_string(os, s);
    for (const auto& s : ds.item_ids) write_string(os, s);
    // held-out items, same CSR shape as the train arrays
    uint64_t off = 0;
    write_le<uint64_t>(os, off);
    for (const auto& t : ds.test_items) {
        off += t.size();
        write_le<uint64_t>(os, off);
    }
    for (const auto& t : ds.test_items)
        for (uint32_t it : t) write_le<uint32_t>(os, it);
    f.commit();
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open dataset cache: " + path);
    expect_magic(is, "DFRM", path);
    uint16_t version = read_le<uint16_t>(is);
    if (version != 1) throw DataError("unsupported dataset cache version");

    Dataset ds;
    uint32_t n_users = read_le<uint32_t>(is);
    uint32_t n_items = read_le<uint32_t>(is);
    uint64_t nnz = read_le<uint64_t>(is);

    ds.x_train.rows = n_users;
    ds.x_train.cols = n_items;
    ds.x_train.offs.resize(n_users + 1);
    for (auto& v : ds.x_train.offs) v = read_le<uint64_t>(is);
    ds.x_train.col.resize(nnz);
    for (auto& c : ds.x_train.col) c = read_le<uint32_t>(is);
    ds.x_train.val.resize(nnz);
    for (auto& v : ds.x_train.val) v = static_cast<double>(read_le<float>(is));

    ds.user_ids.resize(n_users);
    for (uint32_t u = 0; u < n_users; ++u) {
        ds.user_ids[u] = read_string(is);
        ds.user_index.emplace(ds.user_ids[u], u);
    }
    ds.item_ids.resize(n_items);
    for (uint32_t i = 0; i < n_items; ++i) {
        ds.item_ids[i] = read_string(is);
        ds.item_index.emplace(ds.item_ids[i], i);
    }

    std::vector<uint64_t> toffs(n_users + 1);
    for (auto& v : toffs) v = read_le<uint64_t>(is);
    ds.test_items.assign(n_users, {});
    for (uint32_t u = 0; u < n_users; ++u) {
        ds.test_items[u].resize(toffs[u + 1] - toffs[u]);
        for (auto& it : ds.test_items[u]) it = read_le<uint32_t>(is);
    }

    ds.stats.n_users = n_users;
    ds.stats.n_items = n_items;
    ds.stats.nnz_train = nnz;
    ds.stats.n_test = toffs[n_users];
    return ds;
}

}  // namespace deepform::ingest
