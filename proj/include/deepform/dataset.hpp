#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "deepform/csr.hpp"

namespace deepform::ingest {

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    double rating = 0.0;
    std::optional<int64_t> timestamp;
};

struct ParseStats {
    size_t total_lines = 0;
    size_t parsed = 0;
    size_t malformed = 0;
    std::vector<size_t> malformed_lines;  // 1-based, capped
};

struct DatasetStats {
    size_t n_users = 0;
    size_t n_items = 0;
    size_t nnz_train = 0;
    size_t n_test = 0;
};

// Parsed, filtered, split and normalized view of a rating log.
// X_train rows are unit-L2 with values quantized to f32 so the binary
// cache round-trips bit-for-bit.
struct Dataset {
    std::vector<std::string> user_ids;  // dense index -> external id
    std::vector<std::string> item_ids;
    std::unordered_map<std::string, uint32_t> user_index;
    std::unordered_map<std::string, uint32_t> item_index;
    Csr x_train;                                    // |U| x |I|, row-normalized
    std::vector<std::vector<uint32_t>> test_items;  // per-user held-out item indices
    DatasetStats stats;

    size_t n_users() const { return user_ids.size(); }
    size_t n_items() const { return item_ids.size(); }
};

struct SplitOptions {
    double ratio = 0.8;  // train fraction
    uint64_t seed = 42;
};

// Delimiter auto-detected between tab and comma unless forced.
std::vector<InteractionRecord> parse_interactions(const std::string& path,
                                                  char delimiter = '\0',
                                                  ParseStats* stats_out = nullptr);

// keep-last dedup by timestamp, falling back to file order
void dedup_records(std::vector<InteractionRecord>& records);

// Iteratively drop users/items below min_count until a fixed point.
std::vector<InteractionRecord> filter_min_interactions(std::vector<InteractionRecord> records,
                                                       size_t min_count);

// Per-user split: leave-latest when every record has a timestamp, else
// seeded uniform. Builds indices and the raw (unnormalized) train matrix.
Dataset split_train_test(const std::vector<InteractionRecord>& records, const SplitOptions& opts);

// Scale each train row to unit Euclidean norm (values quantized to f32).
void normalize_ratings(Dataset& ds);

// parse -> dedup -> filter -> split -> normalize
Dataset build_dataset(const std::string& path, size_t min_count, const SplitOptions& opts,
                      char delimiter = '\0');

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace deepform::ingest
