#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepform::synth {

// Planted-block interaction generator used by the acceptance runs and the
// `synth` subcommand. Users in a block draw most of their items from the
// block's item slice; `noise` is the probability of drawing uniformly
// from the whole catalogue instead.
struct SynthConfig {
    size_t users = 300;
    size_t blocks = 3;
    size_t items = 60;
    double noise = 0.1;
    size_t ratings_per_user = 20;
    uint64_t seed = 7;
    // > 1 builds a hierarchy: `blocks` leaves grouped into `levels`
    // nested tiers (leaf count must be divisible by 2^(levels-1) times
    // the top count); items are split across tiers so every granularity
    // carries signal.
    int levels = 1;
};

struct SynthData {
    std::vector<std::string> lines;  // user \t item \t rating \t timestamp
    // labels[l][u] = user u's block at level l (coarse to fine)
    std::vector<std::vector<uint32_t>> labels;
    std::vector<size_t> level_counts;  // clusters per level
};

SynthData generate(const SynthConfig& cfg);

void write_tsv(const SynthData& d, const std::string& path);
// one row per user: user_id,label_level0[,label_level1,...]
void write_labels_csv(const SynthData& d, const std::string& path);

std::vector<std::vector<uint32_t>> load_labels_csv(const std::string& path);

}  // namespace deepform::synth
