#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wpcn/model.hpp"

namespace wpcn {

// Row-major rows x 4 matrix of doubles.
struct InputMatrix {
    int rows = 0;
    int cols = 4;
    std::vector<double> v;

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

struct DatasetSample {
    std::int64_t id = 0;
    InputMatrix input;        // raw encoded gains, zero-padded tail
    Assignment label;         // optimal per-source choice
    double optimal_total = 0.0;
};

struct SplitSizes {
    int train = 0;
    int val = 0;
    int test = 0;
    int total() const { return train + val + test; }
};

struct DatasetMeta {
    int n = 0;
    int k = 0;
    SplitSizes sizes;
    std::uint64_t seed = 0;
    int rows = 0;
    int value_count = 0;             // encoded values before padding
    std::vector<double> feature_mu;  // per encoded position, log10 domain
    std::vector<double> feature_sigma;
};

// Number of encoded channel gains for an (n, k) network.
int encoded_value_count(int n, int k);

// Flattens the gains (downlink block, then uplink source rows, then
// uplink relay links) row-major into a rows x 4 matrix, zero-padding the
// tail; rows = ceil(count / 4).
InputMatrix build_input_matrix(const NetworkInstance& inst);

// One-hot (K+1) x N matrix with entry (j, i) = 1 iff source i picked j.
std::vector<std::vector<int>> label_to_matrix(const Assignment& a, int n, int k);
Assignment matrix_to_label(const std::vector<std::vector<int>>& m);

// Per-position standardization in the log10 domain. Fit skips padded
// positions; apply maps padded positions to 0. Throws on a zero-variance
// feature.
void fit_normalization(const std::vector<DatasetSample>& train, DatasetMeta& meta);
InputMatrix normalize(const InputMatrix& input, const DatasetMeta& meta);

struct GenerateConfig {
    int n = 3;
    int k = 2;
    SplitSizes sizes{20000, 2000, 1000};
    std::uint64_t seed = 7;
    GeometryConfig geo;
    EhParams eh;
    SystemParams sys;
    double demand_bits = 50.0;
};

// Samples instances, labels each with the exact branch-and-bound optimum,
// fits normalization on the train split, and writes
// <prefix>.{train,val,test}.jsonl plus <prefix>.meta.json. Deterministic
// per seed.
DatasetMeta generate_dataset(const GenerateConfig& cfg, const std::string& prefix);

// Rebuilds the i-th sample of a generation run (used by the evaluation
// harness to recover the full instance behind a test sample).
NetworkInstance instance_for_sample(const GenerateConfig& cfg, std::int64_t id);

std::vector<DatasetSample> load_samples(const std::string& path);
DatasetMeta load_meta(const std::string& path);
void save_meta(const DatasetMeta& meta, const std::string& path);

std::string sample_to_json_line(const DatasetSample& s);
DatasetSample sample_from_json_line(const std::string& line);

}  // namespace wpcn
