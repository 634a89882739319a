#include "wpcn/dataset.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "wpcn/selection.hpp"

namespace wpcn {

using nlohmann::json;

int encoded_value_count(int n, int k) { return (n + k) + n * (k + 1) + k; }

InputMatrix build_input_matrix(const NetworkInstance& inst) {
    const int n = inst.n_sources;
    const int k = inst.k_relays;
    std::vector<double> flat;
    flat.reserve(encoded_value_count(n, k));
    for (double g : inst.dl_gain) flat.push_back(g);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= k; ++j) flat.push_back(inst.ul_src[i][j]);
    for (double g : inst.ul_relay) flat.push_back(g);

    InputMatrix m;
    m.rows = static_cast<int>((flat.size() + 3) / 4);
    m.v.assign(static_cast<std::size_t>(m.rows) * 4, 0.0);
    std::copy(flat.begin(), flat.end(), m.v.begin());
    return m;
}

std::vector<std::vector<int>> label_to_matrix(const Assignment& a, int n, int k) {
    require(static_cast<int>(a.choice.size()) == n, "label_to_matrix: size mismatch");
    std::vector<std::vector<int>> m(k + 1, std::vector<int>(n, 0));
    for (int i = 0; i < n; ++i) {
        require(a.choice[i] >= 0 && a.choice[i] <= k, "label_to_matrix: out of range");
        m[a.choice[i]][i] = 1;
    }
    return m;
}

Assignment matrix_to_label(const std::vector<std::vector<int>>& m) {
    require(!m.empty(), "matrix_to_label: empty matrix");
    const int n = static_cast<int>(m[0].size());
    Assignment a;
    a.choice.assign(n, -1);
    for (int j = 0; j < static_cast<int>(m.size()); ++j)
        for (int i = 0; i < n; ++i)
            if (m[j][i] == 1) {
                require(a.choice[i] == -1, "matrix_to_label: column not one-hot");
                a.choice[i] = j;
            }
    for (int i = 0; i < n; ++i)
        require(a.choice[i] >= 0, "matrix_to_label: column without a 1");
    return a;
}

void fit_normalization(const std::vector<DatasetSample>& train, DatasetMeta& meta) {
    require(!train.empty(), "fit_normalization: empty train split");
    const int positions = meta.rows * 4;
    meta.feature_mu.assign(positions, 0.0);
    meta.feature_sigma.assign(positions, 0.0);
    for (int f = 0; f < meta.value_count; ++f) {
        double sum = 0.0, sum2 = 0.0;
        for (const auto& s : train) {
            const double x = std::log10(s.input.v[f]);
            sum += x;
            sum2 += x * x;
        }
        const double mu = sum / train.size();
        const double var = sum2 / train.size() - mu * mu;
        if (!(var > 0.0))
            throw std::runtime_error("fit_normalization: constant feature " +
                                     std::to_string(f));
        meta.feature_mu[f] = mu;
        meta.feature_sigma[f] = std::sqrt(var);
    }
}

InputMatrix normalize(const InputMatrix& input, const DatasetMeta& meta) {
    InputMatrix out = input;
    for (int f = 0; f < static_cast<int>(out.v.size()); ++f) {
        if (f < meta.value_count)
            out.v[f] = (std::log10(input.v[f]) - meta.feature_mu[f]) /
                       meta.feature_sigma[f];
        else
            out.v[f] = 0.0;  // padding stays at the sentinel
    }
    return out;
}

std::string sample_to_json_line(const DatasetSample& s) {
    json input = json::array();
    for (int r = 0; r < s.input.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < 4; ++c) row.push_back(s.input.at(r, c));
        input.push_back(row);
    }
    json j{{"id", s.id},
           {"input", input},
           {"label", s.label.choice},
           {"optimal_total", s.optimal_total}};
    return j.dump();
}

DatasetSample sample_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    DatasetSample s;
    s.id = j.at("id").get<std::int64_t>();
    const json& input = j.at("input");
    s.input.rows = static_cast<int>(input.size());
    s.input.v.reserve(static_cast<std::size_t>(s.input.rows) * 4);
    for (const auto& row : input)
        for (const auto& x : row) s.input.v.push_back(x.get<double>());
    s.label.choice = j.at("label").get<std::vector<int>>();
    s.optimal_total = j.at("optimal_total").get<double>();
    return s;
}

NetworkInstance instance_for_sample(const GenerateConfig& cfg, std::int64_t id) {
    return sample_instance(cfg.n, cfg.k, cfg.geo, cfg.eh, cfg.sys,
                           mix_seed(cfg.seed, static_cast<std::uint64_t>(id)),
                           cfg.demand_bits);
}

namespace {

void write_split(const std::vector<DatasetSample>& samples, int begin, int end,
                 const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    for (int i = begin; i < end; ++i) out << sample_to_json_line(samples[i]) << "\n";
}

}  // namespace

DatasetMeta generate_dataset(const GenerateConfig& cfg, const std::string& prefix) {
    require(cfg.sizes.train > 0 && cfg.sizes.val > 0 && cfg.sizes.test > 0,
            "generate_dataset: split sizes must be positive");

    const int total = cfg.sizes.total();
    std::vector<DatasetSample> samples;
    samples.reserve(total);
    for (int id = 0; id < total; ++id) {
        const NetworkInstance inst = instance_for_sample(cfg, id);
        const SelectionResult opt = branch_and_bound(inst);
        DatasetSample s;
        s.id = id;
        s.input = build_input_matrix(inst);
        s.label = opt.assignment;
        s.optimal_total = opt.schedule.total;
        samples.push_back(std::move(s));
    }

    DatasetMeta meta;
    meta.n = cfg.n;
    meta.k = cfg.k;
    meta.sizes = cfg.sizes;
    meta.seed = cfg.seed;
    meta.value_count = encoded_value_count(cfg.n, cfg.k);
    meta.rows = samples.front().input.rows;

    std::vector<DatasetSample> train(samples.begin(), samples.begin() + cfg.sizes.train);
    fit_normalization(train, meta);

    write_split(samples, 0, cfg.sizes.train, prefix + ".train.jsonl");
    write_split(samples, cfg.sizes.train, cfg.sizes.train + cfg.sizes.val,
                prefix + ".val.jsonl");
    write_split(samples, cfg.sizes.train + cfg.sizes.val, total, prefix + ".test.jsonl");
    save_meta(meta, prefix + ".meta.json");
    return meta;
}

std::vector<DatasetSample> load_samples(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<DatasetSample> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(sample_from_json_line(line));
    return out;
}

void save_meta(const DatasetMeta& meta, const std::string& path) {
    json j{{"n", meta.n},
           {"k", meta.k},
           {"sizes", {{"train", meta.sizes.train},
                      {"val", meta.sizes.val},
                      {"test", meta.sizes.test}}},
           {"seed", meta.seed},
           {"rows", meta.rows},
           {"value_count", meta.value_count},
           {"feature_mu", meta.feature_mu},
           {"feature_sigma", meta.feature_sigma}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
}

DatasetMeta load_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    DatasetMeta meta;
    meta.n = j.at("n").get<int>();
    meta.k = j.at("k").get<int>();
    meta.sizes.train = j.at("sizes").at("train").get<int>();
    meta.sizes.val = j.at("sizes").at("val").get<int>();
    meta.sizes.test = j.at("sizes").at("test").get<int>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.rows = j.at("rows").get<int>();
    meta.value_count = j.at("value_count").get<int>();
    meta.feature_mu = j.at("feature_mu").get<std::vector<double>>();
    meta.feature_sigma = j.at("feature_sigma").get<std::vector<double>>();
    return meta;
}

}  // namespace wpcn
