#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "wpcn/dataset.hpp"
#include "wpcn/selection.hpp"

using namespace wpcn;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("input matrix shapes follow the ceil rule") {
    // Two-relay networks, one to five sources.
    const int expected_rows[] = {2, 3, 4, 5, 6};
    for (int n = 1; n <= 5; ++n) {
        const NetworkInstance inst = sample_instance(n, 2, {}, {}, {}, 1);
        const InputMatrix m = build_input_matrix(inst);
        CHECK(m.rows == expected_rows[n - 1]);
        CHECK(m.cols == 4);
    }
    // One source, three relays: 11 values in a 3x4 grid, one trailing zero.
    const NetworkInstance inst = sample_instance(1, 3, {}, {}, {}, 2);
    CHECK(encoded_value_count(1, 3) == 11);
    const InputMatrix m = build_input_matrix(inst);
    CHECK(m.rows == 3);
    CHECK(m.v[11] == 0.0);
    for (int f = 0; f < 11; ++f) CHECK(m.v[f] > 0.0);
}

TEST_CASE("input matrix flatten order") {
    NetworkInstance inst;
    inst.n_sources = 2;
    inst.k_relays = 2;
    inst.dl_gain = {1.0, 2.0, 3.0, 4.0};
    inst.ul_src = {{5.0, 6.0, 7.0}, {8.0, 9.0, 10.0}};
    inst.ul_relay = {11.0, 12.0};
    inst.demand = {50.0, 50.0};
    inst.eh.assign(4, EhParams{});
    const InputMatrix m = build_input_matrix(inst);
    CHECK(m.rows == 3);
    const std::vector<double> expect{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(m.v[i] == expect[i]);
}

TEST_CASE("one-hot label matrices") {
    // Worked 2-source-2-relay case: relay 1 for the first source, direct
    // for the second.
    const auto m = label_to_matrix(Assignment{{1, 0}}, 2, 2);
    CHECK(m == std::vector<std::vector<int>>{{0, 1}, {1, 0}, {0, 0}});

    const auto direct = label_to_matrix(Assignment{{0, 0, 0}}, 3, 2);
    CHECK(direct[0] == std::vector<int>{1, 1, 1});

    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        Assignment a;
        for (int i = 0; i < 4; ++i)
            a.choice.push_back(static_cast<int>(rng.next_u64() % 3));
        CHECK(matrix_to_label(label_to_matrix(a, 4, 2)).choice == a.choice);
    }
}

TEST_CASE("normalization fits the train split") {
    GenerateConfig cfg;
    cfg.n = 2;
    cfg.k = 2;
    cfg.sizes = {200, 20, 10};
    cfg.seed = 3;

    std::vector<DatasetSample> train;
    for (int id = 0; id < cfg.sizes.train; ++id) {
        DatasetSample s;
        s.id = id;
        s.input = build_input_matrix(instance_for_sample(cfg, id));
        train.push_back(s);
    }
    DatasetMeta meta;
    meta.n = cfg.n;
    meta.k = cfg.k;
    meta.rows = train[0].input.rows;
    meta.value_count = encoded_value_count(cfg.n, cfg.k);
    fit_normalization(train, meta);

    // Standardized features: mean 0, std 1 on the fitting split.
    for (int f = 0; f < meta.value_count; ++f) {
        double sum = 0.0, sum2 = 0.0;
        for (const auto& s : train) {
            const InputMatrix norm = normalize(s.input, meta);
            sum += norm.v[f];
            sum2 += norm.v[f] * norm.v[f];
        }
        const double mean = sum / train.size();
        const double var = sum2 / train.size() - mean * mean;
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-9);
    }

    // Padding stays at the sentinel after normalization.
    if (static_cast<int>(train[0].input.v.size()) > meta.value_count) {
        const InputMatrix norm = normalize(train[0].input, meta);
        CHECK(norm.v.back() == 0.0);
    }

    // A constant feature cannot be standardized.
    std::vector<DatasetSample> degenerate = train;
    for (auto& s : degenerate) s.input.v[0] = 0.5;
    DatasetMeta bad = meta;
    CHECK_THROWS_AS(fit_normalization(degenerate, bad), std::runtime_error);
}

TEST_CASE("dataset generation is deterministic and labeled by the exact solver") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "wpcn_ds_test";
    fs::create_directories(dir);
    GenerateConfig cfg;
    cfg.n = 2;
    cfg.k = 2;
    cfg.sizes = {30, 10, 5};
    cfg.seed = 11;

    const DatasetMeta meta_a = generate_dataset(cfg, (dir / "a").string());
    const DatasetMeta meta_b = generate_dataset(cfg, (dir / "b").string());
    for (const char* split : {".train.jsonl", ".val.jsonl", ".test.jsonl",
                              ".meta.json"}) {
        CHECK(slurp((dir / ("a" + std::string(split))).string()) ==
              slurp((dir / ("b" + std::string(split))).string()));
    }
    CHECK(meta_a.rows == 3);
    CHECK(meta_a.sizes.train + meta_a.sizes.val + meta_a.sizes.test == 45);

    // Labels match a fresh run of the solver; ids are split in order.
    const auto test = load_samples((dir / "a.test.jsonl").string());
    CHECK(static_cast<int>(test.size()) == 5);
    for (const auto& s : test) {
        CHECK(s.id >= 40);
        const NetworkInstance inst = instance_for_sample(cfg, s.id);
        const SelectionResult opt = branch_and_bound(inst);
        CHECK(s.label.choice == opt.assignment.choice);
        CHECK(s.optimal_total == doctest::Approx(opt.schedule.total).epsilon(1e-12));
        CHECK(build_input_matrix(inst).v == s.input.v);
    }

    // Meta round-trips.
    const DatasetMeta loaded = load_meta((dir / "a.meta.json").string());
    CHECK(loaded.feature_mu == meta_a.feature_mu);
    CHECK(loaded.feature_sigma == meta_a.feature_sigma);
    CHECK(loaded.seed == cfg.seed);

    fs::remove_all(dir);
}

TEST_CASE("sample lines round-trip") {
    DatasetSample s;
    s.id = 42;
    s.input.rows = 2;
    s.input.v = {1e-5, 2e-6, 3.5e-7, 4e-8, 5e-4, 0.125, 7e-9, 0.0};
    s.label.choice = {1, 0};
    s.optimal_total = 0.0123456789;
    const DatasetSample back = sample_from_json_line(sample_to_json_line(s));
    CHECK(back.id == s.id);
    CHECK(back.input.rows == s.input.rows);
    CHECK(back.input.v == s.input.v);
    CHECK(back.label.choice == s.label.choice);
    CHECK(back.optimal_total == s.optimal_total);
}

TEST_CASE("distinct instances produce distinct matrices and diverse labels") {
    GenerateConfig cfg;
    cfg.n = 3;
    cfg.k = 2;
    cfg.seed = 19;
    std::set<std::vector<double>> seen;
    std::set<int> classes;
    for (int id = 0; id < 400; ++id) {
        const NetworkInstance inst = instance_for_sample(cfg, id);
        const InputMatrix m = build_input_matrix(inst);
        CHECK(seen.insert(m.v).second);
        for (int c : branch_and_bound(inst).assignment.choice) classes.insert(c);
    }
    // All K+1 classes show up in a modest sample of optimal labels.
    CHECK(classes == std::set<int>{0, 1, 2});
}
