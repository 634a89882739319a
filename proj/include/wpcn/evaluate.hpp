#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wpcn/dataset.hpp"
#include "wpcn/neural.hpp"
#include "wpcn/selection.hpp"

namespace wpcn {

struct MethodRow {
    std::string method;
    double mean_total = 0.0;        // s
    double mean_gap = 0.0;          // (total - optimal) / optimal
    double mean_runtime = 0.0;      // s, selection + scheduling per instance
    std::optional<double> accuracy; // learned methods: exact-assignment match
};

struct EvalReport {
    std::vector<MethodRow> rows;
    int instances = 0;
    std::string config_echo;
};

struct NamedModel {
    std::string name;
    Model model;
};

// Runs the exact solver plus the heuristics and any supplied models over
// the test instances; rows are ordered bba, or, criterion, direct, then
// models in the given order. Test instances are rebuilt from the
// generation config so the full gain matrices are available.
EvalReport evaluate_methods(const GenerateConfig& gen,
                            const std::vector<DatasetSample>& test,
                            const std::vector<NamedModel>& models);

std::string report_to_csv(const EvalReport& report);
std::string report_to_json(const EvalReport& report);

}  // namespace wpcn
