#pragma once

#include <string>
#include <vector>

#include "wpcn/neural.hpp"

namespace wpcn {

// Blended-loss defaults for teacher-student runs (20 epochs, equal CE and
// KLD weights).
TrainConfig default_distill_config();

struct SearchConfig {
    std::vector<int> node_menu{64, 32, 24, 16, 8, 2, 0};  // must contain 0
    std::int64_t eps_params = 300;     // interval width stop
    double delta_rel = 0.02;           // per-realization stop, relative to target
    double v_threshold = 1.5;          // validation CE gate
    TrainConfig train = default_distill_config();  // inner training budget
};

struct SearchRecord {
    std::int64_t target_params = 0;
    std::int64_t realized_params = 0;
    std::vector<int> nodes;
    int conv_blocks = 0;   // mid conv layers surviving in the student
    double val_loss = 0.0;
    std::int64_t ub = 0, lb = 0;  // interval after this iteration
    bool passed = false;
};

struct SearchTrace {
    std::int64_t teacher_params = 0;
    std::vector<SearchRecord> records;
    bool met_threshold = false;  // some iteration passed the loss gate
};

struct DistillResult {
    Model model;
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    double final_val_ce = 0.0;
};

// Trains a student with the blended truth/teacher loss; teacher logits
// are computed once over the train split in infer mode.
DistillResult distill_train(const Model& teacher, const ArchSpec& student_arch,
                            const TrainData& data, const TrainConfig& cfg);

// Greedy per-layer node selection, last adjustable layer to first: at
// each position tries every menu entry (0 removes a mid layer; the stem
// never drops to 0 and the classifier head is held fixed), keeps the one
// whose realized parameter count lands closest to the target, and stops
// early once within delta of it. Returns the node list and its exact
// parameter count.
struct BudgetFit {
    std::vector<int> nodes;
    std::int64_t params = 0;
};
BudgetFit fit_nodes_to_budget(int n, int k, const std::vector<int>& nodes,
                              std::pair<int, int> mid_kernel,
                              std::int64_t target_params,
                              const std::vector<int>& menu, double delta_rel);

// Dichotomous search over the trainable-parameter budget: halves the
// [lb, ub] interval at the midpoint target each iteration, realizes the
// target with fit_nodes_to_budget (continuing from the previous student),
// distill-trains it, and moves ub (pass) or lb (fail) to the midpoint.
// Returns the smallest passing student, or the lowest-loss one with the
// trace flagged when none passes.
struct SearchResult {
    Model model;
    SearchTrace trace;
};
SearchResult search_student_arch(const Model& teacher, const TrainData& data,
                                 const SearchConfig& cfg);

std::string trace_to_json(const SearchTrace& trace);

}  // namespace wpcn
