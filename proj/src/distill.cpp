#include "wpcn/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include <json.hpp>

namespace wpcn {

using nlohmann::json;

TrainConfig default_distill_config() {
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.lambda1 = 0.5;
    cfg.lambda2 = 0.5;
    return cfg;
}

DistillResult distill_train(const Model& teacher, const ArchSpec& student_arch,
                            const TrainData& data, const TrainConfig& cfg) {
    require(data.train && data.meta, "distill_train: missing data");
    require(teacher.arch.class_rows == student_arch.class_rows &&
                teacher.arch.class_cols == student_arch.class_cols,
            "distill_train: class shape mismatch");

    // Teacher soft outputs over the train split, computed once.
    std::vector<InputMatrix> inputs;
    inputs.reserve(data.train->size());
    for (const auto& s : *data.train) inputs.push_back(s.input);
    const Tensor all = model_logits(teacher, inputs);
    std::vector<Tensor> teacher_logits(data.train->size());
    const std::size_t per = all.per_sample();
    for (std::size_t s = 0; s < teacher_logits.size(); ++s) {
        Tensor t(1, 1, all.h, all.w);
        std::copy(all.v.begin() + static_cast<std::ptrdiff_t>(s * per),
                  all.v.begin() + static_cast<std::ptrdiff_t>((s + 1) * per),
                  t.v.begin());
        teacher_logits[s] = std::move(t);
    }

    const TrainResult tr = train(student_arch, data, cfg, &teacher_logits);
    DistillResult out;
    out.model = tr.model;
    out.train_loss = tr.train_loss;
    out.val_loss = tr.val_loss;
    out.final_val_ce = tr.val_loss.back();
    return out;
}

namespace {

std::int64_t stack_params(int n, int k, const std::vector<int>& nodes,
                          std::pair<int, int> mid_kernel) {
    return param_count(make_conv_stack(n, k, nodes, mid_kernel, "candidate"));
}

// Conv node list (stem, mids..., head) of a conv-stack architecture.
std::vector<int> conv_nodes(const ArchSpec& arch) {
    std::vector<int> nodes;
    for (const auto& l : arch.layers)
        if (const auto* cv = std::get_if<ConvSpec>(&l)) nodes.push_back(cv->out_ch);
    require(nodes.size() >= 2, "conv_nodes: not a conv stack");
    return nodes;
}

}  // namespace

BudgetFit fit_nodes_to_budget(int n, int k, const std::vector<int>& nodes,
                              std::pair<int, int> mid_kernel,
                              std::int64_t target_params,
                              const std::vector<int>& menu, double delta) {
    require(target_params >= 0, "fit_nodes_to_budget: negative target");
    require(std::find(menu.begin(), menu.end(), 0) != menu.end(),
            "fit_nodes_to_budget: menu must contain 0");

    BudgetFit fit;
    fit.nodes = nodes;
    fit.params = stack_params(n, k, fit.nodes, mid_kernel);

    // The classifier head is not searched (its width is pinned by the
    // architecture); the stem is adjustable but never removed.
    int pos = static_cast<int>(fit.nodes.size()) - 2;
    while (pos >= 0) {
        std::vector<int> best_nodes;
        std::int64_t best_params = 0;
        std::int64_t best_diff = std::numeric_limits<std::int64_t>::max();
        int best_m = -1;
        for (int m : menu) {
            if (m == 0 && pos == 0) continue;  // stem survives
            std::vector<int> cand = fit.nodes;
            if (m == 0)
                cand.erase(cand.begin() + pos);
            else
                cand[pos] = m;
            const std::int64_t p = stack_params(n, k, cand, mid_kernel);
            const std::int64_t diff = std::llabs(target_params - p);
            const bool better =
                diff < best_diff ||
                (diff == best_diff && (p < best_params ||
                                       (p == best_params && m < best_m)));
            if (best_m < 0 || better) {
                best_diff = diff;
                best_params = p;
                best_nodes = std::move(cand);
                best_m = m;
            }
        }
        fit.nodes = std::move(best_nodes);
        fit.params = best_params;
        if (static_cast<double>(best_diff) < delta) break;
        --pos;
    }
    return fit;
}

SearchResult search_student_arch(const Model& teacher, const TrainData& data,
                                 const SearchConfig& cfg) {
    require(std::find(cfg.node_menu.begin(), cfg.node_menu.end(), 0) !=
                cfg.node_menu.end(),
            "search: node menu must contain 0");
    require(cfg.eps_params >= 1, "search: eps must be at least 1");
    require(cfg.v_threshold > 0.0, "search: bad loss threshold");

    const int n = teacher.arch.class_cols;
    const int k = teacher.arch.class_rows - 1;
    const std::pair<int, int> student_kernel{2, 2};

    SearchResult out;
    out.trace.teacher_params = param_count(teacher.arch);

    std::int64_t ub = out.trace.teacher_params;
    std::int64_t lb = 0;
    std::vector<int> nodes = conv_nodes(teacher.arch);

    bool have_best = false;
    std::int64_t best_params = 0;
    double best_loss = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < 64 && ub - lb >= cfg.eps_params; ++iter) {
        const std::int64_t target = (ub + lb) / 2;
        const BudgetFit fit =
            fit_nodes_to_budget(n, k, nodes, student_kernel, target, cfg.node_menu,
                                cfg.delta_rel * static_cast<double>(target));
        nodes = fit.nodes;  // next iteration continues shrinking this student

        const ArchSpec arch = make_student(n, k, nodes);
        const DistillResult dr = distill_train(teacher, arch, data, cfg.train);
        const bool passed = dr.final_val_ce < cfg.v_threshold;

        // The interval moves by the midpoint target so it halves exactly;
        // the realized size is kept in the trace.
        if (passed)
            ub = target;
        else
            lb = target;

        SearchRecord rec;
        rec.target_params = target;
        rec.realized_params = fit.params;
        rec.nodes = nodes;
        rec.conv_blocks = static_cast<int>(nodes.size()) - 2;
        rec.val_loss = dr.final_val_ce;
        rec.ub = ub;
        rec.lb = lb;
        rec.passed = passed;
        out.trace.records.push_back(rec);

        const bool keep =
            passed ? (!out.trace.met_threshold || fit.params < best_params)
                   : (!out.trace.met_threshold && dr.final_val_ce < best_loss);
        if (passed) out.trace.met_threshold = true;
        if (!have_best || keep) {
            have_best = true;
            best_params = fit.params;
            best_loss = dr.final_val_ce;
            out.model = dr.model;
        }
    }
    return out;
}

std::string trace_to_json(const SearchTrace& trace) {
    json records = json::array();
    for (const auto& r : trace.records)
        records.push_back(json{{"target_params", r.target_params},
                               {"realized_params", r.realized_params},
                               {"nodes", r.nodes},
                               {"conv_blocks", r.conv_blocks},
                               {"val_loss", r.val_loss},
                               {"ub", r.ub},
                               {"lb", r.lb},
                               {"passed", r.passed}});
    return json{{"teacher_params", trace.teacher_params},
                {"met_threshold", trace.met_threshold},
                {"records", records}}
        .dump(2);
}

}  // namespace wpcn
