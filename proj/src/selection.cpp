#include "wpcn/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace wpcn {

namespace {

constexpr double kTieRel = 1e-12;

class StopWatch {
public:
    StopWatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

double schedule_total(const NetworkInstance& inst, const Assignment& a) {
    return optimal_schedule(expand_assignment(inst, a), inst.sys).total;
}

// Effective sources for a prefix assignment: assigned sources plus the
// relays they select, all other sources dropped.
std::vector<EffectiveSource> expand_prefix(const NetworkInstance& inst,
                                           const std::vector<int>& prefix) {
    std::vector<EffectiveSource> out;
    std::vector<double> relay_demand(inst.k_relays, 0.0);
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        const int j = prefix[i];
        EffectiveSource src;
        src.demand = inst.demand[i];
        src.gain = inst.ul_src[i][j];
        src.dl_power = inst.dl_gain[i] * inst.sys.p_ap;
        src.eh = inst.eh_source(i);
        out.push_back(src);
        if (j > 0) relay_demand[j - 1] += inst.demand[i];
    }
    for (int j = 0; j < inst.k_relays; ++j) {
        if (relay_demand[j] <= 0.0) continue;
        EffectiveSource src;
        src.demand = relay_demand[j];
        src.gain = inst.ul_relay[j];
        src.dl_power = inst.dl_gain[inst.n_sources + j] * inst.sys.p_ap;
        src.eh = inst.eh_relay(j);
        out.push_back(src);
    }
    return out;
}

// Cheapest conceivable time for one source under choice j: both hops at
// full power.
double best_case_it(const NetworkInstance& inst, int source, int j) {
    double t = inst.demand[source] /
               link_rate(inst.sys.p_max, inst.ul_src[source][j], inst.sys);
    if (j > 0)
        t += inst.demand[source] /
             link_rate(inst.sys.p_max, inst.ul_relay[j - 1], inst.sys);
    return t;
}

double best_case_it_min(const NetworkInstance& inst, int source) {
    double best = best_case_it(inst, source, 0);
    for (int j = 1; j <= inst.k_relays; ++j)
        best = std::min(best, best_case_it(inst, source, j));
    return best;
}

int or_pick(const NetworkInstance& inst, int source) {
    int best = 1;
    double best_score = -1.0;
    for (int j = 1; j <= inst.k_relays; ++j) {
        const double score =
            std::min(inst.ul_src[source][j] * inst.dl_gain[source],
                     inst.ul_relay[j - 1] * inst.dl_gain[inst.n_sources + j - 1]);
        if (score > best_score) {
            best_score = score;
            best = j;
        }
    }
    return best;
}

}  // namespace

double claim_score(const NetworkInstance& inst, int source, int relay) {
    const double phi_src =
        inst.ul_src[source][0] *
        harvest_rate(inst.eh_source(source), inst.dl_gain[source] * inst.sys.p_ap);
    if (relay == 0) return inst.ul_src[source][0] * phi_src;
    const double phi_rel =
        inst.ul_relay[relay - 1] *
        harvest_rate(inst.eh_relay(relay - 1),
                     inst.dl_gain[inst.n_sources + relay - 1] * inst.sys.p_ap);
    return std::min(inst.ul_src[source][relay] * phi_src,
                    inst.ul_relay[relay - 1] * phi_rel);
}

Assignment all_direct(const NetworkInstance& inst) {
    return Assignment{std::vector<int>(inst.n_sources, 0)};
}

Assignment or_select(const NetworkInstance& inst) {
    if (inst.k_relays == 0) return all_direct(inst);
    Assignment a;
    a.choice.resize(inst.n_sources);
    for (int i = 0; i < inst.n_sources; ++i) a.choice[i] = or_pick(inst, i);
    return a;
}

Assignment criterion_select(const NetworkInstance& inst) {
    if (inst.k_relays == 0) return all_direct(inst);
    Assignment a;
    a.choice.resize(inst.n_sources);
    for (int i = 0; i < inst.n_sources; ++i) {
        int best = 1;
        double best_score = -1.0;
        for (int j = 1; j <= inst.k_relays; ++j) {
            const double score = claim_score(inst, i, j);
            if (score > best_score) {
                best_score = score;
                best = j;
            }
        }
        // Relaying must beat the direct link on both hops, all sides
        // weighted by the source's own link quality.
        const double phi_src =
            inst.ul_src[i][0] *
            harvest_rate(inst.eh_source(i), inst.dl_gain[i] * inst.sys.p_ap);
        const double two_hop = std::min(inst.ul_src[i][best] * phi_src,
                                        inst.ul_relay[best - 1] * phi_src);
        a.choice[i] = two_hop > inst.ul_src[i][0] * phi_src ? best : 0;
    }
    return a;
}

SelectionResult enumerate_optimal(const NetworkInstance& inst, std::uint64_t cap) {
    const int n = inst.n_sources;
    const int base = inst.k_relays + 1;
    double count = std::pow(static_cast<double>(base), n);
    if (count > static_cast<double>(cap))
        throw std::runtime_error("enumerate_optimal: assignment count exceeds cap");

    StopWatch watch;
    SelectionResult res;
    std::vector<int> a(n, 0);
    double best_total = std::numeric_limits<double>::infinity();
    while (true) {
        ++res.nodes_explored;
        const Assignment cand{a};
        const Schedule s = optimal_schedule(expand_assignment(inst, cand), inst.sys);
        if (s.total < best_total * (1.0 - kTieRel)) {
            best_total = s.total;
            res.assignment = cand;
            res.schedule = s;
        }
        // Next assignment in lexicographic order (last index minor).
        int pos = n - 1;
        while (pos >= 0 && a[pos] == base - 1) a[pos--] = 0;
        if (pos < 0) break;
        ++a[pos];
    }
    res.elapsed = watch.seconds();
    return res;
}

double node_lower_bound(const NetworkInstance& inst, const std::vector<int>& prefix) {
    double lb = 0.0;
    if (!prefix.empty())
        lb = optimal_schedule(expand_prefix(inst, prefix), inst.sys).total;
    for (int i = static_cast<int>(prefix.size()); i < inst.n_sources; ++i)
        lb += best_case_it_min(inst, i);
    return lb;
}

BoundedCompletion node_upper_bound(const NetworkInstance& inst,
                                   const std::vector<int>& prefix) {
    BoundedCompletion out;
    out.assignment.choice = prefix;
    for (int i = static_cast<int>(prefix.size()); i < inst.n_sources; ++i)
        out.assignment.choice.push_back(inst.k_relays == 0 ? 0 : or_pick(inst, i));
    out.total = schedule_total(inst, out.assignment);
    return out;
}

namespace {

struct BnbState {
    const NetworkInstance& inst;
    std::vector<double> tail_cost;  // suffix sums of per-source best-case IT
    Assignment best;
    Schedule best_schedule;
    double best_total;
    std::uint64_t nodes = 0;
};

void bnb_descend(BnbState& st, std::vector<int>& prefix) {
    ++st.nodes;
    const NetworkInstance& inst = st.inst;
    const int depth = static_cast<int>(prefix.size());

    if (depth == inst.n_sources) {
        const Assignment cand{prefix};
        const Schedule s = optimal_schedule(expand_assignment(inst, cand), inst.sys);
        const bool better = s.total < st.best_total * (1.0 - kTieRel);
        const bool tie = std::fabs(s.total - st.best_total) <=
                         kTieRel * std::max(s.total, st.best_total);
        if (better || (tie && cand.lex_less(st.best))) {
            st.best_total = std::min(st.best_total, s.total);
            st.best = cand;
            st.best_schedule = s;
        }
        return;
    }

    // Children best-first by the two-hop quality score, ties on smaller j.
    std::vector<int> order(inst.k_relays + 1);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return claim_score(inst, depth, a) > claim_score(inst, depth, b);
    });

    for (int j : order) {
        prefix.push_back(j);
        const double lb =
            optimal_schedule(expand_prefix(inst, prefix), inst.sys).total +
            st.tail_cost[depth + 1];
        // Keep equal-bound subtrees alive so ties resolve exactly as in
        // full enumeration.
        if (lb <= st.best_total * (1.0 + kTieRel)) bnb_descend(st, prefix);
        prefix.pop_back();
    }
}

}  // namespace

SelectionResult branch_and_bound(const NetworkInstance& inst) {
    StopWatch watch;

    BnbState st{inst, {}, {}, {}, 0.0, 0};
    st.tail_cost.assign(inst.n_sources + 1, 0.0);
    for (int i = inst.n_sources - 1; i >= 0; --i)
        st.tail_cost[i] = st.tail_cost[i + 1] + best_case_it_min(inst, i);

    const BoundedCompletion root = node_upper_bound(inst, {});
    st.best = root.assignment;
    st.best_total = root.total;
    st.best_schedule = optimal_schedule(expand_assignment(inst, root.assignment), inst.sys);

    std::vector<int> prefix;
    prefix.reserve(inst.n_sources);
    bnb_descend(st, prefix);

    SelectionResult res;
    res.assignment = st.best;
    res.schedule = st.best_schedule;
    res.nodes_explored = st.nodes;
    res.elapsed = watch.seconds();
    return res;
}

}  // namespace wpcn
