#pragma once

#include <cstdint>
#include <vector>

#include "wpcn/scheduler.hpp"

namespace wpcn {

struct SelectionResult {
    Assignment assignment;
    Schedule schedule;
    std::uint64_t nodes_explored = 0;
    double elapsed = 0.0;  // s
};

// Evaluates every assignment (lexicographic order) and returns the
// minimum-total one; ties keep the lexicographically smallest. Throws if
// (K+1)^N exceeds the cap.
SelectionResult enumerate_optimal(const NetworkInstance& inst,
                                  std::uint64_t cap = 1000000);

// Depth-first branch-and-bound over per-source relay choices, pruned by
// an admissible lower bound; returns the same optimum as
// enumerate_optimal under the shared tie rule.
SelectionResult branch_and_bound(const NetworkInstance& inst);

// Admissible lower bound for a node whose first `prefix.size()` sources
// are assigned: optimal schedule of the assigned sub-network plus each
// remaining source's best-case full-power IT time.
double node_lower_bound(const NetworkInstance& inst, const std::vector<int>& prefix);

// Feasible completion of a prefix (remaining sources via the
// opportunistic-relaying pick) and its schedule total.
struct BoundedCompletion {
    Assignment assignment;
    double total = 0.0;
};
BoundedCompletion node_upper_bound(const NetworkInstance& inst,
                                   const std::vector<int>& prefix);

// Opportunistic relaying: per source, the relay maximizing the weaker of
// the two hop scores gain*dl_gain; ties pick the smallest index. All
// direct when K = 0.
Assignment or_select(const NetworkInstance& inst);

// Harvest-aware selection: per source, the relay maximizing the weaker of
// the two hops weighted by the endpoints' link quality (gain times
// harvest rate); falls back to direct when the chosen relay does not beat
// the direct link.
Assignment criterion_select(const NetworkInstance& inst);

Assignment all_direct(const NetworkInstance& inst);

// Score used for ranking relay j for source i (see criterion_select);
// exposed for the branch-ordering heuristic and tests.
double claim_score(const NetworkInstance& inst, int source, int relay);

}  // namespace wpcn
