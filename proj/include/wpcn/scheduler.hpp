#pragma once

#include <stdexcept>
#include <vector>

#include "wpcn/model.hpp"

namespace wpcn {

// Thrown when a demand cannot be met by any finite transmit duration for
// the given EH slot length.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// One transmitter of the reduced scheduling problem: an original source,
// or a selected relay forwarding aggregated demand. `gain` is the uplink
// gain to its destination, `dl_power` the power it receives during EH.
struct EffectiveSource {
    double demand = 0.0;    // bits
    double gain = 0.0;      // linear power gain
    double dl_power = 0.0;  // received downlink power, W
    EhParams eh;
};

// Solution of the scheduling/power-control problem: EH slot length,
// per-transmitter IT durations and powers, and the total block length.
struct Schedule {
    double tau0 = 0.0;             // EH slot, s
    std::vector<double> it_time;   // s, one per effective source
    std::vector<double> power;     // W, one per effective source
    double total = 0.0;            // tau0 + sum(it_time)
};

// Principal branch of the Lambert W function. Domain x >= -1/e; residual
// |w e^w - x| <= 1e-12 * max(1, |x|).
double lambert_w0(double x);

// IT duration when transmitting the whole demand at the power cap.
double it_time_at_pmax(const EffectiveSource& src, const SystemParams& sys);

// EH slot length above which the harvested energy funds a full-cap
// transmission; at or above it the subproblem answer is it_time_at_pmax.
double pmax_regime_threshold(const EffectiveSource& src, const SystemParams& sys);

// Normalized link quality: uplink gain times harvest rate over the noise
// power. Dimensionless; IT SNR equals snr_factor * eh_time / it_time.
double snr_factor(const EffectiveSource& src, const SystemParams& sys);

// Minimum IT duration meeting the demand for a fixed EH slot length.
// Throws InfeasibleError when no finite duration suffices
// (eh_time <= demand * ln2 / (W * snr_factor)).
double solve_subproblem(const EffectiveSource& src, const SystemParams& sys,
                        double eh_time);

// d(it_time)/d(eh_time) of the subproblem solution at the given EH slot
// length; 0 in the power-cap regime, negative otherwise.
double subproblem_slope(const EffectiveSource& src, const SystemParams& sys,
                        double eh_time);

struct Tau0Bounds {
    double lb = 0.0;
    double ub = 0.0;
};

// Bracketing interval for the optimal EH slot length. The lower bound is
// the largest single-source optimum, the upper bound the largest
// power-cap threshold; lb <= ub always. Throws std::domain_error if any
// snr_factor is non-positive.
Tau0Bounds tau0_bounds(const std::vector<EffectiveSource>& sources,
                       const SystemParams& sys);

// Optimal schedule for a fixed set of effective sources: bisection on the
// EH slot length over [lb, ub] driven by the sign of the total-length
// derivative, stopping when the interval is below 2*eps.
Schedule optimal_schedule(const std::vector<EffectiveSource>& sources,
                          const SystemParams& sys, double eps = 1e-9);

// Reduces an instance plus a relay assignment to effective sources: the N
// sources (uplink gain toward their chosen destination) followed by each
// selected relay in index order, carrying the sum of its sources' demands.
std::vector<EffectiveSource> expand_assignment(const NetworkInstance& inst,
                                               const Assignment& a);

// Maximum relative violations of the schedule against the instance
// constraints; feasible iff all are <= 1e-7.
struct ResidualReport {
    double energy = 0.0;
    double demand = 0.0;
    double power_cap = 0.0;
    double nonneg = 0.0;
    bool feasible = false;

    double max_violation() const;
};

ResidualReport verify_schedule(const NetworkInstance& inst, const Assignment& a,
                               const Schedule& s);

}  // namespace wpcn
