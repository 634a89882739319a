#include "wpcn/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wpcn {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kE = 2.71828182845904523536;
constexpr double kInvE = 0.36787944117144232160;

void check_source(const EffectiveSource& src) {
    require(src.demand > 0.0, "effective source: demand must be positive");
    require(src.gain > 0.0, "effective source: gain must be positive");
    require(src.dl_power >= 0.0, "effective source: negative received power");
}

double initial_w0_guess(double x) {
    if (x < -0.3) {
        // Branch-point series in sqrt(2(1+e x)).
        const double p = std::sqrt(2.0 * (1.0 + kE * x));
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    }
    if (x < 0.3) {
        // Series around 0 (diverges beyond |x| ~ 0.3).
        return x * (1.0 + x * (-1.0 + x * (1.5 - 8.0 / 3.0 * x)));
    }
    if (x < 10.0) return std::log1p(x);
    const double l = std::log(x);
    const double ll = std::log(l);
    return l - ll + ll / l;
}

}  // namespace

double lambert_w0(double x) {
    if (std::isnan(x) || x < -kInvE - 4e-16)
        throw std::domain_error("lambert_w0: argument below -1/e");
    if (x <= -kInvE) return -1.0;
    if (x == 0.0) return 0.0;

    double w = initial_w0_guess(x);
    const double tol = 1e-13 * std::max(1.0, std::fabs(x));
    for (int it = 0; it < 50; ++it) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        if (std::fabs(f) <= tol) break;
        // Halley step.
        const double d1 = ew * (w + 1.0);
        const double d2 = ew * (w + 2.0);
        double denom = d1 - 0.5 * f * d2 / d1;
        if (denom == 0.0) denom = d1;
        double step = f / denom;
        if (w - step < -1.0) step = (w + 1.0) / 2.0;  // keep on the 0 branch
        w -= step;
    }
    return w;
}

double it_time_at_pmax(const EffectiveSource& src, const SystemParams& sys) {
    check_source(src);
    const double snr = sys.p_max * src.gain / (sys.bandwidth_w * sys.noise_n0);
    return src.demand * kLn2 / (sys.bandwidth_w * std::log1p(snr));
}

double pmax_regime_threshold(const EffectiveSource& src, const SystemParams& sys) {
    const double hr = harvest_rate(src.eh, src.dl_power);
    if (hr <= 0.0) return std::numeric_limits<double>::infinity();
    return sys.p_max * it_time_at_pmax(src, sys) / hr;
}

double snr_factor(const EffectiveSource& src, const SystemParams& sys) {
    return src.gain * harvest_rate(src.eh, src.dl_power) /
           (sys.bandwidth_w * sys.noise_n0);
}

namespace {

// eh_time needed so the harvested energy exactly covers an IT duration t:
// f(t) = (t/gamma) (2^(c/t) - 1), c = demand/W. Strictly decreasing and
// convex in t, with limit c*ln2/gamma as t -> inf.
double eh_time_for_it(double t, double c, double gamma) {
    return t / gamma * std::expm1(kLn2 * c / t);
}

double eh_time_for_it_deriv(double t, double c, double gamma) {
    const double u = kLn2 * c / t;
    return (std::exp(u) * (1.0 - u) - 1.0) / gamma;
}

}  // namespace

double solve_subproblem(const EffectiveSource& src, const SystemParams& sys,
                        double eh_time) {
    check_source(src);
    require(eh_time > 0.0, "solve_subproblem: eh_time must be positive");

    const double t_cap = it_time_at_pmax(src, sys);
    const double threshold = pmax_regime_threshold(src, sys);
    if (eh_time >= threshold) return t_cap;

    const double gamma = snr_factor(src, sys);
    const double c = src.demand / sys.bandwidth_w;
    if (gamma <= 0.0 || eh_time <= c * kLn2 / gamma)
        throw InfeasibleError("solve_subproblem: demand unreachable for this EH slot");

    // Newton from t_cap: f is decreasing and convex, so iterates increase
    // monotonically toward the root without overshoot.
    double t = t_cap;
    const double tol = 1e-13 * eh_time;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        const double f = eh_time_for_it(t, c, gamma) - eh_time;
        if (std::fabs(f) <= tol) {
            converged = true;
            break;
        }
        const double d = eh_time_for_it_deriv(t, c, gamma);
        const double step = f / d;
        if (!std::isfinite(step)) break;
        t -= step;
    }
    if (!converged) {
        // Bisection fallback on a doubled bracket.
        double lo = t_cap, hi = std::max(t, t_cap);
        while (eh_time_for_it(hi, c, gamma) > eh_time) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (eh_time_for_it(mid, c, gamma) > eh_time)
                lo = mid;
            else
                hi = mid;
            if (hi - lo <= 1e-16 * hi) break;
        }
        t = 0.5 * (lo + hi);
    }
    return t;
}

double subproblem_slope(const EffectiveSource& src, const SystemParams& sys,
                        double eh_time) {
    if (eh_time >= pmax_regime_threshold(src, sys)) return 0.0;
    const double gamma = snr_factor(src, sys);
    const double c = src.demand / sys.bandwidth_w;
    const double t = solve_subproblem(src, sys, eh_time);
    const double u = kLn2 * c / t;
    return gamma / (std::exp(u) * (1.0 - u) - 1.0);
}

Tau0Bounds tau0_bounds(const std::vector<EffectiveSource>& sources,
                       const SystemParams& sys) {
    require(!sources.empty(), "tau0_bounds: no sources");
    Tau0Bounds b;
    for (const auto& src : sources) {
        check_source(src);
        const double gamma = snr_factor(src, sys);
        if (gamma <= 0.0)
            throw std::domain_error("tau0_bounds: non-positive snr_factor");
        const double threshold = pmax_regime_threshold(src, sys);

        // Closed-form single-source optimum of the uncapped problem.
        const double alpha = lambert_w0((gamma - 1.0) / kE) + 1.0;
        const double c = src.demand / sys.bandwidth_w;
        const double ratio = alpha > 1e-12 ? std::expm1(alpha) / alpha : 1.0;
        const double interior = c * kLn2 / gamma * ratio;

        // When the cap binds, the single-source optimum sits at the
        // power-cap threshold instead of the interior stationary point.
        b.lb = std::max(b.lb, std::min(interior, threshold));
        b.ub = std::max(b.ub, threshold);
    }
    return b;
}

Schedule optimal_schedule(const std::vector<EffectiveSource>& sources,
                          const SystemParams& sys, double eps) {
    require(!sources.empty(), "optimal_schedule: no sources");
    require(eps > 0.0, "optimal_schedule: eps must be positive");

    const Tau0Bounds bounds = tau0_bounds(sources, sys);
    double lo = bounds.lb, hi = bounds.ub;

    auto total_slope = [&](double eh_time) {
        double d = 1.0;
        for (const auto& src : sources) d += subproblem_slope(src, sys, eh_time);
        return d;
    };

    while (hi - lo > 2.0 * eps) {
        const double mid = 0.5 * (lo + hi);
        const double d = total_slope(mid);
        if (d >= 0.0) hi = mid;
        if (d <= 0.0) lo = mid;
        if (d == 0.0) break;
    }

    Schedule s;
    s.tau0 = 0.5 * (lo + hi);
    s.it_time.reserve(sources.size());
    s.power.reserve(sources.size());
    s.total = s.tau0;
    for (const auto& src : sources) {
        const double t = solve_subproblem(src, sys, s.tau0);
        const double c = src.demand / sys.bandwidth_w;
        const double p = std::min(
            sys.p_max,
            std::expm1(kLn2 * c / t) * sys.bandwidth_w * sys.noise_n0 / src.gain);
        s.it_time.push_back(t);
        s.power.push_back(std::max(p, 0.0));
        s.total += t;
    }
    return s;
}

std::vector<EffectiveSource> expand_assignment(const NetworkInstance& inst,
                                               const Assignment& a) {
    const int n = inst.n_sources;
    const int k = inst.k_relays;
    require(static_cast<int>(a.choice.size()) == n, "expand_assignment: size mismatch");

    std::vector<EffectiveSource> out;
    out.reserve(n + k);
    std::vector<double> relay_demand(k, 0.0);
    for (int i = 0; i < n; ++i) {
        const int j = a.choice[i];
        require(j >= 0 && j <= k, "expand_assignment: choice out of range");
        EffectiveSource src;
        src.demand = inst.demand[i];
        src.gain = inst.ul_src[i][j];
        src.dl_power = inst.dl_gain[i] * inst.sys.p_ap;
        src.eh = inst.eh_source(i);
        out.push_back(src);
        if (j > 0) relay_demand[j - 1] += inst.demand[i];
    }
    for (int j = 0; j < k; ++j) {
        if (relay_demand[j] <= 0.0) continue;
        EffectiveSource src;
        src.demand = relay_demand[j];
        src.gain = inst.ul_relay[j];
        src.dl_power = inst.dl_gain[n + j] * inst.sys.p_ap;
        src.eh = inst.eh_relay(j);
        out.push_back(src);
    }
    return out;
}

double ResidualReport::max_violation() const {
    return std::max(std::max(energy, demand), std::max(power_cap, nonneg));
}

ResidualReport verify_schedule(const NetworkInstance& inst, const Assignment& a,
                               const Schedule& s) {
    const std::vector<EffectiveSource> sources = expand_assignment(inst, a);
    require(s.it_time.size() == sources.size() && s.power.size() == sources.size(),
            "verify_schedule: schedule/assignment size mismatch");

    ResidualReport rep;
    auto rel_pos = [](double x, double scale) {
        return x > 0.0 ? x / std::max(scale, 1e-300) : 0.0;
    };

    rep.nonneg = std::max(rep.nonneg, rel_pos(-s.tau0, std::max(s.total, 1e-300)));
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const EffectiveSource& src = sources[i];
        const double t = s.it_time[i];
        const double p = s.power[i];
        const double scale = std::max(s.total, 1e-300);
        rep.nonneg = std::max(rep.nonneg, rel_pos(-t, scale));
        rep.nonneg = std::max(rep.nonneg, rel_pos(-p, inst.sys.p_max));

        const double budget = harvest_rate(src.eh, src.dl_power) * s.tau0;
        rep.energy = std::max(rep.energy, rel_pos(p * t - budget, budget));

        const double sent = t * link_rate(p, src.gain, inst.sys);
        rep.demand = std::max(rep.demand, rel_pos(src.demand - sent, src.demand));

        rep.power_cap = std::max(rep.power_cap, rel_pos(p - inst.sys.p_max, inst.sys.p_max));
    }
    rep.feasible = rep.max_violation() <= 1e-7;
    return rep;
}

}  // namespace wpcn
