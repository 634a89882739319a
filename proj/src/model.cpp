#include "wpcn/model.hpp"

#include <cmath>

namespace wpcn {

double eh_zero_input_fraction(const EhParams& eh) {
    // exp may overflow to inf for extreme a*b; 1/(1+inf) -> 0 is the
    // correct limit.
    return 1.0 / (1.0 + std::exp(eh.a_sat * eh.b_sat));
}

double eh_raw_output(const EhParams& eh, double p_rx) {
    return eh.m_sat / (1.0 + std::exp(-eh.a_sat * (p_rx - eh.b_sat)));
}

double harvest_rate(const EhParams& eh, double p_rx) {
    const double omega = eh_zero_input_fraction(eh);
    const double psi = eh_raw_output(eh, p_rx);
    const double r = (psi - eh.m_sat * omega) / (1.0 - omega);
    if (r < 0.0) return 0.0;
    return r < eh.m_sat ? r : eh.m_sat;
}

double link_rate(double power, double gain, const SystemParams& sys) {
    const double snr = power * gain / (sys.bandwidth_w * sys.noise_n0);
    return sys.bandwidth_w * std::log1p(snr) / 0.69314718055994530942;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// Mean linear power gain at distance d under the log-distance model.
double mean_gain(double d, const GeometryConfig& geo, double shadow_db) {
    const double loss_db =
        geo.pl_d0_db + 10.0 * geo.path_exp * std::log10(d / geo.d0) - shadow_db;
    return db_to_linear(-loss_db);
}

// One directed link draw: lognormal shadowing, then exponential power
// fading around the shadowed mean.
double sample_gain(double d, const GeometryConfig& geo, Rng& rng) {
    const double z = rng.normal(0.0, geo.shadow_sigma_db);
    return rng.exponential(mean_gain(d, geo, z));
}

}  // namespace

NodePositions sample_positions(int n, int k, const GeometryConfig& geo, Rng& rng) {
    NodePositions pos;
    pos.src_x.resize(n);
    pos.src_y.resize(n);
    for (int i = 0; i < n; ++i) {
        const double r2min = geo.source_radius_min * geo.source_radius_min;
        const double r2max = geo.source_radius_max * geo.source_radius_max;
        const double r = std::sqrt(r2min + rng.uniform01() * (r2max - r2min));
        const double th = rng.uniform01() * (kPi / 2.0);
        pos.src_x[i] = r * std::cos(th);
        pos.src_y[i] = r * std::sin(th);
    }
    pos.rel_x.resize(k);
    pos.rel_y.resize(k);
    for (int j = 0; j < k; ++j) {
        // Midpoint-spaced angles across the quadrant.
        const double th = (kPi / 2.0) * (2.0 * j + 1.0) / (2.0 * k);
        pos.rel_x[j] = geo.relay_radius * std::cos(th);
        pos.rel_y[j] = geo.relay_radius * std::sin(th);
    }
    return pos;
}

NetworkInstance sample_instance(int n, int k, const GeometryConfig& geo,
                                const EhParams& ehp, const SystemParams& sys,
                                std::uint64_t seed, double demand_bits) {
    require(n >= 1, "sample_instance: need at least one source");
    require(k >= 0, "sample_instance: negative relay count");
    require(demand_bits > 0.0, "sample_instance: demand must be positive");

    Rng rng(seed);
    const NodePositions pos = sample_positions(n, k, geo, rng);

    auto dist = [](double x0, double y0, double x1, double y1) {
        return std::hypot(x1 - x0, y1 - y0);
    };

    NetworkInstance inst;
    inst.n_sources = n;
    inst.k_relays = k;
    inst.sys = sys;
    inst.eh.assign(n + k, ehp);
    inst.demand.assign(n, demand_bits);

    // Draw order is fixed: DL gains (sources, relays), then UL source rows,
    // then UL relay links.
    inst.dl_gain.resize(n + k);
    for (int i = 0; i < n; ++i)
        inst.dl_gain[i] = sample_gain(dist(0, 0, pos.src_x[i], pos.src_y[i]), geo, rng);
    for (int j = 0; j < k; ++j)
        inst.dl_gain[n + j] = sample_gain(geo.relay_radius, geo, rng);

    inst.ul_src.assign(n, std::vector<double>(k + 1));
    for (int i = 0; i < n; ++i) {
        inst.ul_src[i][0] = sample_gain(dist(0, 0, pos.src_x[i], pos.src_y[i]), geo, rng);
        for (int j = 0; j < k; ++j)
            inst.ul_src[i][j + 1] = sample_gain(
                dist(pos.src_x[i], pos.src_y[i], pos.rel_x[j], pos.rel_y[j]), geo, rng);
    }
    inst.ul_relay.resize(k);
    for (int j = 0; j < k; ++j)
        inst.ul_relay[j] = sample_gain(geo.relay_radius, geo, rng);

    return inst;
}

}  // namespace wpcn
