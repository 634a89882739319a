#pragma once

#include <cstdint>
#include <vector>

#include "wpcn/common.hpp"

namespace wpcn {

// Sigmoidal energy-harvester circuit constants: steepness, turn-on point
// (watts) and saturation power (watts).
struct EhParams {
    double a_sat = 150.0;
    double b_sat = 0.014;
    double m_sat = 0.024;
};

struct SystemParams {
    double p_ap = 4.0;          // AP (downlink) transmit power, W
    double p_max = 0.01;        // uplink power cap, W
    double bandwidth_w = 1e6;   // Hz
    double noise_n0 = 1e-12;    // noise PSD, W/Hz
};

// Node placement and large/small-scale fading configuration.
struct GeometryConfig {
    double source_radius_min = 3.0;  // m
    double source_radius_max = 4.0;  // m
    double relay_radius = 2.0;       // m
    double pl_d0_db = 31.67;         // free-space loss at d0, dB
    double d0 = 1.0;                 // m
    double path_exp = 2.0;
    double shadow_sigma_db = 2.0;
};

// One channel realization of an N-source, K-relay network. Gains are
// linear power gains. Column 0 of ul_src is the direct source-to-AP link.
struct NetworkInstance {
    int n_sources = 0;
    int k_relays = 0;
    std::vector<double> dl_gain;               // N+K: AP->source_i, then AP->relay_j
    std::vector<std::vector<double>> ul_src;   // N x (K+1): [i][0]=S_i->AP, [i][j]=S_i->R_j
    std::vector<double> ul_relay;              // K: R_j->AP
    std::vector<double> demand;                // N, bits
    std::vector<EhParams> eh;                  // N+K, per device
    SystemParams sys;

    const EhParams& eh_source(int i) const { return eh[static_cast<std::size_t>(i)]; }
    const EhParams& eh_relay(int j) const { return eh[static_cast<std::size_t>(n_sources + j)]; }
};

// Per-source destination choice; 0 means direct to the AP, j in 1..K
// selects relay j.
struct Assignment {
    std::vector<int> choice;

    bool operator==(const Assignment& other) const { return choice == other.choice; }
    bool lex_less(const Assignment& other) const { return choice < other.choice; }
};

// Fraction of the saturation level the harvester sigmoid outputs at zero
// received power. Strictly inside (0, 1); exp overflow saturates to 0.
double eh_zero_input_fraction(const EhParams& eh);

// Raw (unnormalized) sigmoid output of the harvester for a received
// power, in watts. Lies in (0, m_sat).
double eh_raw_output(const EhParams& eh, double p_rx);

// Harvested power after removing the zero-input offset; harvested energy
// over an EH slot of length t is harvest_rate(...) * t. Clamped to
// [0, m_sat].
double harvest_rate(const EhParams& eh, double p_rx);

// Shannon rate of an uplink, bits/s.
double link_rate(double power, double gain, const SystemParams& sys);

// Draws one network realization: sources uniform in a quadrant annulus,
// relays on a fixed-radius arc with equal angular spacing, log-distance
// path loss with lognormal shadowing, Rayleigh (exponential power)
// small-scale fading per directed link. Deterministic per seed.
NetworkInstance sample_instance(int n, int k, const GeometryConfig& geo,
                                const EhParams& ehp, const SystemParams& sys,
                                std::uint64_t seed, double demand_bits = 50.0);

// Positions used by sample_instance, exposed for geometry checks.
struct NodePositions {
    std::vector<double> src_x, src_y;
    std::vector<double> rel_x, rel_y;
};
NodePositions sample_positions(int n, int k, const GeometryConfig& geo, Rng& rng);

}  // namespace wpcn
