#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wpcn/model.hpp"

using namespace wpcn;

TEST_CASE("zero-input fraction of the harvester sigmoid") {
    EhParams eh;  // a=150, b=0.014
    CHECK(eh_zero_input_fraction(eh) ==
          doctest::Approx(0.10909682119561294).epsilon(1e-12));

    EhParams saturated{1e6, 1.0, 0.024};
    CHECK(eh_zero_input_fraction(saturated) == 0.0);

    EhParams flat{0.0, 0.014, 0.024};
    CHECK(eh_zero_input_fraction(flat) == doctest::Approx(0.5));
}

TEST_CASE("raw harvester output") {
    EhParams eh;
    CHECK(eh_raw_output(eh, eh.b_sat) == doctest::Approx(eh.m_sat / 2).epsilon(1e-12));
    CHECK(eh_raw_output(eh, 1e9) == doctest::Approx(eh.m_sat).epsilon(1e-12));
    CHECK(eh_raw_output(eh, 0.0) ==
          doctest::Approx(eh.m_sat * eh_zero_input_fraction(eh)).epsilon(1e-12));
}

TEST_CASE("harvest rate") {
    EhParams eh;
    CHECK(harvest_rate(eh, 0.0) == 0.0);
    CHECK(harvest_rate(eh, 1e9) == doctest::Approx(eh.m_sat).epsilon(1e-12));
    // Frozen high-precision evaluation at the sigmoid turn-on point.
    CHECK(harvest_rate(eh, 0.014) ==
          doctest::Approx(0.010530522860964217).epsilon(1e-12));
}

TEST_CASE("harvest rate monotone, output bounded") {
    EhParams eh;
    const double omega = eh_zero_input_fraction(eh);
    double prev = -1.0;
    for (int i = 0; i <= 200; ++i) {
        const double p = 1e-4 * i;
        const double r = harvest_rate(eh, p);
        CHECK(r >= prev);
        prev = r;
        if (p > 0.0) {
            const double psi = eh_raw_output(eh, p);
            CHECK(psi > eh.m_sat * omega);
            CHECK(psi < eh.m_sat);
        }
    }
    CHECK(omega > 0.0);
    CHECK(omega < 1.0);
}

TEST_CASE("link rate") {
    SystemParams sys;
    CHECK(link_rate(0.0, 1e-4, sys) == 0.0);
    const double wn0 = sys.bandwidth_w * sys.noise_n0;
    // p*g = W*N0 -> one bit per symbol; p*g = 3*W*N0 -> two.
    CHECK(link_rate(1.0, wn0, sys) == doctest::Approx(sys.bandwidth_w).epsilon(1e-12));
    CHECK(link_rate(3.0, wn0, sys) ==
          doctest::Approx(2.0 * sys.bandwidth_w).epsilon(1e-12));
}

TEST_CASE("link rate increasing and concave in power") {
    SystemParams sys;
    const double g = 1e-4;
    double prev_rate = -1.0, prev_diff = 1e300;
    for (int i = 1; i <= 100; ++i) {
        const double p = 1e-3 * i;
        const double r = link_rate(p, g, sys);
        CHECK(r > prev_rate);
        if (prev_rate >= 0.0) {
            const double diff = r - prev_rate;
            CHECK(diff <= prev_diff * (1.0 + 1e-12));
            prev_diff = diff;
        }
        prev_rate = r;
    }
}

TEST_CASE("instance sampling is deterministic and validates input") {
    GeometryConfig geo;
    EhParams eh;
    SystemParams sys;
    const NetworkInstance a = sample_instance(3, 2, geo, eh, sys, 42);
    const NetworkInstance b = sample_instance(3, 2, geo, eh, sys, 42);
    CHECK(a.dl_gain == b.dl_gain);
    CHECK(a.ul_src == b.ul_src);
    CHECK(a.ul_relay == b.ul_relay);

    const NetworkInstance c = sample_instance(3, 2, geo, eh, sys, 43);
    CHECK(a.dl_gain != c.dl_gain);

    CHECK_THROWS_AS(sample_instance(0, 2, geo, eh, sys, 1), std::invalid_argument);
}

TEST_CASE("sampled geometry stays on the configured annulus and arc") {
    GeometryConfig geo;
    Rng rng(7);
    const NodePositions pos = sample_positions(200, 5, geo, rng);
    for (std::size_t i = 0; i < pos.src_x.size(); ++i) {
        const double r = std::hypot(pos.src_x[i], pos.src_y[i]);
        CHECK(r >= geo.source_radius_min - 1e-12);
        CHECK(r <= geo.source_radius_max + 1e-12);
        CHECK(pos.src_x[i] >= 0.0);
        CHECK(pos.src_y[i] >= 0.0);
    }
    for (std::size_t j = 0; j < pos.rel_x.size(); ++j) {
        CHECK(std::hypot(pos.rel_x[j], pos.rel_y[j]) ==
              doctest::Approx(geo.relay_radius).epsilon(1e-12));
    }
}

TEST_CASE("link gain matches its analytic mean") {
    // Relay downlink distance is exactly relay_radius, so one instance
    // with many relays yields i.i.d. draws of the same link.
    GeometryConfig geo;
    const NetworkInstance inst = sample_instance(1, 10000, geo, {}, {}, 123);
    double mean = 0.0;
    for (int j = 0; j < inst.k_relays; ++j) mean += inst.dl_gain[1 + j];
    mean /= inst.k_relays;
    // Closed form: path loss at 2 m plus the lognormal shadowing factor
    // exp((sigma*ln10/10)^2/2); fading has unit mean.
    CHECK(mean == doctest::Approx(1.8923074994e-4).epsilon(0.05));
}
