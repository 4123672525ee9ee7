#include <doctest.h>

#include <algorithm>
#include <random>

#include "ctap/model.hpp"

using namespace ctap;

TEST_CASE("pulse schedules at the end points and midpoint") {
    const ModelParams p;  // Omega = 10, t_p = 40
    CHECK(coupling_k12(0.0, p) == 0.0);
    CHECK(coupling_k12(40.0, p) == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(coupling_k12(20.0, p) == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(coupling_k23(0.0, p) == 10.0);
    CHECK(coupling_k23(40.0, p) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(coupling_k23(20.0, p) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("counter-intuitive ordering: K23 is on before K12") {
    const ModelParams p;
    CHECK(coupling_k23(0.0, p) == p.omega);
    CHECK(coupling_k12(0.0, p) == 0.0);
}

TEST_CASE("pulse sum identity and monotonicity") {
    const ModelParams p;
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> time(0.0, p.t_p);
    for (int i = 0; i < 1000; ++i) {
        const double t = time(gen);
        CHECK(coupling_k12(t, p) + coupling_k23(t, p) == doctest::Approx(p.omega).epsilon(1e-15));
    }
    double previous = -1.0;
    for (int i = 0; i <= 400; ++i) {
        const double k = coupling_k12(p.t_p * i / 400.0, p);
        CHECK(k >= previous);
        previous = k;
    }
}

TEST_CASE("couplings reject times outside the pulse") {
    const ModelParams p;
    CHECK_THROWS_AS(coupling_k12(-0.1, p), std::domain_error);
    CHECK_THROWS_AS(coupling_k23(40.1, p), std::domain_error);
}

TEST_CASE("validation of the benchmark parameters") {
    const ModelParams p;
    CHECK(p.omega == 10.0);
    CHECK(p.t_p == 40.0);
    CHECK(p.e2 == 1.0);
    CHECK(p.chi == 1e-4);
    CHECK(p.n_total == 200);
    const ValidationReport r = validate(p, SimParams{});
    CHECK(r.ok());
    CHECK(r.warnings.empty());
}

TEST_CASE("validation reports violations and warnings") {
    SUBCASE("negative pulse time") {
        ModelParams p;
        p.t_p = -1.0;
        CHECK_FALSE(validate(p, SimParams{}).ok());
    }
    SUBCASE("strong nonlinearity warns") {
        ModelParams p;
        p.chi = 0.1;
        const ValidationReport r = validate(p, SimParams{});
        CHECK(r.ok());
        CHECK(r.warnings.size() == 2);
    }
    SUBCASE("empty ensemble") {
        SimParams s;
        s.n_traj = 0;
        CHECK_FALSE(validate(ModelParams{}, s).ok());
    }
    SUBCASE("batches must divide the ensemble") {
        SimParams s;
        s.n_traj = 1001;
        CHECK_FALSE(validate(ModelParams{}, s).ok());
    }
    SUBCASE("sample times off the dt grid") {
        SimParams s;
        s.sample_times = {0.0, 1.0005};
        CHECK_FALSE(validate(ModelParams{}, s).ok());
    }
}

TEST_CASE("sample times snap to the dt grid") {
    const auto snapped = snap_sample_times({0.0, 0.4007, 20.0, 40.0}, 2e-3, 40.0);
    REQUIRE(snapped.size() == 4);
    CHECK(snapped[1] == doctest::Approx(0.4));
    CHECK(snapped[3] == doctest::Approx(40.0));
    CHECK_THROWS_AS(snap_sample_times({1.0, 1.0005}, 2e-3, 40.0), std::invalid_argument);
    CHECK_THROWS_AS(snap_sample_times({41.0}, 2e-3, 40.0), std::invalid_argument);

    const auto grid = effective_sample_times(ModelParams{}, SimParams{});
    CHECK(grid.size() == default_sample_count);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == doctest::Approx(40.0));
}

TEST_CASE("default divergence threshold scales with atom number") {
    ModelParams p;
    CHECK(effective_divergence_threshold(p, SimParams{}) == 2e8);
    p.n_total = 0;
    CHECK(effective_divergence_threshold(p, SimParams{}) == 1e6);
}
