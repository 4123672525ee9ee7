#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ctap {

enum class StateKind { Coherent, Fock };

std::string to_string(StateKind kind);
StateKind parse_state_kind(const std::string& text);

// Euler: explicit Euler-Maruyama on the full drift.
// Exponential: exact tunnelling propagator for half a step, Euler-Maruyama for the
// collisional drift and noise, then the second half step.
enum class Integrator { Euler, Exponential };

std::string to_string(Integrator integrator);
Integrator parse_integrator(const std::string& text);

/// Physical parameters of the three-well Bose-Hubbard model. E1 = E3 = 0.
/// Defaults are the standard CTAP benchmark: Omega=10, t_p=40, E2=1, chi=1e-4, N=200.
struct ModelParams {
    double omega = 10.0;
    double t_p = 40.0;
    double e2 = 1.0;
    double chi = 1e-4;
    std::int64_t n_total = 200;
    StateKind state_kind = StateKind::Coherent;
    double initial_phase = 0.0;

    bool operator==(const ModelParams&) const = default;
};

struct SimParams {
    double dt = 2e-3;
    std::int64_t n_traj = 55000;
    std::vector<double> sample_times;  // empty: uniform grid of default_sample_count points
    std::uint64_t seed = 1;
    std::optional<double> divergence_threshold;  // unset: 1e6 * max(N, 1)
    std::int64_t n_batches = 100;
    double max_diverged_fraction = 0.01;
    // Each step consumes noise_substeps groups of six normals and uses their
    // normalised sum, so a run at dt with 2 substeps shares its Wiener path with
    // a run at dt/2 with 1 substep.
    int noise_substeps = 1;
    bool flip_noise_branch = false;
    Integrator integrator = Integrator::Exponential;

    bool operator==(const SimParams&) const = default;
};

inline constexpr int default_sample_count = 101;

/// K12(t) = Omega sin^2(pi t / 2 t_p). Throws std::domain_error outside [0, t_p].
double coupling_k12(double t, const ModelParams& p);
/// K23(t) = Omega cos^2(pi t / 2 t_p). Throws std::domain_error outside [0, t_p].
double coupling_k23(double t, const ModelParams& p);

struct ValidationLimits {
    double chi_window = 0.005;
    // Heuristic on |chi| * N * t_p above which positive-P trajectories tend to diverge.
    double stability_threshold = 10.0;
    std::int64_t oracle_cap = 20;
};

struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<std::string> warnings;

    bool ok() const { return violations.empty(); }
};

ValidationReport validate(const ModelParams& p, const SimParams& s, const ValidationLimits& limits = {});

std::vector<double> uniform_sample_times(double t_p, int count);

/// Sample times actually used by a run: the configured list, or the default grid.
std::vector<double> effective_sample_times(const ModelParams& p, const SimParams& s);

/// Snaps each time to the nearest multiple of dt. Throws std::invalid_argument if a
/// time lies outside [0, t_p], is not strictly increasing after snapping, or sits
/// further than dt/2 from the grid.
std::vector<double> snap_sample_times(const std::vector<double>& times, double dt, double t_p);

/// Number of integrator steps covering [0, t_p].
std::int64_t step_count(double t_p, double dt);

double effective_divergence_threshold(const ModelParams& p, const SimParams& s);

}  // namespace ctap
