#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ctap/model.hpp"
#include "ctap/observables.hpp"
#include "ctap/phasespace.hpp"

namespace ctap {

/// Time derivatives of the six phase-space variables, same layout as PhasePoint.
struct DriftVector {
    cd a1{}, a1p{}, a2{}, a2p{}, a3{}, a3p{};
};

/// Multipliers b_j of the independent real white noises; b_j^2 is the diffusion term.
struct NoiseAmplitudes {
    cd b1{}, b2{}, b3{}, b4{}, b5{}, b6{};
};

struct TrajectoryOutcome {
    std::vector<PhasePoint> samples;  // one per sample time reached before divergence
    bool diverged = false;
    std::optional<double> divergence_time;
};

struct DivergenceStats {
    std::int64_t n_traj = 0;
    std::int64_t n_diverged = 0;
    double max_fraction = 0.01;

    double fraction() const { return n_traj > 0 ? static_cast<double>(n_diverged) / static_cast<double>(n_traj) : 0.0; }
    bool limit_exceeded() const { return fraction() > max_fraction; }
};

struct EnsembleResult {
    MomentSeries moments;
    DivergenceStats divergence;

    WitnessSeries witnesses() const { return witness_series(moments, divergence.fraction()); }
};

class EmptyEnsemble : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Deterministic part of the positive-P equations of motion.
DriftVector drift(const PhasePoint& x, double t, const ModelParams& p);

/// b1 = sqrt(-2i chi a1^2), b2 = sqrt(2i chi a1p^2), ... on the principal branch.
NoiseAmplitudes noise_amplitudes(const PhasePoint& x, const ModelParams& p);

/// One Ito Euler-Maruyama step from t to t + dt; drift and noise use the start point.
/// With Integrator::Exponential the tunnelling part is propagated exactly around the
/// collisional Euler-Maruyama step.
PhasePoint step(const PhasePoint& x, double t, double dt, const ModelParams& p, RngStream& rng,
                Integrator integrator = Integrator::Euler);

/// Fixed-step integration over [0, t_p], recording the state at the sample times.
/// Stops at the first step where any |variable|^2 exceeds the divergence threshold
/// or becomes non-finite.
TrajectoryOutcome run_trajectory(const PhasePoint& x0, const ModelParams& p, const SimParams& s, RngStream& rng);

/// Runs s.n_traj trajectories on `workers` threads (0: hardware concurrency).
/// Trajectory k uses RngStream(s.seed, k) for both its initial sample and its noise.
/// Batches are reduced in a fixed order, so results are bit-identical for any worker count.
/// Throws EmptyEnsemble for n_traj == 0 and std::invalid_argument for invalid parameters.
EnsembleResult run_ensemble(const ModelParams& p, const SimParams& s, unsigned workers = 0);

struct ConvergenceEntry {
    double time = 0.0;
    const char* observable = "";
    double coarse = 0.0;
    double fine = 0.0;
    double error = 0.0;  // Monte Carlo standard error of the coarse estimate

    double change() const { return fine - coarse; }
};

struct ConvergenceReport {
    EnsembleResult coarse;
    EnsembleResult fine;
    std::vector<ConvergenceEntry> entries;

    /// Largest |fine - coarse| / error; entries with zero error and zero change are skipped.
    double worst_ratio() const;
    bool converged() const;
};

/// Runs the ensemble at dt and at dt/2 on a shared Wiener path (the coarse run sums pairs
/// of fine increments) and compares every reported observable.
ConvergenceReport half_step_check(const ModelParams& p, const SimParams& s, unsigned workers = 0);

}  // namespace ctap
