#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctap/model.hpp"

namespace ctap {

using cd = std::complex<double>;

/// Normally-ordered raw moments estimated by trajectory averages:
/// m11 = <a1+ a1>, m22, m33, m13 = <a1+ a3>, m31 = <a3+ a1>, m1133 = <a1+ a1 a3+ a3>.
struct MomentSet {
    cd m11{}, m22{}, m33{}, m13{}, m31{}, m1133{};

    MomentSet& operator+=(const MomentSet& o);
    MomentSet& operator-=(const MomentSet& o);
    MomentSet& operator*=(double f);
    bool operator==(const MomentSet&) const = default;
};

MomentSet operator+(MomentSet a, const MomentSet& b);
MomentSet operator-(MomentSet a, const MomentSet& b);
MomentSet operator*(MomentSet a, double f);

/// Moments at one sample time: the ensemble mean plus per-batch means for error bars.
struct MomentRecord {
    double time = 0.0;
    MomentSet mean;
    std::vector<MomentSet> batch_means;
    std::vector<std::int64_t> batch_counts;
    std::int64_t n_effective = 0;
};

using MomentSeries = std::vector<MomentRecord>;

struct Estimate {
    double value = 0.0;
    double error = 0.0;
};

struct Populations {
    Estimate n1, n2, n3;
};

struct SteeringPair {
    Estimate xi13, xi31;
};

struct WitnessPoint {
    double time = 0.0;
    Estimate n1, n2, n3;
    Estimate xi13, xi31;
    Estimate hz;
    double diverged_fraction = 0.0;
};

using WitnessSeries = std::vector<WitnessPoint>;

using Estimator = std::function<double(const MomentSet&)>;

class UnsupportedConfiguration : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Point estimators on a single set of moments.
double population_value(const MomentSet& m, int mode);
/// <N1 N3> - |<a1+ a3>|^2; negative certifies entanglement of wells 1 and 3.
double hz_value(const MomentSet& m);
double xi13_value(const MomentSet& m);
double xi31_value(const MomentSet& m);

/// Leave-one-batch-out jackknife standard error, batches weighted equally.
double jackknife_error(std::span<const MomentSet> batch_means, const Estimator& estimator);
/// Jackknife with batch weights (trajectory counts), for batches thinned by divergence.
double jackknife_error(std::span<const MomentSet> batch_means, std::span<const std::int64_t> batch_counts,
                       const Estimator& estimator);

Estimate estimate(const MomentRecord& m, const Estimator& estimator);

Populations populations(const MomentRecord& m);
Estimate hz_entanglement(const MomentRecord& m);
SteeringPair xi_pair(const MomentRecord& m);

/// Generic N-mode steering function |<prod a_j>|^2 - <N_first prod (N_j + 1/2)>.
/// Only the two-mode orderings {1,3} and {3,1} are backed by accumulated moments; there
/// the phase-insensitive form <a1+ a3><a3+ a1> replaces |<a1 a3>|^2, which reproduces
/// xi13 and xi31 exactly. Other orderings throw UnsupportedConfiguration.
double cavalcanti_witness(const MomentSet& m, std::span<const int> ordering);

/// xi for the frozen half-transfer product state: coherent -N/4, Fock |N/2>|N/2> -N(N+1)/4.
double frozen_state_xi(StateKind kind, std::int64_t n_total);

WitnessPoint witness_point(const MomentRecord& m, double diverged_fraction);
WitnessSeries witness_series(const MomentSeries& series, double diverged_fraction);
/// Witnesses from exact moments, all errors zero.
WitnessPoint exact_witness_point(double time, const MomentSet& m);

}  // namespace ctap
