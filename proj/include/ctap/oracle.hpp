#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ctap/model.hpp"
#include "ctap/observables.hpp"

namespace ctap {

inline constexpr std::int64_t default_oracle_cap = 20;

/// Number-conserving three-mode Fock basis, occupations (n1, n2, n3) in lexicographic order.
class FockBasis {
public:
    using Occupation = std::array<int, 3>;

    explicit FockBasis(int n_total);

    int n_total() const { return n_total_; }
    std::size_t size() const { return states_.size(); }
    const Occupation& operator[](std::size_t i) const { return states_[i]; }
    const std::vector<Occupation>& states() const { return states_; }

    /// Position of (n1, n2, n3); -1 if the triple is not in the basis.
    std::ptrdiff_t index(int n1, int n2, int n3) const;

    bool operator==(const FockBasis& o) const { return n_total_ == o.n_total_; }

private:
    int n_total_;
    std::vector<Occupation> states_;
    std::vector<std::size_t> row_offset_;  // first index with a given n1
};

class ResourceLimit : public std::length_error {
public:
    using std::length_error::length_error;
};

class StepSizeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws ResourceLimit if n_total exceeds cap, std::domain_error if negative.
FockBasis build_basis(std::int64_t n_total, std::int64_t cap = default_oracle_cap);

struct OracleState {
    FockBasis basis;
    std::vector<std::complex<double>> amplitudes;

    double norm() const;
};

OracleState fock_state(const FockBasis& basis, int n1, int n2, int n3);

/// H|psi> for the three-well Hamiltonian (units of hbar): E2 n2 + chi sum n_j(n_j - 1)
/// - K12(t)(a1+ a2 + h.c.) - K23(t)(a2+ a3 + h.c.).
OracleState apply_hamiltonian(const OracleState& state, double t, const ModelParams& p);

/// Exact normally-ordered moments of a state.
MomentSet exact_moments(const OracleState& state);

struct OracleOptions {
    double dt = 1e-3;
    double max_norm_drift = 1e-6;
    std::int64_t cap = default_oracle_cap;

    bool operator==(const OracleOptions&) const = default;
};

struct OracleSeries {
    std::vector<double> times;
    std::vector<MomentSet> moments;
    double max_norm_drift = 0.0;

    WitnessSeries witnesses() const;
};

/// Fixed-step RK4 propagation of the Schrodinger equation, no renormalisation.
/// Throws StepSizeError when |norm - 1| exceeds options.max_norm_drift.
OracleSeries evolve(const OracleState& state0, const ModelParams& p, const std::vector<double>& sample_times,
                    const OracleOptions& options = {});

struct Sector {
    double weight;
    int n_total;
};

/// Poisson weights of total-number sectors for a coherent amplitude, truncated once the
/// omitted mass drops below tail_mass. Throws ResourceLimit when that needs sectors above cap.
std::vector<Sector> coherent_sector_decomposition(std::complex<double> amplitude, double tail_mass,
                                                  std::int64_t cap = default_oracle_cap);

/// Coherent state in well 1, vacuum elsewhere: weight-averaged sector evolutions.
OracleSeries evolve_coherent(std::complex<double> amplitude, const ModelParams& p,
                             const std::vector<double>& sample_times, const OracleOptions& options = {},
                             double tail_mass = 1e-12);

/// Dispatches on p.state_kind with all atoms initially in well 1.
OracleSeries evolve_initial(const ModelParams& p, const std::vector<double>& sample_times,
                            const OracleOptions& options = {});

}  // namespace ctap
