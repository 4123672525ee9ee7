#include "ctap/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctap {

using cd = std::complex<double>;

FockBasis::FockBasis(int n_total) : n_total_(n_total) {
    if (n_total < 0) throw std::domain_error("Fock basis needs a non-negative atom number");
    const auto n = static_cast<std::size_t>(n_total);
    states_.reserve((n + 1) * (n + 2) / 2);
    row_offset_.reserve(n + 1);
    for (int n1 = 0; n1 <= n_total; ++n1) {
        row_offset_.push_back(states_.size());
        for (int n2 = 0; n2 <= n_total - n1; ++n2) states_.push_back({n1, n2, n_total - n1 - n2});
    }
}

std::ptrdiff_t FockBasis::index(int n1, int n2, int n3) const {
    if (n1 < 0 || n2 < 0 || n3 < 0 || n1 + n2 + n3 != n_total_) return -1;
    return static_cast<std::ptrdiff_t>(row_offset_[static_cast<std::size_t>(n1)] + static_cast<std::size_t>(n2));
}

FockBasis build_basis(std::int64_t n_total, std::int64_t cap) {
    if (n_total < 0) throw std::domain_error("build_basis: n_total must be non-negative");
    if (n_total > cap) {
        std::ostringstream msg;
        msg << "exact oracle limited to " << cap << " atoms, requested " << n_total;
        throw ResourceLimit(msg.str());
    }
    return FockBasis(static_cast<int>(n_total));
}

double OracleState::norm() const {
    double sum = 0.0;
    for (const cd& a : amplitudes) sum += std::norm(a);
    return sum;
}

OracleState fock_state(const FockBasis& basis, int n1, int n2, int n3) {
    const std::ptrdiff_t i = basis.index(n1, n2, n3);
    if (i < 0) throw std::invalid_argument("occupation not in basis");
    OracleState s{basis, std::vector<cd>(basis.size())};
    s.amplitudes[static_cast<std::size_t>(i)] = 1.0;
    return s;
}

namespace {

// out = H psi with the couplings already evaluated.
void hamiltonian_into(const FockBasis& basis, const std::vector<cd>& psi, std::vector<cd>& out, double k12,
                      double k23, const ModelParams& p) {
    std::fill(out.begin(), out.end(), cd{});
    auto hop = [&](int n1, int n2, int n3, double coefficient, cd amplitude) {
        const std::ptrdiff_t j = basis.index(n1, n2, n3);
        out[static_cast<std::size_t>(j)] += coefficient * amplitude;
    };
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto [n1, n2, n3] = basis[i];
        const cd a = psi[i];
        const double diag = p.e2 * n2 + p.chi * (n1 * (n1 - 1.0) + n2 * (n2 - 1.0) + n3 * (n3 - 1.0));
        out[i] += diag * a;
        if (n2 > 0) hop(n1 + 1, n2 - 1, n3, -k12 * std::sqrt((n1 + 1.0) * n2), a);   // a1+ a2
        if (n1 > 0) hop(n1 - 1, n2 + 1, n3, -k12 * std::sqrt(n1 * (n2 + 1.0)), a);   // a1 a2+
        if (n3 > 0) hop(n1, n2 + 1, n3 - 1, -k23 * std::sqrt((n2 + 1.0) * n3), a);   // a2+ a3
        if (n2 > 0) hop(n1, n2 - 1, n3 + 1, -k23 * std::sqrt(n2 * (n3 + 1.0)), a);   // a2 a3+
    }
}

double clamp_time(double t, const ModelParams& p) {
    return std::clamp(t, 0.0, p.t_p);
}

// psi' = -i H psi
void derivative(const FockBasis& basis, const std::vector<cd>& psi, std::vector<cd>& out, double t,
                const ModelParams& p) {
    const double tc = clamp_time(t, p);
    hamiltonian_into(basis, psi, out, coupling_k12(tc, p), coupling_k23(tc, p), p);
    for (cd& v : out) v = cd(v.imag(), -v.real());
}

}  // namespace

OracleState apply_hamiltonian(const OracleState& state, double t, const ModelParams& p) {
    OracleState out{state.basis, std::vector<cd>(state.amplitudes.size())};
    hamiltonian_into(state.basis, state.amplitudes, out.amplitudes, coupling_k12(t, p), coupling_k23(t, p), p);
    return out;
}

MomentSet exact_moments(const OracleState& state) {
    MomentSet m;
    const FockBasis& basis = state.basis;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto [n1, n2, n3] = basis[i];
        const cd a = state.amplitudes[i];
        const double prob = std::norm(a);
        m.m11 += prob * n1;
        m.m22 += prob * n2;
        m.m33 += prob * n3;
        m.m1133 += prob * n1 * n3;
        if (n3 > 0) {  // <a1+ a3>: |n1,n2,n3> -> sqrt((n1+1) n3) |n1+1,n2,n3-1>
            const auto j = static_cast<std::size_t>(basis.index(n1 + 1, n2, n3 - 1));
            m.m13 += std::conj(state.amplitudes[j]) * a * std::sqrt((n1 + 1.0) * n3);
        }
        if (n1 > 0) {  // <a3+ a1>
            const auto j = static_cast<std::size_t>(basis.index(n1 - 1, n2, n3 + 1));
            m.m31 += std::conj(state.amplitudes[j]) * a * std::sqrt(n1 * (n3 + 1.0));
        }
    }
    return m;
}

WitnessSeries OracleSeries::witnesses() const {
    WitnessSeries out;
    out.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) out.push_back(exact_witness_point(times[i], moments[i]));
    return out;
}

OracleSeries evolve(const OracleState& state0, const ModelParams& p, const std::vector<double>& sample_times,
                    const OracleOptions& options) {
    if (!(options.dt > 0.0)) throw std::invalid_argument("oracle step must be positive");
    const FockBasis& basis = state0.basis;
    const std::size_t dim = basis.size();
    const double norm0 = state0.norm();

    OracleSeries series;
    std::vector<cd> psi = state0.amplitudes;
    std::vector<cd> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
    double t = 0.0;

    auto check_norm = [&](double when) {
        OracleState view{basis, psi};
        const double drift = std::abs(view.norm() - norm0);
        series.max_norm_drift = std::max(series.max_norm_drift, drift);
        if (drift > options.max_norm_drift) {
            std::ostringstream msg;
            msg << "oracle norm drift " << drift << " at t=" << when << " exceeds " << options.max_norm_drift
                << "; reduce the step size";
            throw StepSizeError(msg.str());
        }
    };

    for (double target : sample_times) {
        if (target < t - 1e-12) throw std::invalid_argument("oracle sample times must be non-decreasing");
        const double span = target - t;
        const auto substeps = static_cast<std::int64_t>(std::ceil(span / options.dt - 1e-9));
        if (substeps > 0) {
            const double h = span / static_cast<double>(substeps);
            for (std::int64_t k = 0; k < substeps; ++k) {
                const double t0 = t + static_cast<double>(k) * h;
                derivative(basis, psi, k1, t0, p);
                for (std::size_t i = 0; i < dim; ++i) tmp[i] = psi[i] + 0.5 * h * k1[i];
                derivative(basis, tmp, k2, t0 + 0.5 * h, p);
                for (std::size_t i = 0; i < dim; ++i) tmp[i] = psi[i] + 0.5 * h * k2[i];
                derivative(basis, tmp, k3, t0 + 0.5 * h, p);
                for (std::size_t i = 0; i < dim; ++i) tmp[i] = psi[i] + h * k3[i];
                derivative(basis, tmp, k4, t0 + h, p);
                for (std::size_t i = 0; i < dim; ++i) psi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                check_norm(t0 + h);
            }
        }
        t = target;
        series.times.push_back(target);
        series.moments.push_back(exact_moments(OracleState{basis, psi}));
    }
    return series;
}

std::vector<Sector> coherent_sector_decomposition(cd amplitude, double tail_mass, std::int64_t cap) {
    const double mean = std::norm(amplitude);
    if (mean > static_cast<double>(cap)) {
        std::ostringstream msg;
        msg << "coherent amplitude |alpha|^2=" << mean << " exceeds oracle cap " << cap;
        throw ResourceLimit(msg.str());
    }
    std::vector<Sector> sectors;
    double cumulative = 0.0;
    double log_weight = -mean;  // log of e^{-x} x^n / n!
    for (int n = 0;; ++n) {
        if (n > 0) log_weight += std::log(mean) - std::log(static_cast<double>(n));
        if (n > cap) {
            std::ostringstream msg;
            msg << "coherent decomposition needs sectors above the oracle cap " << cap;
            throw ResourceLimit(msg.str());
        }
        const double w = mean == 0.0 ? (n == 0 ? 1.0 : 0.0) : std::exp(log_weight);
        sectors.push_back({w, n});
        cumulative += w;
        if (1.0 - cumulative < tail_mass) break;
    }
    return sectors;
}

OracleSeries evolve_coherent(cd amplitude, const ModelParams& p, const std::vector<double>& sample_times,
                             const OracleOptions& options, double tail_mass) {
    OracleSeries total;
    total.times = sample_times;
    total.moments.assign(sample_times.size(), MomentSet{});
    for (const Sector& sector : coherent_sector_decomposition(amplitude, tail_mass, options.cap)) {
        const FockBasis basis = build_basis(sector.n_total, options.cap);
        const OracleSeries part = evolve(fock_state(basis, sector.n_total, 0, 0), p, sample_times, options);
        for (std::size_t i = 0; i < sample_times.size(); ++i) total.moments[i] += part.moments[i] * sector.weight;
        total.max_norm_drift = std::max(total.max_norm_drift, part.max_norm_drift);
    }
    return total;
}

OracleSeries evolve_initial(const ModelParams& p, const std::vector<double>& sample_times,
                            const OracleOptions& options) {
    if (p.state_kind == StateKind::Coherent) {
        const cd amplitude = std::polar(std::sqrt(static_cast<double>(p.n_total)), p.initial_phase);
        return evolve_coherent(amplitude, p, sample_times, options);
    }
    const FockBasis basis = build_basis(p.n_total, options.cap);
    const int n = static_cast<int>(p.n_total);
    return evolve(fock_state(basis, n, 0, 0), p, sample_times, options);
}

}  // namespace ctap
