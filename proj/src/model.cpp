#include "ctap/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ctap {

std::string to_string(StateKind kind) {
    return kind == StateKind::Coherent ? "coherent" : "fock";
}

StateKind parse_state_kind(const std::string& text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "coherent") return StateKind::Coherent;
    if (lower == "fock") return StateKind::Fock;
    throw std::invalid_argument("unknown state kind '" + text + "' (expected coherent or fock)");
}

std::string to_string(Integrator integrator) {
    return integrator == Integrator::Euler ? "euler" : "exponential";
}

Integrator parse_integrator(const std::string& text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "euler") return Integrator::Euler;
    if (lower == "exponential") return Integrator::Exponential;
    throw std::invalid_argument("unknown integrator '" + text + "' (expected euler or exponential)");
}

namespace {

double pulse_angle(double t, const ModelParams& p) {
    if (!(t >= 0.0 && t <= p.t_p)) {
        std::ostringstream msg;
        msg << "coupling evaluated at t=" << t << " outside [0, " << p.t_p << "]";
        throw std::domain_error(msg.str());
    }
    return std::numbers::pi * t / (2.0 * p.t_p);
}

}  // namespace

double coupling_k12(double t, const ModelParams& p) {
    const double s = std::sin(pulse_angle(t, p));
    return p.omega * s * s;
}

double coupling_k23(double t, const ModelParams& p) {
    const double c = std::cos(pulse_angle(t, p));
    return p.omega * c * c;
}

std::int64_t step_count(double t_p, double dt) {
    return static_cast<std::int64_t>(std::llround(t_p / dt));
}

std::vector<double> uniform_sample_times(double t_p, int count) {
    if (count < 2) throw std::invalid_argument("uniform sample grid needs at least two points");
    std::vector<double> times(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) times[static_cast<std::size_t>(i)] = t_p * i / (count - 1);
    times.back() = t_p;
    return times;
}

std::vector<double> snap_sample_times(const std::vector<double>& times, double dt, double t_p) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    const std::int64_t last = step_count(t_p, dt);
    std::vector<double> snapped;
    snapped.reserve(times.size());
    std::int64_t previous = -1;
    for (double t : times) {
        if (!std::isfinite(t) || t < -0.5 * dt || t > t_p + 0.5 * dt) {
            std::ostringstream msg;
            msg << "sample time " << t << " outside [0, " << t_p << "]";
            throw std::invalid_argument(msg.str());
        }
        const std::int64_t k = std::llround(t / dt);
        if (std::abs(t - static_cast<double>(k) * dt) > 0.5 * dt) {
            std::ostringstream msg;
            msg << "sample time " << t << " cannot be snapped to the dt grid";
            throw std::invalid_argument(msg.str());
        }
        if (k <= previous) {
            std::ostringstream msg;
            msg << "sample times not strictly increasing on the dt grid at t=" << t;
            throw std::invalid_argument(msg.str());
        }
        previous = std::min(k, last);
        snapped.push_back(static_cast<double>(previous) * dt);
    }
    return snapped;
}

std::vector<double> effective_sample_times(const ModelParams& p, const SimParams& s) {
    if (!s.sample_times.empty()) return s.sample_times;
    return snap_sample_times(uniform_sample_times(p.t_p, default_sample_count), s.dt, p.t_p);
}

double effective_divergence_threshold(const ModelParams& p, const SimParams& s) {
    if (s.divergence_threshold) return *s.divergence_threshold;
    return 1e6 * static_cast<double>(std::max<std::int64_t>(p.n_total, 1));
}

ValidationReport validate(const ModelParams& p, const SimParams& s, const ValidationLimits& limits) {
    ValidationReport report;
    auto violation = [&report](std::string text) { report.violations.push_back(std::move(text)); };

    if (!(p.omega > 0.0) || !std::isfinite(p.omega)) violation("omega must be positive");
    if (!(p.t_p > 0.0) || !std::isfinite(p.t_p)) violation("t_p must be positive");
    if (!std::isfinite(p.e2)) violation("e2 must be finite");
    if (!std::isfinite(p.chi)) violation("chi must be finite");
    if (!std::isfinite(p.initial_phase)) violation("initial_phase must be finite");
    if (p.n_total < 0) violation("n_total must be non-negative");

    if (!(s.dt > 0.0) || !std::isfinite(s.dt)) {
        violation("dt must be positive");
    } else if (p.t_p > 0.0) {
        if (s.dt > p.t_p) violation("dt exceeds t_p");
        const double steps = p.t_p / s.dt;
        if (std::abs(steps - std::round(steps)) > 1e-6 * std::max(1.0, steps))
            violation("t_p must be an integer multiple of dt");
    }
    if (s.n_traj <= 0) violation("n_traj must be positive (empty ensemble)");
    if (s.n_batches < 2) {
        violation("n_batches must be at least 2 for error estimation");
    } else if (s.n_traj > 0 && s.n_traj % s.n_batches != 0) {
        violation("n_batches must divide n_traj");
    }
    if (s.noise_substeps < 1) violation("noise_substeps must be at least 1");
    if (s.divergence_threshold && !(*s.divergence_threshold > 0.0))
        violation("divergence_threshold must be positive");
    if (!(s.max_diverged_fraction >= 0.0 && s.max_diverged_fraction <= 1.0))
        violation("max_diverged_fraction must lie in [0, 1]");

    if (s.dt > 0.0 && p.t_p > 0.0) {
        double previous = -1.0;
        for (double t : s.sample_times) {
            if (!(t >= 0.0 && t <= p.t_p + 1e-12 * p.t_p)) {
                violation("sample time " + std::to_string(t) + " outside [0, t_p]");
                continue;
            }
            if (t <= previous) violation("sample times must be strictly increasing");
            const double k = t / s.dt;
            if (std::abs(k - std::round(k)) > 1e-6) violation("sample time " + std::to_string(t) + " is not a multiple of dt");
            previous = t;
        }
    }

    if (std::abs(p.chi) > limits.chi_window) {
        std::ostringstream msg;
        msg << "|chi|=" << std::abs(p.chi) << " outside the adiabatic window " << limits.chi_window;
        report.warnings.push_back(msg.str());
    }
    const double stiffness = std::abs(p.chi) * static_cast<double>(std::max<std::int64_t>(p.n_total, 0)) * p.t_p;
    if (stiffness > limits.stability_threshold) {
        std::ostringstream msg;
        msg << "|chi|*N*t_p=" << stiffness << " exceeds " << limits.stability_threshold
            << "; positive-P trajectories are likely to diverge";
        report.warnings.push_back(msg.str());
    }
    return report;
}

}  // namespace ctap
