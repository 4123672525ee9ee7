#include "ctap/sde.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

namespace ctap {

namespace {

inline cd times_i(cd z) { return {-z.imag(), z.real()}; }

[[gnu::always_inline]] inline DriftVector drift_terms(const PhasePoint& x, double k12, double k23, double chi,
                                                      double e2) {
    const cd n1 = x.a1p * x.a1;
    const cd n2 = x.a2p * x.a2;
    const cd n3 = x.a3p * x.a3;
    const double two_chi = 2.0 * chi;
    const cd well2 = e2 + two_chi * n2;
    DriftVector d;
    // da1 = -2i chi a1^2 a1p + i K12 a2, and the conjugate structure for a1p.
    d.a1 = times_i(k12 * x.a2 - two_chi * (x.a1 * n1));
    d.a1p = -times_i(k12 * x.a2p - two_chi * (x.a1p * n1));
    d.a2 = -times_i(well2 * x.a2 - (k12 * x.a1 + k23 * x.a3));
    d.a2p = times_i(well2 * x.a2p - (k12 * x.a1p + k23 * x.a3p));
    d.a3 = times_i(k23 * x.a2 - two_chi * (x.a3 * n3));
    d.a3p = -times_i(k23 * x.a2p - two_chi * (x.a3p * n3));
    return d;
}

// sqrt(c z^2) on the principal branch, given root = sqrt(c): +-root*z with Re >= 0.
[[gnu::always_inline]] inline cd principal_root(cd root, cd z) {
    cd w = root * z;
    if (w.real() < 0.0 || (w.real() == 0.0 && w.imag() < 0.0)) w = -w;
    return w;
}

struct NoiseRoots {
    cd minus;  // sqrt(-2i chi)
    cd plus;   // sqrt(+2i chi)
};

NoiseRoots noise_roots(double chi) {
    return {std::sqrt(cd(0.0, -2.0 * chi)), std::sqrt(cd(0.0, 2.0 * chi))};
}

[[gnu::always_inline]] inline NoiseAmplitudes amplitudes_from_roots(const PhasePoint& x, const NoiseRoots& r) {
    return {principal_root(r.minus, x.a1), principal_root(r.plus, x.a1p),
            principal_root(r.minus, x.a2), principal_root(r.plus, x.a2p),
            principal_root(r.minus, x.a3), principal_root(r.plus, x.a3p)};
}

// exp(i M tau) for the real symmetric tunnelling matrix M = [[0,K12,0],[K12,-E2,K23],[0,K23,0]],
// which generates the linear part of da/dt. The a^+ variables evolve with the conjugate.
struct Propagator {
    cd u[3][3];

    [[gnu::always_inline]] void apply(cd& a1, cd& a2, cd& a3) const {
        const cd b1 = u[0][0] * a1 + u[0][1] * a2 + u[0][2] * a3;
        const cd b2 = u[1][0] * a1 + u[1][1] * a2 + u[1][2] * a3;
        const cd b3 = u[2][0] * a1 + u[2][1] * a2 + u[2][2] * a3;
        a1 = b1;
        a2 = b2;
        a3 = b3;
    }
    [[gnu::always_inline]] void apply_conj(cd& a1, cd& a2, cd& a3) const {
        const cd b1 = std::conj(u[0][0]) * a1 + std::conj(u[0][1]) * a2 + std::conj(u[0][2]) * a3;
        const cd b2 = std::conj(u[1][0]) * a1 + std::conj(u[1][1]) * a2 + std::conj(u[1][2]) * a3;
        const cd b3 = std::conj(u[2][0]) * a1 + std::conj(u[2][1]) * a2 + std::conj(u[2][2]) * a3;
        a1 = b1;
        a2 = b2;
        a3 = b3;
    }
};

Propagator linear_propagator(double k12, double k23, double e2, double tau) {
    using Mat = std::array<std::array<cd, 3>, 3>;
    auto mul = [](const Mat& x, const Mat& y) {
        Mat z{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) z[i][j] += x[i][k] * y[k][j];
        return z;
    };
    // Scaling and squaring with a Taylor series on i M tau / 2^s.
    const double norm = (std::abs(k12) + std::abs(k23) + std::abs(e2)) * std::abs(tau);
    int squarings = 0;
    while (std::ldexp(norm, -squarings) > 0.05) ++squarings;
    const double h = std::ldexp(tau, -squarings);
    Mat a{};
    a[0][1] = a[1][0] = cd(0.0, k12 * h);
    a[1][1] = cd(0.0, -e2 * h);
    a[1][2] = a[2][1] = cd(0.0, k23 * h);
    Mat result{}, term{};
    for (int i = 0; i < 3; ++i) result[i][i] = term[i][i] = 1.0;
    for (int n = 1; n <= 14; ++n) {
        term = mul(term, a);
        for (auto& row : term)
            for (cd& v : row) v /= static_cast<double>(n);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) result[i][j] += term[i][j];
    }
    for (int k = 0; k < squarings; ++k) result = mul(result, result);
    Propagator p;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) p.u[i][j] = result[i][j];
    return p;
}

// Half-step propagators for a Strang step from t to t + dt, couplings at t + dt/4 and t + 3dt/4.
std::pair<Propagator, Propagator> split_propagators(double t, double dt, const ModelParams& p) {
    const double t_a = std::min(t + 0.25 * dt, p.t_p), t_b = std::min(t + 0.75 * dt, p.t_p);
    return {linear_propagator(coupling_k12(t_a, p), coupling_k23(t_a, p), p.e2, 0.5 * dt),
            linear_propagator(coupling_k12(t_b, p), coupling_k23(t_b, p), p.e2, 0.5 * dt)};
}

// Euler-Maruyama update with fixed coupling values and unit-variance noises zeta.
struct Stepper {
    double chi;
    double e2;
    double dt;
    double sqrt_dt;
    double branch_sign;
    NoiseRoots roots;

    Stepper(const ModelParams& p, double step, bool flip_branch)
        : chi(p.chi), e2(p.e2), dt(step), sqrt_dt(std::sqrt(step)), branch_sign(flip_branch ? -1.0 : 1.0),
          roots(noise_roots(p.chi)) {}

    [[gnu::always_inline]] void advance(PhasePoint& x, double k12, double k23, const double* zeta) const {
        const DriftVector d = drift_terms(x, k12, k23, chi, e2);
        const double scale = branch_sign * sqrt_dt;
        if (chi != 0.0) {
            const NoiseAmplitudes b = amplitudes_from_roots(x, roots);
            x.a1 += d.a1 * dt + b.b1 * (scale * zeta[0]);
            x.a1p += d.a1p * dt + b.b2 * (scale * zeta[1]);
            x.a2 += d.a2 * dt + b.b3 * (scale * zeta[2]);
            x.a2p += d.a2p * dt + b.b4 * (scale * zeta[3]);
            x.a3 += d.a3 * dt + b.b5 * (scale * zeta[4]);
            x.a3p += d.a3p * dt + b.b6 * (scale * zeta[5]);
        } else {
            x.a1 += d.a1 * dt;
            x.a1p += d.a1p * dt;
            x.a2 += d.a2 * dt;
            x.a2p += d.a2p * dt;
            x.a3 += d.a3 * dt;
            x.a3p += d.a3p * dt;
        }
    }

    // Linear half step, collisional Euler-Maruyama step, linear half step.
    [[gnu::always_inline]] void advance_split(PhasePoint& x, const Propagator& first, const Propagator& second,
                                              const double* zeta) const {
        first.apply(x.a1, x.a2, x.a3);
        first.apply_conj(x.a1p, x.a2p, x.a3p);
        if (chi != 0.0) {
            const double two_chi_dt = 2.0 * chi * dt;
            const cd n1 = x.a1p * x.a1, n2 = x.a2p * x.a2, n3 = x.a3p * x.a3;
            const NoiseAmplitudes b = amplitudes_from_roots(x, roots);
            const double scale = branch_sign * sqrt_dt;
            x.a1 += -times_i(two_chi_dt * (x.a1 * n1)) + b.b1 * (scale * zeta[0]);
            x.a1p += times_i(two_chi_dt * (x.a1p * n1)) + b.b2 * (scale * zeta[1]);
            x.a2 += -times_i(two_chi_dt * (x.a2 * n2)) + b.b3 * (scale * zeta[2]);
            x.a2p += times_i(two_chi_dt * (x.a2p * n2)) + b.b4 * (scale * zeta[3]);
            x.a3 += -times_i(two_chi_dt * (x.a3 * n3)) + b.b5 * (scale * zeta[4]);
            x.a3p += times_i(two_chi_dt * (x.a3p * n3)) + b.b6 * (scale * zeta[5]);
        }
        second.apply(x.a1, x.a2, x.a3);
        second.apply_conj(x.a1p, x.a2p, x.a3p);
    }
};

[[gnu::always_inline]] inline void draw_noise(RngStream& rng, int substeps, double* zeta) {
    if (substeps == 1) {
        for (int j = 0; j < 6; ++j) zeta[j] = rng.normal();
        return;
    }
    std::fill(zeta, zeta + 6, 0.0);
    for (int m = 0; m < substeps; ++m)
        for (int j = 0; j < 6; ++j) zeta[j] += rng.normal();
    const double norm = 1.0 / std::sqrt(static_cast<double>(substeps));
    for (int j = 0; j < 6; ++j) zeta[j] *= norm;
}

[[gnu::always_inline]] inline bool exceeds(const PhasePoint& x, double threshold) {
    const double largest = std::max({std::norm(x.a1), std::norm(x.a1p), std::norm(x.a2), std::norm(x.a2p),
                                     std::norm(x.a3), std::norm(x.a3p)});
    return !(largest <= threshold);  // also catches NaN
}

// Everything a trajectory needs that is shared across the ensemble.
struct Schedule {
    double dt = 0.0;
    std::int64_t n_steps = 0;
    std::vector<double> k12;  // couplings at the start of each step
    std::vector<double> k23;
    std::vector<double> times;
    std::vector<std::int64_t> sample_steps;
    double threshold = 0.0;
    int substeps = 1;
    Integrator integrator = Integrator::Euler;
    // Exponential scheme: per-step propagators, or computed on the fly for very long runs.
    std::vector<std::pair<Propagator, Propagator>> propagators;
    const ModelParams* model = nullptr;

    static constexpr std::int64_t max_stored_propagators = 1 << 18;

    Schedule(const ModelParams& p, const SimParams& s)
        : dt(s.dt), n_steps(step_count(p.t_p, s.dt)), integrator(s.integrator), model(&p) {
        const bool store = integrator == Integrator::Exponential && n_steps <= max_stored_propagators;
        if (integrator == Integrator::Euler) {
            k12.resize(static_cast<std::size_t>(n_steps));
            k23.resize(static_cast<std::size_t>(n_steps));
        }
        if (store) propagators.reserve(static_cast<std::size_t>(n_steps));
        for (std::int64_t k = 0; k < n_steps; ++k) {
            const double t = std::min(static_cast<double>(k) * dt, p.t_p);
            if (integrator == Integrator::Euler) {
                k12[static_cast<std::size_t>(k)] = coupling_k12(t, p);
                k23[static_cast<std::size_t>(k)] = coupling_k23(t, p);
            } else if (store) {
                propagators.push_back(split_propagators(t, dt, p));
            }
        }
        times = snap_sample_times(effective_sample_times(p, s), dt, p.t_p);
        for (double t : times) sample_steps.push_back(std::llround(t / dt));
        threshold = effective_divergence_threshold(p, s);
        substeps = s.noise_substeps;
    }
};

// Integrates one trajectory, handing each sampled state to `record(sample_index, x)`.
// Returns the step index (0 = initial state) at which divergence was detected.
template <typename Record>
std::optional<std::int64_t> integrate(PhasePoint x, const Schedule& sched, const Stepper& stepper, RngStream& rng,
                                      Record&& record) {
    std::size_t next = 0;
    if (exceeds(x, sched.threshold)) return 0;
    while (next < sched.sample_steps.size() && sched.sample_steps[next] == 0) record(next++, x);
    double zeta[6];
    const bool split = sched.integrator == Integrator::Exponential;
    const bool stored = !sched.propagators.empty() || sched.n_steps == 0;
    for (std::int64_t k = 0; k < sched.n_steps; ++k) {
        draw_noise(rng, sched.substeps, zeta);
        const auto i = static_cast<std::size_t>(k);
        if (!split) {
            stepper.advance(x, sched.k12[i], sched.k23[i], zeta);
        } else if (stored) {
            stepper.advance_split(x, sched.propagators[i].first, sched.propagators[i].second, zeta);
        } else {
            const double t = std::min(static_cast<double>(k) * sched.dt, sched.model->t_p);
            const auto [first, second] = split_propagators(t, sched.dt, *sched.model);
            stepper.advance_split(x, first, second, zeta);
        }
        if (exceeds(x, sched.threshold)) return k + 1;
        while (next < sched.sample_steps.size() && sched.sample_steps[next] == k + 1) record(next++, x);
    }
    return std::nullopt;
}

MomentSet moments_of(const PhasePoint& x) {
    MomentSet m;
    m.m11 = x.a1p * x.a1;
    m.m22 = x.a2p * x.a2;
    m.m33 = x.a3p * x.a3;
    m.m13 = x.a1p * x.a3;
    m.m31 = x.a3p * x.a1;
    m.m1133 = m.m11 * m.m33;
    return m;
}

struct BatchAccumulator {
    std::vector<MomentSet> sums;
    std::int64_t count = 0;
    std::int64_t diverged = 0;
};

void check_params(const ModelParams& p, const SimParams& s) {
    if (s.n_traj == 0) throw EmptyEnsemble("empty ensemble: n_traj is 0");
    const ValidationReport report = validate(p, s);
    if (!report.ok()) {
        std::ostringstream msg;
        msg << "invalid parameters:";
        for (const auto& v : report.violations) msg << "\n  " << v;
        throw std::invalid_argument(msg.str());
    }
}

}  // namespace

DriftVector drift(const PhasePoint& x, double t, const ModelParams& p) {
    return drift_terms(x, coupling_k12(t, p), coupling_k23(t, p), p.chi, p.e2);
}

NoiseAmplitudes noise_amplitudes(const PhasePoint& x, const ModelParams& p) {
    return amplitudes_from_roots(x, noise_roots(p.chi));
}

PhasePoint step(const PhasePoint& x, double t, double dt, const ModelParams& p, RngStream& rng,
                Integrator integrator) {
    if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
    const Stepper stepper(p, dt, false);
    double zeta[6];
    draw_noise(rng, 1, zeta);
    PhasePoint out = x;
    if (integrator == Integrator::Exponential) {
        const auto [first, second] = split_propagators(t, dt, p);
        stepper.advance_split(out, first, second, zeta);
    } else {
        stepper.advance(out, coupling_k12(t, p), coupling_k23(t, p), zeta);
    }
    return out;
}

TrajectoryOutcome run_trajectory(const PhasePoint& x0, const ModelParams& p, const SimParams& s, RngStream& rng) {
    const Schedule sched(p, s);
    const Stepper stepper(p, s.dt, s.flip_noise_branch);
    TrajectoryOutcome out;
    out.samples.reserve(sched.times.size());
    const auto diverged_at = integrate(x0, sched, stepper, rng, [&out](std::size_t, const PhasePoint& x) {
        out.samples.push_back(x);
    });
    if (diverged_at) {
        out.diverged = true;
        out.divergence_time = static_cast<double>(*diverged_at) * s.dt;
    }
    return out;
}

EnsembleResult run_ensemble(const ModelParams& p, const SimParams& s, unsigned workers) {
    check_params(p, s);
    const Schedule sched(p, s);
    const Stepper stepper(p, s.dt, s.flip_noise_branch);
    const std::size_t n_samples = sched.times.size();
    const auto n_batches = static_cast<std::size_t>(s.n_batches);
    const std::int64_t per_batch = s.n_traj / s.n_batches;

    std::vector<BatchAccumulator> batches(n_batches);
    auto run_batch = [&](std::size_t b) {
        BatchAccumulator& acc = batches[b];
        acc.sums.assign(n_samples, MomentSet{});
        std::vector<MomentSet> trajectory(n_samples);
        const std::int64_t first = static_cast<std::int64_t>(b) * per_batch;
        for (std::int64_t k = first; k < first + per_batch; ++k) {
            RngStream rng(s.seed, static_cast<std::uint64_t>(k));
            const PhasePoint x0 = initial_point(p, rng);
            const auto diverged_at = integrate(x0, sched, stepper, rng, [&trajectory](std::size_t i, const PhasePoint& x) {
                trajectory[i] = moments_of(x);
            });
            if (diverged_at) {
                ++acc.diverged;
                continue;
            }
            for (std::size_t i = 0; i < n_samples; ++i) acc.sums[i] += trajectory[i];
            ++acc.count;
        }
    };

    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_batches));
    if (workers <= 1) {
        for (std::size_t b = 0; b < n_batches; ++b) run_batch(b);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t b = next++; b < n_batches; b = next++) run_batch(b);
            });
        }
    }

    EnsembleResult result;
    result.divergence.n_traj = s.n_traj;
    result.divergence.max_fraction = s.max_diverged_fraction;
    std::int64_t total_count = 0;
    std::vector<MomentSet> total(n_samples);
    for (const BatchAccumulator& acc : batches) {
        result.divergence.n_diverged += acc.diverged;
        total_count += acc.count;
        for (std::size_t i = 0; i < n_samples; ++i) total[i] += acc.sums[i];
    }

    result.moments.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        MomentRecord& rec = result.moments[i];
        rec.time = sched.times[i];
        rec.n_effective = total_count;
        rec.mean = total_count > 0 ? total[i] * (1.0 / static_cast<double>(total_count)) : MomentSet{};
        rec.batch_means.reserve(n_batches);
        rec.batch_counts.reserve(n_batches);
        for (const BatchAccumulator& acc : batches) {
            rec.batch_means.push_back(acc.count > 0 ? acc.sums[i] * (1.0 / static_cast<double>(acc.count))
                                                    : MomentSet{});
            rec.batch_counts.push_back(acc.count);
        }
    }
    return result;
}

double ConvergenceReport::worst_ratio() const {
    double worst = 0.0;
    for (const auto& e : entries) {
        const double change = std::abs(e.change());
        if (change == 0.0) continue;
        worst = std::max(worst, e.error > 0.0 ? change / e.error : std::numeric_limits<double>::infinity());
    }
    return worst;
}

bool ConvergenceReport::converged() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const ConvergenceEntry& e) { return std::abs(e.change()) <= e.error; });
}

ConvergenceReport half_step_check(const ModelParams& p, const SimParams& s, unsigned workers) {
    SimParams coarse = s;
    coarse.sample_times = snap_sample_times(effective_sample_times(p, s), s.dt, p.t_p);
    coarse.noise_substeps = 2 * s.noise_substeps;
    SimParams fine = coarse;
    fine.dt = s.dt / 2.0;
    fine.noise_substeps = s.noise_substeps;

    ConvergenceReport report;
    report.coarse = run_ensemble(p, coarse, workers);
    report.fine = run_ensemble(p, fine, workers);

    const WitnessSeries a = report.coarse.witnesses();
    const WitnessSeries b = report.fine.witnesses();
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto add = [&](const char* name, const Estimate& ca, const Estimate& fb) {
            report.entries.push_back({a[i].time, name, ca.value, fb.value, ca.error});
        };
        add("n1", a[i].n1, b[i].n1);
        add("n2", a[i].n2, b[i].n2);
        add("n3", a[i].n3, b[i].n3);
        add("xi13", a[i].xi13, b[i].xi13);
        add("xi31", a[i].xi31, b[i].xi31);
        add("hz", a[i].hz, b[i].hz);
    }
    return report;
}

}  // namespace ctap
