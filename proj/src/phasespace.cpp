#include "ctap/phasespace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace ctap {

bool PhasePoint::finite() const {
    for (const cd& v : {a1, a1p, a2, a2p, a3, a3p})
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
}

namespace {

constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ull;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream_id) {
    return mix64(seed + golden_gamma) ^ mix64(mix64(stream_id) + 2 * golden_gamma);
}

}  // namespace

Xoshiro256StarStar::Xoshiro256StarStar(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) {
        x += golden_gamma;
        word = mix64(x);
    }
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(stream_key(seed, stream_id)) {}

std::pair<cd, cd> sample_coherent(cd amplitude) {
    return {amplitude, std::conj(amplitude)};
}

double sample_gamma(std::int64_t n, RngStream& rng) {
    if (n < 0) throw std::domain_error("sample_gamma: n must be non-negative");
    // Shape n+1 >= 1, so the squeeze/acceptance scheme applies without the shape<1 boost.
    const double d = static_cast<double>(n) + 1.0 - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::pair<cd, cd> sample_fock(std::int64_t n, RngStream& rng) {
    const double z = sample_gamma(n, rng);
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    const cd mu = std::polar(std::sqrt(z), theta);
    const double eta1 = rng.normal();
    const double eta2 = rng.normal();
    const cd gamma = cd(eta1, eta2) / std::numbers::sqrt2;
    return {mu + gamma, std::conj(mu) - std::conj(gamma)};
}

PhasePoint initial_point(const ModelParams& p, RngStream& rng) {
    PhasePoint x;
    if (p.state_kind == StateKind::Coherent) {
        const cd amplitude = std::polar(std::sqrt(static_cast<double>(p.n_total)), p.initial_phase);
        std::tie(x.a1, x.a1p) = sample_coherent(amplitude);
    } else {
        std::tie(x.a1, x.a1p) = sample_fock(p.n_total, rng);
    }
    // Wells 2 and 3 start in vacuum, sampled as the zero-amplitude coherent state.
    std::tie(x.a2, x.a2p) = sample_coherent(0.0);
    std::tie(x.a3, x.a3p) = sample_coherent(0.0);
    return x;
}

std::vector<PhasePoint> initial_ensemble(const ModelParams& p, const SimParams& s) {
    std::vector<PhasePoint> points;
    points.reserve(static_cast<std::size_t>(std::max<std::int64_t>(s.n_traj, 0)));
    for (std::int64_t k = 0; k < s.n_traj; ++k) {
        RngStream rng(s.seed, static_cast<std::uint64_t>(k));
        points.push_back(initial_point(p, rng));
    }
    return points;
}

}  // namespace ctap
