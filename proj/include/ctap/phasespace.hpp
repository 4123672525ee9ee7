#pragma once

#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "ctap/model.hpp"

namespace ctap {

using cd = std::complex<double>;

/// One positive-P trajectory: amplitudes alpha_j and their independent partners alpha_j^+.
struct PhasePoint {
    cd a1{}, a1p{}, a2{}, a2p{}, a3{}, a3p{};

    bool operator==(const PhasePoint&) const = default;
    bool finite() const;
};

/// xoshiro256** (Blackman and Vigna) seeded through splitmix64.
class Xoshiro256StarStar {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256StarStar(std::uint64_t seed);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

/// Reproducible random stream keyed by (seed, stream_id). Engine and distributions are
/// fixed implementations (xoshiro256** and Boost's ziggurat normal), so sequences are
/// identical across platforms and standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    double normal() { return normal_(engine_); }
    /// Uniform on [0, 1).
    double uniform() { return uniform_(engine_); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    Xoshiro256StarStar engine_;
    boost::random::normal_distribution<double> normal_;
    boost::random::uniform_01<double> uniform_;
};

/// Deterministic coherent-state sample: (alpha, conj(alpha)).
std::pair<cd, cd> sample_coherent(cd amplitude);

/// Gamma(n+1, 1) variate by the Marsaglia-Tsang squeeze method.
double sample_gamma(std::int64_t n, RngStream& rng);

/// Fock-state |n> sample: alpha = mu + gamma, alpha^+ = mu* - gamma*, with
/// |mu|^2 ~ Gamma(n+1), arg(mu) uniform, gamma = (eta1 + i eta2)/sqrt(2).
std::pair<cd, cd> sample_fock(std::int64_t n, RngStream& rng);

/// All atoms in well 1 (coherent or Fock per p.state_kind), wells 2 and 3 in vacuum.
/// Consumes random numbers from rng only for Fock input.
PhasePoint initial_point(const ModelParams& p, RngStream& rng);

/// Initial points of the whole ensemble; trajectory k draws from RngStream(seed, k).
std::vector<PhasePoint> initial_ensemble(const ModelParams& p, const SimParams& s);

}  // namespace ctap
