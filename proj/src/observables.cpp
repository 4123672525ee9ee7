#include "ctap/observables.hpp"

#include <cmath>
#include <numeric>

namespace ctap {

MomentSet& MomentSet::operator+=(const MomentSet& o) {
    m11 += o.m11;
    m22 += o.m22;
    m33 += o.m33;
    m13 += o.m13;
    m31 += o.m31;
    m1133 += o.m1133;
    return *this;
}

MomentSet& MomentSet::operator-=(const MomentSet& o) {
    m11 -= o.m11;
    m22 -= o.m22;
    m33 -= o.m33;
    m13 -= o.m13;
    m31 -= o.m31;
    m1133 -= o.m1133;
    return *this;
}

MomentSet& MomentSet::operator*=(double f) {
    m11 *= f;
    m22 *= f;
    m33 *= f;
    m13 *= f;
    m31 *= f;
    m1133 *= f;
    return *this;
}

MomentSet operator+(MomentSet a, const MomentSet& b) { return a += b; }
MomentSet operator-(MomentSet a, const MomentSet& b) { return a -= b; }
MomentSet operator*(MomentSet a, double f) { return a *= f; }

double population_value(const MomentSet& m, int mode) {
    switch (mode) {
        case 1: return m.m11.real();
        case 2: return m.m22.real();
        case 3: return m.m33.real();
        default: throw std::out_of_range("mode index must be 1, 2 or 3");
    }
}

double hz_value(const MomentSet& m) {
    return m.m1133.real() - std::norm(m.m13);
}

// The first term is a product of two separately averaged moments, not the mean of a product.
double xi13_value(const MomentSet& m) {
    return (m.m13 * m.m31).real() - (m.m1133.real() + m.m11.real() / 2.0);
}

double xi31_value(const MomentSet& m) {
    return (m.m13 * m.m31).real() - (m.m1133.real() + m.m33.real() / 2.0);
}

double jackknife_error(std::span<const MomentSet> batch_means, const Estimator& estimator) {
    std::vector<std::int64_t> ones(batch_means.size(), 1);
    return jackknife_error(batch_means, ones, estimator);
}

double jackknife_error(std::span<const MomentSet> batch_means, std::span<const std::int64_t> batch_counts,
                       const Estimator& estimator) {
    const std::size_t b = batch_means.size();
    if (b < 2) throw std::domain_error("jackknife needs at least two batches");
    if (batch_counts.size() != b) throw std::invalid_argument("jackknife: batch counts do not match batches");

    MomentSet total;
    std::int64_t weight = 0;
    for (std::size_t i = 0; i < b; ++i) {
        total += batch_means[i] * static_cast<double>(batch_counts[i]);
        weight += batch_counts[i];
    }

    std::vector<double> leave_out;
    leave_out.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        const std::int64_t rest = weight - batch_counts[i];
        if (batch_counts[i] == 0) continue;  // an emptied batch carries no information
        if (rest <= 0) throw std::domain_error("jackknife: all weight in one batch");
        MomentSet m = total - batch_means[i] * static_cast<double>(batch_counts[i]);
        m *= 1.0 / static_cast<double>(rest);
        leave_out.push_back(estimator(m));
    }
    const auto used = static_cast<double>(leave_out.size());
    if (leave_out.size() < 2) throw std::domain_error("jackknife needs at least two non-empty batches");
    const double mean = std::accumulate(leave_out.begin(), leave_out.end(), 0.0) / used;
    double ss = 0.0;
    for (double v : leave_out) ss += (v - mean) * (v - mean);
    return std::sqrt((used - 1.0) / used * ss);
}

Estimate estimate(const MomentRecord& m, const Estimator& estimator) {
    if (m.n_effective <= 1) throw std::domain_error("estimate needs more than one trajectory");
    return {estimator(m.mean), jackknife_error(m.batch_means, m.batch_counts, estimator)};
}

Populations populations(const MomentRecord& m) {
    return {estimate(m, [](const MomentSet& s) { return population_value(s, 1); }),
            estimate(m, [](const MomentSet& s) { return population_value(s, 2); }),
            estimate(m, [](const MomentSet& s) { return population_value(s, 3); })};
}

Estimate hz_entanglement(const MomentRecord& m) {
    return estimate(m, hz_value);
}

SteeringPair xi_pair(const MomentRecord& m) {
    return {estimate(m, xi13_value), estimate(m, xi31_value)};
}

double cavalcanti_witness(const MomentSet& m, std::span<const int> ordering) {
    if (ordering.size() != 2)
        throw UnsupportedConfiguration("steering function needs moments that were not accumulated for "
                                       + std::to_string(ordering.size()) + " modes");
    const int first = ordering[0];
    const int other = ordering[1];
    const bool end_wells = (first == 1 && other == 3) || (first == 3 && other == 1);
    if (!end_wells) throw UnsupportedConfiguration("only wells 1 and 3 carry accumulated cross-moments");
    // <a_f+ a_o><a_o+ a_f> is symmetric under relabelling, as is <N_f N_o>.
    const double correlation = (m.m13 * m.m31).real();
    const double joint = m.m1133.real();
    return correlation - (joint + population_value(m, first) / 2.0);
}

double frozen_state_xi(StateKind kind, std::int64_t n_total) {
    if (n_total < 0) throw std::domain_error("frozen_state_xi: n_total must be non-negative");
    const auto n = static_cast<double>(n_total);
    if (kind == StateKind::Coherent) return -n / 4.0;
    if (n_total % 2 != 0) throw std::domain_error("frozen Fock state needs an even atom number");
    return -n * (n + 1.0) / 4.0;
}

WitnessPoint witness_point(const MomentRecord& m, double diverged_fraction) {
    WitnessPoint w;
    w.time = m.time;
    const Populations pops = populations(m);
    w.n1 = pops.n1;
    w.n2 = pops.n2;
    w.n3 = pops.n3;
    const SteeringPair xi = xi_pair(m);
    w.xi13 = xi.xi13;
    w.xi31 = xi.xi31;
    w.hz = hz_entanglement(m);
    w.diverged_fraction = diverged_fraction;
    return w;
}

WitnessSeries witness_series(const MomentSeries& series, double diverged_fraction) {
    WitnessSeries out;
    out.reserve(series.size());
    for (const MomentRecord& m : series) out.push_back(witness_point(m, diverged_fraction));
    return out;
}

WitnessPoint exact_witness_point(double time, const MomentSet& m) {
    WitnessPoint w;
    w.time = time;
    w.n1 = {population_value(m, 1), 0.0};
    w.n2 = {population_value(m, 2), 0.0};
    w.n3 = {population_value(m, 3), 0.0};
    w.xi13 = {xi13_value(m), 0.0};
    w.xi31 = {xi31_value(m), 0.0};
    w.hz = {hz_value(m), 0.0};
    return w;
}

}  // namespace ctap
