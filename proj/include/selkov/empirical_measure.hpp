#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lattice_model.hpp"

namespace selkov {

struct MeasureOrigin {
    double tau = 0.0;
    double horizon = 0.0;
    NoiseIntensity lambda{};
    std::uint64_t seed = 0;
};

/// Weighted cloud of lattice states standing in for a law on l2 x l2.
struct EmpiricalMeasure {
    std::vector<LatticeState> samples;
    std::vector<double> weights;
    MeasureOrigin origin{};

    static EmpiricalMeasure uniform(std::vector<LatticeState> samples, MeasureOrigin origin = {}) {
        EmpiricalMeasure m;
        const double w = samples.empty() ? 0.0 : 1.0 / static_cast<double>(samples.size());
        m.weights.assign(samples.size(), w);
        m.samples = std::move(samples);
        m.origin = origin;
        return m;
    }

    static EmpiricalMeasure dirac(LatticeState x) { return uniform({std::move(x)}); }

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    std::size_t sites() const noexcept { return samples.empty() ? 0 : samples.front().size(); }

    /// Throws ContractViolation unless weights are nonnegative, sum to 1
    /// within 1e-12 and all samples share one window size.
    void validate() const {
        if (samples.empty()) throw ContractViolation("empirical measure has no atoms");
        if (weights.size() != samples.size()) throw ContractViolation("weights and samples differ in length");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw ContractViolation("negative weight");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12) throw ContractViolation("weights do not sum to 1");
        for (const auto& s : samples)
            if (s.size() != sites() || s.v.size() != sites()) throw ContractViolation("samples differ in dimension");
    }
};

/// Euclidean distance in the product norm of l2 x l2.
inline double state_distance(const LatticeState& a, const LatticeState& b) {
    if (a.size() != b.size()) throw ContractViolation("state_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double du = a.u[i] - b.u[i];
        const double dv = a.v[i] - b.v[i];
        s += du * du + dv * dv;
    }
    return std::sqrt(s);
}

}  // namespace selkov
