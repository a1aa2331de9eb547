#pragma once

// Small statistical helpers for the experiments: means, percentile bootstrap,
// Spearman rank correlation and least-squares line fits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lattice_model.hpp"
#include "rng.hpp"

namespace selkov::stats {

inline double mean(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double stddev(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// Linear-interpolated quantile of an unsorted sample, q in [0, 1].
inline double quantile(std::vector<double> x, double q) {
    if (x.empty()) return 0.0;
    std::sort(x.begin(), x.end());
    const double pos = q * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

struct Interval {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double width() const noexcept { return hi - lo; }
};

/// Seeded index draw in [0, n).
inline std::size_t draw_index(CounterStream& s, std::size_t n) {
    return static_cast<std::size_t>(s.next_u64() % n);
}

/// Percentile bootstrap of the mean at level `level` (e.g. 0.95).
inline Interval bootstrap_mean(const std::vector<double>& x, std::size_t B, std::uint64_t seed, double level = 0.95) {
    Interval out{mean(x), 0.0, 0.0};
    if (x.size() < 2) {
        out.lo = out.hi = out.estimate;
        return out;
    }
    std::vector<double> reps(B);
    for (std::size_t b = 0; b < B; ++b) {
        CounterStream s(seed, b, 0, StreamPurpose::Resampling);
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += x[draw_index(s, x.size())];
        reps[b] = acc / static_cast<double>(x.size());
    }
    out.lo = quantile(reps, 0.5 * (1.0 - level));
    out.hi = quantile(reps, 0.5 * (1.0 + level));
    return out;
}

/// Average ranks (ties share the mean rank).
inline std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractViolation("pearson: length mismatch");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) { return pearson(ranks(x), ranks(y)); }

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractViolation("fit_line needs >= 2 paired points");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (x.size() > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e = y[i] - f.intercept - f.slope * x[i];
            rss += e * e;
        }
        f.slope_se = std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx);
    }
    return f;
}

/// Least-squares slope of log y against log x.
inline LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ContractViolation("fit_loglog needs positive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    return fit_line(lx, ly);
}

}  // namespace selkov::stats
