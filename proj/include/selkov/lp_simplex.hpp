#pragma once

// Dense primal simplex for   max c'x  s.t.  Ax <= b, x >= 0   with b >= 0,
// so the slack basis is feasible and no phase one is needed. Condensed
// (Tucker) tableau with Dantzig pricing. The ratio test runs on a slightly
// perturbed right-hand side so degenerate vertices cannot stall; the solution
// is read from the unperturbed column of the final basis. Bland's rule is a
// last resort on long degenerate streaks.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace selkov::lp {

enum class Status { Optimal, Unbounded, IterationLimit };

struct Problem {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> A;  // row-major rows x cols
    std::vector<double> b;
    std::vector<double> c;

    Problem() = default;
    Problem(std::size_t m, std::size_t n) : rows(m), cols(n), A(m * n, 0.0), b(m, 0.0), c(n, 0.0) {}

    double& a(std::size_t i, std::size_t j) { return A[i * cols + j]; }
};

struct Solution {
    Status status = Status::IterationLimit;
    double value = 0.0;
    std::vector<double> x;
    std::vector<double> y;  // row duals
    long pivots = 0;
};

struct Options {
    double eps = 1e-11;
    long max_pivots = 0;     // 0: 50 (rows + cols)
    int degenerate_streak = 50;
    double perturbation = 1e-7;  // relative size of the ratio-test perturbation; 0 disables it
};

class Tableau {
public:
    explicit Tableau(const Problem& p, double perturbation = 0.0)
        : m_(p.rows), n_(p.cols), w_(p.cols + 2), T_((p.rows + 1) * (p.cols + 2)) {
        if (p.A.size() != m_ * n_ || p.b.size() != m_ || p.c.size() != n_)
            throw std::invalid_argument("lp: inconsistent problem dimensions");
        for (std::size_t i = 0; i < m_; ++i) {
            if (!(p.b[i] >= 0.0)) throw std::invalid_argument("lp: right-hand side must be nonnegative");
            for (std::size_t j = 0; j < n_; ++j) at(i, j) = p.A[i * n_ + j];
            at(i, n_) = p.b[i];
            // distinct per-row offsets in [1, 2) * perturbation * (1 + b_i)
            const double frac = std::fmod(0.6180339887498949 * static_cast<double>(i + 1), 1.0);
            at(i, n_ + 1) = p.b[i] + perturbation * (1.0 + frac) * (1.0 + p.b[i]);
        }
        for (std::size_t j = 0; j < n_; ++j) at(m_, j) = -p.c[j];
        basic_.resize(m_);
        nonbasic_.resize(n_);
        for (std::size_t i = 0; i < m_; ++i) basic_[i] = n_ + i;
        for (std::size_t j = 0; j < n_; ++j) nonbasic_[j] = j;
    }

    Solution solve(const Options& opt = {}) {
        const long limit = opt.max_pivots > 0 ? opt.max_pivots : 50L * static_cast<long>(m_ + n_ + 1);
        Solution sol;
        int streak = 0;
        while (sol.pivots < limit) {
            const bool bland = streak >= opt.degenerate_streak;
            const std::size_t s = entering(opt.eps, bland);
            if (s == npos) {
                sol.status = Status::Optimal;
                break;
            }
            const std::size_t r = leaving(s, opt.eps);
            if (r == npos) {
                sol.status = Status::Unbounded;
                return sol;
            }
            streak = at(r, n_ + 1) <= opt.eps ? streak + 1 : 0;
            pivot(r, s);
            ++sol.pivots;
        }
        sol.value = at(m_, n_);
        sol.x.assign(n_, 0.0);
        for (std::size_t i = 0; i < m_; ++i)
            if (basic_[i] < n_) sol.x[basic_[i]] = at(i, n_);
        sol.y.assign(m_, 0.0);
        for (std::size_t j = 0; j < n_; ++j)
            if (nonbasic_[j] >= n_) sol.y[nonbasic_[j] - n_] = at(m_, j);
        return sol;
    }

private:
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    double& at(std::size_t i, std::size_t j) { return T_[i * w_ + j]; }

    std::size_t entering(double eps, bool bland) {
        std::size_t best = npos;
        double most = -eps;
        for (std::size_t j = 0; j < n_; ++j) {
            const double d = at(m_, j);
            if (bland) {
                if (d < -eps && (best == npos || nonbasic_[j] < nonbasic_[best])) best = j;
            } else if (d < most) {
                most = d;
                best = j;
            }
        }
        return best;
    }

    std::size_t leaving(std::size_t s, double eps) {
        std::size_t best = npos;
        double ratio = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m_; ++i) {
            const double a = at(i, s);
            if (a <= eps) continue;
            const double q = at(i, n_ + 1) / a;
            const double tol = 1e-14 * (1.0 + std::abs(ratio));
            if (best == npos || q < ratio - tol) {
                ratio = q;
                best = i;
            } else if (q <= ratio + tol && basic_[i] < basic_[best]) {
                ratio = std::min(ratio, q);
                best = i;
            }
        }
        return best;
    }

    void pivot(std::size_t r, std::size_t s) {
        const double p = at(r, s);
        double* row_r = &T_[r * w_];
        for (std::size_t j = 0; j < w_; ++j)
            if (j != s) row_r[j] /= p;
        for (std::size_t i = 0; i <= m_; ++i) {
            if (i == r) continue;
            double* row = &T_[i * w_];
            const double f = row[s];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < w_; ++j)
                if (j != s) row[j] -= f * row_r[j];
            row[s] = -f / p;
        }
        row_r[s] = 1.0 / p;
        std::swap(basic_[r], nonbasic_[s]);
    }

    std::size_t m_, n_, w_;
    std::vector<double> T_;
    std::vector<std::size_t> basic_, nonbasic_;
};

inline Solution maximize(const Problem& p, const Options& opt = {}) { return Tableau(p, opt.perturbation).solve(opt); }

}  // namespace selkov::lp
