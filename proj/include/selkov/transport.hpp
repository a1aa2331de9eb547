#pragma once

// Transportation simplex (MODI / u-v method) for balanced discrete optimal
// transport: min sum c_ij x_ij, row sums a, column sums b.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace selkov::transport {

struct Result {
    double cost = 0.0;
    std::vector<double> flow;  // row-major m x n
    long iterations = 0;
    bool optimal = false;
};

class TransportationSimplex {
public:
    TransportationSimplex(std::vector<double> supply, std::vector<double> demand, std::vector<double> cost)
        : m_(supply.size()), n_(demand.size()), a_(std::move(supply)), b_(std::move(demand)), c_(std::move(cost)) {
        if (m_ == 0 || n_ == 0) throw std::invalid_argument("transport: empty marginal");
        if (c_.size() != m_ * n_) throw std::invalid_argument("transport: cost matrix has wrong size");
        double sa = 0.0, sb = 0.0;
        for (double x : a_) sa += x;
        for (double x : b_) sb += x;
        if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa)) throw std::invalid_argument("transport: unbalanced marginals");
        // Absorb rounding so the last column closes exactly.
        b_.back() += sa - sb;
        if (b_.back() < 0.0) b_.back() = 0.0;
    }

    Result solve(long max_iterations = 0) {
        const long limit = max_iterations > 0 ? max_iterations : 100L * static_cast<long>(m_ * n_ + m_ + n_);
        northwest_corner();
        Result res;
        double scale = 0.0;
        for (double c : c_) scale = std::max(scale, std::abs(c));
        const double eps = 1e-12 * std::max(1.0, scale);
        std::vector<double> u(m_), v(n_);
        while (res.iterations < limit) {
            potentials(u, v);
            std::size_t ei = 0, ej = 0;
            double best = -eps;
            for (std::size_t i = 0; i < m_; ++i)
                for (std::size_t j = 0; j < n_; ++j) {
                    const double r = c_[i * n_ + j] - u[i] - v[j];
                    if (r < best && !basic_[i * n_ + j]) {
                        best = r;
                        ei = i;
                        ej = j;
                    }
                }
            if (best == -eps) {
                res.optimal = true;
                break;
            }
            pivot(ei, ej);
            ++res.iterations;
        }
        res.flow = x_;
        for (std::size_t k = 0; k < x_.size(); ++k) res.cost += x_[k] * c_[k];
        return res;
    }

private:
    // Initial basic solution with exactly m + n - 1 basic cells.
    void northwest_corner() {
        x_.assign(m_ * n_, 0.0);
        basic_.assign(m_ * n_, false);
        row_adj_.assign(m_, {});
        col_adj_.assign(n_, {});
        std::vector<double> a = a_, b = b_;
        std::size_t i = 0, j = 0;
        while (i < m_ && j < n_) {
            const double q = std::min(a[i], b[j]);
            set_basic(i, j, q);
            a[i] -= q;
            b[j] -= q;
            if (i == m_ - 1) {
                ++j;
            } else if (j == n_ - 1) {
                ++i;
            } else if (a[i] <= b[j]) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    void set_basic(std::size_t i, std::size_t j, double q) {
        x_[i * n_ + j] = q;
        basic_[i * n_ + j] = true;
        row_adj_[i].push_back(j);
        col_adj_[j].push_back(i);
    }

    void unset_basic(std::size_t i, std::size_t j) {
        x_[i * n_ + j] = 0.0;
        basic_[i * n_ + j] = false;
        row_adj_[i].erase(std::find(row_adj_[i].begin(), row_adj_[i].end(), j));
        col_adj_[j].erase(std::find(col_adj_[j].begin(), col_adj_[j].end(), i));
    }

    // u_i + v_j = c_ij on the spanning tree of basic cells.
    void potentials(std::vector<double>& u, std::vector<double>& v) {
        std::vector<char> seen_r(m_, 0), seen_c(n_, 0);
        std::vector<std::size_t> stack;  // nodes: rows 0..m-1, columns m..m+n-1
        u[0] = 0.0;
        seen_r[0] = 1;
        stack.push_back(0);
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node < m_) {
                for (std::size_t j : row_adj_[node])
                    if (!seen_c[j]) {
                        v[j] = c_[node * n_ + j] - u[node];
                        seen_c[j] = 1;
                        stack.push_back(m_ + j);
                    }
            } else {
                const std::size_t j = node - m_;
                for (std::size_t i : col_adj_[j])
                    if (!seen_r[i]) {
                        u[i] = c_[i * n_ + j] - v[j];
                        seen_r[i] = 1;
                        stack.push_back(i);
                    }
            }
        }
    }

    // Bring (ei, ej) into the basis along the unique tree cycle.
    void pivot(std::size_t ei, std::size_t ej) {
        // Tree path from row ei to column ej.
        const std::size_t total = m_ + n_;
        const std::size_t none = std::numeric_limits<std::size_t>::max();
        std::vector<std::size_t> parent(total, none);
        std::vector<std::size_t> queue{ei};
        parent[ei] = ei;
        const std::size_t target = m_ + ej;
        for (std::size_t h = 0; h < queue.size() && parent[target] == none; ++h) {
            const std::size_t node = queue[h];
            if (node < m_) {
                for (std::size_t j : row_adj_[node])
                    if (parent[m_ + j] == none) {
                        parent[m_ + j] = node;
                        queue.push_back(m_ + j);
                    }
            } else {
                for (std::size_t i : col_adj_[node - m_])
                    if (parent[i] == none) {
                        parent[i] = node;
                        queue.push_back(i);
                    }
            }
        }
        // Cells on the path, from column ej back to row ei; they alternate -, +, -, ...
        std::vector<std::pair<std::size_t, std::size_t>> cells;
        for (std::size_t node = target; node != ei;) {
            const std::size_t p = parent[node];
            if (node >= m_)
                cells.emplace_back(p, node - m_);
            else
                cells.emplace_back(node, p - m_);
            node = p;
        }
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = 0;
        for (std::size_t k = 0; k < cells.size(); k += 2) {
            const double q = x_[cells[k].first * n_ + cells[k].second];
            if (q < theta) {
                theta = q;
                leave = k;
            }
        }
        for (std::size_t k = 0; k < cells.size(); ++k) {
            double& q = x_[cells[k].first * n_ + cells[k].second];
            q += (k % 2 == 0) ? -theta : theta;
        }
        const auto [li, lj] = cells[leave];
        unset_basic(li, lj);
        set_basic(ei, ej, theta);
        for (std::size_t k = 0; k < cells.size(); k += 2) {
            double& q = x_[cells[k].first * n_ + cells[k].second];
            if (q < 0.0) q = 0.0;
        }
    }

    std::size_t m_, n_;
    std::vector<double> a_, b_, c_;
    std::vector<double> x_;
    std::vector<bool> basic_;
    std::vector<std::vector<std::size_t>> row_adj_, col_adj_;
};

inline Result solve(std::vector<double> supply, std::vector<double> demand, std::vector<double> cost) {
    return TransportationSimplex(std::move(supply), std::move(demand), std::move(cost)).solve();
}

}  // namespace selkov::transport
