#include "lorac/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace lorac::linalg {

std::vector<double> singular_values(const Tensor& m) {
    if (m.rank() != 2) {
        throw std::invalid_argument("singular_values: expected rank-2 tensor, got " +
                                    shape_to_string(m.shape));
    }
    // Work on columns; transpose so cols <= rows.
    int rows = m.dim(0), cols = m.dim(1);
    const bool flip = cols > rows;
    if (flip) std::swap(rows, cols);
    std::vector<double> a(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            a[static_cast<std::size_t>(i) * cols + j] =
                flip ? m.at2(j, i) : m.at2(i, j);
        }
    }

    auto col_dot = [&](int p, int q) {
        double s = 0.0;
        for (int i = 0; i < rows; ++i) {
            s += a[static_cast<std::size_t>(i) * cols + p] * a[static_cast<std::size_t>(i) * cols + q];
        }
        return s;
    };

    // One-sided Jacobi: rotate column pairs until all are orthogonal.
    const double tol = 1e-14;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool converged = true;
        for (int p = 0; p < cols - 1; ++p) {
            for (int q = p + 1; q < cols; ++q) {
                const double app = col_dot(p, p);
                const double aqq = col_dot(q, q);
                const double apq = col_dot(p, q);
                if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
                converged = false;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < rows; ++i) {
                    double& ap = a[static_cast<std::size_t>(i) * cols + p];
                    double& aq = a[static_cast<std::size_t>(i) * cols + q];
                    const double vp = ap, vq = aq;
                    ap = c * vp - s * vq;
                    aq = s * vp + c * vq;
                }
            }
        }
        if (converged) break;
    }

    std::vector<double> sv(static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) sv[j] = std::sqrt(col_dot(j, j));
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

int numerical_rank(const Tensor& m, double rel_tol) {
    const auto sv = singular_values(m);
    if (sv.empty() || sv[0] == 0.0) return 0;
    int r = 0;
    for (double s : sv) {
        if (s > rel_tol * sv[0]) ++r;
    }
    return r;
}

}  // namespace lorac::linalg
