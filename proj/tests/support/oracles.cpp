#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

EigenPair jacobi_eigen(const Matrix& input, double tol, int max_sweeps) {
    const int n = static_cast<int>(input.rows());
    Matrix a = input;
    Matrix v = Matrix::Identity(n, n);
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) < tol * scale) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) < a(y, y); });
    EigenPair out{Vector(n), Matrix(n, n)};
    for (int i = 0; i < n; ++i) {
        out.values(i) = a(order[i], order[i]);
        out.vectors.col(i) = v.col(order[i]);
    }
    return out;
}

double spectral_norm(const Matrix& a) {
    const EigenPair e = jacobi_eigen(a.transpose() * a);
    return std::sqrt(std::max(0.0, e.values.maxCoeff()));
}

Matrix dense_filter(const Matrix& s, const std::vector<double>& taps) {
    Matrix out = Matrix::Zero(s.rows(), s.cols());
    Matrix power = Matrix::Identity(s.rows(), s.cols());
    for (double h : taps) {
        out += h * power;
        power = power * s;
    }
    return out;
}

double pearson_pair(const Matrix& r, int i, int j, int min_common) {
    std::vector<double> x, y;
    for (int u = 0; u < r.rows(); ++u) {
        if (r(u, i) > 0 && r(u, j) > 0) {
            x.push_back(r(u, i));
            y.push_back(r(u, j));
        }
    }
    if (static_cast<int>(x.size()) < min_common) return 0.0;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx <= 1e-12 || syy <= 1e-12) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle
