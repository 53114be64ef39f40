#include "gnnstab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gnnstab/csv.hpp"
#include "gnnstab/error.hpp"

namespace gnnstab::spectral {

namespace {

double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double asymmetry(const Matrix& m) {
    return m.size() == 0 ? 0.0 : (m - m.transpose()).cwiseAbs().maxCoeff();
}

void require_symmetric(const Matrix& m, const char* who) {
    if (m.rows() != m.cols()) {
        throw ShapeError(std::string(who) + ": matrix must be square");
    }
    if (asymmetry(m) > 1e-12 * std::max(1.0, max_abs(m))) {
        throw ValidationError(std::string(who) + ": matrix is not symmetric");
    }
}

void fix_signs(Matrix& v) {
    for (Index c = 0; c < v.cols(); ++c) {
        Index best = 0;
        double best_abs = -1.0;
        for (Index r = 0; r < v.rows(); ++r) {
            const double a = std::abs(v(r, c));
            // Strictly larger, so ties resolve to the lowest row.
            if (a > best_abs * (1.0 + 1e-12)) {
                best_abs = a;
                best = r;
            }
        }
        if (v(best, c) < 0.0) {
            v.col(c) = -v.col(c);
        }
    }
}

}  // namespace

EigenSystem eigendecompose(const graph::Gso& shift) {
    return eigendecompose(shift.matrix());
}

EigenSystem eigendecompose(const Matrix& symmetric) {
    require_symmetric(symmetric, "eigendecompose");
    if (symmetric.rows() == 0) {
        return {};
    }
    const Matrix sym = 0.5 * (symmetric + symmetric.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) {
        throw Error("eigendecompose: eigensolver did not converge");
    }
    EigenSystem es{solver.eigenvectors(), solver.eigenvalues()};
    fix_signs(es.vectors);
    return es;
}

Vector eigenvalues(const Matrix& symmetric) {
    require_symmetric(symmetric, "eigenvalues");
    if (symmetric.rows() == 0) {
        return {};
    }
    const Matrix sym = 0.5 * (symmetric + symmetric.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw Error("eigenvalues: eigensolver did not converge");
    }
    return solver.eigenvalues();
}

Signal gft(const Matrix& eigenvectors, const Signal& x) {
    if (eigenvectors.rows() != x.rows()) {
        throw ShapeError("gft: eigenvector basis and signal sizes differ");
    }
    return eigenvectors.transpose() * x;
}

Signal igft(const Matrix& eigenvectors, const Signal& x_hat) {
    if (eigenvectors.cols() != x_hat.rows()) {
        throw ShapeError("igft: eigenvector basis and coefficient sizes differ");
    }
    return eigenvectors * x_hat;
}

double evaluate_response(const filters::FilterTaps& taps, double lambda) {
    double acc = 0.0;
    for (Index k = taps.size() - 1; k >= 0; --k) {
        acc = acc * lambda + taps[k];
    }
    return acc;
}

double evaluate_derivative(const filters::FilterTaps& taps, double lambda) {
    double acc = 0.0;
    for (Index k = taps.size() - 1; k >= 1; --k) {
        acc = acc * lambda + static_cast<double>(k) * taps[k];
    }
    return acc;
}

FrequencyResponse frequency_response(const filters::FilterTaps& taps, const Vector& grid) {
    FrequencyResponse r{grid, Vector(grid.size())};
    for (Index i = 0; i < grid.size(); ++i) {
        r.values(i) = evaluate_response(taps, grid(i));
    }
    return r;
}

Vector response_derivative_scaled(const filters::FilterTaps& taps, const Vector& grid) {
    Vector out(grid.size());
    for (Index i = 0; i < grid.size(); ++i) {
        out(i) = std::abs(grid(i) * evaluate_derivative(taps, grid(i)));
    }
    return out;
}

Vector uniform_grid(double a, double b, Index n) {
    if (n < 2) {
        throw ValidationError("uniform_grid: need at least two points");
    }
    Vector g(n);
    const double step = (b - a) / static_cast<double>(n - 1);
    for (Index i = 0; i < n; ++i) {
        g(i) = a + step * static_cast<double>(i);
    }
    g(n - 1) = b;
    return g;
}

IntegralLipschitzReport integral_lipschitz_check(const filters::FilterTaps& taps, double a,
                                                 double b, Index grid_size) {
    if (!(a < b)) {
        throw ValidationError("integral_lipschitz_check: empty interval");
    }
    if (grid_size < 2) {
        throw ValidationError("integral_lipschitz_check: grid needs at least two points");
    }
    const Vector grid = uniform_grid(a, b, grid_size);
    IntegralLipschitzReport rep;
    for (Index i = 0; i < grid.size(); ++i) {
        const double lam = grid(i);
        const double d = std::abs(lam * evaluate_derivative(taps, lam));
        if (d > rep.constant) {
            rep.constant = d;
            rep.argmax_lambda = lam;
        }
        rep.max_abs_response = std::max(rep.max_abs_response,
                                        std::abs(evaluate_response(taps, lam)));
    }
    rep.bounded = rep.max_abs_response <= 1.0;
    return rep;
}

double operator_norm(const Matrix& m) {
    if (m.size() == 0) {
        return 0.0;
    }
    if (m.rows() == m.cols() && asymmetry(m) <= 1e-10 * std::max(1e-300, max_abs(m))) {
        const Vector ev = eigenvalues(0.5 * (m + m.transpose()));
        return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
    }
    const Matrix gram = m.transpose() * m;
    const Vector ev = eigenvalues(0.5 * (gram + gram.transpose()));
    return std::sqrt(std::max(0.0, ev(ev.size() - 1)));
}

filters::FilterTaps design_integral_lipschitz_filter(double a, double b, Index tap_count,
                                                     double c_target) {
    if (!(a < b)) {
        throw ValidationError("design_integral_lipschitz_filter: empty interval");
    }
    if (tap_count < 1 || !(c_target > 0.0)) {
        throw ValidationError("design_integral_lipschitz_filter: need K >= 1 and C > 0");
    }
    const double scale = std::max(std::abs(a), std::abs(b));
    const double width = 0.25 * scale;
    const Index samples = 401;
    const Vector grid = uniform_grid(a, b, samples);

    // Fit in the scaled variable t = lambda / scale for conditioning.
    Matrix vand(samples, tap_count);
    Vector target(samples);
    for (Index i = 0; i < samples; ++i) {
        const double t = grid(i) / scale;
        double p = 1.0;
        for (Index k = 0; k < tap_count; ++k) {
            vand(i, k) = p;
            p *= t;
        }
        const double z = grid(i) / width;
        target(i) = 1.0 - std::exp(-z * z);
    }
    const Vector c = vand.colPivHouseholderQr().solve(target);
    std::vector<double> h(static_cast<std::size_t>(tap_count));
    double s = 1.0;
    for (Index k = 0; k < tap_count; ++k) {
        h[static_cast<std::size_t>(k)] = c(k) / s;
        s *= scale;
    }
    filters::FilterTaps raw(std::move(h));
    const auto rep = integral_lipschitz_check(raw, a, b);
    double factor = 1.0;
    if (rep.constant > c_target) {
        factor = c_target / rep.constant;
    }
    if (rep.max_abs_response * factor > 1.0) {
        factor = 1.0 / rep.max_abs_response;
    }
    return raw.scaled(factor);
}

void write_frequency_response(std::ostream& out, const FrequencyResponse& response) {
    out << "lambda,value\n";
    for (Index i = 0; i < response.grid.size(); ++i) {
        out << csv::format(response.grid(i)) << ',' << csv::format(response.values(i)) << '\n';
    }
}

}  // namespace gnnstab::spectral
