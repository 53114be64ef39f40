#include "gnnstab/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "gnnstab/error.hpp"
#include "gnnstab/spectral.hpp"

namespace gnnstab::perturbation {

namespace {

struct SpectralSolver {
    spectral::EigenSystem es;
    double norm = 0.0;
};

SpectralSolver prepare_solver(const graph::Gso& shift) {
    SpectralSolver s{spectral::eigendecompose(shift), 0.0};
    if (s.es.size() > 0) {
        s.norm = std::max(std::abs(s.es.values(0)), std::abs(s.es.values(s.es.size() - 1)));
    }
    return s;
}

Matrix solve_with(const SpectralSolver& solver, const graph::Gso& shift, const Matrix& delta) {
    const Index n = shift.size();
    const Vector& lam = solver.es.values;
    const Matrix& v = solver.es.vectors;
    const double tol = 1e-10 * solver.norm;
    Matrix dt = v.transpose() * delta * v;
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            const double denom = lam(i) + lam(j);
            if (std::abs(denom) < tol || denom == 0.0) {
                throw SingularEquationError(
                    "solve_relative_error: eigenvalues " + std::to_string(i) + " and " +
                        std::to_string(j) + " sum to zero (lambda_i = " +
                        std::to_string(lam(i)) + ", lambda_j = " + std::to_string(lam(j)) +
                        "); E S + S E = Delta has no unique solution",
                    static_cast<int>(i), static_cast<int>(j));
            }
            dt(i, j) /= denom;
        }
    }
    Matrix e = v * dt * v.transpose();
    e = (0.5 * (e + e.transpose())).eval();
    const Matrix& s = shift.matrix();
    const double residual = spectral::operator_norm(e * s + s * e - delta);
    if (residual > 1e-8 * std::max(solver.norm, 1e-300)) {
        throw Error("solve_relative_error: membership residual " + std::to_string(residual) +
                    " exceeds tolerance");
    }
    return e;
}

}  // namespace

double membership_residual(const PerturbationSpec& spec) {
    const Matrix& s = spec.original.matrix();
    const Matrix back = graph::permute_matrix(spec.perturbed.matrix(), spec.permutation);
    return spectral::operator_norm(back - s - (spec.error * s + s * spec.error));
}

PerturbationSpec edge_dilation(const graph::Gso& shift, double epsilon) {
    if (!(epsilon > -1.0)) {
        throw ValidationError("edge_dilation: need epsilon > -1");
    }
    const Index n = shift.size();
    graph::Gso dilated((1.0 + epsilon) * shift.matrix(), shift.kind());
    // E is a multiple of I, so any eigenbasis works; take the GSO's own.
    Matrix u = spectral::eigendecompose(shift).vectors;
    return PerturbationSpec{shift,
                            std::move(dilated),
                            (0.5 * epsilon) * Matrix::Identity(n, n),
                            graph::Permutation::identity(n),
                            epsilon,
                            std::move(u)};
}

RelativeDirection draw_relative_direction(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> fraction(0.5, 1.0);
    Matrix a(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            a(i, j) = normal(rng);
        }
    }
    a = (0.5 * (a + a.transpose())).eval();
    const double norm = spectral::operator_norm(a);
    RelativeDirection d;
    d.unit_error = a / norm;
    d.scale_fraction = fraction(rng);
    return d;
}

PerturbationSpec random_relative_perturbation(const graph::Gso& shift, double epsilon,
                                              std::uint64_t seed) {
    return relative_perturbation(shift, epsilon, draw_relative_direction(shift.size(), seed));
}

PerturbationSpec relative_perturbation(const graph::Gso& shift, double epsilon,
                                       const RelativeDirection& direction,
                                       bool with_error_eigenvectors) {
    if (!(epsilon >= 0.0)) {
        throw ValidationError("random_relative_perturbation: need epsilon >= 0");
    }
    const Index n = shift.size();
    if (direction.unit_error.rows() != n || direction.unit_error.cols() != n) {
        throw ShapeError("relative_perturbation: direction size differs from the GSO");
    }
    Matrix e = (direction.scale_fraction * epsilon) * direction.unit_error;
    const Matrix& s = shift.matrix();
    Matrix s_hat = s;
    if (epsilon != 0.0) {
        // S E = (E S)^T for symmetric S and E.
        const Matrix es = e * s;
        s_hat += es;
        s_hat += es.transpose();
    }
    Matrix u;
    if (with_error_eigenvectors) {
        u = aligned_error_eigenvectors(e, spectral::eigendecompose(shift).vectors);
    }
    return PerturbationSpec{shift,
                            graph::Gso(s_hat, shift.kind()),
                            std::move(e),
                            graph::Permutation::identity(n),
                            epsilon,
                            std::move(u)};
}

Matrix solve_relative_error(const graph::Gso& shift, const graph::Gso& perturbed,
                            const graph::Permutation& p) {
    if (perturbed.size() != shift.size() || p.size() != shift.size()) {
        throw ShapeError("solve_relative_error: sizes differ");
    }
    const SpectralSolver solver = prepare_solver(shift);
    const Matrix delta = graph::permute_matrix(perturbed.matrix(), p) - shift.matrix();
    return solve_with(solver, shift, delta);
}

double relative_distance(const graph::Gso& shift, const graph::Gso& perturbed,
                         DistanceMode mode) {
    const Index n = shift.size();
    if (perturbed.size() != n) {
        throw ShapeError("relative_distance: GSOs have different node counts");
    }
    if (mode == DistanceMode::brute_force && n > 8) {
        throw SizeError("relative_distance: brute-force permutation search supports N <= 8");
    }
    const SpectralSolver solver = prepare_solver(shift);
    std::vector<Index> map(static_cast<std::size_t>(n));
    std::iota(map.begin(), map.end(), Index{0});
    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    do {
        const graph::Permutation p(map);
        const Matrix delta = graph::permute_matrix(perturbed.matrix(), p) - shift.matrix();
        try {
            best = std::min(best, spectral::operator_norm(solve_with(solver, shift, delta)));
            any = true;
        } catch (const SingularEquationError&) {
            // Contributes +infinity.
        }
    } while (mode == DistanceMode::brute_force && std::next_permutation(map.begin(), map.end()));
    if (!any) {
        throw NoValidErrorMatrixError(
            "relative_distance: every permutation gives a singular relative-error equation");
    }
    return best;
}

Matrix aligned_error_eigenvectors(const Matrix& error, const Matrix& shift_eigenvectors) {
    const Index n = error.rows();
    if (shift_eigenvectors.rows() != n || shift_eigenvectors.cols() != n) {
        throw ShapeError("aligned_error_eigenvectors: sizes differ");
    }
    const spectral::EigenSystem es = spectral::eigendecompose(error);
    Matrix u = es.vectors;
    const double scale = std::max(1.0, es.size() > 0 ? es.values.cwiseAbs().maxCoeff() : 0.0);
    const double tol = 1e-10 * scale;
    Index start = 0;
    while (start < n) {
        Index end = start + 1;
        while (end < n && es.values(end) - es.values(end - 1) <= tol) {
            ++end;
        }
        const Index m = end - start;
        if (m > 1) {
            const Matrix q = es.vectors.middleCols(start, m);
            const Matrix proj = q.transpose() * shift_eigenvectors;  // m x n
            std::vector<Index> cols(static_cast<std::size_t>(n));
            std::iota(cols.begin(), cols.end(), Index{0});
            const Vector energy = proj.colwise().squaredNorm();
            std::stable_sort(cols.begin(), cols.end(),
                             [&](Index a, Index b) { return energy(a) > energy(b); });
            Matrix b(m, m);
            for (Index c = 0; c < m; ++c) {
                b.col(c) = proj.col(cols[static_cast<std::size_t>(c)]);
            }
            Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
            const Matrix r = svd.matrixU() * svd.matrixV().transpose();
            u.middleCols(start, m) = q * r;
        }
        start = end;
    }
    return u;
}

Misalignment misalignment(const Matrix& error_eigenvectors, const Matrix& shift_eigenvectors) {
    const Matrix& u = error_eigenvectors;
    const Matrix& v = shift_eigenvectors;
    const Index n = v.rows();
    if (u.rows() != n || u.cols() != n || v.cols() != n) {
        throw ShapeError("misalignment: bases must both be N x N");
    }
    const Matrix eye = Matrix::Identity(n, n);
    if ((u.transpose() * u - eye).cwiseAbs().maxCoeff() > 1e-8 ||
        (v.transpose() * v - eye).cwiseAbs().maxCoeff() > 1e-8) {
        throw ValidationError("misalignment: bases must be orthonormal");
    }
    const Matrix inner = u.transpose() * v;  // (i, j) = <u_i, v_j>
    struct Pair {
        double score;
        Index i;
        Index j;
    };
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(n * n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            pairs.push_back({std::abs(inner(i, j)), i, j});
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.score > b.score; });
    std::vector<bool> used_u(static_cast<std::size_t>(n), false);
    std::vector<bool> used_v(static_cast<std::size_t>(n), false);
    Matrix matched(n, n);
    Index assigned = 0;
    for (const auto& pr : pairs) {
        if (assigned == n) {
            break;
        }
        if (used_u[static_cast<std::size_t>(pr.i)] || used_v[static_cast<std::size_t>(pr.j)]) {
            continue;
        }
        used_u[static_cast<std::size_t>(pr.i)] = true;
        used_v[static_cast<std::size_t>(pr.j)] = true;
        const double sign = inner(pr.i, pr.j) < 0.0 ? -1.0 : 1.0;
        matched.col(pr.j) = sign * u.col(pr.i);
        ++assigned;
    }
    Misalignment m;
    m.basis_distance = spectral::operator_norm(matched - v);
    m.delta = (m.basis_distance + 1.0) * (m.basis_distance + 1.0) - 1.0;
    return m;
}

}  // namespace gnnstab::perturbation
