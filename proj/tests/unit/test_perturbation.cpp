#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gnnstab/error.hpp"
#include "gnnstab/perturbation.hpp"
#include "gnnstab/spectral.hpp"
#include "support/oracles.hpp"

using namespace gnnstab;
using perturbation::DistanceMode;

namespace {

graph::Gso er_gso(Index n, std::uint64_t seed, graph::GsoKind kind = graph::GsoKind::adjacency) {
    return graph::build_gso(graph::erdos_renyi(n, 0.4, seed, 0.2), kind);
}

// First graph from `seed` on whose eigenvalue pair sums all stay clear of zero.
graph::Gso solvable_gso(Index n, std::uint64_t seed) {
    for (;; ++seed) {
        const auto s = er_gso(n, seed);
        const Vector lam = oracle::jacobi_eigen(s.matrix()).values;
        const double scale = lam.cwiseAbs().maxCoeff();
        double closest = scale;
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) closest = std::min(closest, std::abs(lam(i) + lam(j)));
        if (closest > 1e-3 * scale) return s;
    }
}

}  // namespace

TEST(EdgeDilation, Construction) {
    const auto s = er_gso(10, 1);
    const auto zero = perturbation::edge_dilation(s, 0.0);
    EXPECT_EQ(zero.perturbed.matrix(), s.matrix());
    EXPECT_EQ(zero.error, Matrix::Zero(10, 10));

    const double eps = 0.1;
    const auto spec = perturbation::edge_dilation(s, eps);
    EXPECT_EQ(spec.error, (eps / 2) * Matrix::Identity(10, 10));
    EXPECT_NEAR(spectral::operator_norm(spec.error), eps / 2, 1e-15);
    EXPECT_TRUE(spec.permutation.is_identity());
    EXPECT_LE(perturbation::membership_residual(spec), 1e-12);

    const auto before = spectral::eigendecompose(s);
    const auto after = spectral::eigendecompose(spec.perturbed);
    EXPECT_LE((after.values - (1 + eps) * before.values).cwiseAbs().maxCoeff(), 1e-10);
    // Distinct eigenvalues: eigenvectors agree up to sign, and the sign convention fixes that.
    EXPECT_LE((after.vectors.transpose() * before.vectors).cwiseAbs().diagonal().minCoeff(),
              1.0 + 1e-12);
    EXPECT_GE((after.vectors.transpose() * before.vectors).cwiseAbs().diagonal().minCoeff(),
              1.0 - 1e-8);
    EXPECT_THROW(perturbation::edge_dilation(s, -1.0), ValidationError);
}

TEST(RandomRelative, Construction) {
    const auto s = er_gso(12, 2);
    EXPECT_EQ(perturbation::random_relative_perturbation(s, 0.0, 5).perturbed.matrix(),
              s.matrix());
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const double eps = 0.05 + 0.02 * static_cast<double>(seed);
        const auto spec = perturbation::random_relative_perturbation(s, eps, seed);
        const double norm = oracle::spectral_norm(spec.error);
        EXPECT_GE(norm, eps / 2 - 1e-10);
        EXPECT_LE(norm, eps + 1e-10);
        EXPECT_LE(perturbation::membership_residual(spec), 1e-12);
        EXPECT_EQ(spec.error, spec.error.transpose());
        EXPECT_EQ(spec.perturbed.matrix(), spec.perturbed.matrix().transpose());
    }
    EXPECT_THROW(perturbation::random_relative_perturbation(s, -0.1, 0), ValidationError);
}

TEST(RandomRelative, DirectionDependsOnSeedOnly) {
    const auto d1 = perturbation::draw_relative_direction(8, 9);
    const auto d2 = perturbation::draw_relative_direction(8, 9);
    EXPECT_EQ(d1.unit_error, d2.unit_error);
    EXPECT_EQ(d1.scale_fraction, d2.scale_fraction);
    const auto s = er_gso(8, 3);
    const auto a = perturbation::random_relative_perturbation(s, 0.1, 9);
    const auto b = perturbation::random_relative_perturbation(s, 0.2, 9);
    EXPECT_LE((2.0 * a.error - b.error).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SolveRelativeError, RoundTrips) {
    const auto s = er_gso(10, 4);
    const auto dil = perturbation::edge_dilation(s, 0.08);
    const Matrix e = perturbation::solve_relative_error(s, dil.perturbed, dil.permutation);
    EXPECT_LE((e - 0.04 * Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-9);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto spec = perturbation::random_relative_perturbation(s, 0.1, seed);
        const Matrix rec = perturbation::solve_relative_error(s, spec.perturbed, spec.permutation);
        EXPECT_LE((rec - spec.error).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(SolveRelativeError, WithPermutation) {
    const auto s = solvable_gso(7, 6);
    const auto spec = perturbation::random_relative_perturbation(s, 0.1, 3);
    const auto p = graph::random_permutation(7, 11);
    const auto relabeled = graph::permute_gso(spec.perturbed, p.inverse());
    const Matrix rec = perturbation::solve_relative_error(s, relabeled, p);
    EXPECT_LE((rec - spec.error).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SolveRelativeError, SingularPair) {
    const auto s = graph::build_gso(graph::path_graph(2), graph::GsoKind::adjacency);
    try {
        perturbation::solve_relative_error(s, s, graph::Permutation::identity(2));
        FAIL();
    } catch (const SingularEquationError& e) {
        EXPECT_NE(e.first_index(), e.second_index());
    }
}

TEST(RelativeDistance, Examples) {
    const auto s = solvable_gso(7, 8);
    EXPECT_NEAR(perturbation::relative_distance(s, s, DistanceMode::identity), 0.0, 1e-12);
    const double eps = 0.12;
    EXPECT_NEAR(perturbation::relative_distance(
                    s, perturbation::edge_dilation(s, eps).perturbed, DistanceMode::identity),
                eps / 2, 1e-9);
    const auto t = graph::permute_gso(s, graph::random_permutation(7, 2));
    EXPECT_LE(perturbation::relative_distance(s, t, DistanceMode::brute_force), 1e-9);
    EXPECT_THROW(perturbation::relative_distance(er_gso(9, 1), er_gso(9, 2),
                                                 DistanceMode::brute_force),
                 SizeError);
}

TEST(RelativeDistance, PermutedSmallGraphs) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Index n = 3 + static_cast<Index>(seed % 4);
        const auto s = graph::build_gso(graph::erdos_renyi(n, 0.7, seed, 0.3),
                                        graph::GsoKind::adjacency);
        const auto t = graph::permute_gso(s, graph::random_permutation(n, seed + 3));
        try {
            EXPECT_LE(perturbation::relative_distance(s, t, DistanceMode::brute_force), 1e-9);
        } catch (const NoValidErrorMatrixError&) {
            // e.g. bipartite spectra; nothing to compare
        }
    }
}

TEST(RelativeDistance, LinearInDilation) {
    const auto s = er_gso(10, 12);
    std::vector<double> eps, d;
    for (int i = 1; i <= 20; ++i) {
        eps.push_back(0.01 * i);
        d.push_back(perturbation::relative_distance(
            s, perturbation::edge_dilation(s, eps.back()).perturbed, DistanceMode::identity));
    }
    const double n = static_cast<double>(eps.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        sx += eps[i];
        sy += d[i];
        sxx += eps[i] * eps[i];
        sxy += eps[i] * d[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        ss_res += std::pow(d[i] - slope * eps[i] - intercept, 2);
        ss_tot += std::pow(d[i] - sy / n, 2);
    }
    EXPECT_NEAR(slope, 0.5, 1e-9);
    EXPECT_GE(1 - ss_res / ss_tot, 0.9999);
}

TEST(RelativeDistance, LaplacianHasNoValidErrorMatrix) {
    const auto s = graph::build_gso(graph::path_graph(3), graph::GsoKind::laplacian);
    EXPECT_THROW(perturbation::relative_distance(s, s, DistanceMode::identity),
                 NoValidErrorMatrixError);
    EXPECT_THROW(perturbation::relative_distance(s, s, DistanceMode::brute_force),
                 NoValidErrorMatrixError);
}

TEST(Misalignment, Examples) {
    const Matrix v = spectral::eigendecompose(er_gso(6, 1)).vectors;
    const auto same = perturbation::misalignment(v, v);
    EXPECT_NEAR(same.delta, 0.0, 1e-12);

    // Columns reordered and sign-flipped are matched back.
    Matrix shuffled(6, 6);
    for (Index j = 0; j < 6; ++j) shuffled.col(j) = (j % 2 ? -1.0 : 1.0) * v.col((j + 2) % 6);
    EXPECT_NEAR(perturbation::misalignment(shuffled, v).delta, 0.0, 1e-12);

    // Rotation by 60 degrees inside a plane that every axis meets at 45 degrees.
    Vector a(4), b(4);
    a << 0.5, 0.5, 0.5, 0.5;
    b << 0.5, -0.5, 0.5, -0.5;
    const double c = 0.5, s = std::sqrt(3.0) / 2;
    const Matrix rot = Matrix::Identity(4, 4) + (c - 1) * (a * a.transpose() + b * b.transpose()) +
                       s * (b * a.transpose() - a * b.transpose());
    const auto m = perturbation::misalignment(rot, Matrix::Identity(4, 4));
    EXPECT_NEAR(m.basis_distance, 1.0, 1e-12);
    EXPECT_NEAR(m.delta, 3.0, 1e-11);

    const auto dil = perturbation::edge_dilation(er_gso(6, 1), 0.1);
    EXPECT_NEAR(perturbation::misalignment(dil.error_eigenvectors, v).delta, 0.0, 1e-12);

    EXPECT_THROW(perturbation::misalignment(2.0 * v, v), ValidationError);
    EXPECT_THROW(perturbation::misalignment(Matrix::Identity(3, 3), v), ShapeError);
}

TEST(Misalignment, RepeatedErrorEigenvaluesAlign) {
    const auto s = er_gso(8, 5);
    const Matrix v = spectral::eigendecompose(s).vectors;
    // E with a 3-fold eigenvalue whose eigenspace contains v_0, v_1, v_2.
    Vector d = Vector::LinSpaced(8, -0.05, 0.05);
    d.head(3).setConstant(0.02);
    const Matrix e = v * d.asDiagonal() * v.transpose();
    const Matrix u = perturbation::aligned_error_eigenvectors(0.5 * (e + e.transpose()), v);
    EXPECT_LE(perturbation::misalignment(u, v).delta, 1e-8);
}
