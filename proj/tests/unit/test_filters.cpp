#include <gtest/gtest.h>

#include <random>

#include "gnnstab/error.hpp"
#include "gnnstab/filters.hpp"
#include "gnnstab/spectral.hpp"
#include "support/oracles.hpp"

using namespace gnnstab;
using filters::DistanceMode;
using filters::FilterBank;
using filters::FilterTaps;

namespace {

graph::Gso path3() { return graph::build_gso(graph::path_graph(3), graph::GsoKind::adjacency); }

FilterTaps random_taps(Index k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> h(static_cast<std::size_t>(k));
    for (auto& v : h) v = u(rng);
    return FilterTaps(h);
}

}  // namespace

TEST(FilterTaps, Validation) {
    EXPECT_THROW(FilterTaps(std::vector<double>{}), ValidationError);
    EXPECT_THROW(FilterTaps({1.0, std::numeric_limits<double>::infinity()}), ValidationError);
    const FilterTaps h{1.0, -2.0};
    EXPECT_EQ(h.scaled(0.5)[1], -1.0);
}

TEST(FilterBank, LayoutAndShapes) {
    FilterBank b(2, 3, 4);
    b.tap(1, 2, 3) = 7.0;
    EXPECT_EQ(b.raw()[((1 * 3) + 2) * 4 + 3], 7.0);
    EXPECT_EQ(b.filter(1, 2)[3], 7.0);
    EXPECT_EQ(b.coefficient_matrix(3)(1, 2), 7.0);
    EXPECT_THROW(FilterBank(2, 2, 2, std::vector<double>(7, 0.0)), ShapeError);
    EXPECT_THROW(FilterBank(0, 2, 2), ValidationError);
}

TEST(GraphConvolution, Examples) {
    const auto s = path3();
    const Signal x = Vector::Unit(3, 0);
    EXPECT_EQ(filters::graph_convolution(s, FilterTaps{1.0}, x), x);
    EXPECT_EQ(filters::graph_convolution(s, FilterTaps{0.0, 1.0}, x), s.matrix() * x);
    EXPECT_EQ(filters::graph_convolution(s, FilterTaps{1.0, 1.0}, x),
              (Vector(3) << 1, 1, 0).finished());
    EXPECT_THROW(filters::graph_convolution(s, FilterTaps{1.0}, Signal::Zero(4, 1)), ShapeError);
}

TEST(GraphConvolution, MatchesDensePowersAndSpectrum) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Index n = 6 + static_cast<Index>(seed) * 4;
        const auto s = graph::build_gso(graph::erdos_renyi(n, 0.3, seed, 0.2),
                                        graph::GsoKind::laplacian);
        const FilterTaps h = random_taps(5, seed);
        const Signal x = Signal::Random(n, 2);
        const Signal y = filters::graph_convolution(s, h, x);

        const Matrix dense = oracle::dense_filter(
            s.matrix(), std::vector<double>(h.values().begin(), h.values().end()));
        EXPECT_LE((y - dense * x).cwiseAbs().maxCoeff(), 1e-9 * (1 + y.cwiseAbs().maxCoeff()));

        const auto es = spectral::eigendecompose(s);
        const Vector hl = spectral::frequency_response(h, es.values).values;
        const Signal spec = es.vectors * hl.asDiagonal() * es.vectors.transpose() * x;
        EXPECT_LE((y - spec).cwiseAbs().maxCoeff(), 1e-8);

        EXPECT_LE((filters::filter_matrix(s, h) - dense).cwiseAbs().maxCoeff(),
                  1e-9 * (1 + dense.cwiseAbs().maxCoeff()));
    }
}

TEST(GraphConvolution, PermutationEquivariance) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Index n = 5 + static_cast<Index>(seed);
        const auto s = graph::build_gso(graph::erdos_renyi(n, 0.4, seed, 0.1),
                                        graph::GsoKind::adjacency);
        const auto p = graph::random_permutation(n, seed + 7);
        const FilterTaps h = random_taps(4, seed);
        const Signal x = Signal::Random(n, 1);
        const Signal lhs = filters::graph_convolution(graph::permute_gso(s, p), h,
                                                      graph::permute_signal(x, p));
        const Signal rhs = graph::permute_signal(filters::graph_convolution(s, h, x), p);
        EXPECT_LE((lhs - rhs).norm(), 1e-9 * rhs.norm());
    }
}

TEST(FilterBankApply, Examples) {
    const auto s = graph::build_gso(graph::erdos_renyi(7, 0.5, 1, 0.1), graph::GsoKind::adjacency);
    const FilterTaps h{0.5, -0.25, 0.125};
    const Signal x = Signal::Random(7, 1);
    EXPECT_EQ(filters::filter_bank_apply(s, FilterBank::single(h), x),
              filters::graph_convolution(s, h, x));

    const Signal x3 = Signal::Random(7, 3);
    EXPECT_EQ(filters::filter_bank_apply(s, FilterBank(3, 2, 4), x3), Signal::Zero(7, 2));

    FilterBank sum(2, 1, 1);
    sum.tap(0, 0, 0) = 1.0;
    sum.tap(1, 0, 0) = 1.0;
    const Signal x2 = Signal::Random(7, 2);
    EXPECT_LE((filters::filter_bank_apply(s, sum, x2) - x2.rowwise().sum()).cwiseAbs().maxCoeff(),
              1e-15);
    EXPECT_THROW(filters::filter_bank_apply(s, sum, x3), ShapeError);
}

TEST(FilterBankApply, SumsConvolutions) {
    const auto s = graph::build_gso(graph::erdos_renyi(8, 0.5, 2, 0.1), graph::GsoKind::laplacian);
    FilterBank b(3, 2, 3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : b.raw()) v = u(rng);
    const Signal x = Signal::Random(8, 3);
    const Signal y = filters::filter_bank_apply(s, b, x);
    for (Index g = 0; g < 2; ++g) {
        Vector expect = Vector::Zero(8);
        for (Index f = 0; f < 3; ++f)
            expect += filters::graph_convolution(s, b.filter(f, g), x.col(f));
        EXPECT_LE((y.col(g) - expect).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(FilterDistance, Examples) {
    const auto s = path3();
    const FilterTaps h{0.2, 0.7, -0.3};
    EXPECT_EQ(filters::filter_distance(s, s, h, DistanceMode::identity), 0.0);

    const auto relabeled = graph::permute_gso(s, graph::Permutation({1, 0, 2}));
    EXPECT_GT(filters::filter_distance(s, relabeled, h, DistanceMode::identity), 0.1);
    EXPECT_LE(filters::filter_distance(s, relabeled, h, DistanceMode::brute_force), 1e-10);

    const auto big = graph::build_gso(graph::erdos_renyi(9, 0.5, 1), graph::GsoKind::adjacency);
    EXPECT_THROW(filters::filter_distance(big, big, h, DistanceMode::brute_force), SizeError);
    EXPECT_THROW(filters::filter_distance(s, big, h, DistanceMode::identity), ShapeError);
}

TEST(FilterDistance, PermutedGraphsAreAtZeroDistance) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Index n = 4 + static_cast<Index>(seed % 3);
        const auto s = graph::build_gso(graph::erdos_renyi(n, 0.6, seed, 0.2),
                                        graph::GsoKind::adjacency);
        const auto t = graph::permute_gso(s, graph::random_permutation(n, seed + 1));
        const FilterTaps h = random_taps(3, seed);
        EXPECT_LE(filters::filter_distance(s, t, h, DistanceMode::brute_force), 1e-10);
    }
}

TEST(FilterDistance, IdentityBoundsBruteForce) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = graph::build_gso(graph::erdos_renyi(6, 0.5, seed, 0.2),
                                        graph::GsoKind::laplacian);
        const auto t = graph::build_gso(graph::erdos_renyi(6, 0.5, seed + 50, 0.2),
                                        graph::GsoKind::laplacian);
        const FilterTaps h = random_taps(3, seed);
        const double id = filters::filter_distance(s, t, h, DistanceMode::identity);
        const double bf = filters::filter_distance(s, t, h, DistanceMode::brute_force);
        EXPECT_GE(id, bf - 1e-12);
        const Matrix diff = oracle::dense_filter(s.matrix(), {h[0], h[1], h[2]}) -
                            oracle::dense_filter(t.matrix(), {h[0], h[1], h[2]});
        EXPECT_NEAR(id, oracle::spectral_norm(diff), 1e-9);
    }
}
