#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "gnnstab/error.hpp"
#include "gnnstab/movielens.hpp"
#include "gnnstab/spectral.hpp"
#include "support/oracles.hpp"

using namespace gnnstab;
namespace ml = gnnstab::movielens;

namespace {

ml::RatingsMatrix parse(const std::string& text) {
    std::istringstream in(text);
    return ml::parse_ratings(in);
}

// Users 1..users rate a random subset of movies 1..movies; every user rates movie 1.
std::string synthetic_ratings(int users, int movies, std::uint64_t seed, double density = 0.6) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> r(1, 5);
    std::ostringstream out;
    for (int user = 1; user <= users; ++user) {
        const int taste = r(rng);
        for (int movie = 1; movie <= movies; ++movie) {
            if (movie == 1 || u(rng) < density) {
                const int rating = std::clamp(taste + (movie % 3) - 1 + (u(rng) < 0.3 ? 1 : 0), 1, 5);
                out << user << '\t' << movie << '\t' << rating << '\t' << 1000 + user << '\n';
            }
        }
    }
    return out.str();
}

}  // namespace

TEST(ParseRatings, Fixture) {
    const auto m = parse("1\t1\t5\t0\n2\t1\t3\t0\n");
    EXPECT_EQ(m.user_count(), 2);
    EXPECT_EQ(m.movie_count(), 1);
    EXPECT_EQ(m.rating_count, 2);
    EXPECT_EQ(m.ratings.col(m.movie_index(1)), (Vector(2) << 5, 3).finished());
    EXPECT_THROW(m.movie_index(7), ValidationError);
}

TEST(ParseRatings, EmptyAndSpaces) {
    const auto e = parse("");
    EXPECT_EQ(e.user_count(), 0);
    EXPECT_EQ(e.movie_count(), 0);
    EXPECT_EQ(e.rating_count, 0);
    const auto s = parse("3 10 4 7\n3 2 1 7\n");
    EXPECT_EQ(s.movie_ids, (std::vector<long long>{2, 10}));
    EXPECT_EQ(s.ratings(0, 1), 4.0);
}

TEST(ParseRatings, Errors) {
    try {
        parse("1\t1\t5\t0\n1\t2\tfive\t0\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
    }
    try {
        parse("1\t1\t5\t0\n2\t1\t3\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
    }
    EXPECT_THROW(parse("1\t1\t6\t0\n"), ValidationError);
    EXPECT_THROW(parse("1\t1\t0\t0\n"), ValidationError);
}

TEST(ParseRatings, DuplicatesKeepLatest) {
    const auto m = parse("1\t1\t2\t50\n1\t1\t4\t10\n1\t1\t5\t20\n");
    EXPECT_EQ(m.ratings(0, 0), 2.0);
    EXPECT_EQ(m.rating_count, 1);
    const auto later = parse("1\t1\t2\t5\n1\t1\t4\t10\n");
    EXPECT_EQ(later.ratings(0, 0), 4.0);
}

TEST(LoadRatings, MissingFile) {
    EXPECT_THROW(ml::load_ratings("/nonexistent/u.data"), IoError);
}

TEST(PearsonGraph, Examples) {
    // movies 1 and 2 identical over users 1-3; movie 3 reversed; movie 4 rated only by user 4.
    const auto m = parse(
        "1\t1\t1\t0\n2\t1\t2\t0\n3\t1\t3\t0\n"
        "1\t2\t1\t0\n2\t2\t2\t0\n3\t2\t3\t0\n"
        "1\t3\t3\t0\n2\t3\t2\t0\n3\t3\t1\t0\n"
        "4\t4\t5\t0\n");
    const std::vector<Index> all{0, 1, 2, 3};
    const Matrix w = ml::pearson_graph(m, all).weights();
    EXPECT_NEAR(w(0, 1), 1.0, 1e-15);
    EXPECT_EQ(w(0, 2), 0.0);
    EXPECT_EQ(w(0, 3), 0.0);
    EXPECT_EQ(w.diagonal(), Vector::Zero(4));

    const Matrix a = ml::pearson_graph(m, all, ml::CorrelationPolicy::absolute).weights();
    EXPECT_NEAR(a(0, 2), 1.0, 1e-15);
    EXPECT_THROW(ml::pearson_graph(m, {}), ValidationError);
}

TEST(PearsonGraph, MatchesBruteForce) {
    const auto m = parse(synthetic_ratings(25, 12, 3, 0.5));
    std::vector<Index> all(static_cast<std::size_t>(m.user_count()));
    std::iota(all.begin(), all.end(), Index{0});
    for (auto policy : {ml::CorrelationPolicy::clip, ml::CorrelationPolicy::absolute}) {
        const Matrix w = ml::pearson_graph(m, all, policy).weights();
        EXPECT_EQ(w, w.transpose());
        for (int i = 0; i < 12; ++i) {
            for (int j = 0; j < 12; ++j) {
                if (i == j) continue;
                double c = oracle::pearson_pair(m.ratings, i, j);
                c = policy == ml::CorrelationPolicy::clip ? std::max(0.0, c) : std::abs(c);
                EXPECT_NEAR(w(i, j), c, 1e-12) << i << "," << j;
                EXPECT_GE(w(i, j), 0.0);
                EXPECT_LE(w(i, j), 1.0);
            }
        }
    }
}

TEST(PearsonGraph, UsesOnlyTheSubset) {
    const auto m = parse(synthetic_ratings(20, 8, 4));
    const std::vector<Index> half{0, 2, 4, 6, 8, 10, 12, 14};
    const Matrix sub = m.ratings(half, Eigen::placeholders::all);
    const Matrix w = ml::pearson_graph(m, half).weights();
    for (int i = 0; i < 8; ++i)
        for (int j = i + 1; j < 8; ++j)
            EXPECT_NEAR(w(i, j), std::max(0.0, oracle::pearson_pair(sub, i, j)), 1e-12);
}

TEST(BuildTask, Construction) {
    const auto m = parse(synthetic_ratings(40, 15, 5));
    const auto split = ml::build_task(m, 0, 0.75, 9);
    EXPECT_EQ(split.train.size(), 30u);
    EXPECT_EQ(split.test.size(), 10u);
    EXPECT_EQ(split.gso.size(), 15);
    for (const auto* d : {&split.train, &split.test}) {
        for (const auto& s : d->samples()) {
            EXPECT_EQ(s.x(0, 0), 0.0);
            EXPECT_GE(s.y, 1.0);
            EXPECT_LE(s.y, 5.0);
        }
    }
    // Labels are the target ratings of the listed users.
    for (std::size_t i = 0; i < split.train_users.size(); ++i) {
        const Index row = ml::user_rows(m, {split.train_users[i]}).front();
        EXPECT_EQ(split.train[i].y, m.ratings(row, 0));
    }
    std::set<long long> seen(split.train_users.begin(), split.train_users.end());
    for (auto u : split.test_users) EXPECT_TRUE(seen.insert(u).second);
    EXPECT_EQ(seen.size(), 40u);
    EXPECT_LE(split.directed_edges, 10 * 15);
    EXPECT_EQ(split.gso.matrix(), split.gso.matrix().transpose());
    EXPECT_LE(std::abs(spectral::operator_norm(split.gso.matrix()) - 1.0), 1e-12);
}

TEST(BuildTask, FullTrainFractionAndErrors) {
    const auto m = parse(synthetic_ratings(30, 12, 6));
    EXPECT_TRUE(ml::build_task(m, 0, 1.0, 1).test.empty());
    EXPECT_THROW(ml::build_task(m, 0, 0.0, 1), ValidationError);
    EXPECT_THROW(ml::build_task(m, 40, 0.5, 1), ShapeError);
    const auto few = parse(synthetic_ratings(8, 12, 6));
    EXPECT_THROW(ml::build_task(few, 0, 0.9, 1), ValidationError);
}

TEST(BuildTask, DeterministicAndGsoIgnoresTestUsers) {
    const std::string text = synthetic_ratings(40, 15, 7);
    const auto m = parse(text);
    const auto a = ml::build_task(m, 0, 0.8, 3);
    const auto b = ml::build_task(m, 0, 0.8, 3);
    EXPECT_EQ(a.train_users, b.train_users);
    EXPECT_EQ(a.gso.matrix(), b.gso.matrix());
    EXPECT_EQ(ml::manifest_hash(a), ml::manifest_hash(b));
    EXPECT_NE(ml::build_task(m, 0, 0.8, 4).train_users, a.train_users);

    // Rewrite every other rating of the test users; the GSO must not move.
    auto changed = m;
    for (auto id : a.test_users) {
        const Index row = ml::user_rows(m, {id}).front();
        for (Index j = 1; j < m.movie_count(); ++j)
            if (changed.ratings(row, j) > 0) changed.ratings(row, j) = 6 - changed.ratings(row, j);
    }
    const auto c = ml::build_task(changed, 0, 0.8, 3);
    EXPECT_EQ(c.train_users, a.train_users);
    EXPECT_EQ(c.gso.matrix(), a.gso.matrix());

    const auto rebuilt = ml::build_task_gso(m, ml::user_rows(m, a.train_users));
    EXPECT_EQ(rebuilt.gso.matrix(), a.gso.matrix());
}

TEST(BuildTask, Manifest) {
    const auto m = parse(synthetic_ratings(20, 12, 8));
    const auto split = ml::build_task(m, 0, 0.5, 2);
    std::ostringstream out;
    ml::write_split_manifest(out, split);
    EXPECT_EQ(out.str().rfind("split,user_id\n", 0), 0u);
    EXPECT_EQ(ml::manifest_hash(split).size(), 16u);
}

TEST(Rmse, Examples) {
    const std::vector<double> y{1, 2, 3, 4};
    EXPECT_EQ(ml::rmse(y, y), 0.0);
    EXPECT_DOUBLE_EQ(ml::rmse(std::vector<double>{2, 3, 4, 5}, y), 1.0);
    EXPECT_DOUBLE_EQ(ml::rmse(std::vector<double>{2, 1, 5, 4}, y), std::sqrt(6.0 / 4.0));
    EXPECT_THROW(ml::rmse(std::vector<double>{}, std::vector<double>{}), ValidationError);
    EXPECT_THROW(ml::rmse(std::vector<double>{1}, y), ShapeError);
}

TEST(MostRated, Order) {
    const auto m = parse("1\t5\t1\t0\n2\t5\t1\t0\n1\t3\t1\t0\n2\t3\t1\t0\n3\t9\t1\t0\n");
    EXPECT_EQ(ml::most_rated(m, 2), (std::vector<long long>{3, 5}));
}

TEST(RealData, MovieLens100k) {
    const std::filesystem::path path = GNNSTAB_MOVIELENS_DATA;
    if (!std::filesystem::exists(path)) GTEST_SKIP() << "no ratings file at " << path;
    const auto m = ml::load_ratings(path);
    EXPECT_EQ(m.rating_count, 100000);
    EXPECT_EQ(m.user_count(), 943);
    EXPECT_EQ(m.movie_count(), 1682);
    const auto split = ml::build_task(m, m.movie_index(50), 0.9, 0);
    EXPECT_EQ(split.gso.size(), m.movie_count());
    EXPECT_LE(split.directed_edges, 10 * m.movie_count());
    EXPECT_EQ(split.train.size() + split.test.size(),
              static_cast<std::size_t>(m.rater_count(m.movie_index(50))));
}
