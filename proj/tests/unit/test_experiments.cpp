#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gnnstab/experiments.hpp"
#include "gnnstab/spectral.hpp"

using namespace gnnstab;
namespace ex = gnnstab::experiments;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("gnnstab_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// The config echo names the output directory; everything else must match.
std::string without_config(const std::string& text) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line))
        if (line.rfind("# config ", 0) != 0) out += line + '\n';
    return out;
}

// 60 users, 20 movies; every user rates movie 50 and 7.
movielens::RatingsMatrix synthetic() {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> r(1, 5);
    std::ostringstream out;
    for (int user = 1; user <= 60; ++user) {
        const int taste = r(rng);
        for (int movie = 41; movie <= 60; ++movie) {
            if (movie == 50 || movie == 47 || u(rng) < 0.5) {
                const int rating = std::clamp(taste + (movie % 3) - 1, 1, 5);
                out << user << '\t' << movie << '\t' << rating << "\t0\n";
            }
        }
    }
    std::istringstream in(out.str());
    return movielens::parse_ratings(in);
}

ex::ExperimentConfig small_config(const fs::path& out) {
    ex::ExperimentConfig c;
    c.output_dir = out;
    c.seeds = {0, 1};
    c.epochs = 3;
    c.features = 4;
    c.taps = 3;
    c.draws = 2;
    c.epsilon = {0.0, 0.1};
    c.splits = {0.5, 0.9};
    c.movies = {50, 47};
    return c;
}

}  // namespace

TEST(Stats, MeanStdAndSpearman) {
    const std::vector<double> v{1, 2, 3, 4};
    const auto ms = ex::mean_std(v);
    EXPECT_DOUBLE_EQ(ms.mean, 2.5);
    EXPECT_DOUBLE_EQ(ms.std, std::sqrt(1.25));
    const std::vector<double> up{10, 20, 30, 45};
    const std::vector<double> down{4, 3, 2, 1};
    EXPECT_DOUBLE_EQ(ex::spearman(v, up), 1.0);
    EXPECT_DOUBLE_EQ(ex::spearman(v, down), -1.0);
    EXPECT_EQ(ex::spearman(v, std::vector<double>{1, 1, 1, 1}), 0.0);
    // Ties get average ranks: ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
    EXPECT_NEAR(ex::spearman(v, std::vector<double>{0, 5, 5, 9}), 0.9486832980505138, 1e-12);
}

TEST(Config, Validation) {
    ex::ExperimentConfig c;
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.mu = {-1.0};
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = c;
    bad.train_fraction = 1.5;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = c;
    bad.seeds.clear();
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = c;
    bad.features = 0;
    EXPECT_THROW(bad.validate(), ValidationError);
    EXPECT_EQ(ex::to_json(c)["movie_id"], 50);
    EXPECT_EQ(ex::parse_command("perturb-sweep"), ex::Command::perturb_sweep);
    EXPECT_THROW(ex::parse_command("fly"), ValidationError);
}

TEST(Header, Format) {
    std::ostringstream out;
    ex::write_header(out, ex::ExperimentConfig{}, {{"seed", "3"}});
    const std::string s = out.str();
    EXPECT_EQ(s.rfind(std::string("# gnnstab ") + ex::version() + "\n", 0), 0u);
    EXPECT_NE(s.find("\n# config {"), std::string::npos);
    EXPECT_NE(s.find("\n# seed 3\n"), std::string::npos);
}

TEST(Verify, QuickPassesAndFaultIsCaught) {
    ex::ExperimentConfig c;
    c.quick = true;
    c.seeds = {0, 1, 2};
    const auto ok = ex::run_verify(c);
    ASSERT_FALSE(ok.empty());
    for (const auto& r : ok) EXPECT_TRUE(r.passed) << r.name << " residual " << r.residual;

    c.inject_fault = true;
    const auto bad = ex::run_verify(c);
    bool any_failed = false;
    for (const auto& r : bad) any_failed = any_failed || !r.passed;
    EXPECT_TRUE(any_failed);
}

TEST(Verify, GradientCheckSeesFault) {
    const auto s = graph::build_gso(graph::erdos_renyi(8, 0.5, 1, 0.2), graph::GsoKind::adjacency);
    const graph::Gso sn(s.matrix() / spectral::operator_norm(s.matrix()), s.kind());
    const std::vector<gnn::LayerShape> shapes{{3, 4, gnn::Activation::tanh}};
    const auto m = gnn::init_model(3, shapes, 2, 5);
    const gnn::Sample sample{Signal::Random(8, 3), 0.3};
    const Vector grid = spectral::uniform_grid(-1, 1, 201);
    EXPECT_LE(ex::gradient_check_error(m, sn, sample, 0.5, grid), 1e-6);
    EXPECT_GE(ex::gradient_check_error(m, sn, sample, 0.5, grid, true), 5e-3);
}

TEST(Demo, WritesPanelsWithHeaders) {
    const fs::path dir = scratch("demo");
    ex::ExperimentConfig c;
    c.output_dir = dir;
    c.seeds = {0};
    ex::run_demo(c);
    int csvs = 0, svgs = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".csv") {
            ++csvs;
            EXPECT_EQ(slurp(e.path()).rfind("# gnnstab ", 0), 0u) << e.path();
        } else if (e.path().extension() == ".svg") {
            ++svgs;
            EXPECT_NE(slurp(e.path()).find("<svg"), std::string::npos);
        }
    }
    EXPECT_GE(csvs, 6);
    EXPECT_GE(svgs, 3);
    const std::string lin = slurp(dir / "demo_mixing_linear.csv");
    EXPECT_NE(lin.find("index,lambda,coefficient,magnitude"), std::string::npos);
}

TEST(Pipeline, TrainIsDeterministic) {
    const auto ratings = synthetic();
    const fs::path a = scratch("train_a"), b = scratch("train_b");
    const auto ra = ex::run_train(small_config(a), ratings);
    const auto rb = ex::run_train(small_config(b), ratings);
    ASSERT_EQ(ra.runs.size(), 4u);
    for (std::size_t i = 0; i < ra.runs.size(); ++i) {
        EXPECT_EQ(ra.runs[i].test_rmse, rb.runs[i].test_rmse);
        EXPECT_TRUE(std::isfinite(ra.runs[i].test_rmse));
    }
    for (const char* f : {"train_rmse.csv", "train_summary.csv", "manifests/split_0.csv",
                          "traces/loss_mu0.5_split1.csv"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(without_config(slurp(a / f)), without_config(slurp(b / f))) << f;
    }
}

TEST(Pipeline, ZeroEpochsKeepsInitialModel) {
    const auto ratings = synthetic();
    auto c = small_config(scratch("epochs0"));
    c.epochs = 0;
    c.seeds = {0};
    c.mu = {0.0};
    const auto r = ex::run_train(c, ratings);
    ASSERT_EQ(r.runs.size(), 1u);
    const auto split = movielens::build_task(ratings, ratings.movie_index(50), c.train_fraction, 0);
    const auto model = ex::load_trained(c, 0.0, 0, split);
    const std::vector<gnn::LayerShape> shapes{{c.features, c.taps, gnn::Activation::relu}};
    EXPECT_EQ(model.parameters(),
              gnn::init_model(1, shapes, split.target_movie, 0).parameters());
}

TEST(Pipeline, SweepsAndTransferRunAfterTraining) {
    const auto ratings = synthetic();
    const fs::path dir = scratch("sweeps");
    const auto c = small_config(dir);
    ex::run_train(c, ratings);

    const auto perturb = ex::run_perturb_sweep(c, ratings);
    EXPECT_EQ(perturb.rows.size(), 2u * 2u * 2u * 2u);
    EXPECT_EQ(perturb.mean_at(0.0, 0.0), 0.0);
    EXPECT_TRUE(fs::exists(dir / "perturb.csv"));
    EXPECT_TRUE(fs::exists(dir / "perturb.svg"));

    const auto split = ex::run_split_sweep(c, ratings);
    EXPECT_EQ(split.mean_at(0.5, 0.9), 0.0);
    EXPECT_TRUE(fs::exists(dir / "split.csv"));

    const auto transfer = ex::run_transfer(c, ratings);
    EXPECT_FALSE(transfer.rows.empty());
    EXPECT_TRUE(fs::exists(dir / "transfer.csv"));

    auto too_big = c;
    too_big.splits = {0.95};
    EXPECT_THROW(ex::run_split_sweep(too_big, ratings), ValidationError);
}

TEST(Pipeline, MissingCheckpointIsReported) {
    const auto ratings = synthetic();
    const auto c = small_config(scratch("nockpt"));
    EXPECT_THROW(ex::run_perturb_sweep(c, ratings), Error);
}
