#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gnnstab/error.hpp"
#include "gnnstab/gnn.hpp"
#include "gnnstab/movielens.hpp"

namespace gnnstab::experiments {

enum class Command { train, transfer, perturb_sweep, split_sweep, verify, demo };

const char* to_string(Command c);
Command parse_command(std::string_view name);

struct ExperimentConfig {
    Command command = Command::train;
    std::filesystem::path data_path = "data/ml-100k/u.data";
    long long target_movie_id = 50;
    std::vector<double> mu{0.0, 0.5};
    std::vector<double> epsilon{0.0, 0.05, 0.1, 0.15, 0.2};
    std::vector<double> splits{0.3, 0.5, 0.7, 0.9};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<long long> movies;  // transfer targets; empty = 6 most rated
    int epochs = 40;
    Index features = 64;
    Index taps = 5;
    double train_fraction = 0.9;
    int draws = 10;                 // perturbation draws per (split, epsilon)
    std::filesystem::path output_dir = "results";
    bool quick = false;
    bool inject_fault = false;

    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);

// Version string baked in at build time.
const char* version();

// "# gnnstab <version>", "# config <json>", then any extra "# key value"
// lines; every CSV written by the runner starts with these.
void write_header(std::ostream& out, const ExperimentConfig& config,
                  const std::vector<std::pair<std::string, std::string>>& extra = {});

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

MeanStd mean_std(std::span<const double> values);

// Spearman rank correlation (average ranks for ties); 0 when either side is
// constant.
double spearman(std::span<const double> x, std::span<const double> y);

// One trained split: the split's GSO and test set are rebuilt from its seed.
struct SplitRun {
    std::uint64_t seed = 0;
    std::string manifest_hash;
    double mu = 0.0;
    double test_rmse = 0.0;
    double train_rmse = 0.0;
};

struct TrainSummary {
    std::vector<SplitRun> runs;          // mu-major, seeds in order
    std::vector<std::pair<double, MeanStd>> test_rmse;  // per mu
};

// Fits every mu on every seed's split and writes CSVs, loss traces,
// manifests and checkpoints under output_dir.
TrainSummary run_train(const ExperimentConfig& config, const movielens::RatingsMatrix& ratings);

struct TransferRow {
    double mu = 0.0;
    long long movie_id = 0;
    std::uint64_t seed = 0;
    double rmse = 0.0;
    double degradation_pct = 0.0;
};

struct TransferSummary {
    std::vector<TransferRow> rows;
    struct Entry {
        double mu;
        long long movie_id;
        MeanStd degradation;
    };
    std::vector<Entry> summary;
};

TransferSummary run_transfer(const ExperimentConfig& config,
                             const movielens::RatingsMatrix& ratings);

struct SweepRow {
    double mu = 0.0;
    double parameter = 0.0;  // epsilon or train ratio
    std::uint64_t seed = 0;
    int draw = 0;
    double rmse = 0.0;
    double degradation = 0.0;
};

struct SweepSummary {
    std::vector<SweepRow> rows;
    struct Entry {
        double mu;
        double parameter;
        MeanStd degradation;
    };
    std::vector<Entry> summary;
    std::vector<std::pair<double, double>> spearman;  // per mu, over all rows

    // Mean degradation of one mu at one parameter value.
    double mean_at(double mu, double parameter) const;
};

// RMSE on a relative perturbation of the trained GSO minus RMSE on the GSO.
SweepSummary run_perturb_sweep(const ExperimentConfig& config,
                               const movielens::RatingsMatrix& ratings);

// RMSE on the trained test users with a GSO estimated from a random share
// (ratio of all raters) of the training users, minus RMSE on the trained GSO.
SweepSummary run_split_sweep(const ExperimentConfig& config,
                             const movielens::RatingsMatrix& ratings);

struct CheckResult {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::uint64_t seed = 0;  // failing (or last) case
};

std::vector<CheckResult> run_verify(const ExperimentConfig& config);

// max |analytic - central difference| over parameters, relative to the
// largest finite-difference entry. inject_fault scales the largest analytic
// entry by 1.01.
double gradient_check_error(const gnn::GnnModel& model, const graph::Gso& shift,
                            const gnn::Sample& sample, double mu, const Vector& grid,
                            bool inject_fault = false);
void print_checks(std::ostream& out, const std::vector<CheckResult>& checks);

// Writes the three demo panels (CSV and SVG) under output_dir.
void run_demo(const ExperimentConfig& config);

// Raised when a run completes but an invariant did not hold.
class InvariantFailure : public Error {
public:
    using Error::Error;
};

std::filesystem::path checkpoint_path(const ExperimentConfig& config, double mu,
                                      std::uint64_t seed);

// Loads a checkpoint and checks that its split manifest matches `split`.
gnn::GnnModel load_trained(const ExperimentConfig& config, double mu, std::uint64_t seed,
                           const movielens::TaskSplit& split);

}  // namespace gnnstab::experiments
