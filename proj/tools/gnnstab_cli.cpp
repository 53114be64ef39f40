#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gnnstab/error.hpp"
#include "gnnstab/experiments.hpp"
#include "gnnstab/movielens.hpp"

namespace ex = gnnstab::experiments;
namespace ml = gnnstab::movielens;

namespace {

constexpr int kOk = 0;
constexpr int kInvariantFailure = 1;
constexpr int kConfigError = 2;

void add_common(CLI::App* sub, ex::ExperimentConfig& c) {
    sub->add_option("--out", c.output_dir, "Output directory")->capture_default_str();
    sub->add_option("--seeds", c.seeds, "Split / draw seeds")->delimiter(',')->capture_default_str();
    sub->add_flag("--quick", c.quick, "Smaller runs (3 seeds, N <= 12 in verify)");
}

void add_data(CLI::App* sub, ex::ExperimentConfig& c) {
    sub->add_option("--data", c.data_path, "MovieLens-100k u.data file")->capture_default_str();
    sub->add_option("--movie-id", c.target_movie_id, "Target movie item id")->capture_default_str();
    sub->add_option("--mu", c.mu, "Penalty weights")->delimiter(',')->capture_default_str();
    sub->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
    sub->add_option("--features", c.features, "Output features of the GNN layer")->capture_default_str();
    sub->add_option("--taps", c.taps, "Filter taps of the GNN layer")->capture_default_str();
    sub->add_option("--train-fraction", c.train_fraction, "Training share of each split")
        ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    ex::ExperimentConfig config;
    CLI::App app{"Stability experiments for graph filters and graph neural networks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ex::version()));

    auto* train = app.add_subcommand("train", "Train the penalty-free and penalized GNNs on MovieLens");
    add_common(train, config);
    add_data(train, config);

    auto* transfer = app.add_subcommand("transfer", "Evaluate trained GNNs on other movies");
    add_common(transfer, config);
    add_data(transfer, config);
    transfer->add_option("--movies", config.movies, "Target movie ids (default: 6 most rated)")
        ->delimiter(',');

    auto* perturb = app.add_subcommand("perturb-sweep", "RMSE under relative GSO perturbations");
    add_common(perturb, config);
    add_data(perturb, config);
    perturb->add_option("--epsilon", config.epsilon, "Perturbation sizes")->delimiter(',')
        ->capture_default_str();
    perturb->add_option("--draws", config.draws, "Perturbation draws per split")->capture_default_str();

    auto* split = app.add_subcommand("split-sweep", "RMSE change with the train/test ratio");
    add_common(split, config);
    add_data(split, config);
    split->add_option("--splits", config.splits, "Training ratios")->delimiter(',')
        ->capture_default_str();

    auto* verify = app.add_subcommand("verify", "Invariant suite on synthetic graphs");
    add_common(verify, config);
    verify->add_flag("--inject-fault", config.inject_fault,
                     "Test hook: scale one analytic gradient by 1.01");

    auto* demo = app.add_subcommand("demo", "Filter, trade-off and frequency-mixing panels");
    add_common(demo, config);
    demo->add_option("--epsilon", config.epsilon, "Dilation sizes")->delimiter(',')
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        config.command = ex::parse_command(app.get_subcommands().front()->get_name());
        config.validate();
        switch (config.command) {
            case ex::Command::verify: {
                const auto checks = ex::run_verify(config);
                ex::print_checks(std::cout, checks);
                bool ok = true;
                for (const auto& c : checks) {
                    if (!c.passed) {
                        std::cerr << "FAILED: " << c.name << " (seed " << c.seed << ")\n";
                        ok = false;
                    }
                }
                return ok ? kOk : kInvariantFailure;
            }
            case ex::Command::demo:
                ex::run_demo(config);
                std::cout << "demo panels written to " << config.output_dir.string() << '\n';
                return kOk;
            default:
                break;
        }
        const ml::RatingsMatrix ratings = ml::load_ratings(config.data_path);
        switch (config.command) {
            case ex::Command::train: {
                const auto s = ex::run_train(config, ratings);
                for (const auto& [mu, ms] : s.test_rmse) {
                    std::cout << "mu=" << mu << " test RMSE " << ms.mean << " +- " << ms.std << '\n';
                }
                break;
            }
            case ex::Command::transfer: {
                const auto s = ex::run_transfer(config, ratings);
                for (const auto& e : s.summary) {
                    std::cout << "mu=" << e.mu << " movie " << e.movie_id << " degradation "
                              << e.degradation.mean << "% +- " << e.degradation.std << '\n';
                }
                break;
            }
            case ex::Command::perturb_sweep:
            case ex::Command::split_sweep: {
                const auto s = config.command == ex::Command::perturb_sweep
                                   ? ex::run_perturb_sweep(config, ratings)
                                   : ex::run_split_sweep(config, ratings);
                for (const auto& e : s.summary) {
                    std::cout << "mu=" << e.mu << " at " << e.parameter << ": degradation "
                              << e.degradation.mean << " +- " << e.degradation.std << '\n';
                }
                break;
            }
            default:
                break;
        }
        std::cout << "results written to " << config.output_dir.string() << '\n';
        return kOk;
    } catch (const ex::InvariantFailure& e) {
        std::cerr << "invariant failure: " << e.what() << '\n';
        return kInvariantFailure;
    } catch (const gnnstab::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const gnnstab::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const gnnstab::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvariantFailure;
    }
}
