#include "gnnstab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "gnnstab/csv.hpp"
#include "gnnstab/filters.hpp"
#include "gnnstab/perturbation.hpp"
#include "gnnstab/plot.hpp"
#include "gnnstab/spectral.hpp"
#include "gnnstab/stability_lab.hpp"

#ifndef GNNSTAB_VERSION
#define GNNSTAB_VERSION "unknown"
#endif

namespace gnnstab::experiments {

namespace fs = std::filesystem;

const char* to_string(Command c) {
    switch (c) {
        case Command::train: return "train";
        case Command::transfer: return "transfer";
        case Command::perturb_sweep: return "perturb-sweep";
        case Command::split_sweep: return "split-sweep";
        case Command::verify: return "verify";
        case Command::demo: return "demo";
    }
    return "unknown";
}

Command parse_command(std::string_view name) {
    for (const Command c : {Command::train, Command::transfer, Command::perturb_sweep,
                            Command::split_sweep, Command::verify, Command::demo}) {
        if (name == to_string(c)) {
            return c;
        }
    }
    throw ValidationError("unknown command '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
    if (mu.empty()) throw ValidationError("config: need at least one mu");
    for (const double m : mu) {
        if (!(m >= 0.0)) throw ValidationError("config: mu values must be nonnegative");
    }
    for (const double e : epsilon) {
        if (!(e >= 0.0)) throw ValidationError("config: epsilon values must be nonnegative");
    }
    for (const double s : splits) {
        if (!(s > 0.0 && s < 1.0)) {
            throw ValidationError("config: split ratios must lie strictly between 0 and 1");
        }
    }
    if (seeds.empty()) throw ValidationError("config: need at least one seed");
    if (epochs < 0) throw ValidationError("config: epochs must be nonnegative");
    if (features < 1 || taps < 1) {
        throw ValidationError("config: features and taps must be positive");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ValidationError("config: train fraction must lie strictly between 0 and 1");
    }
    if (draws < 1) throw ValidationError("config: need at least one perturbation draw");
    if (target_movie_id < 1) throw ValidationError("config: movie ids are 1-indexed");
    for (const auto m : movies) {
        if (m < 1) throw ValidationError("config: movie ids are 1-indexed");
    }
}

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["command"] = to_string(c.command);
    j["data"] = c.data_path.generic_string();
    j["movie_id"] = c.target_movie_id;
    j["mu"] = c.mu;
    j["epsilon"] = c.epsilon;
    j["splits"] = c.splits;
    j["seeds"] = c.seeds;
    j["movies"] = c.movies;
    j["epochs"] = c.epochs;
    j["features"] = c.features;
    j["taps"] = c.taps;
    j["train_fraction"] = c.train_fraction;
    j["draws"] = c.draws;
    j["out"] = c.output_dir.generic_string();
    j["quick"] = c.quick;
    return j;
}

const char* version() { return GNNSTAB_VERSION; }

void write_header(std::ostream& out, const ExperimentConfig& config,
                  const std::vector<std::pair<std::string, std::string>>& extra) {
    out << "# gnnstab " << version() << '\n';
    out << "# config " << to_json(config).dump() << '\n';
    for (const auto& [k, v] : extra) {
        out << "# " << k << ' ' << v << '\n';
    }
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd r;
    if (values.empty()) {
        return r;
    }
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) {
        ss += (v - r.mean) * (v - r.mean);
    }
    r.std = std::sqrt(ss / static_cast<double>(values.size()));
    return r;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ShapeError("spearman: samples differ in length");
    }
    if (x.size() < 2) {
        return 0.0;
    }
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const MeanStd mx = mean_std(rx);
    const MeanStd my = mean_std(ry);
    if (mx.std == 0.0 || my.std == 0.0) {
        return 0.0;
    }
    double cov = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        cov += (rx[i] - mx.mean) * (ry[i] - my.mean);
    }
    return cov / static_cast<double>(rx.size()) / (mx.std * my.std);
}

namespace {

std::ofstream open_output(const fs::path& path) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    return out;
}

std::vector<std::uint64_t> effective_seeds(const ExperimentConfig& config) {
    std::vector<std::uint64_t> s = config.seeds;
    if (config.quick && s.size() > 3) {
        s.resize(3);
    }
    return s;
}

std::string tag(double v) { return csv::format(v); }

gnn::GnnModel fresh_model(const ExperimentConfig& config, Index node, std::uint64_t seed) {
    const gnn::LayerShape shape{config.features, config.taps, gnn::Activation::relu};
    return gnn::init_model(1, std::span(&shape, 1), node, seed);
}

double test_rmse(const gnn::GnnModel& model, const graph::Gso& gso, const gnn::Dataset& data) {
    return movielens::rmse(gnn::predict_all(model, gso, data), movielens::labels(data));
}

std::string hash_list(const std::vector<std::pair<std::uint64_t, std::string>>& hashes) {
    std::string s;
    for (const auto& [seed, h] : hashes) {
        if (!s.empty()) s += ' ';
        s += std::to_string(seed) + ':' + h;
    }
    return s;
}

struct TrainedSplit {
    movielens::TaskSplit split;
    std::vector<gnn::GnnModel> models;  // one per mu
    std::vector<double> baseline;       // test RMSE on the trained GSO
};

TrainedSplit load_split(const ExperimentConfig& config, const movielens::RatingsMatrix& ratings,
                        std::uint64_t seed) {
    TrainedSplit t{movielens::build_task(ratings, ratings.movie_index(config.target_movie_id),
                                         config.train_fraction, seed),
                   {},
                   {}};
    for (const double mu : config.mu) {
        t.models.push_back(load_trained(config, mu, seed, t.split));
        t.baseline.push_back(test_rmse(t.models.back(), t.split.gso, t.split.test));
    }
    return t;
}

void summarize(SweepSummary& s, const std::vector<double>& mus) {
    std::map<std::pair<double, double>, std::vector<double>> groups;
    for (const auto& r : s.rows) {
        groups[{r.mu, r.parameter}].push_back(r.degradation);
    }
    for (const double mu : mus) {
        std::vector<double> xs;
        std::vector<double> ys;
        for (const auto& [key, values] : groups) {
            if (key.first == mu) {
                s.summary.push_back({mu, key.second, mean_std(values)});
            }
        }
        for (const auto& r : s.rows) {
            if (r.mu == mu) {
                xs.push_back(r.parameter);
                ys.push_back(r.degradation);
            }
        }
        s.spearman.emplace_back(mu, spearman(xs, ys));
    }
}

void write_sweep(const ExperimentConfig& config, const SweepSummary& s, const std::string& stem,
                 const std::string& parameter, const std::string& hashes,
                 const std::string& title) {
    const std::vector<std::pair<std::string, std::string>> extra{{"gso", hashes}};
    {
        auto out = open_output(config.output_dir / (stem + ".csv"));
        write_header(out, config, extra);
        out << "mu," << parameter << ",seed,draw,rmse,degradation\n";
        for (const auto& r : s.rows) {
            out << tag(r.mu) << ',' << tag(r.parameter) << ',' << r.seed << ',' << r.draw << ','
                << csv::format(r.rmse) << ',' << csv::format(r.degradation) << '\n';
        }
    }
    {
        auto out = open_output(config.output_dir / (stem + "_summary.csv"));
        write_header(out, config, extra);
        out << "mu," << parameter << ",mean_degradation,std_degradation\n";
        for (const auto& e : s.summary) {
            out << tag(e.mu) << ',' << tag(e.parameter) << ',' << csv::format(e.degradation.mean)
                << ',' << csv::format(e.degradation.std) << '\n';
        }
        for (const auto& [mu, rho] : s.spearman) {
            out << "# spearman mu=" << tag(mu) << ' ' << csv::format(rho) << '\n';
        }
    }
    plot::Figure fig{title, parameter, "RMSE degradation", {}};
    for (const double mu : config.mu) {
        plot::Series series{"mu = " + tag(mu), {}, {}, plot::Style::line};
        for (const auto& e : s.summary) {
            if (e.mu == mu) {
                series.x.push_back(e.parameter);
                series.y.push_back(e.degradation.mean);
            }
        }
        fig.series.push_back(std::move(series));
    }
    plot::write_svg(config.output_dir / (stem + ".svg"), fig);
}

}  // namespace

double SweepSummary::mean_at(double mu, double parameter) const {
    for (const auto& e : summary) {
        if (e.mu == mu && e.parameter == parameter) {
            return e.degradation.mean;
        }
    }
    throw ValidationError("sweep summary has no entry for mu " + tag(mu) + " at " +
                          tag(parameter));
}

fs::path checkpoint_path(const ExperimentConfig& config, double mu, std::uint64_t seed) {
    return config.output_dir / "checkpoints" /
           ("model_mu" + tag(mu) + "_split" + std::to_string(seed) + ".json");
}

gnn::GnnModel load_trained(const ExperimentConfig& config, double mu, std::uint64_t seed,
                           const movielens::TaskSplit& split) {
    const fs::path path = checkpoint_path(config, mu, seed);
    std::ifstream in(path);
    if (!in) {
        throw IoError("missing checkpoint '" + path.string() +
                      "'; run 'gnnstab train' with the same --out, --seeds and --mu first");
    }
    nlohmann::json echo;
    gnn::GnnModel model = gnn::load_checkpoint(in, &echo);
    const std::string expected = movielens::manifest_hash(split);
    if (echo.value("manifest_hash", std::string()) != expected) {
        throw ValidationError("checkpoint '" + path.string() +
                              "' was trained on a different split (manifest hash mismatch)");
    }
    if (model.node != split.target_movie) {
        throw ValidationError("checkpoint '" + path.string() + "' targets a different movie");
    }
    return model;
}

TrainSummary run_train(const ExperimentConfig& config, const movielens::RatingsMatrix& ratings) {
    config.validate();
    const Index target = ratings.movie_index(config.target_movie_id);
    const auto seeds = effective_seeds(config);
    TrainSummary summary;
    std::vector<std::pair<std::uint64_t, std::string>> hashes;
    std::vector<SplitRun> runs;
    for (const std::uint64_t seed : seeds) {
        const movielens::TaskSplit split =
            movielens::build_task(ratings, target, config.train_fraction, seed);
        const std::string hash = movielens::manifest_hash(split);
        hashes.emplace_back(seed, hash);
        {
            auto out = open_output(config.output_dir / "manifests" /
                                   ("split_" + std::to_string(seed) + ".csv"));
            write_header(out, config, {{"seed", std::to_string(seed)}, {"manifest", hash}});
            movielens::write_split_manifest(out, split);
        }
        for (const double mu : config.mu) {
            gnn::TrainConfig tc;
            tc.mu = mu;
            tc.epochs = config.epochs;
            tc.rng_seed = seed;
            const auto result = gnn::train(fresh_model(config, target, seed), split.gso,
                                           split.train, tc);
            SplitRun run{seed, hash, mu, test_rmse(result.model, split.gso, split.test),
                         test_rmse(result.model, split.gso, split.train)};
            runs.push_back(run);

            nlohmann::json echo;
            echo["experiment"] = to_json(config);
            echo["train"] = gnn::to_json(tc);
            echo["seed"] = seed;
            echo["movie_id"] = config.target_movie_id;
            echo["train_fraction"] = config.train_fraction;
            echo["manifest_hash"] = hash;
            echo["gso_scale"] = split.gso_scale;
            echo["version"] = version();
            {
                auto out = open_output(checkpoint_path(config, mu, seed));
                gnn::save_checkpoint(out, result.model, echo);
            }
            {
                auto out = open_output(config.output_dir / "traces" /
                                       ("loss_mu" + tag(mu) + "_split" + std::to_string(seed) +
                                        ".csv"));
                write_header(out, config, {{"seed", std::to_string(seed)}, {"manifest", hash}});
                gnn::write_loss_trace(out, result.trace);
            }
        }
    }
    for (const double mu : config.mu) {
        std::vector<double> values;
        for (const auto& r : runs) {
            if (r.mu == mu) {
                summary.runs.push_back(r);
                values.push_back(r.test_rmse);
            }
        }
        summary.test_rmse.emplace_back(mu, mean_std(values));
    }
    const std::vector<std::pair<std::string, std::string>> extra{{"gso", hash_list(hashes)}};
    {
        auto out = open_output(config.output_dir / "train_rmse.csv");
        write_header(out, config, extra);
        out << "mu,seed,manifest,test_rmse,train_rmse\n";
        for (const auto& r : summary.runs) {
            out << tag(r.mu) << ',' << r.seed << ',' << r.manifest_hash << ','
                << csv::format(r.test_rmse) << ',' << csv::format(r.train_rmse) << '\n';
        }
    }
    {
        auto out = open_output(config.output_dir / "train_summary.csv");
        write_header(out, config, extra);
        out << "mu,mean_test_rmse,std_test_rmse,splits\n";
        for (const auto& [mu, ms] : summary.test_rmse) {
            out << tag(mu) << ',' << csv::format(ms.mean) << ',' << csv::format(ms.std) << ','
                << seeds.size() << '\n';
        }
    }
    return summary;
}

TransferSummary run_transfer(const ExperimentConfig& config,
                             const movielens::RatingsMatrix& ratings) {
    config.validate();
    std::vector<long long> movies =
        config.movies.empty() ? movielens::most_rated(ratings, 6) : config.movies;
    const auto seeds = effective_seeds(config);
    TransferSummary result;
    std::vector<std::pair<std::uint64_t, std::string>> hashes;
    for (const std::uint64_t seed : seeds) {
        const TrainedSplit base = load_split(config, ratings, seed);
        hashes.emplace_back(seed, movielens::manifest_hash(base.split));
        for (const long long movie : movies) {
            std::optional<movielens::TaskSplit> other;
            if (movie != config.target_movie_id) {
                other = movielens::build_task(ratings, ratings.movie_index(movie),
                                              config.train_fraction, seed);
            }
            for (std::size_t m = 0; m < config.mu.size(); ++m) {
                TransferRow row{config.mu[m], movie, seed, base.baseline[m], 0.0};
                if (other) {
                    gnn::GnnModel model = base.models[m];
                    model.node = other->target_movie;
                    row.rmse = test_rmse(model, other->gso, other->test);
                    row.degradation_pct =
                        100.0 * (row.rmse - base.baseline[m]) / base.baseline[m];
                }
                result.rows.push_back(row);
            }
        }
    }
    std::sort(result.rows.begin(), result.rows.end(), [&](const auto& a, const auto& b) {
        const auto ia = std::find(movies.begin(), movies.end(), a.movie_id) - movies.begin();
        const auto ib = std::find(movies.begin(), movies.end(), b.movie_id) - movies.begin();
        return std::tie(a.mu, ia, a.seed) < std::tie(b.mu, ib, b.seed);
    });
    for (const double mu : config.mu) {
        for (const long long movie : movies) {
            std::vector<double> d;
            for (const auto& r : result.rows) {
                if (r.mu == mu && r.movie_id == movie) d.push_back(r.degradation_pct);
            }
            result.summary.push_back({mu, movie, mean_std(d)});
        }
    }
    const std::vector<std::pair<std::string, std::string>> extra{{"gso", hash_list(hashes)}};
    {
        auto out = open_output(config.output_dir / "transfer.csv");
        write_header(out, config, extra);
        out << "mu,movie_id,seed,rmse,degradation_pct\n";
        for (const auto& r : result.rows) {
            out << tag(r.mu) << ',' << r.movie_id << ',' << r.seed << ',' << csv::format(r.rmse)
                << ',' << csv::format(r.degradation_pct) << '\n';
        }
    }
    {
        auto out = open_output(config.output_dir / "transfer_summary.csv");
        write_header(out, config, extra);
        out << "mu,movie_id,mean_degradation_pct,std_degradation_pct\n";
        for (const auto& e : result.summary) {
            out << tag(e.mu) << ',' << e.movie_id << ',' << csv::format(e.degradation.mean) << ','
                << csv::format(e.degradation.std) << '\n';
        }
    }
    plot::Figure fig{"Transfer to other movies", "movie (rank by rater count)",
                     "RMSE degradation (%)", {}};
    for (const double mu : config.mu) {
        plot::Series s{"mu = " + tag(mu), {}, {}, plot::Style::markers};
        for (std::size_t i = 0; i < movies.size(); ++i) {
            for (const auto& e : result.summary) {
                if (e.mu == mu && e.movie_id == movies[i]) {
                    s.x.push_back(static_cast<double>(i + 1));
                    s.y.push_back(e.degradation.mean);
                }
            }
        }
        fig.series.push_back(std::move(s));
    }
    plot::write_svg(config.output_dir / "transfer.svg", fig);
    return result;
}

SweepSummary run_perturb_sweep(const ExperimentConfig& config,
                               const movielens::RatingsMatrix& ratings) {
    config.validate();
    if (config.epsilon.empty()) {
        throw ValidationError("perturb-sweep: need at least one epsilon");
    }
    const auto seeds = effective_seeds(config);
    SweepSummary result;
    std::vector<std::pair<std::uint64_t, std::string>> hashes;
    for (const std::uint64_t seed : seeds) {
        const TrainedSplit base = load_split(config, ratings, seed);
        hashes.emplace_back(seed, movielens::manifest_hash(base.split));
        for (int d = 0; d < config.draws; ++d) {
            const std::uint64_t draw_seed =
                seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(d) + 1;
            const auto dir =
                perturbation::draw_relative_direction(base.split.gso.size(), draw_seed);
            for (const double eps : config.epsilon) {
                const auto spec =
                    perturbation::relative_perturbation(base.split.gso, eps, dir, false);
                for (std::size_t m = 0; m < config.mu.size(); ++m) {
                    const double r = test_rmse(base.models[m], spec.perturbed, base.split.test);
                    result.rows.push_back({config.mu[m], eps, seed, d, r, r - base.baseline[m]});
                }
            }
        }
    }
    std::stable_sort(result.rows.begin(), result.rows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.mu, a.parameter) < std::tie(b.mu, b.parameter);
    });
    summarize(result, config.mu);
    write_sweep(config, result, "perturb", "epsilon", hash_list(hashes),
                "RMSE degradation under relative perturbations");
    return result;
}

SweepSummary run_split_sweep(const ExperimentConfig& config,
                             const movielens::RatingsMatrix& ratings) {
    config.validate();
    if (config.splits.empty()) {
        throw ValidationError("split-sweep: need at least one ratio");
    }
    constexpr std::uint64_t kResampleOffset = 7919;
    for (const double ratio : config.splits) {
        if (ratio > config.train_fraction) {
            throw ValidationError("split-sweep: ratio " + tag(ratio) +
                                  " exceeds the trained fraction; the GSO may only use "
                                  "training users");
        }
    }
    const auto seeds = effective_seeds(config);
    SweepSummary result;
    std::vector<std::pair<std::uint64_t, std::string>> hashes;
    for (const std::uint64_t seed : seeds) {
        const TrainedSplit base = load_split(config, ratings, seed);
        hashes.emplace_back(seed, movielens::manifest_hash(base.split));
        std::vector<Index> pool = movielens::user_rows(ratings, base.split.train_users);
        std::mt19937_64 rng(seed + kResampleOffset);
        std::shuffle(pool.begin(), pool.end(), rng);
        const double raters =
            static_cast<double>(base.split.train_users.size() + base.split.test_users.size());
        for (const double ratio : config.splits) {
            const auto keep = std::min(pool.size(), static_cast<std::size_t>(std::floor(ratio * raters)));
            if (keep == 0) {
                throw ValidationError("split-sweep: ratio " + tag(ratio) + " keeps no users");
            }
            const std::vector<Index> users(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
            const auto g = keep == pool.size() ? movielens::TaskGso{base.split.gso, base.split.directed_edges, base.split.gso_scale}
                                               : movielens::build_task_gso(ratings, users);
            for (std::size_t m = 0; m < config.mu.size(); ++m) {
                const double r = test_rmse(base.models[m], g.gso, base.split.test);
                result.rows.push_back({config.mu[m], ratio, seed, 0, r, r - base.baseline[m]});
            }
        }
    }
    std::stable_sort(result.rows.begin(), result.rows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.mu, a.parameter) < std::tie(b.mu, b.parameter);
    });
    summarize(result, config.mu);
    write_sweep(config, result, "split", "train_ratio", hash_list(hashes),
                "RMSE change with the training/test ratio");
    return result;
}

// ---- verify ----------------------------------------------------------------

namespace {

Signal random_signal(Index n, Index f, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Signal x(n, f);
    for (Index j = 0; j < f; ++j) {
        for (Index i = 0; i < n; ++i) {
            x(i, j) = normal(rng);
        }
    }
    return x;
}

graph::Gso random_gso(Index n, std::uint64_t seed, graph::GsoKind kind = graph::GsoKind::adjacency) {
    const graph::Graph g = graph::erdos_renyi(n, 0.4, seed, 0.1);
    const graph::Gso s = graph::build_gso(g, kind);
    const double norm = spectral::operator_norm(s.matrix());
    return norm > 0.0 ? graph::Gso(s.matrix() / norm, kind) : s;
}

filters::FilterTaps random_taps(Index k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> t(static_cast<std::size_t>(k));
    for (double& v : t) v = u(rng);
    return filters::FilterTaps(std::move(t));
}

struct Tracker {
    CheckResult result;

    Tracker(std::string name, double tol) { result = {std::move(name), 0.0, tol, true, 0}; }

    void record(double residual, std::uint64_t seed) {
        if (!result.passed) {
            return;  // keep the first failing case
        }
        if (residual > result.residual || std::isnan(residual)) {
            result.residual = residual;
            result.seed = seed;
        }
        if (!(residual <= result.tolerance)) {
            result.passed = false;
            result.residual = residual;
            result.seed = seed;
        }
    }
};

double relative(double num, double den) { return num / std::max(den, 1e-300); }

// Whole objective smooth_l1(prediction) + mu * penalty.
double objective(const gnn::GnnModel& m, const graph::Gso& s, const gnn::Sample& sample,
                 double mu, const Vector& grid) {
    const double pred = gnn::forward(m, s, sample.x).prediction;
    double value = gnn::smooth_l1_loss(pred, sample.y);
    if (mu != 0.0) value += mu * gnn::penalty(m, grid).value;
    return value;
}

// Pre-activations and penalty maxima must stay clear of kinks for a
// finite-difference comparison.
bool smooth_point(const gnn::GnnModel& m, const gnn::ForwardCache& cache, const Vector& grid,
                  double margin) {
    for (const auto& pre : cache.pre_activations) {
        if (pre.cwiseAbs().minCoeff() < margin) return false;
    }
    if (cache.last_pre.cwiseAbs().minCoeff() < margin) return false;
    for (const auto& layer : m.layers) {
        const auto& bank = layer.bank;
        for (Index f = 0; f < bank.in_features(); ++f) {
            for (Index g = 0; g < bank.out_features(); ++g) {
                Vector v = spectral::response_derivative_scaled(bank.filter(f, g), grid);
                Index best = 0;
                v.maxCoeff(&best);
                const double top = v(best);
                v(best) = -1.0;
                if (best > 0) v(best - 1) = -1.0;
                if (best + 1 < v.size()) v(best + 1) = -1.0;
                if (top - v.maxCoeff() < margin) return false;
            }
        }
    }
    return true;
}

}  // namespace

double gradient_check_error(const gnn::GnnModel& model, const graph::Gso& shift,
                            const gnn::Sample& sample, double mu, const Vector& grid,
                            bool inject_fault) {
    const gnn::NodeProbes probes = gnn::make_probes(model, shift);
    const auto fr = gnn::forward(model, shift, probes, sample.x);
    std::vector<double> analytic = gnn::backward(model, shift, probes, sample, fr.cache, mu, grid);
    if (inject_fault) {
        const auto it = std::max_element(analytic.begin(), analytic.end(),
                                         [](double a, double b) { return std::abs(a) < std::abs(b); });
        *it *= 1.01;
    }
    std::vector<double> params = model.parameters();
    gnn::GnnModel probe = model;
    double worst = 0.0;
    double scale = 0.0;
    constexpr double h = 1e-6;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        probe.set_parameters(params);
        const double up = objective(probe, shift, sample, mu, grid);
        params[i] = saved - h;
        probe.set_parameters(params);
        const double down = objective(probe, shift, sample, mu, grid);
        params[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - analytic[i]));
        scale = std::max(scale, std::abs(fd));
    }
    return relative(worst, scale);
}

std::vector<CheckResult> run_verify(const ExperimentConfig& config) {
    const std::vector<Index> sizes =
        config.quick ? std::vector<Index>{5, 8, 12} : std::vector<Index>{5, 10, 20, 30};
    const int per_size = config.quick ? 4 : 25;
    const std::uint64_t base = config.seeds.empty() ? 0 : config.seeds.front();
    std::vector<CheckResult> out;

    Tracker filt_eq("filter permutation equivariance", 1e-9);
    Tracker gnn_eq("gnn permutation equivariance", 1e-9);
    Tracker recon("eigendecomposition reconstruction", 1e-10);
    Tracker parseval("gft parseval", 1e-10);
    Tracker diag("filter diagonalization", 1e-8);
    Tracker dil_eig("dilation eigenvalues", 1e-10);
    Tracker dil_e("dilation error recovery", 1e-9);
    Tracker round("relative error round trip", 1e-8);
    Tracker io("edge list and checkpoint round trip", 0.0);

    std::uint64_t seed = base * 1000003ULL;
    for (const Index n : sizes) {
        for (int t = 0; t < per_size; ++t, ++seed) {
            std::mt19937_64 rng(seed);
            const graph::Gso s = random_gso(n, seed);
            const graph::Permutation p = graph::random_permutation(n, seed + 17);
            const Signal x = random_signal(n, 2, rng);
            const filters::FilterTaps taps = random_taps(4, rng);

            const Signal hx = filters::graph_convolution(s, taps, x);
            filt_eq.record(
                relative((graph::permute_signal(hx, p) -
                          filters::graph_convolution(graph::permute_gso(s, p), taps,
                                                     graph::permute_signal(x, p)))
                             .norm(),
                         hx.norm()),
                seed);

            const std::vector<gnn::LayerShape> shapes{{3, 3, gnn::Activation::relu},
                                                      {2, 2, gnn::Activation::tanh}};
            const gnn::GnnModel model = gnn::init_model(2, shapes, 0, seed);
            const Signal phi = gnn::feature_map(model, s, x);
            gnn_eq.record(
                relative((graph::permute_signal(phi, p) -
                          gnn::feature_map(model, graph::permute_gso(s, p),
                                           graph::permute_signal(x, p)))
                             .norm(),
                         phi.norm()),
                seed);

            const auto es = spectral::eigendecompose(s);
            const double snorm = spectral::operator_norm(s.matrix());
            recon.record(relative((es.vectors * es.values.asDiagonal() * es.vectors.transpose() -
                                   s.matrix())
                                      .norm(),
                                  snorm),
                         seed);
            parseval.record(
                relative(std::abs(spectral::gft(es.vectors, x).norm() - x.norm()), x.norm()),
                seed);
            const Vector h = spectral::frequency_response(taps, es.values).values;
            const Matrix hs = filters::filter_matrix(s, taps);
            diag.record(relative((hs - es.vectors * h.asDiagonal() * es.vectors.transpose()).norm(),
                                 std::max(1.0, spectral::operator_norm(hs))),
                        seed);

            const double eps = 0.01 + 0.09 * std::uniform_real_distribution<double>(0, 1)(rng);
            const auto dil = perturbation::edge_dilation(s, eps);
            dil_eig.record(relative((spectral::eigenvalues(dil.perturbed.matrix()) -
                                     (1.0 + eps) * es.values)
                                        .cwiseAbs()
                                        .maxCoeff(),
                                    snorm),
                           seed);
            try {
                const Matrix e = perturbation::solve_relative_error(s, dil.perturbed, dil.permutation);
                dil_e.record((e - dil.error).cwiseAbs().maxCoeff(), seed);
                const auto rel = perturbation::random_relative_perturbation(s, eps, seed);
                const Matrix e2 =
                    perturbation::solve_relative_error(s, rel.perturbed, rel.permutation);
                round.record((e2 - rel.error).cwiseAbs().maxCoeff(), seed);
            } catch (const SingularEquationError&) {
                // Eigenvalue pair summing to zero; the equation has no unique solution.
            }

            std::stringstream edges;
            const graph::Graph g = graph::erdos_renyi(n, 0.4, seed, 0.1);
            graph::write_edge_list(edges, g);
            double io_res = (graph::read_edge_list(edges, n).weights() - g.weights()).cwiseAbs().maxCoeff();
            std::stringstream ck;
            gnn::save_checkpoint(ck, model, nlohmann::json::object());
            const auto back = gnn::load_checkpoint(ck).parameters();
            const auto orig = model.parameters();
            for (std::size_t i = 0; i < orig.size(); ++i) {
                io_res = std::max(io_res, std::abs(back[i] - orig[i]));
            }
            io.record(io_res, seed);
        }
    }
    for (auto* t : {&filt_eq, &gnn_eq, &recon, &parseval, &diag, &dil_eig, &dil_e, &round, &io}) {
        out.push_back(t->result);
    }

    Tracker grad("gradient finite differences", 1e-4);
    {
        const int models = config.quick ? 2 : 5;
        std::uint64_t gs = base * 7919ULL + 11;
        int done = 0;
        while (done < models) {
            std::mt19937_64 rng(gs);
            const graph::Gso s = random_gso(8, gs);
            const std::vector<gnn::LayerShape> shapes{{3, 4, gnn::Activation::relu},
                                                      {3, 4, gnn::Activation::relu}};
            gnn::GnnModel model = gnn::init_model(3, shapes, static_cast<Index>(gs % 8), gs);
            const gnn::Sample sample{random_signal(8, 3, rng), 1.0 + 4.0 * std::uniform_real_distribution<double>(0, 1)(rng)};
            const Vector grid = spectral::uniform_grid(-1.0, 1.0, 201);
            const auto fr = gnn::forward(model, s, sample.x);
            if (smooth_point(model, fr.cache, grid, 1e-4)) {
                grad.record(gradient_check_error(model, s, sample, 0.5, grid,
                                                 config.inject_fault && done == 0),
                            gs);
                ++done;
            }
            ++gs;
        }
    }
    out.push_back(grad.result);

    Tracker bound("filter bound under dilation and relative perturbation", 0.0);
    Tracker linearity("bound sweep linearity (1 - R^2)", 0.01);
    {
        const Index n = config.quick ? 10 : 20;
        const std::vector<double> eps{0.0, 0.02, 0.04, 0.06, 0.08, 0.1};
        const int graphs = config.quick ? 2 : 5;
        for (int gi = 0; gi < graphs; ++gi) {
            const std::uint64_t gs = base * 31ULL + static_cast<std::uint64_t>(gi);
            const graph::Gso s = random_gso(n, gs);
            const auto taps = spectral::design_integral_lipschitz_filter(-1.5, 1.5, 5, 1.0);
            const std::vector<std::uint64_t> seeds{gs, gs + 1};
            for (const auto kind : {stability::PerturbationKind::dilation,
                                    stability::PerturbationKind::relative}) {
                const auto sweep = stability::empirical_filter_distance_sweep(s, taps, kind, eps, seeds);
                bound.record(sweep.all_satisfied() ? 0.0 : 1.0, gs);
                linearity.record(1.0 - sweep.min_r_squared(), gs);
            }
        }
    }
    out.push_back(bound.result);
    out.push_back(linearity.result);

    Tracker mixing_lin("mixing: linear activation off-peak energy", 1e-12);
    Tracker mixing_relu("mixing: relu spreads to >= 2 coefficients (2 - count)", 0.0);
    {
        std::uint64_t gs = base;
        for (;; ++gs) {
            const graph::Graph g = graph::erdos_renyi(10, 0.4, gs);
            if (graph::is_connected(g) && !graph::is_bipartite(g)) {
                const graph::Gso s = graph::build_gso(g, graph::GsoKind::laplacian);
                mixing_lin.record(
                    stability::frequency_mixing_demo(s, gnn::Activation::linear).fraction_outside,
                    gs);
                const auto relu = stability::frequency_mixing_demo(s, gnn::Activation::relu);
                mixing_relu.record(std::max(0.0, 2.0 - static_cast<double>(relu.spread_count)), gs);
                break;
            }
        }
    }
    out.push_back(mixing_lin.result);
    out.push_back(mixing_relu.result);
    return out;
}

void print_checks(std::ostream& out, const std::vector<CheckResult>& checks) {
    out << std::left << std::setw(58) << "check" << std::setw(14) << "residual"
        << std::setw(12) << "tolerance" << std::setw(8) << "status" << "seed\n";
    for (const auto& c : checks) {
        std::ostringstream res;
        res << std::scientific << std::setprecision(3) << c.residual;
        std::ostringstream tol;
        tol << std::scientific << std::setprecision(1) << c.tolerance;
        out << std::left << std::setw(58) << c.name << std::setw(14) << res.str()
            << std::setw(12) << tol.str() << std::setw(8) << (c.passed ? "ok" : "FAIL")
            << c.seed << '\n';
    }
}

// ---- demo ------------------------------------------------------------------

void run_demo(const ExperimentConfig& config) {
    const std::uint64_t start = config.seeds.empty() ? 0 : config.seeds.front();
    std::uint64_t seed = start;
    std::optional<graph::Graph> g;
    for (;; ++seed) {
        graph::Graph cand = graph::erdos_renyi(10, 0.4, seed);
        if (graph::is_connected(cand) && !graph::is_bipartite(cand)) {
            const auto ev = spectral::eigenvalues(graph::build_gso(cand, graph::GsoKind::laplacian).matrix());
            if (ev(9) - ev(8) > 1e-6) {
                g = std::move(cand);
                break;
            }
        }
    }
    const graph::Gso s = graph::build_gso(*g, graph::GsoKind::laplacian);
    const auto es = spectral::eigendecompose(s);
    const double lmax = es.values(es.size() - 1);
    const double eps_demo = config.epsilon.empty()
                                ? 0.1
                                : *std::max_element(config.epsilon.begin(), config.epsilon.end());
    const std::string graph_desc = "laplacian of erdos_renyi(10, 0.4) seed " + std::to_string(seed);
    const std::vector<std::pair<std::string, std::string>> extra{
        {"seed", std::to_string(seed)}, {"gso", graph_desc}};
    const fs::path dir = config.output_dir;

    // Panel a: an integral Lipschitz response against original and dilated eigenvalues.
    const auto il = spectral::design_integral_lipschitz_filter(0.0, (1.0 + eps_demo) * lmax, 5, 1.0);
    const Vector grid = spectral::uniform_grid(0.0, (1.0 + eps_demo) * lmax * 1.05, 400);
    const auto response = spectral::frequency_response(il, grid);
    {
        auto out = open_output(dir / "demo_il_response.csv");
        write_header(out, config, extra);
        spectral::write_frequency_response(out, response);
    }
    {
        auto out = open_output(dir / "demo_dilation.csv");
        write_header(out, config, extra);
        out << "index,lambda,lambda_dilated,shift,response,response_dilated\n";
        for (Index i = 0; i < es.size(); ++i) {
            const double l = es.values(i);
            const double ld = (1.0 + eps_demo) * l;
            out << i << ',' << csv::format(l) << ',' << csv::format(ld) << ','
                << csv::format(ld - l) << ',' << csv::format(spectral::evaluate_response(il, l))
                << ',' << csv::format(spectral::evaluate_response(il, ld)) << '\n';
        }
    }
    {
        plot::Figure fig{"Integral Lipschitz filter under dilation (eps = " + tag(eps_demo) + ")",
                         "lambda", "h(lambda)", {}};
        fig.series.push_back({"h", std::vector<double>(grid.data(), grid.data() + grid.size()),
                              std::vector<double>(response.values.data(),
                                                  response.values.data() + response.values.size()),
                              plot::Style::line});
        plot::Series orig{"lambda_n", {}, {}, plot::Style::markers};
        plot::Series dila{"(1+eps) lambda_n", {}, {}, plot::Style::markers};
        for (Index i = 0; i < es.size(); ++i) {
            orig.x.push_back(es.values(i));
            orig.y.push_back(spectral::evaluate_response(il, es.values(i)));
            dila.x.push_back((1.0 + eps_demo) * es.values(i));
            dila.y.push_back(spectral::evaluate_response(il, (1.0 + eps_demo) * es.values(i)));
        }
        fig.series.push_back(std::move(orig));
        fig.series.push_back(std::move(dila));
        plot::write_svg(dir / "demo_dilation.svg", fig);
    }

    // Panel b: sharp filter versus integral Lipschitz filter versus GNN.
    const double eps_cross = es.values(es.size() - 1) / es.values(es.size() - 2) - 1.0;
    std::vector<double> eps_list = config.epsilon;
    eps_list.push_back(eps_cross);
    stability::TradeoffOptions opt;
    opt.seed = seed;
    {
        auto out = open_output(dir / "demo_tradeoff.csv");
        write_header(out, config, extra);
        out << "epsilon,sharp_feasible,sharp_margin,sharp_margin_perturbed,il_margin,"
               "il_margin_perturbed,il_constant,gnn_margin,gnn_margin_perturbed\n";
        for (const double eps : eps_list) {
            const auto r = stability::discriminability_tradeoff_demo(s, eps, opt);
            out << csv::format(eps) << ',' << (r.sharp_feasible ? "true" : "false") << ','
                << csv::format(r.sharp.margin) << ',' << csv::format(r.sharp.margin_perturbed)
                << ',' << csv::format(r.integral_lipschitz.margin) << ','
                << csv::format(r.integral_lipschitz.margin_perturbed) << ','
                << csv::format(r.il_constant) << ',' << csv::format(r.gnn_margin) << ','
                << csv::format(r.gnn_margin_perturbed) << '\n';
        }
    }
    {
        const auto sharp = stability::fit_sharp_filter(es.values, es.size() - 1);
        const auto il_b = spectral::design_integral_lipschitz_filter(es.values(0), lmax,
                                                                     opt.il_taps, opt.il_target);
        const double lo = es.values(0);
        const double hi = lmax * (1.0 + eps_cross) * 1.02;
        const Vector gb = spectral::uniform_grid(lo, hi, 400);
        const auto hs = spectral::frequency_response(sharp, gb);
        const auto hl = spectral::frequency_response(il_b, gb);
        {
            auto out = open_output(dir / "demo_tradeoff_response.csv");
            write_header(out, config, extra);
            out << "lambda,sharp,integral_lipschitz\n";
            for (Index i = 0; i < gb.size(); ++i) {
                out << csv::format(gb(i)) << ',' << csv::format(hs.values(i)) << ','
                    << csv::format(hl.values(i)) << '\n';
            }
        }
        plot::Figure fig{"Sharp versus integral Lipschitz filter", "lambda", "h(lambda)", {}};
        auto as_vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
        Vector clipped = hs.values.cwiseMax(-2.0).cwiseMin(2.0);
        fig.series.push_back({"sharp (clipped to [-2, 2])", as_vec(gb), as_vec(clipped), plot::Style::line});
        fig.series.push_back({"integral Lipschitz", as_vec(gb), as_vec(hl.values), plot::Style::line});
        plot::Series ev{"eigenvalues", {}, {}, plot::Style::markers};
        for (Index i = 0; i < es.size(); ++i) {
            ev.x.push_back(es.values(i));
            ev.y.push_back(0.0);
        }
        fig.series.push_back(std::move(ev));
        plot::write_svg(dir / "demo_tradeoff.svg", fig);
    }

    // Panel c: frequency mixing.
    for (const auto act : {gnn::Activation::relu, gnn::Activation::linear}) {
        const auto m = stability::frequency_mixing_demo(s, act);
        const std::string name = std::string("demo_mixing_") + gnn::to_string(act);
        {
            auto out = open_output(dir / (name + ".csv"));
            write_header(out, config, extra);
            out << "# fraction_outside " << csv::format(m.fraction_outside) << '\n';
            stability::write_mixing_spectrum(out, m);
        }
        plot::Figure fig{std::string("GFT of ") + gnn::to_string(act) + "(v_N)", "lambda",
                         "|coefficient|", {}};
        plot::Series st{"magnitude", {}, {}, plot::Style::stems};
        for (Index i = 0; i < m.coefficients.size(); ++i) {
            st.x.push_back(m.eigenvalues(i));
            st.y.push_back(std::abs(m.coefficients(i)));
        }
        fig.series.push_back(std::move(st));
        plot::write_svg(dir / (name + ".svg"), fig);
    }
}

}  // namespace gnnstab::experiments
