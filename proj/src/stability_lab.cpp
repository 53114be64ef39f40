#include "gnnstab/stability_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "gnnstab/csv.hpp"
#include "gnnstab/error.hpp"
#include "gnnstab/filters.hpp"
#include "gnnstab/spectral.hpp"

namespace gnnstab::stability {

namespace {

void require_nonnegative(double v, const char* name) {
    if (!(v >= 0.0)) {
        throw ValidationError(std::string("stability bound: ") + name + " must be nonnegative");
    }
}

constexpr double kSatisfiedTolerance = 1e-12;

}  // namespace

double filter_stability_bound(double C, double delta, Index N, double epsilon) {
    require_nonnegative(C, "C");
    require_nonnegative(delta, "delta");
    require_nonnegative(epsilon, "epsilon");
    if (N < 0) {
        throw ValidationError("stability bound: N must be nonnegative");
    }
    return 2.0 * C * (1.0 + delta * std::sqrt(static_cast<double>(N))) * epsilon;
}

double gnn_stability_bound(double C, double delta, Index N, double epsilon, int L) {
    if (L < 1) {
        throw ValidationError("gnn_stability_bound: need L >= 1");
    }
    return filter_stability_bound(C, delta, N, epsilon) * static_cast<double>(L);
}

const char* to_string(PerturbationKind kind) {
    return kind == PerturbationKind::dilation ? "dilation" : "relative";
}

perturbation::PerturbationSpec generate_perturbation(const graph::Gso& shift,
                                                     PerturbationKind kind, double epsilon,
                                                     std::uint64_t seed) {
    if (kind == PerturbationKind::dilation) {
        return perturbation::edge_dilation(shift, epsilon);
    }
    return perturbation::random_relative_perturbation(shift, epsilon, seed);
}

SeriesFit fit_series(std::span<const double> epsilon, std::span<const double> measured) {
    if (epsilon.size() != measured.size() || epsilon.empty()) {
        throw ShapeError("fit_series: need equally many (nonzero) epsilons and measurements");
    }
    const auto n = static_cast<Index>(epsilon.size());
    const Eigen::Map<const Vector> e(epsilon.data(), n);
    const Eigen::Map<const Vector> m(measured.data(), n);
    SeriesFit fit;

    const double e_mean = e.mean();
    const double m_mean = m.mean();
    const double sxx = (e.array() - e_mean).square().sum();
    const double sxy = ((e.array() - e_mean) * (m.array() - m_mean)).sum();
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.intercept = m_mean - fit.slope * e_mean;
    const double ss_tot = (m.array() - m_mean).square().sum();
    const double ss_res =
        (m.array() - fit.intercept - fit.slope * e.array()).square().sum();
    if (ss_tot > 0.0) {
        fit.r_squared = 1.0 - ss_res / ss_tot;
    } else {
        fit.r_squared = ss_res == 0.0 ? 1.0 : 0.0;
    }

    Matrix design(n, 2);
    design.col(0) = e;
    design.col(1) = e.array().square();
    const Vector coef = design.completeOrthogonalDecomposition().solve(m);
    fit.linear = coef(0);
    fit.quadratic = coef(1);
    return fit;
}

bool SweepResult::all_satisfied() const {
    return std::all_of(reports.begin(), reports.end(),
                       [](const BoundReport& r) { return r.satisfied; });
}

double SweepResult::min_r_squared() const {
    double best = 1.0;
    for (const auto& f : fits) {
        best = std::min(best, f.r_squared);
    }
    return best;
}

namespace {

using SpecGrid = std::vector<std::vector<perturbation::PerturbationSpec>>;

SpecGrid generate_all(const graph::Gso& shift, PerturbationKind kind,
                      std::span<const double> epsilons, std::span<const std::uint64_t> seeds) {
    SpecGrid specs;
    specs.reserve(seeds.size());
    for (const std::uint64_t seed : seeds) {
        std::vector<perturbation::PerturbationSpec> row;
        row.reserve(epsilons.size());
        if (kind == PerturbationKind::relative) {
            const auto dir = perturbation::draw_relative_direction(shift.size(), seed);
            for (const double eps : epsilons) {
                row.push_back(perturbation::relative_perturbation(shift, eps, dir));
            }
        } else {
            for (const double eps : epsilons) {
                row.push_back(perturbation::edge_dilation(shift, eps));
            }
        }
        specs.push_back(std::move(row));
    }
    return specs;
}

std::pair<double, double> spectral_range(const graph::Gso& shift, const SpecGrid& specs) {
    Vector ev = spectral::eigenvalues(shift.matrix());
    double lo = ev(0);
    double hi = ev(ev.size() - 1);
    for (const auto& row : specs) {
        for (const auto& s : row) {
            ev = spectral::eigenvalues(s.perturbed.matrix());
            lo = std::min(lo, ev(0));
            hi = std::max(hi, ev(ev.size() - 1));
        }
    }
    if (!(lo < hi)) {
        // Zero or scalar GSO; any small interval around the single point works.
        lo -= 1.0;
        hi += 1.0;
    }
    return {lo, hi};
}

void finish_series(SweepResult& result, std::span<const double> epsilons) {
    const std::size_t per = epsilons.size();
    for (std::size_t s = 0; s * per < result.reports.size(); ++s) {
        std::vector<double> measured(per);
        for (std::size_t i = 0; i < per; ++i) {
            measured[i] = result.reports[s * per + i].measured;
        }
        const SeriesFit fit = fit_series(epsilons, measured);
        const double q = std::max(0.0, fit.quadratic);
        for (std::size_t i = 0; i < per; ++i) {
            BoundReport& r = result.reports[s * per + i];
            r.slack = q;
            r.satisfied = r.measured <= r.bound + q * r.epsilon * r.epsilon +
                                            kSatisfiedTolerance * std::max(1.0, r.bound);
        }
        result.fits.push_back(fit);
    }
}

void check_sweep_args(std::span<const double> epsilons, std::span<const std::uint64_t> seeds) {
    if (epsilons.empty() || seeds.empty()) {
        throw ValidationError("sweep: need at least one epsilon and one seed");
    }
    for (const double e : epsilons) {
        if (!(e >= 0.0)) {
            throw ValidationError("sweep: epsilons must be nonnegative");
        }
    }
}

}  // namespace

SweepResult empirical_filter_distance_sweep(const graph::Gso& shift,
                                            const filters::FilterTaps& taps,
                                            PerturbationKind kind,
                                            std::span<const double> epsilons,
                                            std::span<const std::uint64_t> seeds) {
    check_sweep_args(epsilons, seeds);
    const SpecGrid specs = generate_all(shift, kind, epsilons, seeds);
    SweepResult result;
    result.interval = spectral_range(shift, specs);
    const auto il = spectral::integral_lipschitz_check(taps, result.interval.first,
                                                       result.interval.second);
    result.C = il.constant;
    result.bounded = il.bounded;
    const Matrix v = spectral::eigendecompose(shift).vectors;
    const Index n = shift.size();
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            const auto& spec = specs[s][i];
            BoundReport r;
            r.epsilon = epsilons[i];
            r.seed = seeds[s];
            r.N = n;
            r.L = 1;
            r.C = result.C;
            r.measured = filters::filter_distance(shift, spec.perturbed, taps,
                                                  filters::DistanceMode::identity);
            r.delta = perturbation::misalignment(spec.error_eigenvectors, v).delta;
            r.bound = filter_stability_bound(r.C, r.delta, n, r.epsilon);
            result.reports.push_back(r);
        }
    }
    finish_series(result, epsilons);
    return result;
}

double empirical_gnn_distance(const gnn::GnnModel& model, const graph::Gso& shift,
                              const graph::Gso& perturbed, Index probe_count,
                              std::uint64_t seed, const std::optional<graph::Permutation>& p) {
    model.validate();
    const Index n = shift.size();
    if (perturbed.size() != n) {
        throw ShapeError("empirical_gnn_distance: GSOs have different node counts");
    }
    if (p && p->size() != n) {
        throw ShapeError("empirical_gnn_distance: permutation size differs from the GSO");
    }
    if (probe_count < 0) {
        throw ValidationError("empirical_gnn_distance: negative probe count");
    }
    const Index f = model.input_features();
    auto distance = [&](const Signal& x) {
        Signal ref = gnn::feature_map(model, shift, x);
        Signal in = x;
        if (p) {
            ref = graph::permute_signal(ref, *p);
            in = graph::permute_signal(x, *p);
        }
        return (ref - gnn::feature_map(model, perturbed, in)).norm();
    };

    double best = 0.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index t = 0; t < probe_count; ++t) {
        Signal x(n, f);
        for (Index j = 0; j < f; ++j) {
            for (Index i = 0; i < n; ++i) {
                x(i, j) = normal(rng);
            }
        }
        const double norm = x.norm();
        if (norm == 0.0) {
            continue;
        }
        best = std::max(best, distance(x / norm));
    }
    const Matrix v = spectral::eigendecompose(shift).vectors;
    const double spread = 1.0 / std::sqrt(static_cast<double>(f));
    for (Index k = 0; k < n; ++k) {
        const Signal x = v.col(k) * Vector::Constant(f, spread).transpose();
        best = std::max(best, distance(x));
    }
    return best;
}

SweepResult empirical_gnn_distance_sweep(const gnn::GnnModel& model, const graph::Gso& shift,
                                         PerturbationKind kind,
                                         std::span<const double> epsilons,
                                         std::span<const std::uint64_t> seeds,
                                         Index probe_count) {
    check_sweep_args(epsilons, seeds);
    model.validate();
    const SpecGrid specs = generate_all(shift, kind, epsilons, seeds);
    SweepResult result;
    result.interval = spectral_range(shift, specs);
    const Vector grid = spectral::uniform_grid(result.interval.first, result.interval.second,
                                               spectral::kDefaultLipschitzGrid);
    result.C = gnn::max_lipschitz_constant(model, grid);
    result.bounded = true;
    for (const auto& layer : model.layers) {
        for (Index f = 0; f < layer.bank.in_features(); ++f) {
            for (Index g = 0; g < layer.bank.out_features(); ++g) {
                const auto h = spectral::frequency_response(layer.bank.filter(f, g), grid);
                result.bounded = result.bounded && h.values.cwiseAbs().maxCoeff() <= 1.0;
            }
        }
    }
    const Matrix v = spectral::eigendecompose(shift).vectors;
    const Index n = shift.size();
    const int depth = static_cast<int>(model.layers.size());
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            const auto& spec = specs[s][i];
            BoundReport r;
            r.epsilon = epsilons[i];
            r.seed = seeds[s];
            r.N = n;
            r.L = depth;
            r.C = result.C;
            r.measured = empirical_gnn_distance(model, shift, spec.perturbed, probe_count,
                                                seeds[s]);
            r.delta = perturbation::misalignment(spec.error_eigenvectors, v).delta;
            r.bound = gnn_stability_bound(r.C, r.delta, n, r.epsilon, depth);
            result.reports.push_back(r);
        }
    }
    finish_series(result, epsilons);
    return result;
}

void write_bound_reports(std::ostream& out, std::span<const BoundReport> reports) {
    out << "epsilon,seed,measured,bound,C,delta,satisfied\n";
    for (const auto& r : reports) {
        out << csv::format(r.epsilon) << ',' << r.seed << ',' << csv::format(r.measured) << ','
            << csv::format(r.bound) << ',' << csv::format(r.C) << ',' << csv::format(r.delta)
            << ',' << (r.satisfied ? "true" : "false") << '\n';
    }
}

MixingReport frequency_mixing_demo(const graph::Gso& shift, gnn::Activation activation) {
    const spectral::EigenSystem es = spectral::eigendecompose(shift);
    const Index n = es.size();
    if (n == 0) {
        throw ValidationError("frequency_mixing_demo: empty graph");
    }
    const Vector top = es.vectors.col(n - 1);
    const Vector mixed = top.unaryExpr([activation](double v) { return gnn::activate(activation, v); });
    MixingReport r;
    r.eigenvalues = es.values;
    r.coefficients = es.vectors.transpose() * mixed;
    const double total = r.coefficients.squaredNorm();
    const double at_top = r.coefficients(n - 1) * r.coefficients(n - 1);
    r.fraction_outside = total > 0.0 ? std::max(0.0, total - at_top) / total : 0.0;
    for (Index i = 0; i + 1 < n; ++i) {
        if (std::abs(r.coefficients(i)) > 1e-8) {
            ++r.spread_count;
        }
    }
    r.parseval_residual = std::abs(r.coefficients.norm() - mixed.norm());
    return r;
}

void write_mixing_spectrum(std::ostream& out, const MixingReport& report) {
    out << "index,lambda,coefficient,magnitude\n";
    for (Index i = 0; i < report.coefficients.size(); ++i) {
        out << i << ',' << csv::format(report.eigenvalues(i)) << ','
            << csv::format(report.coefficients(i)) << ','
            << csv::format(std::abs(report.coefficients(i))) << '\n';
    }
}

filters::FilterTaps fit_sharp_filter(const Vector& eigenvalues, Index target_index) {
    const Index n = eigenvalues.size();
    if (n == 0 || target_index < 0 || target_index >= n) {
        throw ValidationError("fit_sharp_filter: target index outside the spectrum");
    }
    const double scale = std::max(eigenvalues.cwiseAbs().maxCoeff(), 1e-300);
    Matrix vander(n, n);
    for (Index i = 0; i < n; ++i) {
        double p = 1.0;
        const double x = eigenvalues(i) / scale;
        for (Index k = 0; k < n; ++k) {
            vander(i, k) = p;
            p *= x;
        }
    }
    Vector target = Vector::Zero(n);
    target(target_index) = 1.0;
    const Vector c = vander.colPivHouseholderQr().solve(target);
    std::vector<double> taps(static_cast<std::size_t>(n));
    double s = 1.0;
    for (Index k = 0; k < n; ++k) {
        taps[static_cast<std::size_t>(k)] = c(k) / s;
        s *= scale;
    }
    return filters::FilterTaps(std::move(taps));
}

namespace {

FilterMargins filter_margins(const filters::FilterTaps& taps, double top, double next,
                             double epsilon) {
    FilterMargins m;
    m.taps = taps;
    m.response_top = spectral::evaluate_response(taps, top);
    m.response_next = spectral::evaluate_response(taps, next);
    m.threshold = 0.5 * (m.response_top + m.response_next);
    const double orient = m.response_top >= m.response_next ? 1.0 : -1.0;
    auto margin = [&](double a, double b) {
        return std::min(orient * (a - m.threshold), orient * (m.threshold - b));
    };
    m.margin = margin(m.response_top, m.response_next);
    m.margin_perturbed = margin(spectral::evaluate_response(taps, (1.0 + epsilon) * top),
                                spectral::evaluate_response(taps, (1.0 + epsilon) * next));
    return m;
}

// Node whose readout best tells v_N from v_{N-1}: opposite signs preferred,
// then the larger smaller magnitude.
Index pick_readout_node(const Vector& top, const Vector& next) {
    Index best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < top.size(); ++i) {
        const bool opposite = top(i) * next(i) < 0.0;
        const double score = (opposite ? 10.0 : 0.0) +
                             std::min(std::abs(top(i)), std::abs(next(i))) +
                             (opposite ? 0.0 : std::abs(top(i) - next(i)));
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

}  // namespace

TradeoffReport discriminability_tradeoff_demo(const graph::Gso& shift, double epsilon,
                                              const TradeoffOptions& options) {
    if (!(epsilon > -1.0)) {
        throw ValidationError("discriminability_tradeoff_demo: need epsilon > -1");
    }
    const spectral::EigenSystem es = spectral::eigendecompose(shift);
    const Index n = es.size();
    if (n < 2) {
        throw ValidationError("discriminability_tradeoff_demo: need at least two nodes");
    }
    TradeoffReport r;
    r.epsilon = epsilon;
    r.lambda_top = es.values(n - 1);
    r.lambda_next = es.values(n - 2);
    const double scale = std::max(std::abs(es.values(0)), std::abs(r.lambda_top));
    if (!(r.lambda_top - r.lambda_next > 1e-10 * std::max(scale, 1e-300))) {
        throw ValidationError(
            "discriminability_tradeoff_demo: the two largest eigenvalues coincide");
    }

    const filters::FilterTaps sharp = fit_sharp_filter(es.values, n - 1);
    r.sharp = filter_margins(sharp, r.lambda_top, r.lambda_next, epsilon);
    r.sharp_feasible = r.sharp.response_top >= 0.9 && r.sharp.response_next <= 0.1;

    const filters::FilterTaps il = spectral::design_integral_lipschitz_filter(
        es.values(0), r.lambda_top, options.il_taps, options.il_target);
    r.integral_lipschitz = filter_margins(il, r.lambda_top, r.lambda_next, epsilon);
    r.il_constant =
        spectral::integral_lipschitz_check(il, es.values(0), r.lambda_top).constant;

    const Vector top = es.vectors.col(n - 1);
    const Vector next = es.vectors.col(n - 2);
    r.gnn_node = pick_readout_node(top, next);
    std::vector<gnn::Sample> samples;
    constexpr int kAmplitudes = 10;
    for (int a = 0; a < kAmplitudes; ++a) {
        const double amp = 0.5 + static_cast<double>(a) / (kAmplitudes - 1);
        samples.push_back({amp * top, 1.0});
        samples.push_back({amp * next, 0.0});
    }
    const gnn::Dataset data(samples);
    const gnn::LayerShape shape{options.gnn_features, options.gnn_taps, gnn::Activation::relu};
    gnn::GnnModel model = gnn::init_model(1, std::span(&shape, 1), r.gnn_node, options.seed);
    gnn::TrainConfig config;
    config.mu = options.gnn_mu;
    config.epochs = options.gnn_epochs;
    config.rng_seed = options.seed;
    config.lambda_interval = {es.values(0), r.lambda_top};
    model = gnn::train(model, shift, data, config).model;
    r.gnn_constant =
        gnn::max_lipschitz_constant(model, spectral::uniform_grid(es.values(0), r.lambda_top,
                                                                  config.grid_size));

    auto class_margin = [&](const graph::Gso& s, std::optional<double> threshold) {
        const auto pred = gnn::predict_all(model, s, data);
        double min_a = std::numeric_limits<double>::infinity();
        double max_b = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (data[i].y > 0.5) {
                min_a = std::min(min_a, pred[i]);
            } else {
                max_b = std::max(max_b, pred[i]);
            }
        }
        const double t = threshold.value_or(0.5 * (min_a + max_b));
        return std::pair{std::min(min_a - t, t - max_b), t};
    };
    const auto [margin, threshold] = class_margin(shift, std::nullopt);
    r.gnn_margin = margin;
    const graph::Gso dilated((1.0 + epsilon) * shift.matrix(), shift.kind());
    r.gnn_margin_perturbed = class_margin(dilated, threshold).first;
    return r;
}

}  // namespace gnnstab::stability
