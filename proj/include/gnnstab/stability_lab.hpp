#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gnnstab/gnn.hpp"
#include "gnnstab/perturbation.hpp"
#include "gnnstab/taps.hpp"

namespace gnnstab::stability {

struct BoundReport {
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    double measured = 0.0;
    double bound = 0.0;   // first-order term only
    double C = 0.0;
    double delta = 0.0;
    int L = 1;
    Index N = 0;
    double slack = 0.0;   // quadratic coefficient q of the point's series
    bool satisfied = false;  // measured <= bound + slack * epsilon^2
};

// 2 C (1 + delta sqrt(N)) epsilon.
double filter_stability_bound(double C, double delta, Index N, double epsilon);
// 2 C (1 + delta sqrt(N)) L epsilon.
double gnn_stability_bound(double C, double delta, Index N, double epsilon, int L);

enum class PerturbationKind { dilation, relative };

const char* to_string(PerturbationKind kind);

// Dilation ignores the seed.
perturbation::PerturbationSpec generate_perturbation(const graph::Gso& shift,
                                                     PerturbationKind kind, double epsilon,
                                                     std::uint64_t seed);

// Least-squares fits of one measured-vs-epsilon series.
struct SeriesFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 1.0;   // of the ordinary linear fit (with intercept)
    double linear = 0.0;      // a in measured ~ a eps + q eps^2
    double quadratic = 0.0;   // q
};

SeriesFit fit_series(std::span<const double> epsilon, std::span<const double> measured);

struct SweepResult {
    std::vector<BoundReport> reports;   // seed-major, epsilon in the given order
    std::vector<SeriesFit> fits;        // one per seed
    std::pair<double, double> interval; // spectral range of S and every S_hat
    double C = 0.0;
    bool bounded = false;               // |h| <= 1 on the interval

    bool all_satisfied() const;
    double min_r_squared() const;
};

// For every seed and epsilon: perturbs S, measures the identity-mode filter
// distance, and compares it with the bound using the measured C and delta.
SweepResult empirical_filter_distance_sweep(const graph::Gso& shift,
                                            const filters::FilterTaps& taps,
                                            PerturbationKind kind,
                                            std::span<const double> epsilons,
                                            std::span<const std::uint64_t> seeds);

inline constexpr Index kDefaultProbeCount = 200;

// Monte-Carlo lower estimate of the operator-norm distance between the
// feature maps Phi(S, .) and Phi(S_hat, .): the largest
// ||P^T Phi(S, x) - Phi(S_hat, P^T x)|| over `probe_count` random unit inputs
// plus the unit eigenvectors of S. P defaults to the identity.
double empirical_gnn_distance(const gnn::GnnModel& model, const graph::Gso& shift,
                              const graph::Gso& perturbed, Index probe_count,
                              std::uint64_t seed,
                              const std::optional<graph::Permutation>& p = std::nullopt);

// Same sweep for a GNN, with C = max over layers and filters and L the depth.
SweepResult empirical_gnn_distance_sweep(const gnn::GnnModel& model, const graph::Gso& shift,
                                         PerturbationKind kind,
                                         std::span<const double> epsilons,
                                         std::span<const std::uint64_t> seeds,
                                         Index probe_count = kDefaultProbeCount);

// CSV "epsilon,seed,measured,bound,C,delta,satisfied".
void write_bound_reports(std::ostream& out, std::span<const BoundReport> reports);

struct MixingReport {
    Vector eigenvalues;
    Vector coefficients;          // GFT of sigma(v_N)
    double fraction_outside = 0.0;  // energy share away from coefficient N
    Index spread_count = 0;       // other coefficients with |value| > 1e-8
    double parseval_residual = 0.0;
};

// x = v_N (the eigenvector of the largest eigenvalue), sigma applied pointwise.
MixingReport frequency_mixing_demo(const graph::Gso& shift, gnn::Activation activation);

// CSV "index,lambda,coefficient,magnitude".
void write_mixing_spectrum(std::ostream& out, const MixingReport& report);

struct TradeoffOptions {
    double il_target = 0.5;   // C of the integral Lipschitz filter
    Index il_taps = 5;
    Index gnn_features = 4;
    Index gnn_taps = 3;
    double gnn_mu = 0.5;
    int gnn_epochs = 200;
    std::uint64_t seed = 0;
};

struct FilterMargins {
    filters::FilterTaps taps{0.0};
    double threshold = 0.0;     // midpoint of the two responses on S
    double response_top = 0.0;  // h at lambda_N and lambda_{N-1} on S
    double response_next = 0.0;
    double margin = 0.0;        // on S
    double margin_perturbed = 0.0;  // on (1 + eps) S with the threshold from S
};

struct TradeoffReport {
    double epsilon = 0.0;
    double lambda_top = 0.0;
    double lambda_next = 0.0;
    bool sharp_feasible = false;
    FilterMargins sharp;
    FilterMargins integral_lipschitz;
    double il_constant = 0.0;
    Index gnn_node = 0;
    double gnn_margin = 0.0;
    double gnn_margin_perturbed = 0.0;
    double gnn_constant = 0.0;
};

// Separation of v_N from v_{N-1} by (i) the interpolating polynomial with
// K = N taps that is 1 at lambda_N and 0 at the other eigenvalues, (ii) an
// integral Lipschitz filter, and (iii) a trained 1-layer relu GNN, on S and
// on the dilation (1 + eps) S. A margin is min(f(A) - t, t - f(B)) where
// t is the midpoint threshold fitted on S.
TradeoffReport discriminability_tradeoff_demo(const graph::Gso& shift, double epsilon,
                                              const TradeoffOptions& options = {});

// Least-squares fit of sum_k h_k lambda_i^k = target_i with K = N taps.
filters::FilterTaps fit_sharp_filter(const Vector& eigenvalues, Index target_index);

}  // namespace gnnstab::stability
