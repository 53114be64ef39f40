#pragma once

#include <iosfwd>
#include <span>

#include "gnnstab/graph.hpp"
#include "gnnstab/taps.hpp"

namespace gnnstab::spectral {

// S = V diag(values) V^T with values ascending and orthonormal columns in V.
// Each column is signed so its largest-magnitude entry is positive (ties go
// to the lowest row index).
struct EigenSystem {
    Matrix vectors;
    Vector values;

    Index size() const noexcept { return values.size(); }
};

EigenSystem eigendecompose(const graph::Gso& shift);

// Throws ValidationError unless `symmetric` equals its transpose to within
// 1e-12 of its largest entry.
EigenSystem eigendecompose(const Matrix& symmetric);

// Ascending eigenvalues only; much cheaper for large N.
Vector eigenvalues(const Matrix& symmetric);

Signal gft(const Matrix& eigenvectors, const Signal& x);
Signal igft(const Matrix& eigenvectors, const Signal& x_hat);

struct FrequencyResponse {
    Vector grid;
    Vector values;
};

// h(lambda) = sum_k h_k lambda^k on every grid point (Horner).
FrequencyResponse frequency_response(const filters::FilterTaps& taps, const Vector& grid);
double evaluate_response(const filters::FilterTaps& taps, double lambda);

// Derivative h'(lambda) = sum_{k>=1} k h_k lambda^{k-1}.
double evaluate_derivative(const filters::FilterTaps& taps, double lambda);

// |lambda h'(lambda)| on every grid point.
Vector response_derivative_scaled(const filters::FilterTaps& taps, const Vector& grid);

// n equally spaced points from a to b inclusive.
Vector uniform_grid(double a, double b, Index n);

struct IntegralLipschitzReport {
    double constant = 0.0;           // max |lambda h'(lambda)| on the grid
    double max_abs_response = 0.0;   // max |h(lambda)| on the grid
    double argmax_lambda = 0.0;
    bool bounded = false;            // max |h| <= 1
};

inline constexpr Index kDefaultLipschitzGrid = 1001;

// Grid estimates: both maxima are lower bounds of the true suprema over the
// interval.
IntegralLipschitzReport integral_lipschitz_check(const filters::FilterTaps& taps, double a,
                                                 double b,
                                                 Index grid_size = kDefaultLipschitzGrid);

// Spectral (operator 2-) norm. Symmetric input uses max |eigenvalue|; general
// input the square root of the largest Gram eigenvalue.
double operator_norm(const Matrix& m);

// Lipschitz-flat filter of K taps on [a, b]: least-squares fit of a smooth
// step, rescaled so that its integral Lipschitz constant on [a, b] is at most
// c_target and |h| <= 1 there.
filters::FilterTaps design_integral_lipschitz_filter(double a, double b, Index tap_count,
                                                     double c_target);

// CSV "lambda,value".
void write_frequency_response(std::ostream& out, const FrequencyResponse& response);

}  // namespace gnnstab::spectral
