#pragma once

#include <Eigen/Dense>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EigenPair {
    Vector values;   // ascending
    Matrix vectors;
};

// Cyclic Jacobi rotations on a copy of the symmetric input.
EigenPair jacobi_eigen(const Matrix& a, double tol = 1e-14, int max_sweeps = 100);

// Largest singular value via the Jacobi spectrum of A^T A.
double spectral_norm(const Matrix& a);

// sum_k h_k S^k with explicit matrix powers.
Matrix dense_filter(const Matrix& s, const std::vector<double>& taps);

// Pearson correlation over entries where both columns are nonzero.
double pearson_pair(const Matrix& ratings, int i, int j, int min_common = 2);

}  // namespace oracle
