#pragma once

#include <cstdint>

#include "gnnstab/graph.hpp"

namespace gnnstab::perturbation {

// A perturbed GSO together with the relative error matrix E that links it to
// the original: P^T S_hat P = S + E S + S E.
struct PerturbationSpec {
    graph::Gso original;
    graph::Gso perturbed;
    Matrix error;
    graph::Permutation permutation;
    double epsilon = 0.0;
    // Eigenvectors of `error`, aligned with the eigenvectors of the original
    // GSO wherever E has repeated eigenvalues.
    Matrix error_eigenvectors;
};

// ||S_hat - S - (E S + S E)|| in operator norm, after undoing the permutation.
double membership_residual(const PerturbationSpec& spec);

// S_hat = (1 + eps) S with E = (eps / 2) I.
PerturbationSpec edge_dilation(const graph::Gso& shift, double epsilon);

// Unit-norm symmetric Gaussian direction and the fraction u in [1/2, 1] that
// fixes ||E|| = u * eps. Both depend on the seed only, so sweeping eps with a
// fixed seed scales a single direction.
struct RelativeDirection {
    Matrix unit_error;
    double scale_fraction = 1.0;
};

RelativeDirection draw_relative_direction(Index n, std::uint64_t seed);

// E = u eps D for a drawn direction D; S_hat = S + E S + S E, P = I.
PerturbationSpec random_relative_perturbation(const graph::Gso& shift, double epsilon,
                                              std::uint64_t seed);

// Same construction with a pre-drawn direction (skips the norm computation).
PerturbationSpec relative_perturbation(const graph::Gso& shift, double epsilon,
                                       const RelativeDirection& direction,
                                       bool with_error_eigenvectors = true);

// Solves E S + S E = P^T S_hat P - S through the eigenbasis of S. Throws
// SingularEquationError when |lambda_i + lambda_j| < 1e-10 ||S|| for some pair.
Matrix solve_relative_error(const graph::Gso& shift, const graph::Gso& perturbed,
                            const graph::Permutation& p);

enum class DistanceMode { identity, brute_force };

// d(S, S_hat) = min_P ||E_P||; permutations with singular equations are
// skipped. brute_force needs N <= 8.
double relative_distance(const graph::Gso& shift, const graph::Gso& perturbed,
                         DistanceMode mode);

struct Misalignment {
    double delta = 0.0;
    double basis_distance = 0.0;  // ||U - V|| after column matching
};

// delta = (||U - V|| + 1)^2 - 1 after greedily matching the columns of U to
// those of V (largest |<u_i, v_j>| first, with sign correction).
Misalignment misalignment(const Matrix& error_eigenvectors, const Matrix& shift_eigenvectors);

// Eigenvectors of a symmetric E, with each repeated-eigenvalue block rotated
// (orthogonal Procrustes) to best match the columns of V it spans.
Matrix aligned_error_eigenvectors(const Matrix& error, const Matrix& shift_eigenvectors);

}  // namespace gnnstab::perturbation
