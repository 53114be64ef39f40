#pragma once

#include "gnnstab/graph.hpp"
#include "gnnstab/taps.hpp"

namespace gnnstab::filters {

// y = sum_k h_k S^k x via K-1 successive shifts; S^k is never formed.
Signal graph_convolution(const graph::Gso& shift, const FilterTaps& taps, const Signal& x);

// Output feature g = sum_f graph_convolution(S, bank(f, g), X[:, f]).
Signal filter_bank_apply(const graph::Gso& shift, const FilterBank& bank, const Signal& x);

// Dense H(S) = sum_k h_k S^k.
Matrix filter_matrix(const graph::Gso& shift, const FilterTaps& taps);

enum class DistanceMode { identity, brute_force };

inline constexpr Index kBruteForceMaxNodes = 8;

// Operator-norm distance between H(S) and H(S_hat) modulo node relabelling:
// min_P ||H(S) - H(P^T S_hat P)||. identity mode only tries P = I (an upper
// bound); brute_force enumerates all N! relabellings and needs N <= 8.
double filter_distance(const graph::Gso& shift, const graph::Gso& perturbed,
                       const FilterTaps& taps, DistanceMode mode);

}  // namespace gnnstab::filters
