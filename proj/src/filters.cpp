#include "gnnstab/filters.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "gnnstab/error.hpp"
#include "gnnstab/spectral.hpp"

namespace gnnstab::filters {

Signal graph_convolution(const graph::Gso& shift, const FilterTaps& taps, const Signal& x) {
    if (x.rows() != shift.size()) {
        throw ShapeError("graph_convolution: signal has " + std::to_string(x.rows()) +
                         " rows but the GSO has " + std::to_string(shift.size()) + " nodes");
    }
    Signal z = x;
    Signal y = taps[0] * z;
    for (Index k = 1; k < taps.size(); ++k) {
        z = graph::graph_shift(shift, z);
        y.noalias() += taps[k] * z;
    }
    return y;
}

Signal filter_bank_apply(const graph::Gso& shift, const FilterBank& bank, const Signal& x) {
    if (x.rows() != shift.size()) {
        throw ShapeError("filter_bank_apply: signal and GSO sizes differ");
    }
    if (x.cols() != bank.in_features()) {
        throw ShapeError("filter_bank_apply: signal has " + std::to_string(x.cols()) +
                         " features but the bank expects " +
                         std::to_string(bank.in_features()));
    }
    // Shift the whole feature block once per tap and mix features with the
    // k-th coefficient matrix: y = sum_k (S^k X) H_k.
    Signal z = x;
    Signal y = z * bank.coefficient_matrix(0);
    for (Index k = 1; k < bank.tap_count(); ++k) {
        z = graph::graph_shift(shift, z);
        y.noalias() += z * bank.coefficient_matrix(k);
    }
    return y;
}

Matrix filter_matrix(const graph::Gso& shift, const FilterTaps& taps) {
    return graph_convolution(shift, taps, Matrix::Identity(shift.size(), shift.size()));
}

double filter_distance(const graph::Gso& shift, const graph::Gso& perturbed,
                       const FilterTaps& taps, DistanceMode mode) {
    const Index n = shift.size();
    if (perturbed.size() != n) {
        throw ShapeError("filter_distance: GSOs have different node counts");
    }
    const Matrix h = filter_matrix(shift, taps);
    const Matrix h_hat = filter_matrix(perturbed, taps);
    if (mode == DistanceMode::identity) {
        return spectral::operator_norm(h - h_hat);
    }
    if (n > kBruteForceMaxNodes) {
        throw SizeError("filter_distance: brute-force permutation search supports N <= " +
                        std::to_string(kBruteForceMaxNodes) + ", got N = " +
                        std::to_string(n));
    }
    // H(P^T S_hat P) = P^T H(S_hat) P, so each candidate is an index gather.
    std::vector<Index> map(static_cast<std::size_t>(n));
    std::iota(map.begin(), map.end(), Index{0});
    double best = std::numeric_limits<double>::infinity();
    Matrix diff(n, n);
    do {
        for (Index j = 0; j < n; ++j) {
            for (Index i = 0; i < n; ++i) {
                diff(i, j) = h(i, j) - h_hat(map[static_cast<std::size_t>(i)],
                                             map[static_cast<std::size_t>(j)]);
            }
        }
        best = std::min(best, spectral::operator_norm(diff));
    } while (std::next_permutation(map.begin(), map.end()));
    return best;
}

}  // namespace gnnstab::filters
