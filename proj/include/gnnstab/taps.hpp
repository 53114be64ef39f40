#pragma once

#include <initializer_list>
#include <span>
#include <vector>

#include "gnnstab/graph.hpp"

namespace gnnstab::filters {

// Coefficients h_0, ..., h_{K-1} of the polynomial filter sum_k h_k S^k.
class FilterTaps {
public:
    explicit FilterTaps(std::vector<double> taps);
    FilterTaps(std::initializer_list<double> taps) : FilterTaps(std::vector<double>(taps)) {}

    Index size() const noexcept { return static_cast<Index>(taps_.size()); }
    double operator[](Index k) const { return taps_[static_cast<std::size_t>(k)]; }
    std::span<const double> values() const noexcept { return taps_; }

    FilterTaps scaled(double factor) const;

private:
    std::vector<double> taps_;
};

// F_in x F_out grid of filters sharing a common tap count K. Storage is
// contiguous with index ((f * F_out) + g) * K + k.
class FilterBank {
public:
    FilterBank(Index in_features, Index out_features, Index tap_count);
    FilterBank(Index in_features, Index out_features, Index tap_count, std::vector<double> taps);

    static FilterBank single(const FilterTaps& taps);

    Index in_features() const noexcept { return in_; }
    Index out_features() const noexcept { return out_; }
    Index tap_count() const noexcept { return k_; }
    Index filter_count() const noexcept { return in_ * out_; }

    double& tap(Index f, Index g, Index k) { return taps_[offset(f, g, k)]; }
    double tap(Index f, Index g, Index k) const { return taps_[offset(f, g, k)]; }

    FilterTaps filter(Index f, Index g) const;

    // F_in x F_out matrix of the k-th coefficient of every filter.
    Matrix coefficient_matrix(Index k) const;

    std::span<double> raw() noexcept { return taps_; }
    std::span<const double> raw() const noexcept { return taps_; }

private:
    std::size_t offset(Index f, Index g, Index k) const {
        return static_cast<std::size_t>((f * out_ + g) * k_ + k);
    }

    Index in_;
    Index out_;
    Index k_;
    std::vector<double> taps_;
};

}  // namespace gnnstab::filters
