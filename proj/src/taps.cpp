#include "gnnstab/taps.hpp"

#include <cmath>

#include "gnnstab/error.hpp"

namespace gnnstab::filters {

FilterTaps::FilterTaps(std::vector<double> taps) : taps_(std::move(taps)) {
    if (taps_.empty()) {
        throw ValidationError("FilterTaps: need at least one tap");
    }
    for (double h : taps_) {
        if (!std::isfinite(h)) {
            throw ValidationError("FilterTaps: taps must be finite");
        }
    }
}

FilterTaps FilterTaps::scaled(double factor) const {
    std::vector<double> out(taps_);
    for (double& h : out) {
        h *= factor;
    }
    return FilterTaps(std::move(out));
}

FilterBank::FilterBank(Index in_features, Index out_features, Index tap_count)
    : FilterBank(in_features, out_features, tap_count,
                 std::vector<double>(static_cast<std::size_t>(
                     std::max<Index>(in_features * out_features * tap_count, 0)))) {}

FilterBank::FilterBank(Index in_features, Index out_features, Index tap_count,
                       std::vector<double> taps)
    : in_(in_features), out_(out_features), k_(tap_count), taps_(std::move(taps)) {
    if (in_ < 1 || out_ < 1 || k_ < 1) {
        throw ValidationError("FilterBank: feature counts and K must be positive");
    }
    if (taps_.size() != static_cast<std::size_t>(in_ * out_ * k_)) {
        throw ShapeError("FilterBank: tap storage does not match F_in * F_out * K");
    }
}

FilterBank FilterBank::single(const FilterTaps& taps) {
    const auto v = taps.values();
    return FilterBank(1, 1, taps.size(), std::vector<double>(v.begin(), v.end()));
}

FilterTaps FilterBank::filter(Index f, Index g) const {
    const auto begin = taps_.begin() + static_cast<std::ptrdiff_t>(offset(f, g, 0));
    return FilterTaps(std::vector<double>(begin, begin + k_));
}

Matrix FilterBank::coefficient_matrix(Index k) const {
    Matrix c(in_, out_);
    for (Index f = 0; f < in_; ++f) {
        for (Index g = 0; g < out_; ++g) {
            c(f, g) = tap(f, g, k);
        }
    }
    return c;
}

}  // namespace gnnstab::filters
