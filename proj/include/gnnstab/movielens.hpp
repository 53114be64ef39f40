#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gnnstab/gnn.hpp"
#include "gnnstab/graph.hpp"

namespace gnnstab::movielens {

// U x M ratings, 0 where the user did not rate the movie. Rows follow the
// sorted distinct user ids, columns the sorted distinct movie ids.
struct RatingsMatrix {
    Matrix ratings;
    std::vector<long long> user_ids;
    std::vector<long long> movie_ids;
    Index rating_count = 0;

    Index user_count() const noexcept { return ratings.rows(); }
    Index movie_count() const noexcept { return ratings.cols(); }
    // Column of a MovieLens item id; throws ValidationError if absent.
    Index movie_index(long long movie_id) const;
    Index rater_count(Index movie) const;
};

// MovieLens-100k u.data layout: "user item rating timestamp", tab or space
// separated. Duplicate (user, movie) pairs keep the latest timestamp.
RatingsMatrix parse_ratings(std::istream& in);
RatingsMatrix load_ratings(const std::filesystem::path& path);

enum class CorrelationPolicy { clip, absolute };

inline constexpr Index kMinCommonRaters = 2;

// Movie-by-movie Pearson correlation over the co-raters among `user_subset`
// (row indices). Pairs with fewer than two co-raters or zero variance on
// either side get 0; negative correlations are clipped (or made absolute).
graph::Graph pearson_graph(const RatingsMatrix& ratings, const std::vector<Index>& user_subset,
                           CorrelationPolicy policy = CorrelationPolicy::clip);

struct TaskOptions {
    Index neighbours = 10;
    CorrelationPolicy policy = CorrelationPolicy::clip;
    // Divide the GSO by its largest |eigenvalue|.
    bool normalize = true;
};

inline constexpr Index kMinTargetRaters = 10;

struct TaskSplit {
    Index target_movie = 0;
    long long target_movie_id = 0;
    gnn::Dataset train;
    gnn::Dataset test;
    graph::Gso gso{Matrix(), graph::GsoKind::adjacency};
    std::vector<long long> train_users;
    std::vector<long long> test_users;
    Index directed_edges = 0;  // kept before symmetrization
    double gso_scale = 1.0;    // factor the adjacency was divided by
};

// Users who rated the target are shuffled with the seed; the first
// floor(train_fraction * count) train. Labels are the target ratings, which
// are then zeroed in the signals. The GSO is the k-NN sparsified Pearson
// graph over training users only.
TaskSplit build_task(const RatingsMatrix& ratings, Index target_movie, double train_fraction,
                     std::uint64_t seed, const TaskOptions& options = {});

struct TaskGso {
    graph::Gso gso{Matrix(), graph::GsoKind::adjacency};
    Index directed_edges = 0;
    double scale = 1.0;
};

// GSO of the task protocol (Pearson, k-NN, optional normalization) estimated
// from the given user rows only.
TaskGso build_task_gso(const RatingsMatrix& ratings, const std::vector<Index>& user_rows,
                       const TaskOptions& options = {});

// Row indices of MovieLens user ids.
std::vector<Index> user_rows(const RatingsMatrix& ratings, const std::vector<long long>& ids);

// Samples for an arbitrary user list with the given target (signal entry
// zeroed, label = rating). Users must have rated the target.
gnn::Dataset make_dataset(const RatingsMatrix& ratings, Index target_movie,
                          const std::vector<Index>& users);

double rmse(std::span<const double> predictions, std::span<const double> labels);

std::vector<double> labels(const gnn::Dataset& data);

// CSV "split,user_id" manifest.
void write_split_manifest(std::ostream& out, const TaskSplit& split);

// FNV-1a over the manifest text; short hex digest used in output headers.
std::string manifest_hash(const TaskSplit& split);

// Most-rated movies (ties to the lower id), returned as item ids.
std::vector<long long> most_rated(const RatingsMatrix& ratings, std::size_t count);

}  // namespace gnnstab::movielens
