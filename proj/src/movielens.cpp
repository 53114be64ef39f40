#include "gnnstab/movielens.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "gnnstab/csv.hpp"
#include "gnnstab/error.hpp"
#include "gnnstab/spectral.hpp"

namespace gnnstab::movielens {

Index RatingsMatrix::movie_index(long long movie_id) const {
    const auto it = std::lower_bound(movie_ids.begin(), movie_ids.end(), movie_id);
    if (it == movie_ids.end() || *it != movie_id) {
        throw ValidationError("movie id " + std::to_string(movie_id) +
                              " does not occur in the ratings");
    }
    return static_cast<Index>(it - movie_ids.begin());
}

Index RatingsMatrix::rater_count(Index movie) const {
    if (movie < 0 || movie >= movie_count()) {
        throw ShapeError("rater_count: movie index out of range");
    }
    return (ratings.col(movie).array() > 0.0).count();
}

namespace {

std::vector<std::string_view> fields_of(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == '\t' || line[i] == ' ')) {
            ++i;
        }
        std::size_t j = i;
        while (j < line.size() && line[j] != '\t' && line[j] != ' ') {
            ++j;
        }
        if (j > i) {
            out.push_back(line.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

struct Entry {
    int rating;
    long long timestamp;
};

}  // namespace

RatingsMatrix parse_ratings(std::istream& in) {
    std::map<std::pair<long long, long long>, Entry> entries;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = csv::trim(line);
        if (view.empty()) {
            continue;
        }
        const auto f = fields_of(view);
        if (f.size() != 4) {
            throw ParseError("ratings line " + std::to_string(line_no) +
                                 ": expected 'user item rating timestamp', got " +
                                 std::to_string(f.size()) + " fields",
                             line_no);
        }
        const long long user = csv::parse_integer(f[0], line_no);
        const long long movie = csv::parse_integer(f[1], line_no);
        const long long rating = csv::parse_integer(f[2], line_no);
        const long long stamp = csv::parse_integer(f[3], line_no);
        if (rating < 1 || rating > 5) {
            throw ValidationError("ratings line " + std::to_string(line_no) + ": rating " +
                                  std::to_string(rating) + " outside 1-5");
        }
        auto [it, inserted] =
            entries.try_emplace({user, movie}, Entry{static_cast<int>(rating), stamp});
        if (!inserted && stamp >= it->second.timestamp) {
            it->second = Entry{static_cast<int>(rating), stamp};
        }
    }

    RatingsMatrix r;
    for (const auto& [key, e] : entries) {
        r.user_ids.push_back(key.first);
        r.movie_ids.push_back(key.second);
    }
    std::sort(r.user_ids.begin(), r.user_ids.end());
    r.user_ids.erase(std::unique(r.user_ids.begin(), r.user_ids.end()), r.user_ids.end());
    std::sort(r.movie_ids.begin(), r.movie_ids.end());
    r.movie_ids.erase(std::unique(r.movie_ids.begin(), r.movie_ids.end()), r.movie_ids.end());
    r.ratings = Matrix::Zero(static_cast<Index>(r.user_ids.size()),
                             static_cast<Index>(r.movie_ids.size()));
    for (const auto& [key, e] : entries) {
        const auto u = std::lower_bound(r.user_ids.begin(), r.user_ids.end(), key.first) -
                       r.user_ids.begin();
        const auto m = std::lower_bound(r.movie_ids.begin(), r.movie_ids.end(), key.second) -
                       r.movie_ids.begin();
        r.ratings(u, m) = e.rating;
    }
    r.rating_count = static_cast<Index>(entries.size());
    return r;
}

RatingsMatrix load_ratings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open ratings file '" + path.string() +
                      "'; expected MovieLens-100k u.data (tab-separated "
                      "'user_id item_id rating timestamp', 1-indexed ids)");
    }
    return parse_ratings(in);
}

graph::Graph pearson_graph(const RatingsMatrix& ratings, const std::vector<Index>& user_subset,
                           CorrelationPolicy policy) {
    if (user_subset.empty()) {
        throw ValidationError("pearson_graph: empty user subset");
    }
    const Index m = ratings.movie_count();
    const auto u = static_cast<Index>(user_subset.size());
    Matrix r(u, m);
    for (Index i = 0; i < u; ++i) {
        const Index row = user_subset[static_cast<std::size_t>(i)];
        if (row < 0 || row >= ratings.user_count()) {
            throw ShapeError("pearson_graph: user index out of range");
        }
        r.row(i) = ratings.ratings.row(row);
    }
    const Matrix b = (r.array() > 0.0).cast<double>().matrix();
    const Matrix sq = r.array().square().matrix();

    // Entry (i, j) sums over users who rated both i and j. All sums are
    // integers, so n * sum_xx - sum_x^2 is exact.
    const Matrix count = b.transpose() * b;
    const Matrix sum_x = r.transpose() * b;    // (i, j): sum of i's ratings
    const Matrix sum_xx = sq.transpose() * b;
    const Matrix sum_xy = r.transpose() * r;

    Matrix w = Matrix::Zero(m, m);
    for (Index j = 0; j < m; ++j) {
        for (Index i = j + 1; i < m; ++i) {
            const double n = count(i, j);
            if (n < static_cast<double>(kMinCommonRaters)) {
                continue;
            }
            const double sx = sum_x(i, j);
            const double sy = sum_x(j, i);
            const double vx = n * sum_xx(i, j) - sx * sx;
            const double vy = n * sum_xx(j, i) - sy * sy;
            if (vx <= 0.0 || vy <= 0.0) {
                continue;
            }
            const double cov = n * sum_xy(i, j) - sx * sy;
            double rho = std::clamp(cov / std::sqrt(vx * vy), -1.0, 1.0);
            rho = policy == CorrelationPolicy::clip ? std::max(rho, 0.0) : std::abs(rho);
            w(i, j) = rho;
            w(j, i) = rho;
        }
    }
    return graph::Graph(std::move(w));
}

gnn::Dataset make_dataset(const RatingsMatrix& ratings, Index target_movie,
                          const std::vector<Index>& users) {
    if (target_movie < 0 || target_movie >= ratings.movie_count()) {
        throw ShapeError("make_dataset: target movie out of range");
    }
    std::vector<gnn::Sample> samples;
    samples.reserve(users.size());
    for (const Index u : users) {
        const double y = ratings.ratings(u, target_movie);
        if (!(y > 0.0)) {
            throw ValidationError("make_dataset: user did not rate the target movie");
        }
        Signal x = ratings.ratings.row(u).transpose();
        x(target_movie, 0) = 0.0;
        samples.push_back({std::move(x), y});
    }
    return gnn::Dataset(std::move(samples));
}

TaskSplit build_task(const RatingsMatrix& ratings, Index target_movie, double train_fraction,
                     std::uint64_t seed, const TaskOptions& options) {
    if (target_movie < 0 || target_movie >= ratings.movie_count()) {
        throw ShapeError("build_task: target movie out of range");
    }
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
        throw ValidationError("build_task: train fraction must lie in (0, 1]");
    }
    std::vector<Index> raters;
    for (Index u = 0; u < ratings.user_count(); ++u) {
        if (ratings.ratings(u, target_movie) > 0.0) {
            raters.push_back(u);
        }
    }
    const long long movie_id = ratings.movie_ids[static_cast<std::size_t>(target_movie)];
    if (static_cast<Index>(raters.size()) < kMinTargetRaters) {
        throw ValidationError("build_task: movie " + std::to_string(movie_id) + " has only " +
                              std::to_string(raters.size()) + " raters (need at least " +
                              std::to_string(kMinTargetRaters) + ")");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(raters.begin(), raters.end(), rng);
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(raters.size())));
    if (n_train == 0) {
        throw ValidationError("build_task: train fraction leaves no training users");
    }
    const std::vector<Index> train_rows(raters.begin(),
                                        raters.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<Index> test_rows(raters.begin() + static_cast<std::ptrdiff_t>(n_train),
                                       raters.end());

    TaskSplit split;
    split.target_movie = target_movie;
    split.target_movie_id = movie_id;
    split.train = make_dataset(ratings, target_movie, train_rows);
    split.test = make_dataset(ratings, target_movie, test_rows);
    for (const Index u : train_rows) {
        split.train_users.push_back(ratings.user_ids[static_cast<std::size_t>(u)]);
    }
    for (const Index u : test_rows) {
        split.test_users.push_back(ratings.user_ids[static_cast<std::size_t>(u)]);
    }

    TaskGso g = build_task_gso(ratings, train_rows, options);
    split.directed_edges = g.directed_edges;
    split.gso_scale = g.scale;
    split.gso = std::move(g.gso);
    return split;
}

TaskGso build_task_gso(const RatingsMatrix& ratings, const std::vector<Index>& user_rows,
                       const TaskOptions& options) {
    TaskGso out;
    const graph::Graph full = pearson_graph(ratings, user_rows, options.policy);
    const Matrix& w = full.weights();
    for (Index i = 0; i < w.rows(); ++i) {
        out.directed_edges +=
            std::min<Index>(options.neighbours, (w.row(i).array() > 0.0).count());
    }
    const graph::Graph sparse(graph::knn_sparsify(w, options.neighbours));
    out.gso = graph::build_gso(sparse, graph::GsoKind::adjacency);
    if (options.normalize) {
        const double norm = spectral::operator_norm(out.gso.matrix());
        if (norm > 0.0) {
            out.scale = norm;
            out.gso = graph::Gso(out.gso.matrix() / norm, graph::GsoKind::adjacency);
        }
    }
    return out;
}

std::vector<Index> user_rows(const RatingsMatrix& ratings, const std::vector<long long>& ids) {
    std::vector<Index> rows;
    rows.reserve(ids.size());
    for (const long long id : ids) {
        const auto it = std::lower_bound(ratings.user_ids.begin(), ratings.user_ids.end(), id);
        if (it == ratings.user_ids.end() || *it != id) {
            throw ValidationError("user id " + std::to_string(id) + " does not occur in the ratings");
        }
        rows.push_back(static_cast<Index>(it - ratings.user_ids.begin()));
    }
    return rows;
}

double rmse(std::span<const double> predictions, std::span<const double> labels) {
    if (predictions.size() != labels.size()) {
        throw ShapeError("rmse: predictions and labels differ in length");
    }
    if (predictions.empty()) {
        throw ValidationError("rmse: empty input");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - labels[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(predictions.size()));
}

std::vector<double> labels(const gnn::Dataset& data) {
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& s : data.samples()) {
        out.push_back(s.y);
    }
    return out;
}

void write_split_manifest(std::ostream& out, const TaskSplit& split) {
    out << "split,user_id\n";
    for (const auto u : split.train_users) {
        out << "train," << u << '\n';
    }
    for (const auto u : split.test_users) {
        out << "test," << u << '\n';
    }
}

std::string manifest_hash(const TaskSplit& split) {
    std::ostringstream text;
    text << "movie," << split.target_movie_id << '\n';
    write_split_manifest(text, split);
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : text.str()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<long long> most_rated(const RatingsMatrix& ratings, std::size_t count) {
    std::vector<Index> order(static_cast<std::size_t>(ratings.movie_count()));
    std::iota(order.begin(), order.end(), Index{0});
    const Eigen::VectorXi raters =
        (ratings.ratings.array() > 0.0).cast<int>().colwise().sum().transpose();
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return raters(a) > raters(b); });
    std::vector<long long> out;
    for (std::size_t i = 0; i < std::min(count, order.size()); ++i) {
        out.push_back(ratings.movie_ids[static_cast<std::size_t>(order[i])]);
    }
    return out;
}

}  // namespace gnnstab::movielens
