#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gnnstab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// N x F matrix; row n holds the F features observed at node n.
using Signal = Eigen::MatrixXd;

namespace graph {

// Weighted graph on N nodes. weights(i, j) > 0 encodes the edge (j, i).
class Graph {
public:
    // Validates: square, finite, nonnegative, zero diagonal.
    explicit Graph(Matrix weights);

    Index node_count() const noexcept { return weights_.rows(); }
    const Matrix& weights() const noexcept { return weights_; }
    Vector degrees() const { return weights_.rowwise().sum(); }
    bool is_symmetric() const { return weights_ == weights_.transpose(); }

    // Replaces W by (W + W^T) / 2.
    Graph symmetrized() const;

private:
    Matrix weights_;
};

enum class GsoKind { adjacency, laplacian, markov };

const char* to_string(GsoKind kind);

// Graph shift operator. Always exactly symmetric: construction averages the
// supplied matrix with its transpose.
class Gso {
public:
    Gso(const Matrix& matrix, GsoKind kind);

    Index size() const noexcept { return matrix_.rows(); }
    const Matrix& matrix() const noexcept { return matrix_; }
    GsoKind kind() const noexcept { return kind_; }

private:
    Matrix matrix_;
    GsoKind kind_;
};

// Bijection on {0, ..., N-1}. As a matrix P has P(map[i], i) = 1, so the
// relabelled signal P^T x has entries x[map[i]] and P^T S P has entries
// S(map[i], map[j]): new node i is old node map[i].
class Permutation {
public:
    explicit Permutation(std::vector<Index> mapping);

    static Permutation identity(Index n);

    Index size() const noexcept { return static_cast<Index>(map_.size()); }
    Index operator[](Index i) const { return map_[static_cast<std::size_t>(i)]; }
    std::span<const Index> mapping() const noexcept { return map_; }

    Permutation inverse() const;
    bool is_identity() const;
    Matrix as_matrix() const;

    friend bool operator==(const Permutation&, const Permutation&) = default;

private:
    std::vector<Index> map_;
};

Gso build_gso(const Graph& graph, GsoKind kind);

// Sx applied to each feature column.
Signal graph_shift(const Gso& shift, const Signal& x);

// Keeps the k largest off-diagonal entries of each row (ties to the lower
// column index), then averages the kept directed edges with their reverses.
Matrix knn_sparsify(const Matrix& weights, Index k);

Gso permute_gso(const Gso& shift, const Permutation& p);
Matrix permute_matrix(const Matrix& m, const Permutation& p);
Signal permute_signal(const Signal& x, const Permutation& p);

// Uniformly random permutation drawn with a seeded engine.
Permutation random_permutation(Index n, std::uint64_t seed);

// Erdos-Renyi graph with edge probability p; weights uniform in
// [min_weight, 1] (set min_weight = 1 for an unweighted graph).
Graph erdos_renyi(Index n, double p, std::uint64_t seed, double min_weight = 1.0);

// Path 0 - 1 - ... - (n-1) with unit weights.
Graph path_graph(Index n);

bool is_connected(const Graph& graph);
bool is_bipartite(const Graph& graph);

// CSV edge list: a header line "i,j,weight" followed by one row per nonzero
// off-diagonal entry (0-indexed). Lines starting with '#' are comments.
void write_edge_list(std::ostream& out, const Graph& graph);
Graph read_edge_list(std::istream& in, std::optional<Index> node_count = std::nullopt);

// CSV signal: one row per node, F comma-separated values.
void write_signal(std::ostream& out, const Signal& x);
Signal read_signal(std::istream& in);

}  // namespace graph
}  // namespace gnnstab
