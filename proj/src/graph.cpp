#include "gnnstab/graph.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>
#include <string>

#include "gnnstab/csv.hpp"
#include "gnnstab/error.hpp"

namespace gnnstab::graph {

Graph::Graph(Matrix weights) : weights_(std::move(weights)) {
    if (weights_.rows() != weights_.cols()) {
        throw ShapeError("Graph: weight matrix must be square");
    }
    if (weights_.rows() == 0) {
        throw ValidationError("Graph: need at least one node");
    }
    if (!weights_.allFinite()) {
        throw ValidationError("Graph: weights must be finite");
    }
    if ((weights_.array() < 0.0).any()) {
        throw ValidationError("Graph: weights must be nonnegative");
    }
    if ((weights_.diagonal().array() != 0.0).any()) {
        throw ValidationError("Graph: self loops are not allowed (diagonal must be zero)");
    }
}

Graph Graph::symmetrized() const {
    return Graph(0.5 * (weights_ + weights_.transpose()));
}

const char* to_string(GsoKind kind) {
    switch (kind) {
        case GsoKind::adjacency: return "adjacency";
        case GsoKind::laplacian: return "laplacian";
        case GsoKind::markov: return "markov";
    }
    return "unknown";
}

Gso::Gso(const Matrix& matrix, GsoKind kind) : kind_(kind) {
    if (matrix.rows() != matrix.cols()) {
        throw ShapeError("Gso: matrix must be square");
    }
    if (!matrix.allFinite()) {
        throw ValidationError("Gso: entries must be finite");
    }
    matrix_ = 0.5 * (matrix + matrix.transpose());
}

Permutation::Permutation(std::vector<Index> mapping) : map_(std::move(mapping)) {
    std::vector<bool> seen(map_.size(), false);
    for (Index v : map_) {
        if (v < 0 || static_cast<std::size_t>(v) >= map_.size() ||
            seen[static_cast<std::size_t>(v)]) {
            throw ValidationError("Permutation: mapping is not a bijection on [0, N)");
        }
        seen[static_cast<std::size_t>(v)] = true;
    }
}

Permutation Permutation::identity(Index n) {
    std::vector<Index> m(static_cast<std::size_t>(n));
    std::iota(m.begin(), m.end(), Index{0});
    return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
    std::vector<Index> inv(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) {
        inv[static_cast<std::size_t>(map_[i])] = static_cast<Index>(i);
    }
    return Permutation(std::move(inv));
}

bool Permutation::is_identity() const {
    for (std::size_t i = 0; i < map_.size(); ++i) {
        if (map_[i] != static_cast<Index>(i)) {
            return false;
        }
    }
    return true;
}

Matrix Permutation::as_matrix() const {
    const Index n = size();
    Matrix p = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        p((*this)[i], i) = 1.0;
    }
    return p;
}

Gso build_gso(const Graph& graph, GsoKind kind) {
    const Matrix& w = graph.weights();
    switch (kind) {
        case GsoKind::adjacency:
            return Gso(w, kind);
        case GsoKind::laplacian: {
            Matrix l = -w;
            l.diagonal() = graph.degrees();
            return Gso(l, kind);
        }
        case GsoKind::markov: {
            const Vector deg = graph.degrees();
            for (Index i = 0; i < deg.size(); ++i) {
                if (!(deg(i) > 0.0)) {
                    throw DegenerateGraphError("build_gso: node " + std::to_string(i) +
                                               " has zero degree; Markov GSO undefined");
                }
            }
            const Matrix m = deg.cwiseInverse().asDiagonal() * w;
            return Gso(m, kind);
        }
    }
    throw ValidationError("build_gso: unknown GSO kind");
}

Signal graph_shift(const Gso& shift, const Signal& x) {
    if (x.rows() != shift.size()) {
        throw ShapeError("graph_shift: signal has " + std::to_string(x.rows()) +
                         " rows but the GSO has " + std::to_string(shift.size()) + " nodes");
    }
    return shift.matrix() * x;
}

Matrix knn_sparsify(const Matrix& weights, Index k) {
    const Index n = weights.rows();
    if (weights.cols() != n) {
        throw ShapeError("knn_sparsify: matrix must be square");
    }
    if (k < 1 || k >= n) {
        throw ValidationError("knn_sparsify: need 1 <= k < N");
    }
    Matrix kept = Matrix::Zero(n, n);
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        order.clear();
        for (Index j = 0; j < n; ++j) {
            if (j != i) {
                order.push_back(j);
            }
        }
        auto larger = [&](Index a, Index b) {
            const double wa = weights(i, a);
            const double wb = weights(i, b);
            return wa != wb ? wa > wb : a < b;
        };
        std::partial_sort(order.begin(), order.begin() + k, order.end(), larger);
        for (Index r = 0; r < k; ++r) {
            const Index j = order[static_cast<std::size_t>(r)];
            kept(i, j) = weights(i, j);
        }
    }
    return 0.5 * (kept + kept.transpose());
}

Matrix permute_matrix(const Matrix& m, const Permutation& p) {
    const Index n = p.size();
    if (m.rows() != n || m.cols() != n) {
        throw ShapeError("permute: matrix and permutation sizes differ");
    }
    Matrix out(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            out(i, j) = m(p[i], p[j]);
        }
    }
    return out;
}

Gso permute_gso(const Gso& shift, const Permutation& p) {
    return Gso(permute_matrix(shift.matrix(), p), shift.kind());
}

Signal permute_signal(const Signal& x, const Permutation& p) {
    if (x.rows() != p.size()) {
        throw ShapeError("permute_signal: signal and permutation sizes differ");
    }
    Signal out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        out.row(i) = x.row(p[i]);
    }
    return out;
}

Permutation random_permutation(Index n, std::uint64_t seed) {
    std::vector<Index> m(static_cast<std::size_t>(n));
    std::iota(m.begin(), m.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(m.begin(), m.end(), rng);
    return Permutation(std::move(m));
}

Graph erdos_renyi(Index n, double p, std::uint64_t seed, double min_weight) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_real_distribution<double> weight(min_weight, 1.0);
    Matrix w = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            if (coin(rng) < p) {
                const double v = min_weight < 1.0 ? weight(rng) : 1.0;
                w(i, j) = v;
                w(j, i) = v;
            }
        }
    }
    return Graph(std::move(w));
}

Graph path_graph(Index n) {
    Matrix w = Matrix::Zero(n, n);
    for (Index i = 0; i + 1 < n; ++i) {
        w(i, i + 1) = 1.0;
        w(i + 1, i) = 1.0;
    }
    return Graph(std::move(w));
}

namespace {

// BFS two-colouring on the undirected support of W; returns component count
// through `components` and whether a colouring conflict was found.
bool two_colour(const Graph& graph, Index& components) {
    const Matrix& w = graph.weights();
    const Index n = graph.node_count();
    std::vector<int> colour(static_cast<std::size_t>(n), -1);
    bool bipartite = true;
    components = 0;
    for (Index s = 0; s < n; ++s) {
        if (colour[static_cast<std::size_t>(s)] >= 0) {
            continue;
        }
        ++components;
        colour[static_cast<std::size_t>(s)] = 0;
        std::queue<Index> q;
        q.push(s);
        while (!q.empty()) {
            const Index u = q.front();
            q.pop();
            for (Index v = 0; v < n; ++v) {
                if (v == u || (w(u, v) == 0.0 && w(v, u) == 0.0)) {
                    continue;
                }
                auto& cv = colour[static_cast<std::size_t>(v)];
                const int cu = colour[static_cast<std::size_t>(u)];
                if (cv < 0) {
                    cv = 1 - cu;
                    q.push(v);
                } else if (cv == cu) {
                    bipartite = false;
                }
            }
        }
    }
    return bipartite;
}

}  // namespace

bool is_connected(const Graph& graph) {
    Index components = 0;
    two_colour(graph, components);
    return components == 1;
}

bool is_bipartite(const Graph& graph) {
    Index components = 0;
    return two_colour(graph, components);
}

void write_edge_list(std::ostream& out, const Graph& graph) {
    const Matrix& w = graph.weights();
    out << "i,j,weight\n";
    for (Index i = 0; i < w.rows(); ++i) {
        for (Index j = 0; j < w.cols(); ++j) {
            if (w(i, j) != 0.0) {
                out << i << ',' << j << ',' << csv::format(w(i, j)) << '\n';
            }
        }
    }
}

Graph read_edge_list(std::istream& in, std::optional<Index> node_count) {
    struct Edge {
        Index i;
        Index j;
        double w;
    };
    std::vector<Edge> edges;
    std::string line;
    long line_no = 0;
    Index max_index = -1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = csv::trim(line);
        if (t.empty() || t.front() == '#' || t == "i,j,weight") {
            continue;
        }
        const auto fields = csv::split(t);
        if (fields.size() != 3) {
            throw ParseError("edge list line " + std::to_string(line_no) +
                                 ": expected 'i,j,weight'",
                             line_no);
        }
        const auto i = static_cast<Index>(csv::parse_integer(fields[0], line_no));
        const auto j = static_cast<Index>(csv::parse_integer(fields[1], line_no));
        const double w = csv::parse_double(fields[2], line_no);
        if (i < 0 || j < 0) {
            throw ParseError("edge list line " + std::to_string(line_no) +
                                 ": negative node index",
                             line_no);
        }
        max_index = std::max({max_index, i, j});
        edges.push_back({i, j, w});
    }
    const Index n = node_count.value_or(max_index + 1);
    if (max_index >= n) {
        throw ValidationError("read_edge_list: node index exceeds the declared node count");
    }
    Matrix w = Matrix::Zero(n, n);
    for (const auto& e : edges) {
        w(e.i, e.j) = e.w;
    }
    return Graph(std::move(w));
}

void write_signal(std::ostream& out, const Signal& x) {
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index f = 0; f < x.cols(); ++f) {
            if (f > 0) {
                out << ',';
            }
            out << csv::format(x(i, f));
        }
        out << '\n';
    }
}

Signal read_signal(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = csv::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        std::vector<double> row;
        for (auto f : csv::split(t)) {
            row.push_back(csv::parse_double(f, line_no));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError("signal line " + std::to_string(line_no) +
                                 ": inconsistent feature count",
                             line_no);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        return Signal(0, 0);
    }
    Signal x(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t f = 0; f < rows[i].size(); ++f) {
            x(static_cast<Index>(i), static_cast<Index>(f)) = rows[i][f];
        }
    }
    return x;
}

}  // namespace gnnstab::graph
