#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rigidform/planar.hpp"

namespace rigidform {

/// Oriented edge. Vertex indices are 0-based; the edge vector points tail -> head,
/// i.e. z_k = x_head - x_tail.
struct Edge {
    int tail = 0;
    int head = 0;
};

/// Stacked planar positions of n agents: (x_1', x_2', ..., x_n')'.
class Multipoint {
public:
    Multipoint() = default;

    explicit Multipoint(Eigen::VectorXd stacked) : coords_(std::move(stacked)) {
        if (coords_.size() % 2 != 0)
            throw std::invalid_argument("Multipoint: stacked vector must have even length");
    }

    static Multipoint from_points(const std::vector<Vec2>& pts) {
        Eigen::VectorXd v(2 * static_cast<int>(pts.size()));
        for (int i = 0; i < static_cast<int>(pts.size()); ++i) v.segment<2>(2 * i) = pts[i];
        return Multipoint(std::move(v));
    }

    int count() const { return static_cast<int>(coords_.size()) / 2; }

    Vec2 point(int i) const { return coords_.segment<2>(2 * i); }

    void set_point(int i, const Vec2& p) { coords_.segment<2>(2 * i) = p; }

    const Eigen::VectorXd& stacked() const { return coords_; }

    Vec2 centroid() const {
        Vec2 c = Vec2::Zero();
        for (int i = 0; i < count(); ++i) c += point(i);
        return c / static_cast<double>(count());
    }

private:
    Eigen::VectorXd coords_;
};

/// Edges incident to a vertex, split by the vertex's role in the orientation.
struct NeighborSplit {
    std::vector<int> head_edges;  // edges k with head(k) == i
    std::vector<int> tail_edges;  // edges k with tail(k) == i
};

/// Oriented, connected, simple graph on n >= 3 vertices with m >= 1 labeled edges.
/// Orientation is part of the input; it fixes the sign conventions of z and mu.
class FormationGraph {
public:
    FormationGraph(int n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
        validate();
    }

    int vertex_count() const { return n_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(int k) const { return edges_.at(k); }

    /// Transpose of the oriented incidence matrix: m x n, row k has +1 at head(k)
    /// and -1 at tail(k). Rank is n-1 for a connected graph.
    Eigen::MatrixXd incidence_transpose() const {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(edge_count(), n_);
        for (int k = 0; k < edge_count(); ++k) {
            h(k, edges_[k].head) = 1.0;
            h(k, edges_[k].tail) = -1.0;
        }
        return h;
    }

    /// Label lookup for the edge joining vertices i and j, in either orientation.
    std::optional<int> edge_between(int i, int j) const {
        for (int k = 0; k < edge_count(); ++k) {
            const Edge& e = edges_[k];
            if ((e.tail == i && e.head == j) || (e.tail == j && e.head == i)) return k;
        }
        return std::nullopt;
    }

    NeighborSplit neighbor_split(int i) const {
        if (i < 0 || i >= n_) throw std::out_of_range("neighbor_split: vertex index out of range");
        NeighborSplit s;
        for (int k = 0; k < edge_count(); ++k) {
            if (edges_[k].head == i) s.head_edges.push_back(k);
            if (edges_[k].tail == i) s.tail_edges.push_back(k);
        }
        return s;
    }

private:
    void validate() const {
        if (n_ < 3) throw std::invalid_argument("FormationGraph: need n >= 3 vertices");
        if (edges_.empty()) throw std::invalid_argument("FormationGraph: need at least one edge");
        std::set<std::pair<int, int>> seen;
        for (const Edge& e : edges_) {
            if (e.tail < 0 || e.tail >= n_ || e.head < 0 || e.head >= n_)
                throw std::invalid_argument("FormationGraph: vertex index out of range");
            if (e.tail == e.head) throw std::invalid_argument("FormationGraph: self-loop");
            auto key = std::minmax(e.tail, e.head);
            if (!seen.insert(key).second)
                throw std::invalid_argument("FormationGraph: duplicate undirected edge");
        }
        // connectivity over the undirected graph
        std::vector<int> stack{0};
        std::vector<bool> visited(n_, false);
        visited[0] = true;
        int reached = 1;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (const Edge& e : edges_) {
                const int other = e.tail == v ? e.head : (e.head == v ? e.tail : -1);
                if (other >= 0 && !visited[other]) {
                    visited[other] = true;
                    ++reached;
                    stack.push_back(other);
                }
            }
        }
        if (reached != n_) throw std::invalid_argument("FormationGraph: graph is not connected");
    }

    int n_;
    std::vector<Edge> edges_;
};

/// Edge vectors z_k = x_head(k) - x_tail(k).
inline std::vector<Vec2> edge_vectors(const FormationGraph& g, const Multipoint& x) {
    if (x.count() != g.vertex_count())
        throw std::invalid_argument("edge_vectors: point count does not match graph");
    std::vector<Vec2> z(g.edge_count());
    for (int k = 0; k < g.edge_count(); ++k)
        z[k] = x.point(g.edge(k).head) - x.point(g.edge(k).tail);
    return z;
}

/// Same as edge_vectors, stacked into a 2m vector (z = Hbar x).
inline Eigen::VectorXd edge_vectors_stacked(const FormationGraph& g, const Multipoint& x) {
    Eigen::VectorXd z(2 * g.edge_count());
    const auto zs = edge_vectors(g, x);
    for (int k = 0; k < g.edge_count(); ++k) z.segment<2>(2 * k) = zs[k];
    return z;
}

}  // namespace rigidform
