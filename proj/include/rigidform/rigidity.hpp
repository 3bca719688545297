#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "rigidform/graph.hpp"

namespace rigidform {

/// Rigidity matrix of the formation {G, x}: m x 2n, row k carries z_k' in the
/// head block and -z_k' in the tail block. Equals D'(z) Hbar with
/// D = diag(z_1, ..., z_m).
inline Eigen::MatrixXd rigidity_matrix(const FormationGraph& g, const Multipoint& x) {
    const auto z = edge_vectors(g, x);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(g.edge_count(), 2 * g.vertex_count());
    for (int k = 0; k < g.edge_count(); ++k) {
        r.block<1, 2>(k, 2 * g.edge(k).head) = z[k].transpose();
        r.block<1, 2>(k, 2 * g.edge(k).tail) = -z[k].transpose();
    }
    return r;
}

/// Companion matrix S = D'(z) Jbar: row k carries z_k' in the tail block only.
/// S' routes the mismatch input into the tail agents.
inline Eigen::MatrixXd mismatch_matrix(const FormationGraph& g, const Multipoint& x) {
    const auto z = edge_vectors(g, x);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(g.edge_count(), 2 * g.vertex_count());
    for (int k = 0; k < g.edge_count(); ++k)
        s.block<1, 2>(k, 2 * g.edge(k).tail) = z[k].transpose();
    return s;
}

struct RigidityReport {
    int rank = 0;
    bool is_infinitesimally_rigid = false;
    bool is_minimally_rigid = false;
    std::vector<int> kept_edges;          // reduction to a minimally rigid subgraph
    std::vector<double> singular_values;  // descending
};

/// Numerical rank test of the rigidity matrix. Rank is the count of singular
/// values above tol * sigma_max; the framework is infinitesimally rigid iff the
/// rank reaches 2n-3, and minimally so iff additionally m = 2n-3.
///
/// kept_edges is chosen greedily in ascending edge label among rows that
/// increase the numerical rank, so the reduction is deterministic.
inline RigidityReport rigidity_test(const FormationGraph& g, const Multipoint& x,
                                    double tol = 1e-9) {
    const Eigen::MatrixXd r = rigidity_matrix(g, x);
    RigidityReport rep;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
    const Eigen::VectorXd sv = svd.singularValues();
    rep.singular_values.assign(sv.data(), sv.data() + sv.size());
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    const double thresh = tol * smax;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > thresh) ++rep.rank;

    const int full = 2 * g.vertex_count() - 3;
    if (rep.rank > full)
        throw std::logic_error("rigidity_test: numerical rank exceeded 2n-3");
    rep.is_infinitesimally_rigid = (rep.rank == full);
    rep.is_minimally_rigid = rep.is_infinitesimally_rigid && g.edge_count() == full;

    // Greedy row selection by modified Gram-Schmidt with reorthogonalization.
    std::vector<Eigen::VectorXd> basis;
    for (int k = 0; k < g.edge_count() && static_cast<int>(rep.kept_edges.size()) < rep.rank;
         ++k) {
        Eigen::VectorXd row = r.row(k).transpose();
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) row -= row.dot(b) * b;
        if (row.norm() > thresh) {
            rep.kept_edges.push_back(k);
            basis.push_back(row.normalized());
        }
    }
    if (static_cast<int>(rep.kept_edges.size()) != rep.rank)
        throw std::runtime_error("rigidity_test: rank is numerically ambiguous at this tolerance");
    return rep;
}

struct KernelBasis {
    Eigen::VectorXd q0, q1, q2;
};

/// Orthogonal basis {q0, q1, q2} of the rigidity-matrix kernel for an
/// infinitesimally rigid input. q1 and q2 span the translations; q0 is the
/// rotation field about the centroid: with K the quarter turn and
/// (v1, v2) the centroid, q0 = stack(K x_i) + v2 q1 - v1 q2.
///
/// Throws std::invalid_argument when {G, x} is not infinitesimally rigid
/// (the kernel then has dimension > 3 and the basis would not exhaust it).
inline KernelBasis kernel_basis(const FormationGraph& g, const Multipoint& x,
                                double tol = 1e-9) {
    if (!rigidity_test(g, x, tol).is_infinitesimally_rigid)
        throw std::invalid_argument("kernel_basis: formation is not infinitesimally rigid");

    const int n = g.vertex_count();
    KernelBasis kb;
    kb.q1 = Eigen::VectorXd::Zero(2 * n);
    kb.q2 = Eigen::VectorXd::Zero(2 * n);
    Eigen::VectorXd q3(2 * n);
    const Mat2 k = quarter_turn();
    for (int i = 0; i < n; ++i) {
        kb.q1(2 * i) = 1.0;
        kb.q2(2 * i + 1) = 1.0;
        q3.segment<2>(2 * i) = k * x.point(i);
    }
    const Vec2 v = x.centroid();
    kb.q0 = q3 + v.y() * kb.q1 - v.x() * kb.q2;
    return kb;
}

struct AlignmentCheck {
    bool unaligned = false;
    // first offending quadruple (i, j, k, l) with (x_i - x_j) parallel to (x_k - x_l)
    std::array<int, 4> offending{-1, -1, -1, -1};
};

/// A multipoint is unaligned when no segment between two of its points is
/// parallel to another such segment. All segment pairs drawn from the complete
/// vertex set are checked, including pairs sharing an endpoint (which covers
/// collinear triples). Wedges are compared against tol * scale^2 with
/// scale the maximum pairwise distance.
inline AlignmentCheck unaligned_test(const Multipoint& x, double tol = 1e-9) {
    const int n = x.count();
    double scale = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            scale = std::max(scale, (x.point(i) - x.point(j)).norm());
    if (scale == 0.0)
        throw std::invalid_argument("unaligned_test: fewer than 2 distinct points");

    const double thresh = tol * scale * scale;
    std::vector<std::pair<int, int>> segs;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) segs.emplace_back(i, j);

    AlignmentCheck res;
    for (std::size_t a = 0; a < segs.size(); ++a) {
        for (std::size_t b = a + 1; b < segs.size(); ++b) {
            const Vec2 u = x.point(segs[a].first) - x.point(segs[a].second);
            const Vec2 v = x.point(segs[b].first) - x.point(segs[b].second);
            if (std::abs(wedge(u, v)) <= thresh) {
                res.unaligned = false;
                res.offending = {segs[a].first, segs[a].second, segs[b].first, segs[b].second};
                return res;
            }
        }
    }
    res.unaligned = true;
    return res;
}

struct EdgePairChoice {
    int p = -1;
    int q = -1;
    double wedge_value = 0.0;  // (x_i - x_k) ^ (x_j - x_k) at the shared vertex k
};

/// A pair of edges sharing a vertex whose incident segments are not parallel,
/// chosen to maximize |wedge| for numerical conditioning. Returns nullopt when
/// every vertex-sharing pair is degenerate, which for an infinitesimally rigid
/// formation never happens.
inline std::optional<EdgePairChoice> independent_edge_pair(const FormationGraph& g,
                                                           const Multipoint& x) {
    const int m = g.edge_count();
    double scale = 0.0;
    for (const Vec2& z : edge_vectors(g, x)) scale = std::max(scale, z.norm());
    const double thresh = 1e-12 * scale * scale;

    EdgePairChoice best;
    for (int a = 0; a < m; ++a) {
        for (int b = a + 1; b < m; ++b) {
            const Edge& ea = g.edge(a);
            const Edge& eb = g.edge(b);
            int shared = -1;
            if (ea.tail == eb.tail || ea.tail == eb.head) shared = ea.tail;
            else if (ea.head == eb.tail || ea.head == eb.head) shared = ea.head;
            if (shared < 0) continue;
            const int i = ea.tail == shared ? ea.head : ea.tail;
            const int j = eb.tail == shared ? eb.head : eb.tail;
            const double w = wedge(x.point(i) - x.point(shared), x.point(j) - x.point(shared));
            if (std::abs(w) > std::abs(best.wedge_value)) best = {a, b, w};
        }
    }
    if (std::abs(best.wedge_value) <= thresh) return std::nullopt;
    return best;
}

/// Shape coordinates pi(x) in R^(2n-3): the rotation/translation invariants
/// (|x_2 - x_1|, T(x_3 - x_1), ..., T(x_n - x_1)) with T the rotation taking
/// x_2 - x_1 onto the positive vertical axis.
inline Eigen::VectorXd shape_coordinates(const Multipoint& x) {
    const int n = x.count();
    const Vec2 q = x.point(1) - x.point(0);
    if (q.norm() == 0.0)
        throw std::invalid_argument("shape_coordinates: x_1 and x_2 coincide");
    const Mat2 t = align_rotation(q);
    Eigen::VectorXd pi(2 * n - 3);
    pi(0) = q.norm();
    for (int j = 2; j < n; ++j) pi.segment<2>(1 + 2 * (j - 2)) = t * (x.point(j) - x.point(0));
    return pi;
}

}  // namespace rigidform
