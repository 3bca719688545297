#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rigidform/graph.hpp"
#include "rigidform/rigidity.hpp"
#include "rigidform/rk45.hpp"

namespace rigidform {

/// Per-edge squared-distance errors e_k = |z_k|^2 - d_k^2.
inline Eigen::VectorXd edge_errors(const FormationGraph& g, const Eigen::VectorXd& d,
                                   const Multipoint& x) {
    if (d.size() != g.edge_count())
        throw std::invalid_argument("edge_errors: distance vector size mismatch");
    const auto z = edge_vectors(g, x);
    Eigen::VectorXd e(g.edge_count());
    for (int k = 0; k < g.edge_count(); ++k) e(k) = z[k].squaredNorm() - d(k) * d(k);
    return e;
}

/// Mismatch vector from the two endpoint agents' distance understandings:
/// mu_k = d_head,k^2 - d_tail,k^2.
inline Eigen::VectorXd mismatch_from_distance_pairs(const FormationGraph& g,
                                                    const Eigen::VectorXd& d_head,
                                                    const Eigen::VectorXd& d_tail) {
    if (d_head.size() != g.edge_count() || d_tail.size() != g.edge_count())
        throw std::invalid_argument("mismatch_from_distance_pairs: size mismatch");
    if ((d_head.array() <= 0).any() || (d_tail.array() <= 0).any())
        throw std::invalid_argument("mismatch_from_distance_pairs: distances must be positive");
    return d_head.array().square() - d_tail.array().square();
}

/// Right-hand side of the overall system, xdot = -R'(z) e(z) + S'(z) mu,
/// accumulated edge by edge:
///   head agent of edge k:  -z_k e_k
///   tail agent of edge k:  +z_k (e_k + mu_k)
inline void vector_field_into(const FormationGraph& g, const Eigen::VectorXd& d,
                              const Eigen::VectorXd& mu, const Eigen::VectorXd& x_stacked,
                              Eigen::VectorXd& out) {
    out.setZero(2 * g.vertex_count());
    for (int k = 0; k < g.edge_count(); ++k) {
        const Edge& ed = g.edge(k);
        const Vec2 z = x_stacked.segment<2>(2 * ed.head) - x_stacked.segment<2>(2 * ed.tail);
        const double e = z.squaredNorm() - d(k) * d(k);
        out.segment<2>(2 * ed.head) -= z * e;
        out.segment<2>(2 * ed.tail) += z * (e + mu(k));
    }
}

inline Eigen::VectorXd vector_field(const FormationGraph& g, const Eigen::VectorXd& d,
                                    const Eigen::VectorXd& mu, const Multipoint& x) {
    if (d.size() != g.edge_count() || mu.size() != g.edge_count())
        throw std::invalid_argument("vector_field: size mismatch");
    Eigen::VectorXd out;
    vector_field_into(g, d, mu, x.stacked(), out);
    return out;
}

/// Error dynamics along the flow: edot = -2 R R' e + 2 R S' mu.
inline Eigen::VectorXd error_rhs(const FormationGraph& g, const Eigen::VectorXd& d,
                                 const Eigen::VectorXd& mu, const Multipoint& x) {
    const Eigen::MatrixXd r = rigidity_matrix(g, x);
    const Eigen::MatrixXd s = mismatch_matrix(g, x);
    const Eigen::VectorXd e = edge_errors(g, d, x);
    return -2.0 * r * (r.transpose() * e) + 2.0 * r * (s.transpose() * mu);
}

/// The m x m matrix M(e, mu) with [zdot_1 ... zdot_m] = [z_1 ... z_m] M along
/// the flow; from zdot = -Hbar Hbar' D(z) e + Hbar Jbar' D(z) mu,
/// M_lk = -(HH')_kl e_l + (HJ')_kl mu_l. Linear in (e, mu).
inline Eigen::MatrixXd m_matrix(const FormationGraph& g, const Eigen::VectorXd& e,
                                const Eigen::VectorXd& mu) {
    if (e.size() != g.edge_count() || mu.size() != g.edge_count())
        throw std::invalid_argument("m_matrix: size mismatch");
    const Eigen::MatrixXd h = g.incidence_transpose();
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(g.edge_count(), g.vertex_count());
    for (int k = 0; k < g.edge_count(); ++k) j(k, g.edge(k).tail) = 1.0;
    const Eigen::MatrixXd hht = h * h.transpose();
    const Eigen::MatrixXd hjt = h * j.transpose();
    Eigen::MatrixXd m(g.edge_count(), g.edge_count());
    for (int l = 0; l < g.edge_count(); ++l)
        for (int k = 0; k < g.edge_count(); ++k)
            m(l, k) = -hht(k, l) * e(l) + hjt(k, l) * mu(l);
    return m;
}

struct IntegratorSettings {
    double rtol = 1e-9;
    double atol = 1e-11;
    double output_stride = 0.1;
    double initial_step = 0.0;
    std::int64_t max_steps = 100'000'000;
    // convergence detection: |edot| <= tol * (1 + |e|) sustained over `window` samples
    double convergence_tol = 1e-9;
    int convergence_window = 10;
};

/// Graph + targets + mismatch + initial state; fully determines a simulation.
/// Realizability of the target distances is the caller's responsibility.
struct Scenario {
    FormationGraph graph;
    Eigen::VectorXd target_distances;
    Eigen::VectorXd mismatch;
    Multipoint initial_state;
    double horizon = 0.0;
    IntegratorSettings integrator;

    void validate() const {
        const int m = graph.edge_count();
        if (target_distances.size() != m) throw std::invalid_argument("Scenario: |d| != m");
        if ((target_distances.array() <= 0).any())
            throw std::invalid_argument("Scenario: target distances must be positive");
        if (mismatch.size() != m) throw std::invalid_argument("Scenario: |mu| != m");
        if (initial_state.count() != graph.vertex_count())
            throw std::invalid_argument("Scenario: initial state size mismatch");
        if (!(horizon > 0.0)) throw std::invalid_argument("Scenario: horizon must be positive");
        if (!(integrator.output_stride > 0.0))
            throw std::invalid_argument("Scenario: output stride must be positive");
    }
};

enum class IntegrationStatus { completed, step_underflow, non_finite, step_limit };

/// Time-stamped samples of the overall system. All arrays share one length;
/// edge_errors[s] is recomputable from states[s].
struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;       // stacked 2n
    std::vector<Eigen::VectorXd> velocities;   // stacked 2n, the field at the sample
    std::vector<Eigen::VectorXd> edge_errors;  // m
    IntegrationStatus status = IntegrationStatus::completed;
    std::optional<std::size_t> converged_at;   // first sample index at which the
                                               // convergence criterion has held for
                                               // the trailing detection window

    std::size_t size() const { return times.size(); }
};

/// Adaptive integration of the overall system over the scenario horizon, with
/// samples every output_stride time units. Convergence of the error dynamics is
/// detected online; integration always continues to the horizon (for mismatched
/// runs the state keeps moving after e has converged).
inline TrajectoryRecord integrate(const Scenario& sc) {
    sc.validate();
    const FormationGraph& g = sc.graph;
    const int m = g.edge_count();

    TrajectoryRecord tr;
    const std::size_t expected =
        static_cast<std::size_t>(sc.horizon / sc.integrator.output_stride) + 2;
    tr.times.reserve(expected);
    tr.states.reserve(expected);
    tr.velocities.reserve(expected);
    tr.edge_errors.reserve(expected);

    int streak = 0;
    auto rhs = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dydt) {
        vector_field_into(g, sc.target_distances, sc.mismatch, y, dydt);
    };
    auto observe = [&](double t, const Eigen::VectorXd& y, const Eigen::VectorXd& dydt) {
        Eigen::VectorXd e(m), edot(m);
        for (int k = 0; k < m; ++k) {
            const Edge& ed = g.edge(k);
            const Vec2 z = y.segment<2>(2 * ed.head) - y.segment<2>(2 * ed.tail);
            const Vec2 zd = dydt.segment<2>(2 * ed.head) - dydt.segment<2>(2 * ed.tail);
            e(k) = z.squaredNorm() - sc.target_distances(k) * sc.target_distances(k);
            edot(k) = 2.0 * z.dot(zd);
        }
        tr.times.push_back(t);
        tr.states.push_back(y);
        tr.velocities.push_back(dydt);
        tr.edge_errors.push_back(std::move(e));
        if (!tr.converged_at) {
            const bool quiet =
                edot.norm() <= sc.integrator.convergence_tol * (1.0 + tr.edge_errors.back().norm());
            streak = quiet ? streak + 1 : 0;
            if (streak >= sc.integrator.convergence_window)
                tr.converged_at = tr.size() - 1;
        }
    };

    Rk45Settings rs;
    rs.rtol = sc.integrator.rtol;
    rs.atol = sc.integrator.atol;
    rs.initial_step = sc.integrator.initial_step;
    rs.max_steps = sc.integrator.max_steps;
    const Rk45Status st = integrate_sampled(rhs, sc.initial_state.stacked(), 0.0, sc.horizon,
                                            sc.integrator.output_stride, observe, rs);
    switch (st) {
        case Rk45Status::completed: tr.status = IntegrationStatus::completed; break;
        case Rk45Status::step_underflow: tr.status = IntegrationStatus::step_underflow; break;
        case Rk45Status::non_finite: tr.status = IntegrationStatus::non_finite; break;
        case Rk45Status::step_limit: tr.status = IntegrationStatus::step_limit; break;
    }
    return tr;
}

/// Triangle realization of three target edge lengths by the law of cosines.
/// The graph is the cyclic triangle with edges (v2->v1), (v3->v2), (v1->v3),
/// so d(0) joins vertices 1,2; d(1) joins 2,3; d(2) joins 3,1.
inline Multipoint triangle_realization(double d12, double d23, double d31) {
    if (d12 <= 0 || d23 <= 0 || d31 <= 0)
        throw std::invalid_argument("triangle_realization: lengths must be positive");
    const double a = (d12 * d12 + d31 * d31 - d23 * d23) / (2.0 * d12);
    const double b2 = d31 * d31 - a * a;
    if (b2 <= 0)
        throw std::invalid_argument("triangle_realization: triangle inequality violated");
    return Multipoint::from_points({{0.0, 0.0}, {d12, 0.0}, {a, std::sqrt(b2)}});
}

/// Edge lengths realized by a given multipoint (for authoring scenarios whose
/// targets are realizable by construction).
inline Eigen::VectorXd distances_from_coordinates(const FormationGraph& g, const Multipoint& x) {
    Eigen::VectorXd d(g.edge_count());
    const auto z = edge_vectors(g, x);
    for (int k = 0; k < g.edge_count(); ++k) {
        d(k) = z[k].norm();
        if (d(k) <= 0.0)
            throw std::invalid_argument("distances_from_coordinates: coincident edge endpoints");
    }
    return d;
}

}  // namespace rigidform
