#include <catch2/catch_amalgamated.hpp>

#include "rigidform/analysis.hpp"
#include "test_support.hpp"

using namespace rigidform;
using rftest::triangle_graph;

namespace {

Scenario triangle_scenario(const Eigen::VectorXd& mu, const Multipoint& x0, double horizon,
                           double stride) {
    Scenario sc{triangle_graph(), Eigen::VectorXd::Ones(3), mu, x0, horizon,
                IntegratorSettings{}};
    sc.integrator.output_stride = stride;
    return sc;
}

Eigen::VectorXd orbit_mu() {
    Eigen::VectorXd mu(3);
    mu << 0.05, 0.03, 0.02;
    return mu;
}

Eigen::VectorXd drift_mu() {
    Eigen::VectorXd mu(3);
    mu << 0.05, -0.02, -0.03;
    return mu;
}

const TrajectoryRecord& orbit_run() {
    static const TrajectoryRecord tr =
        integrate(triangle_scenario(orbit_mu(), rftest::unit_equilateral(), 1200.0, 0.1));
    return tr;
}

const TrajectoryRecord& drift_run() {
    static const TrajectoryRecord tr =
        integrate(triangle_scenario(drift_mu(), rftest::unit_equilateral(), 80.0, 0.05));
    return tr;
}

// per-edge rotation direction, estimated directly from z ^ zdot
int edge_sigma(const FormationGraph& g, const TrajectoryRecord& tr, int k, std::size_t w0) {
    double acc = 0.0;
    for (std::size_t s = w0; s < tr.size(); ++s) {
        const Edge& e = g.edge(k);
        const Vec2 z = tr.states[s].segment<2>(2 * e.head) - tr.states[s].segment<2>(2 * e.tail);
        const Vec2 zd =
            tr.velocities[s].segment<2>(2 * e.head) - tr.velocities[s].segment<2>(2 * e.tail);
        acc += wedge(z, zd);
    }
    return acc > 0.0 ? 1 : -1;
}

}  // namespace

TEST_CASE("convergence-rate fit") {
    SECTION("unperturbed triangle matches the linearization eigenvalue") {
        rftest::Rng rng(71);
        Multipoint x0 = rftest::unit_equilateral();
        for (int i = 0; i < 3; ++i) x0.set_point(i, x0.point(i) + rng.disk(0.1));
        const auto tr = integrate(triangle_scenario(Eigen::VectorXd::Zero(3), x0, 25.0, 0.02));
        const auto fit = fit_convergence(tr, Eigen::VectorXd::Zero(3));
        REQUIRE(fit.determined);

        const Eigen::MatrixXd r = rigidity_matrix(triangle_graph(), rftest::unit_equilateral());
        const double lmin =
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r * r.transpose()).eigenvalues()(0);
        REQUIRE(std::abs(fit.rate - (-2.0 * lmin)) <= 0.2 * 2.0 * lmin);
        REQUIRE(fit.residual <= 0.1);
    }

    SECTION("already-converged trajectory is undetermined") {
        const auto tr = integrate(triangle_scenario(Eigen::VectorXd::Zero(3),
                                                    rftest::unit_equilateral(), 10.0, 0.02));
        REQUIRE_FALSE(fit_convergence(tr, Eigen::VectorXd::Zero(3)).determined);
    }

    SECTION("K4 decays exponentially with a clean log-linear fit") {
        rftest::Rng rng(73);
        const FormationGraph g = rftest::k4_graph();
        const Multipoint base = rftest::k4_coordinates();
        Multipoint x0 = base;
        for (int i = 0; i < 4; ++i) x0.set_point(i, x0.point(i) + rng.disk(0.1));
        Scenario sc{g, distances_from_coordinates(g, base), Eigen::VectorXd::Zero(6), x0, 40.0,
                    IntegratorSettings{}};
        sc.integrator.output_stride = 0.02;
        const auto fit = fit_convergence(integrate(sc), Eigen::VectorXd::Zero(6));
        REQUIRE(fit.determined);
        REQUIRE(fit.rate < 0.0);
        REQUIRE(fit.residual <= 0.1);
    }
}

TEST_CASE("equilibrium output estimate") {
    SECTION("zero mismatch gives zero output") {
        rftest::Rng rng(79);
        Multipoint x0 = rftest::unit_equilateral();
        for (int i = 0; i < 3; ++i) x0.set_point(i, x0.point(i) + rng.disk(0.1));
        const auto tr = integrate(triangle_scenario(Eigen::VectorXd::Zero(3), x0, 25.0, 0.02));
        double stddev = 0.0;
        const Eigen::VectorXd e0 = estimate_equilibrium_output(tr, {}, &stddev);
        REQUIRE(e0.norm() <= 1e-7);
        REQUIRE(stddev * stddev <= 1e-14);
    }

    SECTION("output scales linearly in the mismatch near zero") {
        Eigen::VectorXd mu(3);
        mu << 0.02, 0.012, 0.008;
        const auto tr1 =
            integrate(triangle_scenario(mu, rftest::unit_equilateral(), 300.0, 0.25));
        const auto tr2 =
            integrate(triangle_scenario(2.0 * mu, rftest::unit_equilateral(), 300.0, 0.25));
        const double ratio = estimate_equilibrium_output(tr2).norm()
                             / estimate_equilibrium_output(tr1).norm();
        REQUIRE(ratio == Catch::Approx(2.0).epsilon(0.25));
    }

    SECTION("non-converged input is rejected") {
        const auto tr =
            integrate(triangle_scenario(orbit_mu(), rftest::unit_equilateral(), 0.5, 0.01));
        REQUIRE_THROWS_AS(estimate_equilibrium_output(tr), std::runtime_error);
    }
}

TEST_CASE("genericity vector") {
    const FormationGraph g = triangle_graph();

    SECTION("triangle entries coincide and equal the area form") {
        rftest::Rng rng(83);
        const Multipoint x = rftest::random_multipoint(rng, 3);
        const Eigen::VectorXd w = genericity_vector(x, g);
        const double ref = wedge(x.point(1) - x.point(0), x.point(2) - x.point(0)) / 3.0;
        for (int k = 0; k < 3; ++k) REQUIRE(w(k) == Catch::Approx(ref).epsilon(1e-12));
    }

    SECTION("collinear points give the zero vector") {
        const Multipoint x = Multipoint::from_points({{0, 0}, {1, 1}, {2, 2}});
        REQUIRE(genericity_vector(x, g).norm() <= 1e-15);
    }

    SECTION("zdot vanishes on converged runs exactly when w'mu does") {
        // sum-zero mismatch on a triangle: w'mu = 0, z settles to a constant
        const auto& drift = drift_run();
        const std::size_t w0 = terminal_window_begin(drift, {});
        const Multipoint x_drift{drift.states.back()};
        const Eigen::VectorXd w_drift = genericity_vector(x_drift, g);
        REQUIRE(std::abs(w_drift.dot(drift_mu()))
                <= 1e-9 * w_drift.norm() * drift_mu().norm());
        double zdot_max = 0.0;
        for (std::size_t s = w0; s < drift.size(); ++s) {
            for (int k = 0; k < 3; ++k) {
                const Edge& e = g.edge(k);
                const Vec2 zd = drift.velocities[s].segment<2>(2 * e.head)
                                - drift.velocities[s].segment<2>(2 * e.tail);
                zdot_max = std::max(zdot_max, zd.norm());
            }
        }
        REQUIRE(zdot_max <= 1e-7);

        // generic mismatch: w'mu != 0 and z keeps moving
        const auto& orbit = orbit_run();
        const Multipoint x_orbit{orbit.states.back()};
        const Eigen::VectorXd w_orbit = genericity_vector(x_orbit, g);
        REQUIRE(std::abs(w_orbit.dot(orbit_mu()))
                > 1e-3 * w_orbit.norm() * orbit_mu().norm());
        const Edge& e0 = g.edge(0);
        const Vec2 zd = orbit.velocities.back().segment<2>(2 * e0.head)
                        - orbit.velocities.back().segment<2>(2 * e0.tail);
        REQUIRE(zd.norm() > 1e-3);
    }
}

TEST_CASE("square subsystem") {
    const FormationGraph g = triangle_graph();
    const auto& tr = orbit_run();
    const Eigen::VectorXd e_eq = estimate_equilibrium_output(tr);
    const SquareSubsystem ss = extract_square_subsystem(g, tr, e_eq);

    SECTION("reconstruction, selection and identities") {
        REQUIRE(ss.recon_residual <= 1e-6);
        REQUIRE(ss.ql_identity_error <= 1e-10);
        REQUIRE(ss.min_abs_det > 0.1);
        REQUIRE(ss.window_begin >= tr.converged_at.value());

        // the intertwining relation Q M = A Q at the equilibrium output
        const Eigen::MatrixXd m = m_matrix(g, e_eq, orbit_mu());
        const double rel = (ss.q_bar * m - ss.a_bar * ss.q_bar).norm() / (ss.q_bar * m).norm();
        REQUIRE(rel <= 1e-5);
    }

    SECTION("orbit diagnostics") {
        const auto diag = orbit_diagnostics(ss);
        const double omega = std::sqrt(ss.a_bar.determinant()
                                       - std::pow(0.5 * ss.a_bar.trace(), 2));
        REQUIRE(diag.at("ztz_rel_variation") <= 1e-6);
        REQUIRE(diag.at("skew_defect") <= 1e-6 * omega);
        REQUIRE(diag.at("a_bar_real_part") <= 1e-6 * omega);
        REQUIRE(diag.at("omega_eig_mismatch") == 0.0);
    }

    SECTION("independent oracle for omega: phase advance of one edge vector") {
        const double omega = std::sqrt(ss.a_bar.determinant()
                                       - std::pow(0.5 * ss.a_bar.trace(), 2));
        // unwrap the angle swept by z_p across the window
        double swept = 0.0;
        for (std::size_t i = 1; i < ss.z_series.size(); ++i) {
            const Vec2 a = ss.z_series[i - 1].col(0), b = ss.z_series[i].col(0);
            swept += std::atan2(wedge(a, b), a.dot(b));
        }
        const double dt = tr.times.back() - tr.times[ss.window_begin];
        REQUIRE(std::abs(swept / dt) == Catch::Approx(omega).epsilon(1e-4));
    }
}

TEST_CASE("outcome classification") {
    const FormationGraph g = triangle_graph();

    SECTION("zero mismatch is stationary") {
        rftest::Rng rng(89);
        Multipoint x0 = rftest::unit_equilateral();
        for (int i = 0; i < 3; ++i) x0.set_point(i, x0.point(i) + rng.disk(0.1));
        const auto tr = integrate(triangle_scenario(Eigen::VectorXd::Zero(3), x0, 25.0, 0.02));
        const auto rep = classify_outcome(g, tr);
        REQUIRE(rep.kind == OutcomeKind::stationary);
        REQUIRE(rep.equilibrium_output.norm() <= 1e-7);
        REQUIRE(rep.residuals.at("xdot_max") <= 1e-7);
    }

    SECTION("sum-zero mismatch drifts at the predicted common velocity") {
        const auto& tr = drift_run();
        const auto rep = classify_outcome(g, tr);
        REQUIRE(rep.kind == OutcomeKind::drift);
        REQUIRE(rep.drift_velocity.norm() > 1e-4);
        REQUIRE(rep.residuals.at("velocity_common_dev") <= 1e-7);

        // the average-position velocity is (z_1 mu_1 + z_2 mu_2 + z_3 mu_3) / 3
        const auto z = edge_vectors(g, Multipoint{tr.states.back()});
        Vec2 predicted = Vec2::Zero();
        for (int k = 0; k < 3; ++k) predicted += z[k] * drift_mu()(k);
        predicted /= 3.0;
        REQUIRE((rep.drift_velocity - predicted).norm() <= 1e-6);
    }

    SECTION("generic mismatch orbits about a common center") {
        const auto& tr = orbit_run();
        const auto rep = classify_outcome(g, tr);
        REQUIRE(rep.kind == OutcomeKind::orbit);
        REQUIRE(rep.omega > 0.0);
        REQUIRE((rep.sigma == 1 || rep.sigma == -1));
        REQUIRE(rep.residuals.at("circle_fit_max") <= 1e-5);
        REQUIRE(rep.residuals.at("center_agreement") <= 1e-5);
        REQUIRE(rep.residuals.at("e_window_dev") <= 1e-6);

        // every edge vector rotates in the same direction sigma
        const std::size_t w0 = terminal_window_begin(tr, {});
        for (int k = 0; k < 3; ++k) REQUIRE(edge_sigma(g, tr, k, w0) == rep.sigma);
    }

    SECTION("non-converged runs are undetermined with a note") {
        const auto tr =
            integrate(triangle_scenario(orbit_mu(), rftest::unit_equilateral(), 0.5, 0.01));
        const auto rep = classify_outcome(g, tr);
        REQUIRE(rep.kind == OutcomeKind::undetermined);
        REQUIRE_FALSE(rep.note.empty());
    }
}

TEST_CASE("pipeline re-integrates when the stride undersamples the period") {
    Scenario sc = triangle_scenario(orbit_mu(), rftest::unit_equilateral(), 2400.0, 50.0);
    const auto res = run_pipeline(sc);
    REQUIRE(res.report.kind == OutcomeKind::orbit);
    REQUIRE(res.reintegrations >= 1);
    const double period = 2.0 * std::numbers::pi / res.report.omega;
    const double stride = res.trajectory.times[1] - res.trajectory.times[0];
    REQUIRE(period / stride >= 20.0);
}

TEST_CASE("larger formations run the whole pipeline") {
    SECTION("K4 with generic mismatch orbits") {
        const FormationGraph k4 = rftest::k4_graph();
        const Multipoint y4 = rftest::k4_coordinates();
        Eigen::VectorXd mu(6);
        mu << 0.02, -0.01, 0.03, 0.0, 0.01, -0.02;
        Scenario sc{k4, distances_from_coordinates(k4, y4), mu, y4, 1500.0,
                    IntegratorSettings{}};
        sc.integrator.output_stride = 0.02;
        const auto res = run_pipeline(sc);
        REQUIRE(res.report.kind == OutcomeKind::orbit);
        REQUIRE(res.report.omega > 0.0);
        REQUIRE(res.report.residuals.at("circle_fit_max") <= 1e-6);
        REQUIRE(res.report.residuals.at("center_agreement") <= 1e-6);
        REQUIRE(res.report.residuals.at("recon_residual") <= 1e-6);
        REQUIRE(res.report.residuals.at("ztz_rel_variation") <= 1e-6);
    }

    SECTION("minimally rigid hexagon, rescued from a coarse caller grid") {
        // Henneberg construction: edge (1,2), then each new vertex attaches
        // to the previous two; m = 2n-3 = 9
        std::vector<Edge> edges{{0, 1}};
        for (int v = 2; v < 6; ++v) {
            edges.push_back({v - 2, v});
            edges.push_back({v - 1, v});
        }
        edges[3] = {edges[3].head, edges[3].tail};
        const FormationGraph g(6, std::move(edges));

        rftest::Rng rng(2112);
        const Multipoint y = rftest::random_multipoint(rng, 6, 1.2);
        REQUIRE(rigidity_test(g, y).is_minimally_rigid);

        Eigen::VectorXd mu(9);
        for (int k = 0; k < 9; ++k) mu(k) = 0.03 * (rng.uniform() - 0.3);
        Scenario sc{g, distances_from_coordinates(g, y), mu, y, 1500.0, IntegratorSettings{}};
        sc.integrator.output_stride = 0.5;  // too coarse for convergence detection
        const auto res = run_pipeline(sc);
        REQUIRE(res.reintegrations >= 1);
        REQUIRE(res.report.kind == OutcomeKind::orbit);
        REQUIRE(res.report.residuals.at("circle_fit_max") <= 1e-6);
        REQUIRE(res.report.residuals.at("center_agreement") <= 1e-6);
        REQUIRE(res.report.residuals.at("e_window_dev") <= 1e-6);
    }
}

TEST_CASE("mismatch sweep") {
    const Scenario base =
        triangle_scenario(Eigen::VectorXd::Zero(3), rftest::unit_equilateral(), 400.0, 0.1);

    SECTION("fixed seed reproduces the table") {
        const SweepTable a = run_sweep(base, 6, 0.05, 99);
        const SweepTable b = run_sweep(base, 6, 0.05, 99);
        REQUIRE(a.counts == b.counts);
        for (std::size_t i = 0; i < a.samples.size(); ++i) {
            REQUIRE(a.samples[i].mu == b.samples[i].mu);
            REQUIRE(a.samples[i].kind == b.samples[i].kind);
            REQUIRE(a.samples[i].omega == b.samples[i].omega);
        }
    }

    SECTION("zero norm is all stationary") {
        const SweepTable t = run_sweep(base, 3, 0.0, 99);
        REQUIRE(t.count_of(OutcomeKind::stationary) == 3);
    }
}
