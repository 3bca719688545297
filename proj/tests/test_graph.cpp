#include <catch2/catch_amalgamated.hpp>

#include "rigidform/graph.hpp"
#include "test_support.hpp"

using namespace rigidform;
using rftest::triangle_graph;

TEST_CASE("incidence transpose of the oriented triangle") {
    const FormationGraph g = triangle_graph();
    const Eigen::MatrixXd h = g.incidence_transpose();
    Eigen::MatrixXd want(3, 3);
    want << 1, -1, 0,
            0, 1, -1,
            -1, 0, 1;
    REQUIRE(h == want);
}

TEST_CASE("incidence rank is n-1 for connected graphs") {
    // path on 3 vertices
    const FormationGraph path(3, {{0, 1}, {1, 2}});
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(path.incidence_transpose());
    const auto sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > 1e-9 * sv(0)) ++rank;
    REQUIRE(rank == 2);

    rftest::Rng rng(51);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform() * 6);
        const auto g = rftest::random_connected_graph(rng, n, static_cast<int>(rng.uniform() * n));
        Eigen::JacobiSVD<Eigen::MatrixXd> s(g.incidence_transpose());
        const auto vals = s.singularValues();
        int r = 0;
        for (int i = 0; i < vals.size(); ++i)
            if (vals(i) > 1e-9 * vals(0)) ++r;
        REQUIRE(r == n - 1);
    }
}

TEST_CASE("graph validation") {
    REQUIRE_THROWS_AS(FormationGraph(2, {{0, 1}}), std::invalid_argument);
    REQUIRE_THROWS_AS(FormationGraph(3, {{0, 0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(FormationGraph(3, {{0, 1}, {1, 0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(FormationGraph(4, {{0, 1}, {2, 3}}), std::invalid_argument);  // disconnected
    REQUIRE_THROWS_AS(FormationGraph(3, {{0, 3}}), std::invalid_argument);
    REQUIRE_NOTHROW(FormationGraph(3, {{0, 1}, {1, 2}}));
}

TEST_CASE("edge vectors") {
    const FormationGraph g = triangle_graph();
    rftest::Rng rng(7);

    SECTION("coincident endpoints give the zero vector") {
        const Multipoint x = Multipoint::from_points({{1.0, 2.0}, {1.0, 2.0}, {0.0, 0.0}});
        REQUIRE(edge_vectors(g, x)[0] == Vec2(0.0, 0.0));
    }

    SECTION("translation invariance") {
        const Multipoint x = rftest::random_multipoint(rng, 3);
        const Vec2 t{0.37, -1.2};
        const Multipoint xt = rftest::rigid_motion(x, 0.0, t);
        const auto za = edge_vectors(g, x);
        const auto zb = edge_vectors(g, xt);
        for (int k = 0; k < 3; ++k) REQUIRE((za[k] - zb[k]).norm() <= 1e-12);
    }

    SECTION("rotation equivariance") {
        const Multipoint x = rftest::random_multipoint(rng, 3);
        const double th = 1.234;
        const auto za = edge_vectors(g, x);
        const auto zb = edge_vectors(g, rftest::rigid_motion(x, th, Vec2::Zero()));
        for (int k = 0; k < 3; ++k) REQUIRE((rotation(th) * za[k] - zb[k]).norm() <= 1e-12);
    }

    SECTION("cycle sum vanishes under the cyclic orientation") {
        for (int trial = 0; trial < 10; ++trial) {
            const Multipoint x = rftest::random_multipoint(rng, 3);
            const auto z = edge_vectors(g, x);
            REQUIRE((z[0] + z[1] + z[2]).norm() <= 1e-12);
        }
    }

    SECTION("cycle sums are exact on integer coordinates") {
        const Multipoint x = Multipoint::from_points({{3, -7}, {11, 2}, {-5, 9}});
        const auto z = edge_vectors(g, x);
        REQUIRE(z[0] + z[1] + z[2] == Vec2(0, 0));

        // K4 cycle 1 -> 2 -> 4 -> 1 with incidence signs
        const FormationGraph k4 = rftest::k4_graph();
        const Multipoint y = Multipoint::from_points({{0, 0}, {4, 1}, {2, 6}, {-3, 5}});
        const auto zk = edge_vectors(k4, y);
        REQUIRE(zk[0] + zk[3] - zk[2] == Vec2(0, 0));
    }

    SECTION("dimension mismatch") {
        REQUIRE_THROWS_AS(edge_vectors(g, rftest::random_multipoint(rng, 4)),
                          std::invalid_argument);
    }
}

TEST_CASE("neighbor split") {
    SECTION("single oriented edge") {
        const FormationGraph g(3, {{0, 1}, {1, 2}});
        const auto s = g.neighbor_split(0);
        REQUIRE(s.tail_edges == std::vector<int>{0});
        REQUIRE(s.head_edges.empty());
    }

    SECTION("cyclic triangle: one head edge and one tail edge per vertex") {
        const FormationGraph g = triangle_graph();
        for (int i = 0; i < 3; ++i) {
            const auto s = g.neighbor_split(i);
            REQUIRE(s.head_edges.size() == 1);
            REQUIRE(s.tail_edges.size() == 1);
        }
    }

    SECTION("K4 has degree 3 at every vertex") {
        const FormationGraph g = rftest::k4_graph();
        for (int i = 0; i < 4; ++i) {
            const auto s = g.neighbor_split(i);
            REQUIRE(s.head_edges.size() + s.tail_edges.size() == 3);
        }
    }

    SECTION("index out of range") {
        REQUIRE_THROWS_AS(triangle_graph().neighbor_split(3), std::out_of_range);
    }
}

TEST_CASE("edge label lookup") {
    const FormationGraph g = triangle_graph();
    REQUIRE(g.edge_between(0, 1).value() == 0);
    REQUIRE(g.edge_between(1, 0).value() == 0);
    REQUIRE(g.edge_between(2, 0).value() == 2);
    const FormationGraph path(3, {{0, 1}, {1, 2}});
    REQUIRE_FALSE(path.edge_between(0, 2).has_value());
}

TEST_CASE("multipoint basics") {
    REQUIRE_THROWS_AS(Multipoint(Eigen::VectorXd::Zero(5)), std::invalid_argument);
    const Multipoint x = Multipoint::from_points({{0, 0}, {2, 0}, {1, 3}});
    REQUIRE(x.count() == 3);
    REQUIRE(x.centroid() == Vec2(1.0, 1.0));
}
