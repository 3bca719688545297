#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rigidform/analysis.hpp"
#include "rigidform/dynamics.hpp"
#include "rigidform/random.hpp"
#include "rigidform/rigidity.hpp"

namespace rigidform {

/// Scenario-file or schema problem; the CLI maps it to exit code 2.
struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OutputConfig {
    std::string trajectory_path = "trajectory.csv";
    std::string report_path = "report.json";
    std::string residuals_path = "orbit_residuals.csv";
};

/// A parsed scenario file: the simulation inputs plus output configuration.
struct ScenarioFile {
    Scenario scenario;
    OutputConfig output;
    std::optional<std::uint64_t> seed;  // top-level seed (sweeps, perturbations)
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key,
                                     const char* where) {
    if (!j.contains(key))
        throw ScenarioError(std::string("scenario: missing key '") + key + "' in " + where);
    return j.at(key);
}

inline std::vector<Vec2> parse_points(const nlohmann::json& arr, const char* where) {
    if (!arr.is_array() || arr.empty())
        throw ScenarioError(std::string("scenario: ") + where + " must be a non-empty array");
    std::vector<Vec2> pts;
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw ScenarioError(std::string("scenario: ") + where
                                + " entries must be [x, y] pairs");
        pts.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    return pts;
}

inline Eigen::VectorXd parse_reals(const nlohmann::json& arr, const char* where) {
    if (!arr.is_array())
        throw ScenarioError(std::string("scenario: ") + where + " must be an array");
    Eigen::VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number())
            throw ScenarioError(std::string("scenario: ") + where + " entries must be numbers");
        v(static_cast<int>(i)) = arr[i].get<double>();
    }
    return v;
}

}  // namespace detail

/// Parses and validates a scenario JSON document. Vertex indices in the file
/// are 1-based; everything in memory is 0-based.
inline ScenarioFile parse_scenario(const nlohmann::json& j) try {
    using detail::require;

    const auto& jg = require(j, "graph", "document");
    const int n = require(jg, "n", "graph").get<int>();
    std::vector<Edge> edges;
    for (const auto& je : require(jg, "edges", "graph")) {
        if (!je.is_array() || je.size() != 2)
            throw ScenarioError("scenario: graph.edges entries must be [tail, head]");
        const int tail = je[0].get<int>(), head = je[1].get<int>();
        if (tail < 1 || tail > n || head < 1 || head > n)
            throw ScenarioError("scenario: edge vertex out of range (vertices are 1-based)");
        edges.push_back({tail - 1, head - 1});
    }

    std::optional<FormationGraph> graph;
    try {
        graph.emplace(n, std::move(edges));
    } catch (const std::invalid_argument& ex) {
        throw ScenarioError(std::string("scenario: ") + ex.what());
    }
    const int m = graph->edge_count();

    std::optional<std::uint64_t> top_seed;
    if (j.contains("seed")) top_seed = j.at("seed").get<std::uint64_t>();

    // initial state, possibly a seeded perturbation of a base realization
    const auto& ji = require(j, "initial", "document");
    std::vector<Vec2> base;
    double noise_radius = 0.0;
    std::optional<std::uint64_t> noise_seed;
    bool base_is_triangle = false;
    if (ji.contains("coordinates")) {
        base = detail::parse_points(ji.at("coordinates"), "initial.coordinates");
    } else if (ji.contains("perturbed_realization")) {
        const auto& jp = ji.at("perturbed_realization");
        const auto& jb = require(jp, "base", "initial.perturbed_realization");
        if (jb.is_string() && jb.get<std::string>() == "triangle") base_is_triangle = true;
        else base = detail::parse_points(jb, "initial.perturbed_realization.base");
        noise_radius = require(jp, "noise_radius", "initial.perturbed_realization").get<double>();
        if (jp.contains("seed")) noise_seed = jp.at("seed").get<std::uint64_t>();
        else if (top_seed) noise_seed = top_seed;
        else throw ScenarioError("scenario: perturbed_realization needs a seed");
    } else {
        throw ScenarioError("scenario: initial must give coordinates or perturbed_realization");
    }

    // distances: explicit, or derived from the base coordinates
    Eigen::VectorXd d;
    const auto& jd = require(j, "distances", "document");
    const bool from_coords = jd.is_string() && jd.get<std::string>() == "from_coordinates";
    if (from_coords) {
        if (base.empty())
            throw ScenarioError("scenario: distances=from_coordinates needs explicit coordinates");
        d = distances_from_coordinates(*graph, Multipoint::from_points(base));
    } else {
        d = detail::parse_reals(jd, "distances");
    }
    if (d.size() != m) throw ScenarioError("scenario: distances must have one entry per edge");
    if ((d.array() <= 0.0).any()) throw ScenarioError("scenario: distances must be positive");

    if (base_is_triangle) {
        if (m != 3 || n != 3)
            throw ScenarioError("scenario: base=triangle needs the 3-vertex triangle graph");
        const Multipoint t = triangle_realization(d(0), d(1), d(2));
        // triangle_realization places vertices for the cyclic edge order
        // (2->1),(3->2),(1->3); map side lengths onto this scenario's edges
        for (int k = 0; k < 3; ++k) {
            const Edge& e = graph->edge(k);
            const double len = (t.point(e.head) - t.point(e.tail)).norm();
            if (std::abs(len - d(k)) > 1e-9 * std::max(1.0, d(k)))
                throw ScenarioError("scenario: base=triangle requires edge k to join vertices "
                                    "{1,2},{2,3},{3,1} in order");
        }
        base = {t.point(0), t.point(1), t.point(2)};
    }
    if (static_cast<int>(base.size()) != n)
        throw ScenarioError("scenario: initial coordinates must list one [x, y] per vertex");

    Multipoint x0 = Multipoint::from_points(base);
    if (noise_seed) {
        Rng rng(*noise_seed);
        for (int i = 0; i < n; ++i) x0.set_point(i, x0.point(i) + rng.disk(noise_radius));
    }

    // mismatch: explicit vector, distance-pair form, or zero when omitted
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
    if (j.contains("mismatch")) {
        const auto& jm = j.at("mismatch");
        if (jm.is_array()) {
            mu = detail::parse_reals(jm, "mismatch");
        } else if (jm.is_object()) {
            const Eigen::VectorXd dh = detail::parse_reals(
                require(jm, "head_distances", "mismatch"), "mismatch.head_distances");
            const Eigen::VectorXd dt = detail::parse_reals(
                require(jm, "tail_distances", "mismatch"), "mismatch.tail_distances");
            if (dh.size() != m || dt.size() != m)
                throw ScenarioError("scenario: mismatch distance vectors must have m entries");
            mu = mismatch_from_distance_pairs(*graph, dh, dt);
        } else {
            throw ScenarioError("scenario: mismatch must be an array or distance-pair object");
        }
        if (mu.size() != m) throw ScenarioError("scenario: mismatch must have one entry per edge");
    }

    ScenarioFile out{Scenario{std::move(*graph), std::move(d), std::move(mu), std::move(x0),
                              require(j, "horizon", "document").get<double>(),
                              IntegratorSettings{}},
                     OutputConfig{}, top_seed};

    if (j.contains("integrator")) {
        const auto& jint = j.at("integrator");
        if (jint.contains("rtol")) out.scenario.integrator.rtol = jint.at("rtol").get<double>();
        if (jint.contains("atol")) out.scenario.integrator.atol = jint.at("atol").get<double>();
    }
    const auto& jo = require(j, "output", "document");
    out.scenario.integrator.output_stride = require(jo, "stride", "output").get<double>();
    if (jo.contains("paths")) {
        const auto& jp = jo.at("paths");
        if (jp.contains("trajectory")) out.output.trajectory_path = jp.at("trajectory");
        if (jp.contains("report")) out.output.report_path = jp.at("report");
        if (jp.contains("residuals")) out.output.residuals_path = jp.at("residuals");
    }

    try {
        out.scenario.validate();
    } catch (const std::invalid_argument& ex) {
        throw ScenarioError(std::string("scenario: ") + ex.what());
    }
    return out;
} catch (const nlohmann::json::exception& ex) {
    throw ScenarioError(std::string("scenario: malformed value: ") + ex.what());
}

inline ScenarioFile load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("scenario: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ScenarioError("scenario: invalid JSON in " + path + ": " + ex.what());
    }
    return parse_scenario(j);
}

inline nlohmann::json to_json(const RigidityReport& rep) {
    nlohmann::json j;
    j["rank"] = rep.rank;
    j["is_infinitesimally_rigid"] = rep.is_infinitesimally_rigid;
    j["is_minimally_rigid"] = rep.is_minimally_rigid;
    nlohmann::json kept = nlohmann::json::array();
    for (int k : rep.kept_edges) kept.push_back(k + 1);  // 1-based labels on the wire
    j["kept_edges"] = kept;
    j["singular_values"] = rep.singular_values;
    return j;
}

inline nlohmann::json to_json(const OutcomeReport& rep) {
    nlohmann::json j;
    j["kind"] = to_string(rep.kind);
    j["equilibrium_output"] = std::vector<double>(
        rep.equilibrium_output.data(), rep.equilibrium_output.data() + rep.equilibrium_output.size());
    j["equilibrium_output_std"] = rep.equilibrium_output_std;
    if (rep.convergence_rate) {
        j["convergence_rate"] = *rep.convergence_rate;
        j["convergence_fit_residual"] = rep.convergence_fit_residual;
    } else {
        j["convergence_rate"] = nullptr;
    }
    if (rep.kind == OutcomeKind::drift)
        j["drift_velocity"] = {rep.drift_velocity.x(), rep.drift_velocity.y()};
    if (rep.kind == OutcomeKind::orbit) {
        j["omega"] = rep.omega;
        j["sigma"] = rep.sigma;
        j["center"] = {rep.center.x(), rep.center.y()};
    }
    j["residuals"] = rep.residuals;
    if (!rep.note.empty()) j["note"] = rep.note;
    return j;
}

namespace detail {
inline void append_g17(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}
}  // namespace detail

/// Trajectory CSV: header `t,x1x,x1y,...,e1,...,em`, 17 significant digits so
/// that reloading reproduces the stored doubles bit-faithfully.
inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& tr) {
    if (tr.times.empty()) return;
    const int n = static_cast<int>(tr.states.front().size()) / 2;
    const int m = static_cast<int>(tr.edge_errors.front().size());
    std::string line = "t";
    for (int i = 1; i <= n; ++i) {
        line += ",x" + std::to_string(i) + "x";
        line += ",x" + std::to_string(i) + "y";
    }
    for (int k = 1; k <= m; ++k) line += ",e" + std::to_string(k);
    os << line << '\n';
    for (std::size_t s = 0; s < tr.size(); ++s) {
        line.clear();
        detail::append_g17(line, tr.times[s]);
        for (int i = 0; i < 2 * n; ++i) {
            line += ',';
            detail::append_g17(line, tr.states[s](i));
        }
        for (int k = 0; k < m; ++k) {
            line += ',';
            detail::append_g17(line, tr.edge_errors[s](k));
        }
        os << line << '\n';
    }
}

struct TrajectoryCsv {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> edge_errors;
};

inline TrajectoryCsv read_trajectory_csv(std::istream& is) {
    TrajectoryCsv out;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("trajectory csv: empty stream");
    int n = 0, m = 0;
    {
        std::stringstream hs(line);
        std::string tok;
        while (std::getline(hs, tok, ',')) {
            if (tok.size() > 1 && tok[0] == 'x') ++n;
            if (tok.size() > 1 && tok[0] == 'e') ++m;
        }
        n /= 2;
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
        if (static_cast<int>(vals.size()) != 1 + 2 * n + m)
            throw std::runtime_error("trajectory csv: malformed row");
        out.times.push_back(vals[0]);
        out.states.emplace_back(Eigen::Map<Eigen::VectorXd>(vals.data() + 1, 2 * n));
        out.edge_errors.emplace_back(Eigen::Map<Eigen::VectorXd>(vals.data() + 1 + 2 * n, m));
    }
    return out;
}

/// Companion per-sample residual CSV for orbit runs (plotting aid).
inline void write_orbit_residuals_csv(std::ostream& os, const FormationGraph& g,
                                      const TrajectoryRecord& tr, const OutcomeReport& rep,
                                      const SquareSubsystem& ss) {
    os << "t,abs_det_z,ztz_rel_dev,recon_rel,radius_dev_max\n";
    Mat2 mean = Mat2::Zero();
    for (const Mat2& zm : ss.z_series) mean += zm.transpose() * zm;
    mean /= static_cast<double>(ss.z_series.size());

    const int nv = g.vertex_count();
    std::vector<double> rmean(nv, 0.0);
    const std::size_t w0 = ss.window_begin;
    for (int i = 0; i < nv; ++i) {
        for (std::size_t s = w0; s < tr.size(); ++s)
            rmean[i] += (tr.states[s].segment<2>(2 * i) - rep.center).norm();
        rmean[i] /= static_cast<double>(tr.size() - w0);
    }
    std::string line;
    for (std::size_t i = 0; i < ss.z_series.size(); ++i) {
        const std::size_t s = w0 + i;
        const auto z = edge_vectors(g, Multipoint{tr.states[s]});
        Eigen::MatrixXd zf(2, g.edge_count());
        for (int k = 0; k < g.edge_count(); ++k) zf.col(k) = z[k];
        double rdev = 0.0;
        for (int iv = 0; iv < nv; ++iv)
            rdev = std::max(rdev, std::abs((tr.states[s].segment<2>(2 * iv) - rep.center).norm()
                                           - rmean[iv]));
        line.clear();
        detail::append_g17(line, tr.times[s]);
        line += ',';
        detail::append_g17(line, std::abs(ss.z_series[i].determinant()));
        line += ',';
        detail::append_g17(line, (ss.z_series[i].transpose() * ss.z_series[i] - mean).norm()
                                     / mean.norm());
        line += ',';
        detail::append_g17(line, (zf - ss.z_series[i] * ss.q_bar).norm() / zf.norm());
        line += ',';
        detail::append_g17(line, rdev);
        os << line << '\n';
    }
}

}  // namespace rigidform
