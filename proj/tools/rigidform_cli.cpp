// rigidform command-line front end: scenario-driven simulation, rigidity
// checks, and trajectory analysis. Outputs are plain CSV/JSON for external
// plotting. Exit codes: 0 success, 1 domain failure (non-rigid,
// non-convergent), 2 I/O or schema error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rigidform/analysis.hpp"
#include "rigidform/random.hpp"
#include "rigidform/scenario_io.hpp"

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("RIGIDFORM_LOG");
    if (!env) return LogLevel::info;
    const std::string v(env);
    if (v == "quiet") return LogLevel::quiet;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
}

void log(LogLevel at, const std::string& msg) {
    if (log_level() >= at) std::cerr << "rigidform: " << msg << '\n';
}

std::filesystem::path resolve(const std::string& out_dir, const std::string& rel) {
    const std::filesystem::path p(rel);
    return p.is_absolute() || out_dir.empty() ? p : std::filesystem::path(out_dir) / p;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw rigidform::ScenarioError("cannot open output file " + path.string());
    os << contents;
}

const char* status_name(rigidform::IntegrationStatus st) {
    using rigidform::IntegrationStatus;
    switch (st) {
        case IntegrationStatus::completed: return "completed";
        case IntegrationStatus::step_underflow: return "step_underflow";
        case IntegrationStatus::non_finite: return "non_finite";
        default: return "step_limit";
    }
}

int cmd_rigidity(const std::string& scenario_path) {
    const rigidform::ScenarioFile sf = rigidform::load_scenario(scenario_path);
    const auto& g = sf.scenario.graph;
    const auto& x0 = sf.scenario.initial_state;

    const rigidform::RigidityReport rep = rigidform::rigidity_test(g, x0);
    nlohmann::json j = rigidform::to_json(rep);

    const auto align = rigidform::unaligned_test(x0);
    j["unaligned"] = align.unaligned;
    if (!align.unaligned)
        j["offending_quadruple"] = {align.offending[0] + 1, align.offending[1] + 1,
                                    align.offending[2] + 1, align.offending[3] + 1};
    if (const auto pair = rigidform::independent_edge_pair(g, x0)) {
        j["independent_edge_pair"] = {pair->p + 1, pair->q + 1};
        j["independent_edge_pair_wedge"] = pair->wedge_value;
    } else {
        j["independent_edge_pair"] = nullptr;
    }
    std::cout << j.dump(2) << '\n';
    return rep.is_infinitesimally_rigid ? 0 : 1;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir) {
    const rigidform::ScenarioFile sf = rigidform::load_scenario(scenario_path);
    rigidform::AnalysisOptions opts;
    auto result = rigidform::run_pipeline(sf.scenario, opts);
    if (result.reintegrations > 0)
        log(LogLevel::info, "re-integrated with finer stride to resolve the orbit period");

    {
        std::ostringstream csv;
        rigidform::write_trajectory_csv(csv, result.trajectory);
        write_file(resolve(out_dir, sf.output.trajectory_path), csv.str());
    }

    nlohmann::json jrep = rigidform::to_json(result.report);
    jrep["integration_status"] = status_name(result.trajectory.status);
    if (sf.seed) jrep["seed"] = *sf.seed;
    write_file(resolve(out_dir, sf.output.report_path), jrep.dump(2) + "\n");

    if (result.report.kind == rigidform::OutcomeKind::orbit) {
        opts.fit_floor = sf.scenario.integrator.atol;
        const auto ss = rigidform::extract_square_subsystem(
            sf.scenario.graph, result.trajectory, result.report.equilibrium_output, opts);
        std::ostringstream csv;
        rigidform::write_orbit_residuals_csv(csv, sf.scenario.graph, result.trajectory,
                                             result.report, ss);
        write_file(resolve(out_dir, sf.output.residuals_path), csv.str());
    }

    std::ostringstream summary;
    summary << "kind=" << rigidform::to_string(result.report.kind);
    if (result.report.kind == rigidform::OutcomeKind::orbit)
        summary << " omega=" << result.report.omega << " sigma=" << result.report.sigma;
    if (result.report.kind == rigidform::OutcomeKind::drift)
        summary << " drift_speed=" << result.report.drift_velocity.norm();
    if (result.report.convergence_rate)
        summary << " rate=" << *result.report.convergence_rate;
    std::cout << summary.str() << '\n';

    const bool ok = result.trajectory.status == rigidform::IntegrationStatus::completed
                    && result.report.kind != rigidform::OutcomeKind::undetermined;
    return ok ? 0 : 1;
}

int cmd_sweep(const std::string& scenario_path, const std::string& out_dir, int count,
              double norm, std::uint64_t seed, bool seed_given) {
    const rigidform::ScenarioFile sf = rigidform::load_scenario(scenario_path);
    if (!seed_given && sf.seed) seed = *sf.seed;

    const rigidform::SweepTable table = rigidform::run_sweep(sf.scenario, count, norm, seed);

    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < table.samples.size(); ++i) {
        const auto& sample = table.samples[i];
        nlohmann::json js;
        js["index"] = i;
        js["mu"] = std::vector<double>(sample.mu.data(), sample.mu.data() + sample.mu.size());
        js["kind"] = rigidform::to_string(sample.kind);
        if (sample.kind == rigidform::OutcomeKind::orbit) js["omega"] = sample.omega;
        if (!sample.error.empty()) js["error"] = sample.error;
        log(LogLevel::debug,
            "sweep sample " + std::to_string(i) + ": " + rigidform::to_string(sample.kind));
        samples.push_back(std::move(js));
    }

    nlohmann::json j;
    j["seed"] = seed;
    j["count"] = count;
    j["norm"] = norm;
    j["counts"] = table.counts;
    j["samples"] = std::move(samples);
    const std::string text = j.dump(2) + "\n";
    std::cout << text;
    if (!out_dir.empty()) write_file(resolve(out_dir, "sweep.json"), text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"planar rigid-formation simulation and analysis"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    int count = 50;
    double norm = 0.05;
    std::uint64_t seed = 0;

    auto* rigidity = app.add_subcommand("rigidity", "rigidity report for the initial formation");
    rigidity->add_option("--scenario", scenario_path, "scenario JSON path")->required();

    auto* simulate = app.add_subcommand("simulate", "integrate and classify a scenario");
    simulate->add_option("--scenario", scenario_path, "scenario JSON path")->required();
    simulate->add_option("--out", out_dir, "output directory for CSV/JSON artifacts");

    auto* sweep = app.add_subcommand("sweep", "classify random mismatch samples");
    sweep->add_option("--scenario", scenario_path, "scenario JSON path")->required();
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--count", count, "number of mismatch samples");
    sweep->add_option("--norm", norm, "norm of each mismatch sample");
    auto* seed_opt = sweep->add_option("--seed", seed, "seed for the sample generator");

    CLI11_PARSE(app, argc, argv);

    try {
        if (rigidity->parsed()) return cmd_rigidity(scenario_path);
        if (simulate->parsed()) return cmd_simulate(scenario_path, out_dir);
        return cmd_sweep(scenario_path, out_dir, count, norm, seed, seed_opt->count() > 0);
    } catch (const rigidform::ScenarioError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
}
