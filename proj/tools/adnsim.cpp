// Command-line front end: power flow, RMS simulation, survivability
// studies, and cross-tool validation on one grid model.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "adnsim/dynamics.hpp"
#include "adnsim/montecarlo.hpp"
#include "adnsim/powerflow.hpp"
#include "adnsim/report.hpp"
#include "adnsim/survival.hpp"
#include "adnsim/svg.hpp"

namespace fs = std::filesystem;
using namespace adnsim;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAnalysis = 1;
constexpr int kExitUsage = 2;

std::string default_out_dir() {
    if (const char* env = std::getenv("ADNSIM_OUTPUT_DIR")) return env;
    return ".";
}

fs::path ensure_out_dir(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << content;
}

std::string default_curve_path(const std::string& grid_path) {
    return (fs::path(grid_path).parent_path() / "frt_curve.json").string();
}

/// Voltage-magnitude traces of the MV buses, decimated for plotting.
std::string trajectory_svg(const Grid& grid, const Trajectory& traj) {
    std::vector<svg::Series> series;
    std::size_t stride = std::max<std::size_t>(1, traj.samples.size() / 1500);
    for (const auto& id : grid.mv_bus_ids()) {
        svg::Series s;
        s.label = id;
        auto bi = static_cast<Eigen::Index>(grid.bus_index(id));
        for (std::size_t k = 0; k < traj.samples.size(); k += stride) {
            s.x.push_back(traj.samples[k].t_s);
            s.y.push_back(std::abs(traj.samples[k].voltages(bi)));
        }
        series.push_back(std::move(s));
    }
    return svg::line_chart(series, "t / s", "|u| / pu");
}

json config_echo_base(const std::string& grid_path, LoadModel model, std::uint64_t seed,
                      const StudyOptions& opt) {
    return json{{"grid", grid_path},
                {"load_model", to_string(model)},
                {"master_seed", seed},
                {"t_on_s", opt.t_on_s},
                {"workers", opt.resolved_workers()},
                {"solver",
                 {{"rtol", opt.solver.rtol},
                  {"atol", opt.solver.atol},
                  {"sample_dt", opt.solver.sample_dt},
                  {"max_step", opt.solver.max_step}}}};
}

json fault_model_json(const FaultModel& fm) {
    return json{{"duration_mean_s", fm.duration_mean_s},
                {"duration_std_s", fm.duration_std_s},
                {"r_on_lo_ohm", fm.r_on_lo_ohm},
                {"r_on_hi_ohm", fm.r_on_hi_ohm}};
}

int run_powerflow(const std::string& grid_path, const std::string& load_model,
                  double tol, const std::string& out_dir) {
    Grid grid = load_grid_file(grid_path);
    PowerFlowOptions opt;
    opt.tol = tol;
    LoadModel model = load_model_from_string(load_model);
    PowerFlowSolution sol = solve_power_flow(grid, model, {}, opt);

    fs::path out = ensure_out_dir(out_dir) / "powerflow.csv";
    std::ofstream os(out);
    write_powerflow_csv(os, grid, sol, model);

    Complex mv = transformer_mv_import_mva(grid, sol.voltages);
    std::cout << "power flow converged in " << sol.iterations
              << " iterations, residual " << sol.residual_norm << " pu\n"
              << "transformer MV-side import: P_meas = " << mv.real()
              << " MW, Q_meas = " << mv.imag() << " Mvar\n"
              << "wrote " << out.string() << "\n";
    return kExitOk;
}

int run_simulate(const std::string& scenario_path, const std::string& out_dir, bool plot) {
    Scenario sc = load_scenario_file(scenario_path);
    Trajectory traj = simulate(sc);

    fs::path out = ensure_out_dir(out_dir) / "trajectory.csv";
    std::ofstream os(out);
    write_trajectory_csv(os, *sc.grid, traj);
    std::cout << "wrote " << out.string() << " (" << traj.samples.size() << " samples)\n";

    if (plot) {
        fs::path svg_path = ensure_out_dir(out_dir) / "voltages.svg";
        write_file(svg_path, trajectory_svg(*sc.grid, traj));
        std::cout << "wrote " << svg_path.string() << "\n";
    }
    if (!traj.completed()) {
        std::cerr << "numerical failure at t = " << traj.failure_time_s << " s\n";
        return kExitAnalysis;
    }
    return kExitOk;
}

int run_survive_node(const std::string& grid_path, const std::string& bus, long samples,
                     std::uint64_t seed, const std::string& load_model,
                     const std::string& curve_path, const StudyOptions& opt,
                     const FaultModel& fm, const std::string& out_dir) {
    auto grid = std::make_shared<Grid>(load_grid_file(grid_path));
    LimitingCurve curve = load_curve_file(curve_path);
    LoadModel model = load_model_from_string(load_model);

    SingleNodeResult res = single_node_survivability(grid, bus, samples, fm, model, curve,
                                                     ControlParams{}, seed, opt);

    fs::path dir = ensure_out_dir(out_dir);
    {
        std::ofstream os(dir / "trials.csv");
        write_trials_csv(os, res.trials, /*envelope=*/false);
    }
    json summary = estimate_to_json(res.estimate);
    summary["config"] = config_echo_base(grid_path, model, seed, opt);
    summary["config"]["curve"] = curve_path;
    summary["config"]["fault_model"] = fault_model_json(fm);
    summary["base_p_meas_mw"] = res.base_p_mw;
    summary["base_q_meas_mvar"] = res.base_q_mvar;
    write_file(dir / "summary.json", summary.dump(2) + "\n");

    std::cout << "mu(" << bus << ") = " << res.estimate.mu << " +- "
              << res.estimate.ci_half_width << "  (" << res.estimate.survivors << "/"
              << res.estimate.trials << " survived)\n"
              << "wrote " << (dir / "summary.json").string() << ", "
              << (dir / "trials.csv").string() << "\n";
    return kExitOk;
}

int run_survive_all(const std::string& grid_path, long samples, std::uint64_t seed,
                    const std::string& load_model, const std::string& curve_path,
                    const StudyOptions& opt, const FaultModel& fm,
                    const std::string& out_dir, bool plot) {
    auto grid = std::make_shared<Grid>(load_grid_file(grid_path));
    LimitingCurve curve = load_curve_file(curve_path);
    LoadModel model = load_model_from_string(load_model);

    std::vector<SurvivabilityEstimate> estimates;
    for (const auto& bus : grid->mv_bus_ids()) {
        SingleNodeResult res = single_node_survivability(grid, bus, samples, fm, model,
                                                         curve, ControlParams{}, seed, opt);
        estimates.push_back(res.estimate);
        std::cout << "mu(" << bus << ") = " << res.estimate.mu << " +- "
                  << res.estimate.ci_half_width << "\n";
    }

    fs::path dir = ensure_out_dir(out_dir);
    {
        std::ofstream os(dir / "survivability.csv");
        os << "bus,load_model,trials,survivors,mu,ci_half_width\n" << std::setprecision(12);
        for (const auto& e : estimates)
            os << e.bus << ',' << to_string(e.load_model) << ',' << e.trials << ','
               << e.survivors << ',' << e.mu << ',' << e.ci_half_width << '\n';
    }
    json summary;
    summary["config"] = config_echo_base(grid_path, model, seed, opt);
    summary["config"]["curve"] = curve_path;
    summary["config"]["fault_model"] = fault_model_json(fm);
    summary["config"]["samples_per_bus"] = samples;
    for (const auto& e : estimates) summary["estimates"].push_back(estimate_to_json(e));
    write_file(dir / "summary.json", summary.dump(2) + "\n");

    if (plot) {
        std::vector<std::string> labels;
        std::vector<double> mus, cis;
        for (const auto& e : estimates) {
            labels.push_back(e.bus);
            mus.push_back(e.mu);
            cis.push_back(e.ci_half_width);
        }
        write_file(dir / "survivability.svg", svg::bar_chart(labels, mus, cis, "mu"));
    }
    std::cout << "wrote " << (dir / "survivability.csv").string() << "\n";
    return kExitOk;
}

int run_survive_envelope(const std::string& grid_path, const std::string& bus, long samples,
                         std::uint64_t seed, const std::string& load_model,
                         const std::string& curve_path, const EnvelopeOptions& opt,
                         const FaultModel& fm, const std::string& out_dir, bool plot) {
    auto grid = std::make_shared<Grid>(load_grid_file(grid_path));
    LimitingCurve curve = load_curve_file(curve_path);
    LoadModel model = load_model_from_string(load_model);

    EnvelopeResult res = envelope_study(grid, bus, samples, fm, model, curve,
                                        ControlParams{}, seed, opt);

    fs::path dir = ensure_out_dir(out_dir);
    {
        std::ofstream os(dir / "envelope.csv");
        write_envelope_csv(os, res.map);
    }
    {
        std::ofstream os(dir / "trials.csv");
        write_trials_csv(os, res.trials, /*envelope=*/true);
    }
    json summary;
    summary["fault_bus"] = bus;
    summary["samples"] = samples;
    summary["included"] = res.included_count;
    summary["base_p_meas_mw"] = res.base_p_mw;
    summary["base_q_meas_mvar"] = res.base_q_mvar;
    summary["config"] = json{{"grid", grid_path},
                             {"load_model", to_string(model)},
                             {"master_seed", seed},
                             {"curve", curve_path},
                             {"fault_model", fault_model_json(fm)},
                             {"t_step_s", opt.t_step_s},
                             {"t_on_s", opt.t_on_s},
                             {"p_half_range_mw", opt.p_half_range_mw},
                             {"q_half_range_mvar", opt.q_half_range_mvar},
                             {"filter_threshold", opt.filter_threshold},
                             {"filter_reactive_too", opt.filter_reactive_too},
                             {"cell_size", opt.cell_size},
                             {"stride", opt.stride},
                             {"min_count", opt.min_count},
                             {"workers", opt.resolved_workers()}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");

    if (plot) {
        std::vector<svg::HeatCell> cells;
        for (const auto& c : res.map.cells)
            cells.push_back({c.p_center_mw, c.q_center_mvar, c.sufficient, c.mu});
        write_file(dir / "envelope.svg",
                   svg::heatmap(cells, res.map.stride_mw, res.map.stride_mvar,
                                "P_ref / MW", "Q_ref / Mvar"));
    }
    std::cout << samples << " samples, " << res.included_count
              << " included by the feasibility filter\n"
              << "wrote " << (dir / "envelope.csv").string() << "\n";
    return kExitOk;
}

int run_validate(const std::string& grid_path, const std::string& ref_path,
                 const std::string& load_model, double tol_mag, double tol_ang) {
    Grid grid = load_grid_file(grid_path);
    std::ifstream in(ref_path);
    if (!in) {
        std::cerr << "cannot open reference file: " << ref_path << "\n";
        return kExitUsage;
    }
    auto reference = read_reference_csv(in);

    for (const auto& b : grid.buses) {
        if (!reference.count(b.id)) {
            std::cerr << "bus-set mismatch: " << b.id << " missing from reference\n";
            return kExitUsage;
        }
    }
    for (const auto& [bus, row] : reference) {
        if (!grid.has_bus(bus)) {
            std::cerr << "bus-set mismatch: " << bus << " not in grid\n";
            return kExitUsage;
        }
    }

    PowerFlowSolution sol = solve_power_flow(grid, load_model_from_string(load_model));
    bool pass = true;
    std::cout << "bus_id,dev_mag_pu,dev_angle_deg,verdict\n";
    for (const auto& b : grid.buses) {
        Complex u = sol.voltage(grid, b.id);
        const auto& ref = reference.at(b.id);
        double dmag = std::abs(std::abs(u) - ref.v_mag_pu);
        double dang = std::abs(std::arg(u) * kDegPerRad - ref.v_angle_deg);
        bool ok = dmag < tol_mag && dang < tol_ang;
        pass = pass && ok;
        std::cout << b.id << ',' << dmag << ',' << dang << ',' << (ok ? "pass" : "FAIL")
                  << "\n";
    }
    std::cout << (pass ? "validation passed" : "validation FAILED") << " (tol_mag "
              << tol_mag << " pu, tol_ang " << tol_ang << " deg)\n";
    return pass ? kExitOk : kExitAnalysis;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distribution-grid dynamics and probabilistic survivability toolkit"};
    app.require_subcommand(1);

    std::string grid_path, scenario_path, bus, curve_path, ref_path;
    std::string load_model = "pq";
    std::string out_dir = default_out_dir();
    long samples = 1000;
    std::uint64_t seed = 0;
    bool plot = false;
    double tol = 1e-8, tol_mag = 1e-4, tol_ang = 1e-3;
    StudyOptions study;
    EnvelopeOptions env;
    FaultModel fm;

    auto add_fault_model = [&](CLI::App* cmd) {
        cmd->add_option("--duration-mean", fm.duration_mean_s, "fault duration mean, s");
        cmd->add_option("--duration-std", fm.duration_std_s, "fault duration std, s");
        cmd->add_option("--r-on-lo", fm.r_on_lo_ohm, "fault resistance lower bound, ohm");
        cmd->add_option("--r-on-hi", fm.r_on_hi_ohm, "fault resistance upper bound, ohm");
    };

    auto* pf = app.add_subcommand("powerflow", "solve the steady-state power flow");
    pf->add_option("grid", grid_path, "grid JSON file")->required();
    pf->add_option("--load-model", load_model, "pq or z");
    pf->add_option("--tol", tol, "convergence tolerance, pu");
    pf->add_option("--out", out_dir, "output directory");

    auto* sim = app.add_subcommand("simulate", "run an RMS time-domain scenario");
    sim->add_option("scenario", scenario_path, "scenario JSON file")->required();
    sim->add_option("--out", out_dir, "output directory");
    sim->add_flag("--plot", plot, "write an SVG voltage chart");

    auto* node = app.add_subcommand("survive-node", "single-node survivability study");
    node->add_option("grid", grid_path)->required();
    node->add_option("--bus", bus, "faulted bus id")->required();
    node->add_option("--samples", samples, "number of Monte Carlo trials");
    node->add_option("--seed", seed, "master seed");
    node->add_option("--load-model", load_model, "pq or z");
    node->add_option("--curve", curve_path, "limiting curve JSON");
    node->add_option("--workers", study.workers, "worker threads (0 = hardware)");
    node->add_option("--t-on", study.t_on_s, "fault onset time, s");
    node->add_option("--out", out_dir, "output directory");
    add_fault_model(node);

    auto* all = app.add_subcommand("survive-all", "survivability for every MV bus");
    all->add_option("grid", grid_path)->required();
    all->add_option("--samples", samples, "trials per bus");
    all->add_option("--seed", seed, "master seed");
    all->add_option("--load-model", load_model, "pq or z");
    all->add_option("--curve", curve_path, "limiting curve JSON");
    all->add_option("--workers", study.workers, "worker threads (0 = hardware)");
    all->add_option("--t-on", study.t_on_s, "fault onset time, s");
    all->add_option("--out", out_dir, "output directory");
    all->add_flag("--plot", plot, "write an SVG bar chart");
    add_fault_model(all);

    auto* envc = app.add_subcommand("survive-envelope",
                                    "reference-envelope survivability heatmap");
    envc->add_option("grid", grid_path)->required();
    envc->add_option("--bus", bus, "faulted bus id")->required();
    envc->add_option("--samples", samples, "number of sampled set points");
    envc->add_option("--seed", seed, "master seed");
    envc->add_option("--load-model", load_model, "pq or z");
    envc->add_option("--curve", curve_path, "limiting curve JSON");
    envc->add_option("--p-range", env.p_half_range_mw, "half range around P_ref0, MW");
    envc->add_option("--q-range", env.q_half_range_mvar, "half range around Q_ref0, Mvar");
    envc->add_option("--cell", env.cell_size, "cell edge length, MW and Mvar");
    envc->add_option("--stride", env.stride, "cell lattice stride");
    envc->add_option("--min-count", env.min_count, "minimum samples per reported cell");
    envc->add_option("--filter", env.filter_threshold, "relative control error bound");
    envc->add_flag_callback("--no-q-filter",
                            [&env]() { env.filter_reactive_too = false; },
                            "check only the active-power error");
    envc->add_option("--t-step", env.t_step_s, "reference step time, s");
    envc->add_option("--t-on", env.t_on_s, "fault onset time, s");
    envc->add_option("--workers", env.workers, "worker threads (0 = hardware)");
    envc->add_option("--out", out_dir, "output directory");
    envc->add_flag("--plot", plot, "write an SVG heatmap");
    add_fault_model(envc);

    auto* val = app.add_subcommand("validate", "compare the power flow to a reference CSV");
    val->add_option("grid", grid_path)->required();
    val->add_option("--reference", ref_path, "CSV with bus_id,v_mag_pu,v_angle_deg")
        ->required();
    val->add_option("--load-model", load_model, "pq or z");
    val->add_option("--tol-mag", tol_mag, "magnitude tolerance, pu");
    val->add_option("--tol-ang", tol_ang, "angle tolerance, degrees");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (pf->parsed()) return run_powerflow(grid_path, load_model, tol, out_dir);
        if (sim->parsed()) return run_simulate(scenario_path, out_dir, plot);
        if (curve_path.empty()) curve_path = default_curve_path(grid_path);
        if (node->parsed())
            return run_survive_node(grid_path, bus, samples, seed, load_model, curve_path,
                                    study, fm, out_dir);
        if (all->parsed())
            return run_survive_all(grid_path, samples, seed, load_model, curve_path, study,
                                   fm, out_dir, plot);
        if (envc->parsed())
            return run_survive_envelope(grid_path, bus, samples, seed, load_model,
                                        curve_path, env, fm, out_dir, plot);
        if (val->parsed())
            return run_validate(grid_path, ref_path, load_model, tol_mag, tol_ang);
    } catch (const PowerFlowError& e) {
        std::cerr << "analysis failure: " << e.what() << "\n";
        return kExitAnalysis;
    } catch (const GridError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAnalysis;
    }
    return kExitUsage;
}
