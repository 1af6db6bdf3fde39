#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include "adnsim/dynamics.hpp"
#include "adnsim/survival.hpp"

namespace adnsim {

// ---------------------------------------------------------------------------
// Deterministic per-trial randomness
// ---------------------------------------------------------------------------

/// splitmix64 finalizer; decorrelates consecutive counter values.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-based seeding: the engine for a trial depends only on
/// (master_seed, trial_index), never on scheduling or worker count.
inline std::mt19937_64 trial_rng(std::uint64_t master_seed, std::uint64_t trial_index) {
    return std::mt19937_64(mix64(master_seed + 0x9E3779B97F4A7C15ULL * (trial_index + 1)));
}

/// Run trial(0..n-1) on a pool of workers. Each call must write only to its
/// own slot; results are then independent of the execution order.
inline void run_trials(long n, int workers, const std::function<void(long)>& trial) {
    if (workers <= 1 || n <= 1) {
        for (long i = 0; i < n; ++i) trial(i);
        return;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    int count = std::min<long>(workers, n);
    pool.reserve(count);
    for (int w = 0; w < count; ++w)
        pool.emplace_back([&] {
            for (long i = next.fetch_add(1); i < n; i = next.fetch_add(1)) trial(i);
        });
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Fault ensemble
// ---------------------------------------------------------------------------

struct FaultModel {
    double duration_mean_s = 0.150;
    double duration_std_s = 0.010;
    double r_on_lo_ohm = 3.0;
    double r_on_hi_ohm = 10.0;
    double truncation_sigmas = 5.0;  // duration truncated to mean +- this many std
    double duration_floor_s = 1e-3;

    void validate() const {
        if (duration_std_s <= 0.0) throw std::invalid_argument("duration_std must be positive");
        if (!(0.0 < r_on_lo_ohm && r_on_lo_ohm < r_on_hi_ohm))
            throw std::invalid_argument("fault resistance range must satisfy 0 < lo < hi");
    }
};

/// Draw one short-circuit: normal duration (truncated, floored) and uniform
/// resistance. Draw order is part of the reproducibility contract.
inline FaultSpec sample_fault(std::mt19937_64& rng, const FaultModel& model,
                              const std::string& bus, double t_on_s) {
    model.validate();
    std::normal_distribution<double> duration(model.duration_mean_s, model.duration_std_s);
    std::uniform_real_distribution<double> resistance(model.r_on_lo_ohm, model.r_on_hi_ohm);

    double lo = model.duration_mean_s - model.truncation_sigmas * model.duration_std_s;
    double hi = model.duration_mean_s + model.truncation_sigmas * model.duration_std_s;
    double d = duration(rng);
    while (d < lo || d > hi) d = duration(rng);
    d = std::max(d, model.duration_floor_s);

    FaultSpec f;
    f.bus = bus;
    f.duration_s = d;
    f.r_on_ohm = resistance(rng);
    f.t_on_s = t_on_s;
    return f;
}

// ---------------------------------------------------------------------------
// Study results
// ---------------------------------------------------------------------------

struct SurvivabilityEstimate {
    std::string bus;
    long survivors = 0;  // T_i
    long trials = 0;     // N
    double mu = 0.0;
    double ci_half_width = 0.0;  // 1/(2 sqrt(N))
    LoadModel load_model = LoadModel::ConstantPQ;
    std::uint64_t master_seed = 0;
};

struct TrialRecord {
    long index = 0;
    double p_ref_mw = 0.0;   // envelope studies only
    double q_ref_mvar = 0.0;
    double r_on_ohm = 0.0;
    double duration_s = 0.0;
    bool included = true;    // envelope feasibility filter
    bool survived = false;
    bool numerical_failure = false;
    std::string failure_bus;
    double failure_t_s = 0.0;
};

struct SingleNodeResult {
    SurvivabilityEstimate estimate;
    std::vector<TrialRecord> trials;
    double base_p_mw = 0.0;
    double base_q_mvar = 0.0;
};

struct StudyOptions {
    double t_on_s = 0.5;  // fault onset, applied after equilibrium settling
    int workers = 0;      // 0 -> hardware concurrency
    SolverSettings solver;

    [[nodiscard]] int resolved_workers() const {
        if (workers > 0) return workers;
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }
};

namespace detail {

/// One fault trial from the shared equilibrium: simulate with streaming
/// survival checking, aborting as soon as the verdict is decided.
inline void run_fault_trial(const Scenario& scenario, const FaultSpec& fault,
                            const LimitingCurve& curve, TrialRecord& rec) {
    const Grid& grid = *scenario.grid;
    SurvivalMonitor monitor(grid, fault, curve);
    double end_time = 0.0;
    auto outcome = simulate_with_observer(
        scenario, [&](double t, const Eigen::VectorXd&, const Eigen::VectorXcd& u, double,
                      double) {
            end_time = t;
            return monitor.feed(t, u);
        });

    SurvivalVerdict verdict = monitor.verdict(outcome.status, end_time);
    rec.r_on_ohm = fault.r_on_ohm;
    rec.duration_s = fault.duration_s;
    rec.survived = verdict.survived();
    rec.numerical_failure = outcome.status == TerminationStatus::NumericalFailure;
    if (rec.numerical_failure) {
        rec.failure_t_s = outcome.failure_time_s;
    } else if (verdict.first_violation) {
        rec.failure_bus = verdict.first_violation->bus;
        rec.failure_t_s = verdict.first_violation->t_s;
    }
}

}  // namespace detail

/// Single-node survivability (spec operation): N short-circuit trials at
/// one bus from the equilibrium base point.
inline SingleNodeResult single_node_survivability(std::shared_ptr<const Grid> grid,
                                                  const std::string& bus, long n_trials,
                                                  const FaultModel& fault_model,
                                                  LoadModel load_model,
                                                  const LimitingCurve& curve,
                                                  const ControlParams& params,
                                                  std::uint64_t master_seed,
                                                  const StudyOptions& opt = {}) {
    if (n_trials < 1) throw std::invalid_argument("need at least one trial");
    fault_model.validate();
    (void)grid->bus_index(bus);

    // Base operating point: measured flow of this load model; throws on
    // power-flow failure.
    PowerFlowOptions pf_opt;
    pf_opt.tol = 1e-11;
    PowerFlowSolution pf = solve_power_flow(*grid, load_model, {}, pf_opt);
    Complex base = transformer_mv_import_mva(*grid, pf.voltages);

    Scenario base_scenario;
    base_scenario.grid = std::move(grid);
    base_scenario.load_model = load_model;
    base_scenario.control = params;
    base_scenario.references = ReferenceSchedule({{0.0, base.real(), base.imag()}});
    base_scenario.t_end = opt.t_on_s + curve.horizon_s();
    base_scenario.solver = opt.solver;

    SingleNodeResult result;
    result.base_p_mw = base.real();
    result.base_q_mvar = base.imag();
    result.trials.resize(static_cast<std::size_t>(n_trials));

    run_trials(n_trials, opt.resolved_workers(), [&](long i) {
        TrialRecord& rec = result.trials[static_cast<std::size_t>(i)];
        rec.index = i;
        std::mt19937_64 rng = trial_rng(master_seed, static_cast<std::uint64_t>(i));
        FaultSpec fault = sample_fault(rng, fault_model, bus, opt.t_on_s);
        Scenario sc = base_scenario;
        sc.faults = {fault};
        detail::run_fault_trial(sc, fault, curve, rec);
    });

    long survivors = 0;
    for (const auto& r : result.trials) survivors += r.survived ? 1 : 0;
    result.estimate.bus = bus;
    result.estimate.survivors = survivors;
    result.estimate.trials = n_trials;
    result.estimate.mu = static_cast<double>(survivors) / static_cast<double>(n_trials);
    result.estimate.ci_half_width = 1.0 / (2.0 * std::sqrt(static_cast<double>(n_trials)));
    result.estimate.load_model = load_model;
    result.estimate.master_seed = master_seed;
    return result;
}

// ---------------------------------------------------------------------------
// Envelope study
// ---------------------------------------------------------------------------

struct PqSample {
    double p_mw = 0.0;
    double q_mvar = 0.0;
    bool survived = false;
};

struct EnvelopeCell {
    double p_center_mw = 0.0;
    double q_center_mvar = 0.0;
    long count = 0;
    long survivors = 0;
    bool sufficient = false;
    double mu = 0.0;  // valid when sufficient
};

struct EnvelopeMap {
    std::vector<EnvelopeCell> cells;  // row-major: q outer, p inner
    long n_p = 0;
    long n_q = 0;
    double cell_size_mw = 0.5;
    double cell_size_mvar = 0.5;
    double stride_mw = 0.25;
    double stride_mvar = 0.25;
    long min_count = 100;
};

/// Aggregate samples into overlapping square cells on a stride lattice
/// anchored at (p0, q0) (spec operation).
inline EnvelopeMap cluster_cells(std::span<const PqSample> samples, double p0, double q0,
                                 double p_half_range, double q_half_range, double cell_size,
                                 double stride, long min_count) {
    if (cell_size <= 0.0) throw std::invalid_argument("cell_size must be positive");
    if (!(0.0 < stride && stride <= cell_size))
        throw std::invalid_argument("stride must satisfy 0 < stride <= cell_size");
    if (min_count < 1) throw std::invalid_argument("min_count must be at least 1");

    // Lattice of cell centers inside the sampling box; a collapsed box
    // degenerates to the single cell at the base point.
    const long kp = static_cast<long>(std::floor(p_half_range / stride + 1e-9));
    const long kq = static_cast<long>(std::floor(q_half_range / stride + 1e-9));

    EnvelopeMap map;
    map.n_p = 2 * kp + 1;
    map.n_q = 2 * kq + 1;
    map.cell_size_mw = map.cell_size_mvar = cell_size;
    map.stride_mw = map.stride_mvar = stride;
    map.min_count = min_count;
    map.cells.resize(static_cast<std::size_t>(map.n_p * map.n_q));

    for (long jq = -kq; jq <= kq; ++jq)
        for (long jp = -kp; jp <= kp; ++jp) {
            auto& cell = map.cells[static_cast<std::size_t>((jq + kq) * map.n_p + (jp + kp))];
            cell.p_center_mw = p0 + static_cast<double>(jp) * stride;
            cell.q_center_mvar = q0 + static_cast<double>(jq) * stride;
        }

    const double half = cell_size / 2.0 + 1e-12;
    for (const auto& s : samples) {
        // Index range of cells whose center is within half a cell of the sample.
        long jp_lo = static_cast<long>(std::ceil((s.p_mw - p0 - half) / stride));
        long jp_hi = static_cast<long>(std::floor((s.p_mw - p0 + half) / stride));
        long jq_lo = static_cast<long>(std::ceil((s.q_mvar - q0 - half) / stride));
        long jq_hi = static_cast<long>(std::floor((s.q_mvar - q0 + half) / stride));
        for (long jq = std::max(jq_lo, -kq); jq <= std::min(jq_hi, kq); ++jq)
            for (long jp = std::max(jp_lo, -kp); jp <= std::min(jp_hi, kp); ++jp) {
                auto& cell =
                    map.cells[static_cast<std::size_t>((jq + kq) * map.n_p + (jp + kp))];
                ++cell.count;
                cell.survivors += s.survived ? 1 : 0;
            }
    }

    for (auto& cell : map.cells) {
        cell.sufficient = cell.count >= min_count;
        if (cell.sufficient)
            cell.mu = static_cast<double>(cell.survivors) / static_cast<double>(cell.count);
    }
    return map;
}

struct EnvelopeOptions {
    double t_step_s = 0.25;   // reference step time
    double t_on_s = 1.25;     // fault onset (settling gap after the step)
    double p_half_range_mw = 15.0;
    double q_half_range_mvar = 10.0;
    double filter_threshold = 0.05;  // relative control error bound at t_on-
    bool filter_reactive_too = true; // symmetric |dQ|/|Q_meas| check
    double cell_size = 0.5;
    double stride = 0.25;
    long min_count = 100;
    int workers = 0;
    SolverSettings solver;

    [[nodiscard]] int resolved_workers() const {
        if (workers > 0) return workers;
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }
};

struct EnvelopeResult {
    EnvelopeMap map;
    std::vector<TrialRecord> trials;
    double base_p_mw = 0.0;
    double base_q_mvar = 0.0;
    long included_count = 0;
};

/// Reference-envelope survivability at one fault bus (spec operation):
/// random reference steps, feasibility filter at fault onset, then a
/// sampled fault and survival verdict; aggregated into overlapping cells.
inline EnvelopeResult envelope_study(std::shared_ptr<const Grid> grid,
                                     const std::string& fault_bus, long n_samples,
                                     const FaultModel& fault_model, LoadModel load_model,
                                     const LimitingCurve& curve, const ControlParams& params,
                                     std::uint64_t master_seed,
                                     const EnvelopeOptions& opt = {}) {
    if (n_samples < 1) throw std::invalid_argument("need at least one sample");
    if (opt.filter_threshold <= 0.0)
        throw std::invalid_argument("filter threshold must be positive");
    fault_model.validate();
    (void)grid->bus_index(fault_bus);

    PowerFlowOptions pf_opt;
    pf_opt.tol = 1e-11;
    PowerFlowSolution pf = solve_power_flow(*grid, load_model, {}, pf_opt);
    Complex base = transformer_mv_import_mva(*grid, pf.voltages);

    EnvelopeResult result;
    result.base_p_mw = base.real();
    result.base_q_mvar = base.imag();
    result.trials.resize(static_cast<std::size_t>(n_samples));

    Scenario base_scenario;
    base_scenario.grid = std::move(grid);
    base_scenario.load_model = load_model;
    base_scenario.control = params;
    base_scenario.t_end = opt.t_on_s + curve.horizon_s();
    base_scenario.solver = opt.solver;

    run_trials(n_samples, opt.resolved_workers(), [&](long i) {
        TrialRecord& rec = result.trials[static_cast<std::size_t>(i)];
        rec.index = i;
        std::mt19937_64 rng = trial_rng(master_seed, static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<double> up(base.real() - opt.p_half_range_mw,
                                                  base.real() + opt.p_half_range_mw);
        std::uniform_real_distribution<double> uq(base.imag() - opt.q_half_range_mvar,
                                                  base.imag() + opt.q_half_range_mvar);
        rec.p_ref_mw = up(rng);
        rec.q_ref_mvar = uq(rng);
        FaultSpec fault = sample_fault(rng, fault_model, fault_bus, opt.t_on_s);
        rec.r_on_ohm = fault.r_on_ohm;
        rec.duration_s = fault.duration_s;

        Scenario sc = base_scenario;
        sc.references = ReferenceSchedule(
            {{0.0, base.real(), base.imag()}, {opt.t_step_s, rec.p_ref_mw, rec.q_ref_mvar}});
        sc.faults = {fault};

        const Grid& g = *sc.grid;
        SurvivalMonitor monitor(g, fault, curve);
        bool filter_checked = false;
        rec.included = false;
        double end_time = 0.0;
        auto outcome = simulate_with_observer(
            sc, [&](double t, const Eigen::VectorXd&, const Eigen::VectorXcd& u,
                    double p_meas, double q_meas) {
                end_time = t;
                if (!filter_checked && t >= opt.t_on_s - 1e-12) {
                    // First arrival at t_on is the pre-fault limit sample.
                    filter_checked = true;
                    double dp = rec.p_ref_mw - p_meas;
                    double dq = rec.q_ref_mvar - q_meas;
                    bool ok = std::abs(dp) < opt.filter_threshold * std::abs(p_meas);
                    if (opt.filter_reactive_too)
                        ok = ok && std::abs(dq) < opt.filter_threshold * std::abs(q_meas);
                    rec.included = ok;
                    if (!ok) return false;  // infeasible set point: skip the fault
                }
                return monitor.feed(t, u);
            });

        if (!rec.included) return;
        SurvivalVerdict verdict = monitor.verdict(outcome.status, end_time);
        rec.survived = verdict.survived();
        rec.numerical_failure = outcome.status == TerminationStatus::NumericalFailure;
        if (rec.numerical_failure) {
            rec.failure_t_s = outcome.failure_time_s;
        } else if (verdict.first_violation) {
            rec.failure_bus = verdict.first_violation->bus;
            rec.failure_t_s = verdict.first_violation->t_s;
        }
    });

    std::vector<PqSample> included;
    included.reserve(result.trials.size());
    for (const auto& r : result.trials)
        if (r.included) included.push_back({r.p_ref_mw, r.q_ref_mvar, r.survived});
    result.included_count = static_cast<long>(included.size());
    result.map = cluster_cells(included, base.real(), base.imag(), opt.p_half_range_mw,
                               opt.q_half_range_mvar, opt.cell_size, opt.stride,
                               opt.min_count);
    return result;
}

}  // namespace adnsim
