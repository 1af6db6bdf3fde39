#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "adnsim/control.hpp"
#include "adnsim/fault.hpp"
#include "adnsim/grid.hpp"
#include "adnsim/powerflow.hpp"
#include "adnsim/rosenbrock.hpp"
#include "adnsim/ybus.hpp"

namespace adnsim {

struct SolverSettings {
    double rtol = 1e-6;
    double atol = 1e-8;
    double sample_dt = 1e-3;
    double max_step = 0.25;
};

struct Scenario {
    std::shared_ptr<const Grid> grid;
    LoadModel load_model = LoadModel::ConstantPQ;
    ControlParams control;
    ReferenceSchedule references;  // empty -> track the computed base flow
    std::vector<FaultSpec> faults;
    double t_end = 1.0;
    SolverSettings solver;

    void validate() const {
        if (!grid) throw std::invalid_argument("scenario has no grid");
        if (t_end <= 0.0) throw std::invalid_argument("t_end must be positive");
        control.validate();
        for (const auto& f : faults) {
            (void)grid->bus_index(f.bus);
            if (!f.valid()) throw std::invalid_argument("invalid fault at " + f.bus);
            if (f.t_on_s < 0.0 || f.t_off_s() > t_end)
                throw std::invalid_argument("fault window outside [0, t_end] at " + f.bus);
        }
    }
};

/// All differential states at an instant: one DGState per DG bus.
struct DynamicState {
    double t_s = 0.0;
    std::vector<DGState> dgs;

    [[nodiscard]] Eigen::VectorXd pack() const {
        Eigen::VectorXd y(static_cast<Eigen::Index>(dgs.size()) * kDgStateCount);
        for (std::size_t g = 0; g < dgs.size(); ++g) {
            auto o = static_cast<Eigen::Index>(g * kDgStateCount);
            y(o + 0) = dgs[g].chi_p_mw;
            y(o + 1) = dgs[g].chi_q_mvar;
            y(o + 2) = dgs[g].theta_pll;
            y(o + 3) = dgs[g].i_d;
            y(o + 4) = dgs[g].i_q;
        }
        return y;
    }

    static DynamicState unpack(double t, const Eigen::VectorXd& y) {
        DynamicState st;
        st.t_s = t;
        st.dgs.resize(static_cast<std::size_t>(y.size() / kDgStateCount));
        for (std::size_t g = 0; g < st.dgs.size(); ++g) {
            auto o = static_cast<Eigen::Index>(g * kDgStateCount);
            st.dgs[g] = {y(o + 0), y(o + 1), y(o + 2), y(o + 3), y(o + 4)};
        }
        return st;
    }
};

enum class TerminationStatus { Completed, NumericalFailure };

struct TrajectorySample {
    double t_s = 0.0;
    Eigen::VectorXd states;      // packed DG states
    Eigen::VectorXcd voltages;   // per-unit, indexed like Grid::buses
    double p_meas_mw = 0.0;
    double q_meas_mvar = 0.0;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    TerminationStatus status = TerminationStatus::Completed;
    double failure_time_s = 0.0;

    [[nodiscard]] bool completed() const { return status == TerminationStatus::Completed; }
    [[nodiscard]] double end_time() const {
        return samples.empty() ? 0.0 : samples.back().t_s;
    }
};

// ---------------------------------------------------------------------------
// Algebraic network solve
// ---------------------------------------------------------------------------

struct NetworkSolveOptions {
    double tol = 1e-10;      // contract tolerance on the current mismatch
    double target = 1e-13;   // iterate further when cheap, for smooth Jacobians
    int max_iter = 40;
};

/// Injection current as a function of the local bus voltage; used for the
/// algebraic converter mode where DG currents respond instantaneously.
struct VoltageDependentSource {
    Eigen::Index bus = 0;
    std::function<Complex(Complex)> current;
};

/// Solves Y u = i(u) for the non-slack bus voltages, where i collects fixed
/// DG currents and constant-PQ load draws. Newton in rectangular
/// coordinates with a backtracking line search; warm started from the
/// voltages passed in.
class NetworkSolver {
public:
    NetworkSolver(const Grid& grid, YMatrix y, Eigen::VectorXcd pq_load_pu,
                  NetworkSolveOptions opt = {})
        : grid_(&grid), y_(std::move(y)), load_(std::move(pq_load_pu)), opt_(opt) {
        slack_ = static_cast<Eigen::Index>(grid.slack_index());
        const auto n = static_cast<Eigen::Index>(grid.bus_count());
        for (Eigen::Index i = 0; i < n; ++i)
            if (i != slack_) rows_.push_back(i);
        const auto m = static_cast<Eigen::Index>(rows_.size());
        base_jac_.resize(2 * m, 2 * m);
        for (Eigen::Index r = 0; r < m; ++r)
            for (Eigen::Index c = 0; c < m; ++c) {
                Complex yy = y_(rows_[r], rows_[c]);
                base_jac_(2 * r, 2 * c) = yy.real();
                base_jac_(2 * r, 2 * c + 1) = -yy.imag();
                base_jac_(2 * r + 1, 2 * c) = yy.imag();
                base_jac_(2 * r + 1, 2 * c + 1) = yy.real();
            }
    }

    [[nodiscard]] const YMatrix& ybus() const { return y_; }

    /// Returns false if no solution was found; u is then left unchanged.
    bool solve(const Eigen::VectorXcd& i_dg_pu, Eigen::VectorXcd& u,
               std::span<const VoltageDependentSource> sources = {}) const {
        const auto n = y_.rows();
        const auto m = static_cast<Eigen::Index>(rows_.size());
        Eigen::VectorXcd x = u;
        x(slack_) = grid_->slack_voltage();

        auto residual = [&](const Eigen::VectorXcd& v, Eigen::VectorXd& f) -> bool {
            Eigen::VectorXcd yu = y_ * v;
            for (Eigen::Index r = 0; r < m; ++r) {
                Eigen::Index i = rows_[r];
                Complex acc = yu(i) - i_dg_pu(i);
                Complex s = load_(i);
                if (s != Complex(0.0, 0.0)) {
                    if (std::abs(v(i)) < 1e-6) return false;  // load equation degenerate
                    acc += std::conj(s / v(i));
                }
                f(2 * r) = acc.real();
                f(2 * r + 1) = acc.imag();
            }
            for (const auto& src : sources) {
                auto it = std::find(rows_.begin(), rows_.end(), src.bus);
                if (it == rows_.end()) continue;
                auto r = static_cast<Eigen::Index>(it - rows_.begin());
                Complex inj = src.current(v(src.bus));
                f(2 * r) -= inj.real();
                f(2 * r + 1) -= inj.imag();
            }
            return true;
        };

        Eigen::VectorXd f(2 * m), f_try(2 * m);
        if (!residual(x, f)) return false;
        double fnorm = f.lpNorm<Eigen::Infinity>();

        Eigen::MatrixXd jac(2 * m, 2 * m);
        Eigen::VectorXcd x_try(n);
        for (int it = 0; it < opt_.max_iter; ++it) {
            if (fnorm < opt_.target) break;

            jac = base_jac_;
            for (Eigen::Index r = 0; r < m; ++r) {
                Eigen::Index i = rows_[r];
                Complex s = load_(i);
                if (s == Complex(0.0, 0.0)) continue;
                double a = x(i).real(), b = x(i).imag();
                double p = s.real(), q = s.imag();
                double r2 = a * a + b * b, r4 = r2 * r2;
                double re = p * a + q * b, im = p * b - q * a;
                jac(2 * r, 2 * r) += p / r2 - 2.0 * a * re / r4;
                jac(2 * r, 2 * r + 1) += q / r2 - 2.0 * b * re / r4;
                jac(2 * r + 1, 2 * r) += -q / r2 - 2.0 * a * im / r4;
                jac(2 * r + 1, 2 * r + 1) += p / r2 - 2.0 * b * im / r4;
            }
            for (const auto& src : sources) {
                auto itr = std::find(rows_.begin(), rows_.end(), src.bus);
                if (itr == rows_.end()) continue;
                auto r = static_cast<Eigen::Index>(itr - rows_.begin());
                // local 2x2 block by forward differences
                const double d = 1e-7;
                Complex u0 = x(src.bus);
                Complex i0 = src.current(u0);
                Complex ia = src.current(u0 + Complex(d, 0.0));
                Complex ib = src.current(u0 + Complex(0.0, d));
                jac(2 * r, 2 * r) -= (ia.real() - i0.real()) / d;
                jac(2 * r, 2 * r + 1) -= (ib.real() - i0.real()) / d;
                jac(2 * r + 1, 2 * r) -= (ia.imag() - i0.imag()) / d;
                jac(2 * r + 1, 2 * r + 1) -= (ib.imag() - i0.imag()) / d;
            }

            Eigen::VectorXd step = jac.partialPivLu().solve(f);
            if (!step.allFinite()) return false;

            // backtracking line search on the residual norm
            double alpha = 1.0;
            bool improved = false;
            for (int ls = 0; ls < 12; ++ls) {
                x_try = x;
                for (Eigen::Index r = 0; r < m; ++r) {
                    Eigen::Index i = rows_[r];
                    x_try(i) -= alpha * Complex(step(2 * r), step(2 * r + 1));
                }
                if (residual(x_try, f_try)) {
                    double fn_try = f_try.lpNorm<Eigen::Infinity>();
                    if (fn_try < (1.0 - 0.25 * alpha) * fnorm || fn_try < opt_.target) {
                        x = x_try;
                        f = f_try;
                        fnorm = fn_try;
                        improved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!improved) return false;
        }

        if (fnorm >= opt_.tol) return false;
        u = x;
        return true;
    }

private:
    const Grid* grid_;
    YMatrix y_;
    Eigen::VectorXcd load_;
    NetworkSolveOptions opt_;
    Eigen::Index slack_ = 0;
    std::vector<Eigen::Index> rows_;
    Eigen::MatrixXd base_jac_;
};

/// Constant-PQ load vector in per unit (consumption positive); empty for
/// the impedance model where loads already sit in the Y matrix.
inline Eigen::VectorXcd pq_load_vector(const Grid& grid, LoadModel model) {
    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid.bus_count()));
    if (model == LoadModel::ConstantPQ)
        for (const auto& [bus, load] : grid.loads)
            s(static_cast<Eigen::Index>(grid.bus_index(bus))) =
                grid.bases.power_to_pu(Complex(load.p_mw, load.q_mvar));
    return s;
}

/// Standalone solve of the algebraic network equations (spec operation).
inline bool solve_network(const Grid& grid, const YMatrix& ybus,
                          const Eigen::VectorXcd& dg_currents_pu,
                          const Eigen::VectorXcd& pq_loads_pu, Eigen::VectorXcd& voltages,
                          NetworkSolveOptions opt = {}) {
    NetworkSolver solver(grid, ybus, pq_loads_pu, opt);
    return solver.solve(dg_currents_pu, voltages);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Steady-state consistent initialization from a converged power flow that
/// already includes the given DG injections.
inline DynamicState initialize_state(const Grid& grid, const PowerFlowSolution& pf,
                                     const ControlParams& params,
                                     const DgInjections& dg_injections = {},
                                     double pf_tol = 1e-6) {
    if (pf.residual_norm > pf_tol)
        throw PowerFlowError("initialize_state requires a converged power flow");
    params.validate();

    DynamicState st;
    st.t_s = 0.0;
    st.dgs.reserve(grid.dg_buses.size());
    for (const auto& bus : grid.dg_buses) {
        Complex u = pf.voltage(grid, bus);
        Complex inj(0.0, 0.0);
        if (auto it = dg_injections.find(bus); it != dg_injections.end()) inj = it->second;

        DGState dg;
        dg.chi_p_mw = std::clamp(inj.real(), params.p_min_mw, params.p_max_mw);
        dg.chi_q_mvar = std::clamp(inj.imag(), params.q_min_mvar, params.q_max_mvar);
        dg.theta_pll = std::arg(u);
        Complex u_dq = u * std::polar(1.0, -dg.theta_pll);  // = |u|
        auto [i_d, i_q] = current_reference(dg.chi_p_mw, dg.chi_q_mvar, u_dq, params,
                                            grid.bases.s_mva);
        dg.i_d = i_d;
        dg.i_q = i_q;
        st.dgs.push_back(dg);
    }
    return st;
}

// ---------------------------------------------------------------------------
// Simulation engine
// ---------------------------------------------------------------------------

namespace detail {

/// Right-hand side of the semi-explicit DAE on one event-free segment:
/// fixed Y-bus, fixed reference values. Owns the warm-start voltage cache.
class SegmentRhs {
public:
    SegmentRhs(const Scenario& sc, const NetworkSolver& net, double p_ref_mw,
               double q_ref_mvar)
        : sc_(&sc), net_(&net), p_ref_(p_ref_mw), q_ref_(q_ref_mvar) {
        const Grid& grid = *sc.grid;
        n_dg_ = grid.dg_buses.size();
        dg_rows_.reserve(n_dg_);
        for (const auto& bus : grid.dg_buses)
            dg_rows_.push_back(static_cast<Eigen::Index>(grid.bus_index(bus)));
        u_cache_ = Eigen::VectorXcd::Constant(static_cast<Eigen::Index>(grid.bus_count()),
                                              Complex(1.0, 0.0));
        algebraic_converter_ = sc.control.t_conv_s == 0.0;
    }

    [[nodiscard]] Eigen::Index size() const {
        return static_cast<Eigen::Index>(n_dg_ * kDgStateCount);
    }

    void seed_voltages(const Eigen::VectorXcd& u) { u_cache_ = u; }
    [[nodiscard]] const Eigen::VectorXcd& voltages() const { return u_cache_; }

    /// Solve the network for the given states, leaving the result in the
    /// cache. Returns false when the algebraic equations cannot be solved.
    bool solve_voltages(const Eigen::VectorXd& y, Eigen::VectorXcd& u) const {
        const Grid& grid = *sc_->grid;
        Eigen::VectorXcd i_dg =
            Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid.bus_count()));
        std::vector<VoltageDependentSource> sources;
        if (!algebraic_converter_) {
            for (std::size_t g = 0; g < n_dg_; ++g) {
                auto o = static_cast<Eigen::Index>(g * kDgStateCount);
                Complex i_dq(y(o + 3), y(o + 4));
                i_dg(dg_rows_[g]) += i_dq * std::polar(1.0, y(o + 2));
            }
        } else {
            sources.reserve(n_dg_);
            for (std::size_t g = 0; g < n_dg_; ++g) {
                auto o = static_cast<Eigen::Index>(g * kDgStateCount);
                double chi_p = y(o + 0), chi_q = y(o + 1), theta = y(o + 2);
                const ControlParams& p = sc_->control;
                double s_base = grid.bases.s_mva;
                sources.push_back(VoltageDependentSource{
                    dg_rows_[g], [chi_p, chi_q, theta, &p, s_base](Complex u_pcc) {
                        DGState st{chi_p, chi_q, theta, 0.0, 0.0};
                        return dg_dynamics(st, u_pcc, 0.0, 0.0, true, p, s_base)
                            .injection_pu;
                    }});
            }
        }
        u = u_cache_;
        return net_->solve(i_dg, u, sources);
    }

    bool rhs(double /*t*/, const Eigen::VectorXd& y, Eigen::VectorXd& f) const {
        const Grid& grid = *sc_->grid;
        const ControlParams& params = sc_->control;

        Eigen::VectorXcd u;
        if (!solve_voltages(y, u)) return false;
        u_cache_ = u;

        Complex meas = transformer_mv_import_mva(grid, u);
        // Integrator drive: generation rises when measured import exceeds
        // its reference.
        double err_p_pu = (meas.real() - p_ref_) / grid.bases.s_mva;
        double err_q_pu = (meas.imag() - q_ref_) / grid.bases.s_mva;

        bool frozen = false;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            if (std::abs(std::abs(u(i)) - params.u_ref_pu) > params.freeze_band_pu) {
                frozen = true;
                break;
            }
        }

        for (std::size_t g = 0; g < n_dg_; ++g) {
            auto o = static_cast<Eigen::Index>(g * kDgStateCount);
            DGState st{y(o + 0), y(o + 1), y(o + 2), y(o + 3), y(o + 4)};
            DGOutput out = dg_dynamics(st, u(dg_rows_[g]), err_p_pu, err_q_pu, frozen,
                                       params, grid.bases.s_mva);
            f(o + 0) = out.deriv.d_chi_p;
            f(o + 1) = out.deriv.d_chi_q;
            f(o + 2) = out.deriv.d_theta;
            f(o + 3) = out.deriv.d_i_d;
            f(o + 4) = out.deriv.d_i_q;
        }
        return true;
    }

private:
    const Scenario* sc_;
    const NetworkSolver* net_;
    double p_ref_, q_ref_;
    std::size_t n_dg_ = 0;
    std::vector<Eigen::Index> dg_rows_;
    mutable Eigen::VectorXcd u_cache_;
    bool algebraic_converter_ = false;
};

inline Eigen::VectorXd dg_typical_scale(std::size_t n_dg) {
    Eigen::VectorXd typ(static_cast<Eigen::Index>(n_dg * kDgStateCount));
    for (std::size_t g = 0; g < n_dg; ++g) {
        auto o = static_cast<Eigen::Index>(g * kDgStateCount);
        typ(o + 0) = 1e-2;  // chi_p, MW
        typ(o + 1) = 1e-2;  // chi_q, Mvar
        typ(o + 2) = 1e-2;  // theta, rad
        typ(o + 3) = 1e-3;  // i_d, pu
        typ(o + 4) = 1e-3;  // i_q, pu
    }
    return typ;
}

}  // namespace detail

/// Right-hand side of the scenario's DAE at (t, packed state), with the
/// network context (faults, references) active at that time. Returns
/// nothing when the algebraic equations cannot be solved. The references
/// must be explicit (an empty schedule needs the base flow, which only
/// simulate_with_observer computes).
inline std::optional<Eigen::VectorXd> state_derivative(const Scenario& scenario,
                                                       const Eigen::VectorXd& packed,
                                                       double t,
                                                       const Eigen::VectorXcd& warm_voltages) {
    const Grid& grid = *scenario.grid;
    std::vector<FaultSpec> active;
    for (const auto& f : scenario.faults)
        if (f.t_on_s <= t + 1e-12 && t + 1e-12 < f.t_off_s()) active.push_back(f);
    YMatrix ybus = assemble_ybus(grid, scenario.load_model, active);
    NetworkSolver net(grid, std::move(ybus), pq_load_vector(grid, scenario.load_model));
    ReferenceStep ref = scenario.references.at(t);
    detail::SegmentRhs rhs(scenario, net, ref.p_mw, ref.q_mvar);
    rhs.seed_voltages(warm_voltages);
    Eigen::VectorXd f(packed.size());
    if (!rhs.rhs(t, packed, f)) return std::nullopt;
    return f;
}

/// Per-sample observation: packed states, solved voltages, transformer
/// measurement. Return false to stop the simulation early.
using SampleObserver = std::function<bool(double t, const Eigen::VectorXd& states,
                                          const Eigen::VectorXcd& voltages,
                                          double p_meas_mw, double q_meas_mvar)>;

struct SimulationOutcome {
    TerminationStatus status = TerminationStatus::Completed;
    double failure_time_s = 0.0;
    bool aborted_by_observer = false;
    double base_p_meas_mw = 0.0;  // interconnection flow of the initial state
    double base_q_meas_mvar = 0.0;
};

/// Event-fenced integration of a scenario. The observer sees the initial
/// state, every sample_dt grid point, and both one-sided limits of every
/// event time.
inline SimulationOutcome simulate_with_observer(const Scenario& scenario,
                                                const SampleObserver& observe) {
    scenario.validate();
    const Grid& grid = *scenario.grid;
    const double s_base = grid.bases.s_mva;

    // Base power flow (zero DG injection) and consistent initial state.
    PowerFlowOptions pf_opt;
    pf_opt.tol = 1e-11;
    PowerFlowSolution pf = solve_power_flow(grid, scenario.load_model, {}, pf_opt);
    DynamicState init = initialize_state(grid, pf, scenario.control, {});
    Eigen::VectorXd y = init.pack();

    // References: explicit schedule, or hold the computed base flow.
    Complex base_flow = transformer_mv_import_mva(grid, pf.voltages);
    ReferenceSchedule refs = scenario.references;
    if (refs.empty())
        refs = ReferenceSchedule({{0.0, base_flow.real(), base_flow.imag()}});

    SimulationOutcome outcome;
    outcome.base_p_meas_mw = base_flow.real();
    outcome.base_q_meas_mvar = base_flow.imag();

    // Event fence: reference steps and fault edges.
    std::vector<double> events;
    for (const auto& s : refs.steps())
        if (s.t_s > 0.0 && s.t_s < scenario.t_end) events.push_back(s.t_s);
    for (const auto& f : scenario.faults) {
        if (f.t_on_s > 0.0 && f.t_on_s < scenario.t_end) events.push_back(f.t_on_s);
        if (f.t_off_s() > 0.0 && f.t_off_s() < scenario.t_end) events.push_back(f.t_off_s());
    }
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 events.end());
    events.push_back(scenario.t_end);

    const Eigen::VectorXcd pq_loads = pq_load_vector(grid, scenario.load_model);

    IntegratorOptions int_opt;
    int_opt.rtol = scenario.solver.rtol;
    int_opt.atol = scenario.solver.atol;
    int_opt.max_step = scenario.solver.max_step;
    int_opt.initial_step = std::min(1e-4, scenario.solver.max_step);
    int_opt.typical_scale = detail::dg_typical_scale(grid.dg_buses.size());

    const double dt = scenario.solver.sample_dt;
    double t = 0.0;
    Eigen::VectorXcd u_warm = pf.voltages;
    long next_sample = 1;  // dt-grid samples at k*dt; boundaries are emitted separately

    for (double t_event : events) {
        // Active faults for this segment.
        std::vector<FaultSpec> active;
        for (const auto& f : scenario.faults)
            if (f.t_on_s <= t + 1e-12 && t + 1e-12 < f.t_off_s()) active.push_back(f);

        YMatrix ybus = assemble_ybus(grid, scenario.load_model, active);
        NetworkSolver net(grid, std::move(ybus), pq_loads);
        ReferenceStep ref = refs.at(t + 1e-12);
        detail::SegmentRhs rhs(scenario, net, ref.p_mw, ref.q_mvar);
        rhs.seed_voltages(u_warm);

        // Emit a boundary sample at the current time under the new context.
        auto emit_at = [&](double tq, const Eigen::VectorXd& yq) -> bool {
            Eigen::VectorXcd u;
            if (!rhs.solve_voltages(yq, u)) {
                outcome.status = TerminationStatus::NumericalFailure;
                outcome.failure_time_s = tq;
                return false;
            }
            rhs.seed_voltages(u);
            u_warm = u;
            Complex meas = transformer_mv_import_mva(grid, u);
            if (!observe(tq, yq, u, meas.real(), meas.imag())) {
                outcome.aborted_by_observer = true;
                return false;
            }
            return true;
        };

        if (!emit_at(t, y)) return outcome;  // post-event limit (or initial state)

        Rosenbrock23<detail::SegmentRhs> stepper(rhs, int_opt);
        auto on_step = [&](double t0, const Eigen::VectorXd& y0, const Eigen::VectorXd& f0,
                           double t1, const Eigen::VectorXd& y1,
                           const Eigen::VectorXd& f1) -> bool {
            // dt-grid samples strictly inside the segment, in (t0, t1].
            while (true) {
                double ts = static_cast<double>(next_sample) * dt;
                if (ts > t1 + 1e-12) break;
                if (ts > t_event - 1e-12) break;  // boundary handled by segment loop
                double h = t1 - t0;
                double th = h > 0 ? (ts - t0) / h : 1.0;
                double h00 = (1 + 2 * th) * (1 - th) * (1 - th);
                double h10 = th * (1 - th) * (1 - th);
                double h01 = th * th * (3 - 2 * th);
                double h11 = th * th * (th - 1);
                Eigen::VectorXd yi = h00 * y0 + (h10 * h) * f0 + h01 * y1 + (h11 * h) * f1;

                Eigen::VectorXcd u;
                if (!rhs.solve_voltages(yi, u)) {
                    outcome.status = TerminationStatus::NumericalFailure;
                    outcome.failure_time_s = ts;
                    return false;
                }
                u_warm = u;
                Complex meas = transformer_mv_import_mva(grid, u);
                if (!observe(ts, yi, u, meas.real(), meas.imag())) {
                    outcome.aborted_by_observer = true;
                    return false;
                }
                ++next_sample;
            }
            return true;
        };

        IntegrateStatus status = stepper.integrate(t, y, t_event, on_step);
        u_warm = rhs.voltages();

        if (status == IntegrateStatus::Aborted) return outcome;  // fields already set
        if (status != IntegrateStatus::Completed) {
            outcome.status = TerminationStatus::NumericalFailure;
            outcome.failure_time_s = t;
            return outcome;
        }

        if (!emit_at(t, y)) return outcome;  // pre-event limit (or final state)
        while (static_cast<double>(next_sample) * dt <= t_event + 1e-12) ++next_sample;
    }
    return outcome;
}

/// Full-trajectory simulation (spec operation).
inline Trajectory simulate(const Scenario& scenario) {
    Trajectory traj;
    auto outcome = simulate_with_observer(
        scenario, [&](double t, const Eigen::VectorXd& y, const Eigen::VectorXcd& u,
                      double p, double q) {
            // Collapse duplicate interior samples (same t emitted twice at
            // non-event step boundaries is impossible; event limits repeat
            // t on purpose).
            traj.samples.push_back({t, y, u, p, q});
            return true;
        });
    traj.status = outcome.status;
    traj.failure_time_s = outcome.failure_time_s;
    return traj;
}

// ---------------------------------------------------------------------------
// Scenario file format
// ---------------------------------------------------------------------------

inline ControlParams control_from_json(const nlohmann::json& j) {
    ControlParams p;
    p.k_i_p = j.value("k_i_p", p.k_i_p);
    p.k_i_q = j.value("k_i_q", p.k_i_q);
    p.p_min_mw = j.value("p_min_mw", p.p_min_mw);
    p.p_max_mw = j.value("p_max_mw", p.p_max_mw);
    p.q_min_mvar = j.value("q_min_mvar", p.q_min_mvar);
    p.q_max_mvar = j.value("q_max_mvar", p.q_max_mvar);
    p.u_ref_pu = j.value("u_ref_pu", p.u_ref_pu);
    p.u_dead_pu = j.value("u_dead_pu", p.u_dead_pu);
    p.k_frt = j.value("k_frt", p.k_frt);
    p.i_max_pu = j.value("i_max_pu", p.i_max_pu);
    p.s_dg_mva = j.value("s_dg_mva", p.s_dg_mva);
    p.freeze_band_pu = j.value("freeze_band_pu", p.freeze_band_pu);
    p.t_pll_s = j.value("t_pll_s", p.t_pll_s);
    p.t_conv_s = j.value("t_conv_s", p.t_conv_s);
    p.u_floor_pu = j.value("u_floor_pu", p.u_floor_pu);
    p.validate();
    return p;
}

inline LoadModel load_model_from_string(const std::string& s) {
    if (s == "pq" || s == "PQ") return LoadModel::ConstantPQ;
    if (s == "z" || s == "Z") return LoadModel::ConstantImpedance;
    throw std::invalid_argument("unknown load model: " + s + " (expected 'pq' or 'z')");
}

inline std::string to_string(LoadModel m) {
    return m == LoadModel::ConstantPQ ? "pq" : "z";
}

/// Parse a scenario document. grid_dir resolves a relative grid path.
inline Scenario load_scenario(const std::string& text, const std::string& grid_dir = ".") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("scenario is not valid JSON: ") + e.what());
    }

    Scenario sc;
    if (!j.contains("grid")) throw std::invalid_argument("scenario: missing 'grid' path");
    std::filesystem::path gp = j["grid"].get<std::string>();
    if (gp.is_relative()) gp = std::filesystem::path(grid_dir) / gp;
    sc.grid = std::make_shared<Grid>(load_grid_file(gp.string()));

    sc.load_model = load_model_from_string(j.value("load_model", std::string("pq")));
    if (j.contains("control")) sc.control = control_from_json(j["control"]);

    if (j.contains("references")) {
        std::vector<ReferenceStep> steps;
        for (const auto& js : j["references"])
            steps.push_back({js.value("t", 0.0), js.value("p_mw", 0.0),
                             js.value("q_mvar", 0.0)});
        sc.references = ReferenceSchedule(std::move(steps));
    }
    if (j.contains("faults")) {
        for (const auto& jf : j["faults"]) {
            FaultSpec f;
            f.bus = jf.at("bus").get<std::string>();
            f.r_on_ohm = jf.at("r_on_ohm").get<double>();
            f.t_on_s = jf.at("t_on").get<double>();
            f.duration_s = jf.at("duration").get<double>();
            sc.faults.push_back(f);
        }
    }
    sc.t_end = j.value("t_end", 1.0);
    if (j.contains("solver")) {
        const auto& js = j["solver"];
        sc.solver.rtol = js.value("rtol", sc.solver.rtol);
        sc.solver.atol = js.value("atol", sc.solver.atol);
        sc.solver.sample_dt = js.value("sample_dt", sc.solver.sample_dt);
        sc.solver.max_step = js.value("max_step", sc.solver.max_step);
    }
    sc.validate();
    return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scenario(ss.str(), std::filesystem::path(path).parent_path().string());
}

}  // namespace adnsim
