#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adnsim/dynamics.hpp"
#include "adnsim/fault.hpp"
#include "adnsim/grid.hpp"

namespace adnsim {

/// Piecewise-linear lower bound on voltage magnitude versus time since
/// fault onset; constant beyond the last breakpoint.
class LimitingCurve {
public:
    struct Breakpoint {
        double tau_s;
        double v_min_pu;
    };

    LimitingCurve() = default;
    explicit LimitingCurve(std::vector<Breakpoint> breakpoints)
        : points_(std::move(breakpoints)) {
        if (points_.empty()) throw std::invalid_argument("limiting curve has no breakpoints");
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (points_[i].v_min_pu < 0.0 || points_[i].v_min_pu > 1.0)
                throw std::invalid_argument("limiting curve v_min outside [0, 1]");
            if (i > 0 && points_[i].tau_s <= points_[i - 1].tau_s)
                throw std::invalid_argument("limiting curve breakpoints not increasing");
        }
    }

    [[nodiscard]] const std::vector<Breakpoint>& breakpoints() const { return points_; }
    [[nodiscard]] double horizon_s() const { return points_.back().tau_s; }

    /// Linear interpolation, clamped to the first/last value outside the
    /// breakpoint range.
    [[nodiscard]] double evaluate(double tau_s) const {
        if (tau_s <= points_.front().tau_s) return points_.front().v_min_pu;
        if (tau_s >= points_.back().tau_s) return points_.back().v_min_pu;
        auto hi = std::upper_bound(points_.begin(), points_.end(), tau_s,
                                   [](double t, const Breakpoint& b) { return t < b.tau_s; });
        auto lo = hi - 1;
        double w = (tau_s - lo->tau_s) / (hi->tau_s - lo->tau_s);
        return lo->v_min_pu + w * (hi->v_min_pu - lo->v_min_pu);
    }

private:
    std::vector<Breakpoint> points_;
};

inline double evaluate_limiting_curve(const LimitingCurve& curve, double tau_s) {
    return curve.evaluate(tau_s);
}

inline LimitingCurve load_curve(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("curve file is not valid JSON: ") + e.what());
    }
    const nlohmann::json& arr = j.contains("breakpoints") ? j["breakpoints"] : j;
    if (!arr.is_array()) throw std::invalid_argument("curve: expected a breakpoint array");
    std::vector<LimitingCurve::Breakpoint> pts;
    for (const auto& jp : arr)
        pts.push_back({jp.at("tau_s").get<double>(), jp.at("v_min_pu").get<double>()});
    return LimitingCurve(std::move(pts));
}

inline LimitingCurve load_curve_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open curve file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_curve(ss.str());
}

struct Violation {
    std::string bus;
    double t_s = 0.0;
    double v_pu = 0.0;
    double v_min_pu = 0.0;
};

enum class SurvivalOutcome { Survived, Failed, Undecidable };

struct SurvivalVerdict {
    SurvivalOutcome outcome = SurvivalOutcome::Undecidable;
    std::optional<Violation> first_violation;  // set when Failed on a curve violation

    [[nodiscard]] bool survived() const { return outcome == SurvivalOutcome::Survived; }
};

/// Buses whose voltage the survival criterion monitors: all MV buses.
inline std::vector<std::size_t> monitored_bus_indices(const Grid& grid) {
    std::vector<std::size_t> idx;
    for (const auto& id : grid.mv_bus_ids()) idx.push_back(grid.bus_index(id));
    return idx;
}

/// Streaming survival check against the limiting curve; feed samples in
/// time order. Verdict semantics match check_survival.
class SurvivalMonitor {
public:
    SurvivalMonitor(const Grid& grid, const FaultSpec& fault, const LimitingCurve& curve)
        : grid_(&grid), curve_(&curve), t_on_(fault.t_on_s),
          monitored_(monitored_bus_indices(grid)) {}

    /// Returns false once a violation is recorded (no need to feed more).
    bool feed(double t_s, const Eigen::VectorXcd& voltages) {
        if (violation_) return false;
        last_t_ = std::max(last_t_, t_s);
        if (t_s < t_on_) return true;
        double v_min = curve_->evaluate(t_s - t_on_);
        for (std::size_t i : monitored_) {
            double v = std::abs(voltages(static_cast<Eigen::Index>(i)));
            if (v < v_min) {
                violation_ = Violation{grid_->buses[i].id, t_s, v, v_min};
                return false;
            }
        }
        return true;
    }

    [[nodiscard]] double horizon_end() const { return t_on_ + curve_->horizon_s(); }

    /// Final verdict given how the trajectory terminated.
    [[nodiscard]] SurvivalVerdict verdict(TerminationStatus status, double end_time) const {
        SurvivalVerdict v;
        if (violation_) {
            v.outcome = SurvivalOutcome::Failed;
            v.first_violation = violation_;
            return v;
        }
        if (status != TerminationStatus::Completed) {
            v.outcome = SurvivalOutcome::Failed;  // numerical failure never survives
            return v;
        }
        if (end_time + 1e-9 < horizon_end()) {
            v.outcome = SurvivalOutcome::Undecidable;
            return v;
        }
        v.outcome = SurvivalOutcome::Survived;
        return v;
    }

private:
    const Grid* grid_;
    const LimitingCurve* curve_;
    double t_on_;
    std::vector<std::size_t> monitored_;
    std::optional<Violation> violation_;
    double last_t_ = 0.0;
};

/// Post-hoc survival decision for a recorded trajectory (spec operation).
inline SurvivalVerdict check_survival(const Grid& grid, const Trajectory& traj,
                                      const FaultSpec& fault, const LimitingCurve& curve) {
    SurvivalMonitor monitor(grid, fault, curve);
    for (const auto& s : traj.samples)
        if (!monitor.feed(s.t_s, s.voltages)) break;
    return monitor.verdict(traj.status, traj.end_time());
}

}  // namespace adnsim
