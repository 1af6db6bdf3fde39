#pragma once

#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adnsim/dynamics.hpp"
#include "adnsim/montecarlo.hpp"
#include "adnsim/powerflow.hpp"

namespace adnsim {

inline void write_powerflow_csv(std::ostream& os, const Grid& grid,
                                const PowerFlowSolution& sol, LoadModel model) {
    YMatrix y = assemble_ybus(grid, model);
    Eigen::VectorXcd s_inj = sol.voltages.array() * (y * sol.voltages).conjugate().array();
    os << "bus_id,v_mag_pu,v_angle_deg,p_injected_mw,q_injected_mvar\n";
    os << std::setprecision(12);
    for (std::size_t i = 0; i < grid.bus_count(); ++i) {
        Complex u = sol.voltages(static_cast<Eigen::Index>(i));
        Complex s = grid.bases.power_from_pu(s_inj(static_cast<Eigen::Index>(i)));
        os << grid.buses[i].id << ',' << std::abs(u) << ',' << std::arg(u) * kDegPerRad
           << ',' << s.real() << ',' << s.imag() << '\n';
    }
    Complex mv = transformer_mv_import_mva(grid, sol.voltages);
    os << "# transformer_mv_import_mw=" << mv.real()
       << " transformer_mv_import_mvar=" << mv.imag() << " iterations=" << sol.iterations
       << " residual=" << sol.residual_norm << '\n';
}

inline void write_trajectory_csv(std::ostream& os, const Grid& grid, const Trajectory& traj) {
    os << "time_s";
    for (const auto& b : grid.buses) os << ",v_mag_" << b.id << ",v_angle_" << b.id;
    os << ",p_meas_mw,q_meas_mvar";
    for (const auto& dg : grid.dg_buses) os << ",chi_p_" << dg << ",chi_q_" << dg;
    os << '\n';
    os << std::setprecision(10);
    for (const auto& s : traj.samples) {
        os << s.t_s;
        for (Eigen::Index i = 0; i < s.voltages.size(); ++i)
            os << ',' << std::abs(s.voltages(i)) << ',' << std::arg(s.voltages(i)) * kDegPerRad;
        os << ',' << s.p_meas_mw << ',' << s.q_meas_mvar;
        for (std::size_t g = 0; g < grid.dg_buses.size(); ++g) {
            auto o = static_cast<Eigen::Index>(g * kDgStateCount);
            os << ',' << s.states(o) << ',' << s.states(o + 1);
        }
        os << '\n';
    }
    if (traj.status == TerminationStatus::NumericalFailure)
        os << "# numerical_failure_at=" << traj.failure_time_s << '\n';
}

inline void write_trials_csv(std::ostream& os, std::span<const TrialRecord> trials,
                             bool envelope) {
    os << "trial_index";
    if (envelope) os << ",p_ref_mw,q_ref_mvar";
    os << ",r_on_ohm,duration_ms,included,survived,failure_bus,failure_t\n";
    os << std::setprecision(12);
    for (const auto& r : trials) {
        os << r.index;
        if (envelope) os << ',' << r.p_ref_mw << ',' << r.q_ref_mvar;
        os << ',' << r.r_on_ohm << ',' << r.duration_s * 1e3 << ',' << (r.included ? 1 : 0)
           << ',' << (r.survived ? 1 : 0) << ','
           << (r.numerical_failure ? "numerical_failure" : r.failure_bus) << ','
           << (r.failure_bus.empty() && !r.numerical_failure ? 0.0 : r.failure_t_s) << '\n';
    }
}

inline void write_envelope_csv(std::ostream& os, const EnvelopeMap& map) {
    os << "cell_p_center,cell_q_center,count,survivors,mu\n";
    os << std::setprecision(12);
    for (const auto& c : map.cells) {
        os << c.p_center_mw << ',' << c.q_center_mvar << ',' << c.count << ','
           << c.survivors << ',';
        if (c.sufficient)
            os << c.mu;
        else
            os << "insufficient";
        os << '\n';
    }
}

inline nlohmann::json estimate_to_json(const SurvivabilityEstimate& e) {
    return nlohmann::json{
        {"bus", e.bus},           {"survivors", e.survivors},
        {"trials", e.trials},     {"mu", e.mu},
        {"ci_half_width", e.ci_half_width},
        {"load_model", to_string(e.load_model)},
        {"master_seed", e.master_seed},
    };
}

struct ReferenceRow {
    double v_mag_pu = 0.0;
    double v_angle_deg = 0.0;
};

/// Reads a bus-voltage reference table: bus_id, v_mag_pu, v_angle_deg.
/// Lines starting with '#' and a header row are skipped.
inline std::map<std::string, ReferenceRow> read_reference_csv(std::istream& is) {
    std::map<std::string, ReferenceRow> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string bus, mag, ang;
        if (!std::getline(ss, bus, ',') || !std::getline(ss, mag, ',') ||
            !std::getline(ss, ang, ','))
            continue;
        if (bus == "bus_id") continue;  // header
        try {
            rows[bus] = {std::stod(mag), std::stod(ang)};
        } catch (const std::exception&) {
            throw std::invalid_argument("reference CSV: bad numeric value in line: " + line);
        }
    }
    return rows;
}

}  // namespace adnsim
