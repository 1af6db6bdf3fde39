#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "adnsim/units.hpp"

namespace adnsim {

/// Parameters of the interconnection power-flow tracking controller and the
/// per-DG converter/FRT blocks. Defaults follow the study configuration;
/// every field can be overridden from the scenario file.
struct ControlParams {
    double k_i_p = 1.0;   // integral gain on per-unit active error, 1/s
    double k_i_q = 1.0;   // integral gain on per-unit reactive error, 1/s
    double p_min_mw = 0.0;
    double p_max_mw = 1.0;
    double q_min_mvar = -1.0;
    double q_max_mvar = 1.0;
    double u_ref_pu = 1.0;
    double u_dead_pu = 0.1;      // FRT dead band half-width
    double k_frt = 2.0;          // pu additional reactive current per pu voltage error
    double i_max_pu = 1.0;       // converter current limit on the DG base
    double s_dg_mva = 1.0;       // converter rating that i_max and the FRT law refer to
    double freeze_band_pu = 0.1; // safe voltage band half-width for integrator freezing
    double t_pll_s = 0.02;
    double t_conv_s = 0.01;      // 0 selects the algebraic converter mode
    double u_floor_pu = 0.1;     // division floor for current references

    void validate() const {
        if (k_i_p < 0 || k_i_q < 0 || k_frt < 0)
            throw std::invalid_argument("control gains must be non-negative");
        if (p_min_mw > p_max_mw || q_min_mvar > q_max_mvar)
            throw std::invalid_argument("inverted DG limits");
        if (u_dead_pu <= 0) throw std::invalid_argument("u_dead must be positive");
        if (i_max_pu <= 0) throw std::invalid_argument("i_max must be positive");
        if (s_dg_mva <= 0) throw std::invalid_argument("s_dg must be positive");
        if (t_pll_s <= 0) throw std::invalid_argument("t_pll must be positive");
        if (t_conv_s < 0) throw std::invalid_argument("t_conv must be non-negative");
        if (u_floor_pu <= 0) throw std::invalid_argument("u_floor must be positive");
    }
};

/// Differential states of one distributed generator.
struct DGState {
    double chi_p_mw = 0.0;   // local active power reference integrator
    double chi_q_mvar = 0.0; // local reactive power reference integrator
    double theta_pll = 0.0;  // PLL angle, rad
    double i_d = 0.0;        // converter currents in the PLL frame, system pu
    double i_q = 0.0;
};

static constexpr int kDgStateCount = 5;

/// Piecewise-constant reference functions for the interconnection flow.
struct ReferenceStep {
    double t_s = 0.0;
    double p_mw = 0.0;
    double q_mvar = 0.0;
};

class ReferenceSchedule {
public:
    ReferenceSchedule() = default;
    explicit ReferenceSchedule(std::vector<ReferenceStep> steps) : steps_(std::move(steps)) {
        for (std::size_t i = 1; i < steps_.size(); ++i)
            if (steps_[i].t_s <= steps_[i - 1].t_s)
                throw std::invalid_argument("reference step times must be strictly increasing");
    }

    [[nodiscard]] bool empty() const { return steps_.empty(); }
    [[nodiscard]] const std::vector<ReferenceStep>& steps() const { return steps_; }

    /// Value at time t: the last step at or before t; the first entry also
    /// serves as the base reference before its own time.
    [[nodiscard]] ReferenceStep at(double t_s) const {
        if (steps_.empty()) throw std::logic_error("empty reference schedule");
        ReferenceStep current = steps_.front();
        for (const auto& s : steps_) {
            if (s.t_s <= t_s) current = s;
            else break;
        }
        return current;
    }

private:
    std::vector<ReferenceStep> steps_;
};

/// Global control errors: reference minus measured interconnection flow.
inline std::pair<double, double> global_error(double p_meas_mw, double q_meas_mvar,
                                              const ReferenceSchedule& refs, double t_s) {
    ReferenceStep r = refs.at(t_s);
    return {r.p_mw - p_meas_mw, r.q_mvar - q_meas_mvar};
}

/// Clamped-integrator rate: zero when frozen or pushing past a limit,
/// otherwise k_i * error * s_base (MW/s or Mvar/s).
inline double integrator_rate(double chi, double error_pu, bool frozen, double k_i,
                              double lo, double hi, double s_base_mva) {
    if (frozen) return 0.0;
    if (chi >= hi && error_pu > 0.0) return 0.0;
    if (chi <= lo && error_pu < 0.0) return 0.0;
    return k_i * error_pu * s_base_mva;
}

struct FrtOutput {
    bool error_flag = false;
    double i_q_plus = 0.0;  // additional reactive current, DG-base pu
};

/// Dead-band voltage observer and additional reactive current injection.
/// Positive output for under-voltage, negative for over-voltage; continuous
/// at the dead-band edges.
inline FrtOutput frt_flag_and_injection(double u_mag_pu, const ControlParams& p) {
    double dev = u_mag_pu - p.u_ref_pu;
    if (std::abs(dev) <= p.u_dead_pu) return {false, 0.0};
    if (dev < 0.0) return {true, -p.k_frt * (dev + p.u_dead_pu)};
    return {true, -p.k_frt * (dev - p.u_dead_pu)};
}

/// Curtail (i_d, i_q) to the converter limit. The prioritised axis (i_q
/// while the FRT error flag is up, i_d otherwise) is clamped first; the
/// other axis gets the remaining headroom. Signs are preserved.
inline std::pair<double, double> limit_currents(double i_d, double i_q, bool frt_active,
                                                double i_max) {
    auto clamp_mag = [](double v, double m) { return std::clamp(v, -m, m); };
    if (frt_active) {
        double iq = clamp_mag(i_q, i_max);
        double head = std::sqrt(std::max(0.0, i_max * i_max - iq * iq));
        return {clamp_mag(i_d, head), iq};
    }
    double id = clamp_mag(i_d, i_max);
    double head = std::sqrt(std::max(0.0, i_max * i_max - id * id));
    return {id, clamp_mag(i_q, head)};
}

/// dq current references from local power set points, with the PLL-frame
/// voltage floored to keep the division regular during deep faults.
/// Convention: S = u * conj(i), so i_q = -q/u_d delivers positive q.
inline std::pair<double, double> current_reference(double p_r1_mw, double q_r1_mvar,
                                                   Complex u_dq_pu, const ControlParams& p,
                                                   double s_base_mva) {
    double u_d = std::max(u_dq_pu.real(), p.u_floor_pu);
    double p_pu = p_r1_mw / s_base_mva;
    double q_pu = q_r1_mvar / s_base_mva;
    return {p_pu / u_d, -q_pu / u_d};
}

struct DGDerivatives {
    double d_chi_p = 0.0;
    double d_chi_q = 0.0;
    double d_theta = 0.0;
    double d_i_d = 0.0;
    double d_i_q = 0.0;
};

struct DGOutput {
    DGDerivatives deriv;
    Complex injection_pu;  // network-frame current, system pu
    bool frt_active = false;
};

/// One DG's state derivatives and network current injection.
///
/// error_p_pu/error_q_pu drive the local integrators; the caller supplies
/// them with the sign that makes generation rise when the measured import
/// exceeds its reference. The FRT injection is mapped so that positive
/// I_q+ raises the delivered reactive power.
inline DGOutput dg_dynamics(const DGState& st, Complex pcc_voltage_pu, double error_p_pu,
                            double error_q_pu, bool frozen, const ControlParams& p,
                            double s_base_mva) {
    DGOutput out;

    double u_mag = std::abs(pcc_voltage_pu);
    double theta_err = wrap_angle(std::arg(pcc_voltage_pu) - st.theta_pll);
    out.deriv.d_theta = theta_err / p.t_pll_s;

    out.deriv.d_chi_p = integrator_rate(st.chi_p_mw, error_p_pu, frozen, p.k_i_p,
                                        p.p_min_mw, p.p_max_mw, s_base_mva);
    out.deriv.d_chi_q = integrator_rate(st.chi_q_mvar, error_q_pu, frozen, p.k_i_q,
                                        p.q_min_mvar, p.q_max_mvar, s_base_mva);

    Complex u_dq = pcc_voltage_pu * std::polar(1.0, -st.theta_pll);
    auto [i_d_ref, i_q_ref] = current_reference(st.chi_p_mw, st.chi_q_mvar, u_dq, p,
                                                s_base_mva);

    FrtOutput frt = frt_flag_and_injection(u_mag, p);
    out.frt_active = frt.error_flag;
    double dg_to_system = p.s_dg_mva / s_base_mva;
    // Positive I_q+ must raise delivered Q, and Q = -u_d * i_q.
    double i_q_pre = i_q_ref - frt.i_q_plus * dg_to_system;

    double i_max_sys = p.i_max_pu * dg_to_system;
    auto [i_d_cmd, i_q_cmd] = limit_currents(i_d_ref, i_q_pre, frt.error_flag, i_max_sys);

    double i_d_now = st.i_d;
    double i_q_now = st.i_q;
    if (p.t_conv_s > 0.0) {
        out.deriv.d_i_d = (i_d_cmd - st.i_d) / p.t_conv_s;
        out.deriv.d_i_q = (i_q_cmd - st.i_q) / p.t_conv_s;
    } else {
        // Algebraic converter: the command is injected directly.
        i_d_now = i_d_cmd;
        i_q_now = i_q_cmd;
    }

    out.injection_pu = Complex(i_d_now, i_q_now) * std::polar(1.0, st.theta_pll);
    return out;
}

}  // namespace adnsim
