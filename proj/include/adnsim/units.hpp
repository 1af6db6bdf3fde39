#pragma once

#include <cmath>
#include <complex>

namespace adnsim {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegPerRad = 180.0 / kPi;

/// System-wide per-unit bases. Impedance bases derive from the voltage
/// level of the bus an element is connected to.
struct Bases {
    double s_mva = 100.0;
    double v_hv_kv = 110.0;
    double v_mv_kv = 20.0;

    [[nodiscard]] double z_base_ohm(double v_base_kv) const {
        return v_base_kv * v_base_kv / s_mva;
    }
    [[nodiscard]] double z_base_mv_ohm() const { return z_base_ohm(v_mv_kv); }

    [[nodiscard]] double power_to_pu(double mw) const { return mw / s_mva; }
    [[nodiscard]] double power_from_pu(double pu) const { return pu * s_mva; }
    [[nodiscard]] Complex power_to_pu(Complex s_mva_c) const { return s_mva_c / s_mva; }
    [[nodiscard]] Complex power_from_pu(Complex pu) const { return pu * s_mva; }

    [[nodiscard]] double voltage_to_pu(double kv, double v_base_kv) const { return kv / v_base_kv; }
    [[nodiscard]] double voltage_from_pu(double pu, double v_base_kv) const { return pu * v_base_kv; }

    [[nodiscard]] double impedance_to_pu(double ohm, double v_base_kv) const {
        return ohm / z_base_ohm(v_base_kv);
    }
    [[nodiscard]] double impedance_from_pu(double pu, double v_base_kv) const {
        return pu * z_base_ohm(v_base_kv);
    }
    /// Physical admittance (S) to per unit.
    [[nodiscard]] double admittance_to_pu(double siemens, double v_base_kv) const {
        return siemens * z_base_ohm(v_base_kv);
    }
};

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double rad) {
    double a = std::remainder(rad, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    return a;
}

}  // namespace adnsim
