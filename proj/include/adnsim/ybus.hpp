#pragma once

#include <span>

#include <Eigen/Dense>

#include "adnsim/fault.hpp"
#include "adnsim/grid.hpp"

namespace adnsim {

using YMatrix = Eigen::MatrixXcd;

/// Series admittance of a branch in per unit on the system base.
inline Complex branch_series_admittance(const Grid& grid, const Branch& br) {
    double z_base = grid.bases.z_base_ohm(grid.buses[grid.bus_index(br.from)].v_base_kv);
    Complex z(br.r_ohm / z_base, br.x_ohm / z_base);
    if (z == Complex(0.0, 0.0))
        throw GridError("branch " + br.from + "-" + br.to + ": zero impedance");
    return 1.0 / z;
}

/// Total charging admittance of a branch in per unit (placed half per end).
inline Complex branch_shunt_admittance(const Grid& grid, const Branch& br) {
    double z_base = grid.bases.z_base_ohm(grid.buses[grid.bus_index(br.from)].v_base_kv);
    return Complex(0.0, br.b_us * 1e-6 * z_base);
}

/// Transformer series admittance in per unit on the system base.
inline Complex transformer_series_admittance(const Grid& grid, const Transformer& tr) {
    Complex z_own(tr.r_pu, tr.x_pu);
    Complex z = z_own * (grid.bases.s_mva / tr.rating_mva);
    if (z == Complex(0.0, 0.0)) throw GridError("transformer: zero impedance");
    return 1.0 / z;
}

/// Shunt admittance of a constant-impedance load at nominal voltage, pu.
inline Complex impedance_load_admittance(const Grid& grid, const LoadSpec& load) {
    Complex s_pu = grid.bases.power_to_pu(Complex(load.p_mw, load.q_mvar));
    return std::conj(s_pu);  // |V_nom| = 1 pu
}

/// Fault shunt conductance in per unit at the faulted bus.
inline Complex fault_admittance(const Grid& grid, const FaultSpec& fault) {
    if (fault.r_on_ohm <= 0.0)
        throw GridError("fault at " + fault.bus + ": non-positive resistance");
    double z_base = grid.bases.z_base_ohm(grid.buses[grid.bus_index(fault.bus)].v_base_kv);
    return Complex(z_base / fault.r_on_ohm, 0.0);
}

/// Assemble the bus admittance matrix in per unit. ConstantImpedance
/// loads and active faults enter as diagonal shunts; the transformer uses
/// the asymmetric off-nominal-tap stamp with the tap on the HV side.
inline YMatrix assemble_ybus(const Grid& grid, LoadModel load_model,
                             std::span<const FaultSpec> faults = {}) {
    const auto n = static_cast<Eigen::Index>(grid.bus_count());
    YMatrix y = YMatrix::Zero(n, n);

    for (const auto& br : grid.branches) {
        if (!br.in_service) continue;
        auto i = static_cast<Eigen::Index>(grid.bus_index(br.from));
        auto k = static_cast<Eigen::Index>(grid.bus_index(br.to));
        Complex ys = branch_series_admittance(grid, br);
        Complex ysh = branch_shunt_admittance(grid, br);
        y(i, i) += ys + 0.5 * ysh;
        y(k, k) += ys + 0.5 * ysh;
        y(i, k) -= ys;
        y(k, i) -= ys;
    }

    if (!grid.transformer.from.empty()) {
        const auto& tr = grid.transformer;
        auto f = static_cast<Eigen::Index>(grid.bus_index(tr.from));
        auto t = static_cast<Eigen::Index>(grid.bus_index(tr.to));
        Complex ys = transformer_series_admittance(grid, tr);
        double a = tr.tap.ratio();
        y(f, f) += ys / (a * a);
        y(f, t) -= ys / a;
        y(t, f) -= ys / a;
        y(t, t) += ys;
    }

    if (load_model == LoadModel::ConstantImpedance) {
        for (const auto& [bus, load] : grid.loads) {
            auto i = static_cast<Eigen::Index>(grid.bus_index(bus));
            y(i, i) += impedance_load_admittance(grid, load);
        }
    }

    for (const auto& fault : faults) {
        auto i = static_cast<Eigen::Index>(grid.bus_index(fault.bus));
        y(i, i) += fault_admittance(grid, fault);
    }

    return y;
}

}  // namespace adnsim
