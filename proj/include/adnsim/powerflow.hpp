#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adnsim/grid.hpp"
#include "adnsim/ybus.hpp"

namespace adnsim {

struct PowerFlowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// DG injections in MVA units (MW + j Mvar), keyed by bus id.
using DgInjections = std::map<std::string, Complex>;

struct PowerFlowOptions {
    double tol = 1e-8;   // max absolute power mismatch, pu
    int max_iter = 50;
    std::optional<Eigen::VectorXcd> warm_start;
};

struct PowerFlowSolution {
    Eigen::VectorXcd voltages;  // per-unit, indexed like Grid::buses
    int iterations = 0;
    double residual_norm = 0.0;

    [[nodiscard]] Complex voltage(const Grid& grid, const std::string& bus) const {
        return voltages(static_cast<Eigen::Index>(grid.bus_index(bus)));
    }
};

/// Real and reactive power at both ends of a branch or transformer, in MW
/// and Mvar, with currents oriented into the element at each terminal.
struct BranchFlow {
    double p_from_mw = 0.0;
    double q_from_mvar = 0.0;
    double p_to_mw = 0.0;
    double q_to_mvar = 0.0;

    [[nodiscard]] double loss_mw() const { return p_from_mw + p_to_mw; }
};

/// Specified complex injection per bus in per unit: DG minus load (loads
/// only under the ConstantPQ model; impedance loads live in the Y matrix).
inline Eigen::VectorXcd specified_injection_pu(const Grid& grid, LoadModel load_model,
                                               const DgInjections& dg_injections) {
    const auto n = static_cast<Eigen::Index>(grid.bus_count());
    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(n);
    if (load_model == LoadModel::ConstantPQ) {
        for (const auto& [bus, load] : grid.loads)
            s(static_cast<Eigen::Index>(grid.bus_index(bus))) -=
                grid.bases.power_to_pu(Complex(load.p_mw, load.q_mvar));
    }
    for (const auto& [bus, inj] : dg_injections)
        s(static_cast<Eigen::Index>(grid.bus_index(bus))) += grid.bases.power_to_pu(inj);
    return s;
}

/// Per-bus complex power mismatch (specified minus implied), pu. The slack
/// entry is zeroed: it is not part of the solved set.
inline Eigen::VectorXcd power_mismatch(const Grid& grid, const Eigen::VectorXcd& voltages,
                                       LoadModel load_model, const DgInjections& dg_injections) {
    YMatrix y = assemble_ybus(grid, load_model);
    Eigen::VectorXcd s_spec = specified_injection_pu(grid, load_model, dg_injections);
    Eigen::VectorXcd s_calc = voltages.array() * (y * voltages).conjugate().array();
    Eigen::VectorXcd mismatch = s_spec - s_calc;
    mismatch(static_cast<Eigen::Index>(grid.slack_index())) = Complex(0.0, 0.0);
    return mismatch;
}

namespace detail {

inline void polar_injections(const Eigen::MatrixXd& g, const Eigen::MatrixXd& b,
                             const Eigen::VectorXd& vm, const Eigen::VectorXd& va,
                             Eigen::VectorXd& p_calc, Eigen::VectorXd& q_calc) {
    const auto n = vm.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 0.0, q = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            double th = va(i) - va(k);
            double c = std::cos(th), s = std::sin(th);
            p += vm(i) * vm(k) * (g(i, k) * c + b(i, k) * s);
            q += vm(i) * vm(k) * (g(i, k) * s - b(i, k) * c);
        }
        p_calc(i) = p;
        q_calc(i) = q;
    }
}

/// Jacobian of the injected powers [P; Q] at the solved buses with respect
/// to [angle; magnitude] at the solved buses.
inline Eigen::MatrixXd polar_jacobian(const Eigen::MatrixXd& g, const Eigen::MatrixXd& b,
                                      const Eigen::VectorXd& vm, const Eigen::VectorXd& va,
                                      const Eigen::VectorXd& p_calc,
                                      const Eigen::VectorXd& q_calc,
                                      const std::vector<Eigen::Index>& pq) {
    const auto m = static_cast<Eigen::Index>(pq.size());
    Eigen::MatrixXd jac(2 * m, 2 * m);
    for (Eigen::Index r = 0; r < m; ++r) {
        Eigen::Index i = pq[r];
        for (Eigen::Index c = 0; c < m; ++c) {
            Eigen::Index j = pq[c];
            if (i == j) {
                jac(r, c) = -q_calc(i) - b(i, i) * vm(i) * vm(i);
                jac(r, m + c) = p_calc(i) / vm(i) + g(i, i) * vm(i);
                jac(m + r, c) = p_calc(i) - g(i, i) * vm(i) * vm(i);
                jac(m + r, m + c) = q_calc(i) / vm(i) - b(i, i) * vm(i);
            } else {
                double th = va(i) - va(j);
                double cs = std::cos(th), sn = std::sin(th);
                double gij = g(i, j), bij = b(i, j);
                jac(r, c) = vm(i) * vm(j) * (gij * sn - bij * cs);
                jac(r, m + c) = vm(i) * (gij * cs + bij * sn);
                jac(m + r, c) = -vm(i) * vm(j) * (gij * cs + bij * sn);
                jac(m + r, m + c) = vm(i) * (gij * sn - bij * cs);
            }
        }
    }
    return jac;
}

/// Newton-Raphson in polar coordinates over all non-slack buses (all PQ).
inline PowerFlowSolution newton_power_flow(const Grid& grid, const YMatrix& y,
                                           const Eigen::VectorXcd& s_spec,
                                           const PowerFlowOptions& opt) {
    const auto n = static_cast<Eigen::Index>(grid.bus_count());
    const auto slack = static_cast<Eigen::Index>(grid.slack_index());

    std::vector<Eigen::Index> pq;  // solved buses
    pq.reserve(n - 1);
    for (Eigen::Index i = 0; i < n; ++i)
        if (i != slack) pq.push_back(i);
    const auto m = static_cast<Eigen::Index>(pq.size());

    Eigen::VectorXcd u(n);
    if (opt.warm_start) {
        if (opt.warm_start->size() != n)
            throw PowerFlowError("warm start vector has wrong size");
        u = *opt.warm_start;
    } else {
        u.setConstant(Complex(1.0, 0.0));
    }
    u(slack) = grid.slack_voltage();

    Eigen::VectorXd vm(n), va(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        vm(i) = std::abs(u(i));
        va(i) = std::arg(u(i));
    }

    const Eigen::MatrixXd g = y.real();
    const Eigen::MatrixXd b = y.imag();

    PowerFlowSolution sol;
    Eigen::VectorXd p_calc(n), q_calc(n);
    for (int iter = 0; iter <= opt.max_iter; ++iter) {
        polar_injections(g, b, vm, va, p_calc, q_calc);

        Eigen::VectorXd rhs(2 * m);
        double resid = 0.0;
        for (Eigen::Index r = 0; r < m; ++r) {
            Eigen::Index i = pq[r];
            rhs(r) = s_spec(i).real() - p_calc(i);
            rhs(m + r) = s_spec(i).imag() - q_calc(i);
            resid = std::max(resid, std::max(std::abs(rhs(r)), std::abs(rhs(m + r))));
        }

        sol.iterations = iter;
        sol.residual_norm = resid;
        if (resid < opt.tol) {
            for (Eigen::Index i = 0; i < n; ++i) u(i) = std::polar(vm(i), va(i));
            u(slack) = grid.slack_voltage();
            sol.voltages = u;
            return sol;
        }
        if (iter == opt.max_iter) break;

        Eigen::MatrixXd jac = polar_jacobian(g, b, vm, va, p_calc, q_calc, pq);
        Eigen::VectorXd step = jac.partialPivLu().solve(rhs);
        if (!step.allFinite()) throw PowerFlowError("singular power flow Jacobian");
        for (Eigen::Index r = 0; r < m; ++r) {
            va(pq[r]) += step(r);
            vm(pq[r]) += step(m + r);
        }
    }

    throw PowerFlowError("power flow did not converge after " +
                         std::to_string(opt.max_iter) + " iterations (residual " +
                         std::to_string(sol.residual_norm) + " pu)");
}

}  // namespace detail

inline PowerFlowSolution solve_power_flow(const Grid& grid, LoadModel load_model,
                                          const DgInjections& dg_injections = {},
                                          const PowerFlowOptions& opt = {}) {
    YMatrix y = assemble_ybus(grid, load_model);
    Eigen::VectorXcd s_spec = specified_injection_pu(grid, load_model, dg_injections);
    return detail::newton_power_flow(grid, y, s_spec, opt);
}

/// Flow over a line computed from its terminal voltages.
inline BranchFlow branch_flow(const Grid& grid, const PowerFlowSolution& sol,
                              const Branch& br) {
    if (!br.in_service) return {};
    Complex uf = sol.voltage(grid, br.from);
    Complex ut = sol.voltage(grid, br.to);
    Complex ys = branch_series_admittance(grid, br);
    Complex ysh = branch_shunt_admittance(grid, br);
    Complex i_from = ys * (uf - ut) + 0.5 * ysh * uf;
    Complex i_to = ys * (ut - uf) + 0.5 * ysh * ut;
    Complex s_from = grid.bases.power_from_pu(uf * std::conj(i_from));
    Complex s_to = grid.bases.power_from_pu(ut * std::conj(i_to));
    return {s_from.real(), s_from.imag(), s_to.real(), s_to.imag()};
}

/// Flow over the transformer (from = HV side, to = MV side).
inline BranchFlow transformer_flow(const Grid& grid, const PowerFlowSolution& sol) {
    const auto& tr = grid.transformer;
    Complex uf = sol.voltage(grid, tr.from);
    Complex ut = sol.voltage(grid, tr.to);
    Complex ys = transformer_series_admittance(grid, tr);
    double a = tr.tap.ratio();
    Complex i_from = ys / (a * a) * uf - ys / a * ut;
    Complex i_to = -ys / a * uf + ys * ut;
    Complex s_from = grid.bases.power_from_pu(uf * std::conj(i_from));
    Complex s_to = grid.bases.power_from_pu(ut * std::conj(i_to));
    return {s_from.real(), s_from.imag(), s_to.real(), s_to.imag()};
}

/// Named-branch lookup used by the CLI ("from-to" keys).
inline BranchFlow branch_flow(const Grid& grid, const PowerFlowSolution& sol,
                              const std::string& from, const std::string& to) {
    for (const auto& br : grid.branches)
        if (br.from == from && br.to == to) return branch_flow(grid, sol, br);
    if (grid.transformer.from == from && grid.transformer.to == to)
        return transformer_flow(grid, sol);
    throw GridError("unknown branch: " + from + "-" + to);
}

/// Power imported into the MV network over the transformer, measured at the
/// MV terminal (MW + j Mvar). This is the ADN measurement signal.
inline Complex transformer_mv_import_mva(const Grid& grid, const Eigen::VectorXcd& voltages) {
    const auto& tr = grid.transformer;
    Complex uf = voltages(static_cast<Eigen::Index>(grid.bus_index(tr.from)));
    Complex ut = voltages(static_cast<Eigen::Index>(grid.bus_index(tr.to)));
    Complex ys = transformer_series_admittance(grid, tr);
    double a = tr.tap.ratio();
    Complex i_to = -ys / a * uf + ys * ut;
    return grid.bases.power_from_pu(-ut * std::conj(i_to));
}

}  // namespace adnsim
