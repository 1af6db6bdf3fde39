#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace adnsim {

struct IntegratorOptions {
    double rtol = 1e-6;
    double atol = 1e-8;
    double max_step = 0.25;
    double min_step = 1e-12;
    double initial_step = 1e-4;
    double fd_epsilon = 1e-6;        // relative finite-difference perturbation
    Eigen::VectorXd typical_scale;   // per-state floor for FD perturbations
};

enum class IntegrateStatus { Completed, Aborted, StepSizeCollapse, RhsFailure };

/// Adaptive linearly implicit one-step method (Rosenbrock pair of order
/// 2(3), L-stable) for stiff systems whose right-hand side may fail, e.g.
/// because an inner algebraic solve does not converge. The Jacobian is
/// formed by forward differences at every step.
///
/// System requirements:
///   Eigen::Index size() const;
///   bool rhs(double t, const Eigen::VectorXd& y, Eigen::VectorXd& f);
template <class System>
class Rosenbrock23 {
public:
    Rosenbrock23(System& system, IntegratorOptions opt)
        : sys_(system), opt_(std::move(opt)) {
        const Eigen::Index n = sys_.size();
        if (opt_.typical_scale.size() != n)
            opt_.typical_scale = Eigen::VectorXd::Constant(n, 1.0);
        f0_.resize(n);
        f1_.resize(n);
        f2_.resize(n);
        k1_.resize(n);
        k2_.resize(n);
        k3_.resize(n);
        jac_.resize(n, n);
    }

    /// Advance (t, y) to t_end. After every accepted step the observer is
    /// called as observer(t0, y0, f0, t1, y1, f1) -> bool so callers can
    /// build interpolated output; returning false stops the integration
    /// (status Aborted). On failure (t, y) is left at the last accepted
    /// point.
    template <class StepObserver>
    IntegrateStatus integrate(double& t, Eigen::VectorXd& y, double t_end,
                              StepObserver&& observer) {
        const Eigen::Index n = sys_.size();
        if (t_end <= t) return IntegrateStatus::Completed;

        if (!sys_.rhs(t, y, f0_)) return IntegrateStatus::RhsFailure;
        double h = std::min({opt_.initial_step, opt_.max_step, t_end - t});

        Eigen::VectorXd y1(n);
        while (t < t_end) {
            h = std::min(h, t_end - t);
            if (h < opt_.min_step) return IntegrateStatus::StepSizeCollapse;

            if (!form_w(t, y, h)) {
                h *= 0.5;
                continue;
            }

            double err_norm;
            if (!stages(t, y, h, y1, err_norm)) {
                h *= 0.5;
                continue;
            }

            if (err_norm <= 1.0) {
                bool keep_going = observer(t, y, f0_, t + h, y1, f2_);
                t += h;
                y.swap(y1);
                f0_.swap(f2_);  // first-same-as-last
                if (!keep_going) return IntegrateStatus::Aborted;
                double grow = 0.8 * std::pow(std::max(err_norm, 1e-10), -1.0 / 3.0);
                h = std::min(h * std::clamp(grow, 0.2, 5.0), opt_.max_step);
            } else {
                double shrink = 0.8 * std::pow(err_norm, -1.0 / 3.0);
                h *= std::clamp(shrink, 0.2, 0.9);
            }
        }
        return IntegrateStatus::Completed;
    }

    /// One trial step from (t, y) with fixed h; no adaptation. Used by the
    /// order and estimator tests.
    bool single_step(double t, const Eigen::VectorXd& y, double h, Eigen::VectorXd& y1,
                     double& err_norm) {
        if (!sys_.rhs(t, y, f0_)) return false;
        if (!form_w(t, y, h)) return false;
        return stages(t, y, h, y1, err_norm);
    }

private:
    static constexpr double kD = 0.29289321881345254;   // 1/(2+sqrt(2))
    static constexpr double kE32 = 7.414213562373095;   // 6+sqrt(2)

    System& sys_;
    IntegratorOptions opt_;
    Eigen::VectorXd f0_, f1_, f2_, k1_, k2_, k3_;
    Eigen::MatrixXd jac_;
    Eigen::PartialPivLU<Eigen::MatrixXd> w_lu_;

    /// Forward-difference Jacobian at (t, y), then factor W = I - h*d*J.
    bool form_w(double t, const Eigen::VectorXd& y, double h) {
        const Eigen::Index n = sys_.size();
        Eigen::VectorXd yp = y, fp(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            double delta =
                opt_.fd_epsilon * std::max(std::abs(y(j)), opt_.typical_scale(j));
            yp(j) = y(j) + delta;
            if (!sys_.rhs(t, yp, fp)) {
                delta *= 1e-3;
                yp(j) = y(j) + delta;
                if (!sys_.rhs(t, yp, fp)) return false;
            }
            jac_.col(j) = (fp - f0_) / delta;
            yp(j) = y(j);
        }

        Eigen::MatrixXd w = -h * kD * jac_;
        w.diagonal().array() += 1.0;
        w_lu_.compute(w);
        return true;
    }

    bool stages(double t, const Eigen::VectorXd& y, double h, Eigen::VectorXd& y1,
                double& err_norm) {
        k1_ = w_lu_.solve(f0_);
        if (!k1_.allFinite()) return false;

        if (!sys_.rhs(t + 0.5 * h, y + 0.5 * h * k1_, f1_)) return false;
        k2_ = w_lu_.solve(f1_ - k1_) + k1_;

        y1 = y + h * k2_;
        if (!sys_.rhs(t + h, y1, f2_)) return false;
        k3_ = w_lu_.solve(f2_ - kE32 * (k2_ - f1_) - 2.0 * (k1_ - f0_));
        if (!k3_.allFinite()) return false;

        double acc = 0.0;
        const Eigen::Index n = y.size();
        for (Eigen::Index i = 0; i < n; ++i) {
            double e = (h / 6.0) * (k1_(i) - 2.0 * k2_(i) + k3_(i));
            double w = opt_.atol + opt_.rtol * std::max(std::abs(y(i)), std::abs(y1(i)));
            acc += (e / w) * (e / w);
        }
        err_norm = std::sqrt(acc / static_cast<double>(n));
        return true;
    }
};

}  // namespace adnsim
