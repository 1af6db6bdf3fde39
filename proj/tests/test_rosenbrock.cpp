#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "adnsim/rosenbrock.hpp"

using namespace adnsim;

namespace {

// y' = -y + sin(t), y(0)=1; exact: y = 0.5(sin t - cos t) + 1.5 e^{-t}.
struct ForcedDecay {
    [[nodiscard]] Eigen::Index size() const { return 1; }
    bool rhs(double t, const Eigen::VectorXd& y, Eigen::VectorXd& f) const {
        f(0) = -y(0) + std::sin(t);
        return true;
    }
    static double exact(double t) {
        return 0.5 * (std::sin(t) - std::cos(t)) + 1.5 * std::exp(-t);
    }
};

// Stiff linear system with lambda = -1e6 plus a slow component.
struct StiffLinear {
    [[nodiscard]] Eigen::Index size() const { return 2; }
    bool rhs(double, const Eigen::VectorXd& y, Eigen::VectorXd& f) const {
        f(0) = -1e6 * y(0);
        f(1) = -y(1);
        return true;
    }
};

// Fails whenever y crosses below a threshold.
struct FailingSystem {
    [[nodiscard]] Eigen::Index size() const { return 1; }
    bool rhs(double, const Eigen::VectorXd& y, Eigen::VectorXd& f) const {
        if (y(0) < 0.5) return false;
        f(0) = -1.0;
        return true;
    }
};

}  // namespace

TEST_CASE("fixed-step convergence is second order", "[rosenbrock]") {
    ForcedDecay sys;
    IntegratorOptions opt;
    Rosenbrock23<ForcedDecay> stepper(sys, opt);

    auto global_error = [&](double h) {
        Eigen::VectorXd y(1), y1(1);
        y(0) = 1.0;
        double t = 0.0, err_norm = 0.0;
        int steps = static_cast<int>(std::round(1.0 / h));
        for (int i = 0; i < steps; ++i) {
            REQUIRE(stepper.single_step(t, y, h, y1, err_norm));
            y = y1;
            t += h;
        }
        return std::abs(y(0) - ForcedDecay::exact(t));
    };

    double e1 = global_error(0.02);
    double e2 = global_error(0.01);
    double e3 = global_error(0.005);
    double order12 = std::log2(e1 / e2);
    double order23 = std::log2(e2 / e3);
    INFO("errors " << e1 << " " << e2 << " " << e3);
    CHECK(order12 > 1.7);
    CHECK(order23 > 1.7);
    CHECK(order12 < 2.5);
}

TEST_CASE("error estimator tracks the true local error", "[rosenbrock]") {
    ForcedDecay sys;
    IntegratorOptions opt;
    opt.rtol = 1.0;  // weights ~ |y|, so err_norm ~ absolute error here
    opt.atol = 0.0;
    Rosenbrock23<ForcedDecay> stepper(sys, opt);

    Eigen::VectorXd y(1), y1(1), fine(1), tmp(1);
    y(0) = 1.0;
    const double h = 0.05;
    double est = 0.0;
    REQUIRE(stepper.single_step(0.0, y, h, y1, est));

    // Reference: many small steps across the same interval.
    fine = y;
    double t = 0.0;
    for (int i = 0; i < 1000; ++i) {
        double unused;
        REQUIRE(stepper.single_step(t, fine, h / 1000, tmp, unused));
        fine = tmp;
        t += h / 1000;
    }
    double true_err = std::abs(y1(0) - fine(0));
    double est_abs = est * (opt.rtol * std::max(std::abs(y(0)), std::abs(y1(0))));
    CHECK(est_abs > 0.02 * true_err);
    CHECK(est_abs < 50.0 * true_err);
}

TEST_CASE("stiff decay is handled with large steps", "[rosenbrock]") {
    StiffLinear sys;
    IntegratorOptions opt;
    opt.rtol = 1e-4;
    opt.max_step = 0.5;
    opt.initial_step = 1e-4;
    Rosenbrock23<StiffLinear> stepper(sys, opt);

    Eigen::VectorXd y(2);
    y << 1.0, 1.0;
    double t = 0.0;
    int steps = 0;
    auto status = stepper.integrate(t, y, 10.0, [&](double, const Eigen::VectorXd&,
                                                    const Eigen::VectorXd&, double,
                                                    const Eigen::VectorXd&,
                                                    const Eigen::VectorXd&) { ++steps; return true; });
    CHECK(status == IntegrateStatus::Completed);
    CHECK(t == Catch::Approx(10.0));
    CHECK(std::abs(y(0)) < 1e-6);                          // fast mode fully decayed
    CHECK(y(1) == Catch::Approx(std::exp(-10.0)).epsilon(1e-2));
    // Stability, not accuracy, must set the step count: an explicit method
    // would need ~1e7 steps for the 1e6-stiff mode.
    CHECK(steps < 2000);
}

TEST_CASE("adaptive integration meets the tolerance", "[rosenbrock]") {
    ForcedDecay sys;
    for (double rtol : {1e-4, 1e-6, 1e-8}) {
        IntegratorOptions opt;
        opt.rtol = rtol;
        opt.atol = rtol * 1e-2;
        opt.max_step = 1.0;
        Rosenbrock23<ForcedDecay> stepper(sys, opt);
        Eigen::VectorXd y(1);
        y(0) = 1.0;
        double t = 0.0;
        auto status = stepper.integrate(t, y, 5.0, [](auto&&...) { return true; });
        REQUIRE(status == IntegrateStatus::Completed);
        // Global error stays within a modest multiple of the tolerance.
        CHECK(std::abs(y(0) - ForcedDecay::exact(5.0)) < 200.0 * rtol);
    }
}

TEST_CASE("tightening tolerances shrinks the solution change", "[rosenbrock]") {
    ForcedDecay sys;
    auto solve_with = [&](double rtol) {
        IntegratorOptions opt;
        opt.rtol = rtol;
        opt.atol = rtol * 1e-2;
        opt.max_step = 1.0;
        Rosenbrock23<ForcedDecay> stepper(sys, opt);
        Eigen::VectorXd y(1);
        y(0) = 1.0;
        double t = 0.0;
        REQUIRE(stepper.integrate(t, y, 5.0, [](auto&&...) { return true; }) ==
                IntegrateStatus::Completed);
        return y(0);
    };
    double exact = ForcedDecay::exact(5.0);
    double d1 = std::abs(solve_with(1e-4) - exact);
    double d2 = std::abs(solve_with(1e-6) - exact);
    CHECK(d2 * 5.0 < d1);  // at least a factor 5 per 100x tightening
}

TEST_CASE("rhs failure surfaces as a failure status at the last good time",
          "[rosenbrock]") {
    FailingSystem sys;
    IntegratorOptions opt;
    opt.max_step = 0.1;
    Rosenbrock23<FailingSystem> stepper(sys, opt);
    Eigen::VectorXd y(1);
    y(0) = 1.0;
    double t = 0.0;
    auto status = stepper.integrate(t, y, 2.0, [](auto&&...) { return true; });
    CHECK(status == IntegrateStatus::StepSizeCollapse);
    CHECK(t < 0.55);       // y hits 0.5 at t = 0.5
    CHECK(y(0) >= 0.5);    // state left at the last accepted point
}
