#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "adnsim/montecarlo.hpp"
#include "adnsim/report.hpp"

using namespace adnsim;

namespace {

std::string data_path(const std::string& name) {
    return std::string(ADNSIM_DATA_DIR) + "/" + name;
}

std::shared_ptr<const Grid> cigre12() {
    static auto grid = std::make_shared<Grid>(load_grid_file(data_path("cigre12.json")));
    return grid;
}

/// Short curve keeps unit-test trials cheap (1.0 s horizon).
LimitingCurve short_curve() {
    return LimitingCurve({{0.0, 0.15}, {0.15, 0.15}, {1.0, 0.8}});
}

std::string trials_to_string(std::span<const TrialRecord> trials, bool envelope) {
    std::ostringstream os;
    write_trials_csv(os, trials, envelope);
    return os.str();
}

}  // namespace

TEST_CASE("fault sampling reproduces the ensemble statistics", "[montecarlo]") {
    FaultModel model;
    std::mt19937_64 rng(12345);

    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    double r_min = 1e9, r_max = -1e9;
    for (int i = 0; i < n; ++i) {
        FaultSpec f = sample_fault(rng, model, "MV-03", 0.5);
        sum += f.duration_s;
        sum2 += f.duration_s * f.duration_s;
        r_min = std::min(r_min, f.r_on_ohm);
        r_max = std::max(r_max, f.r_on_ohm);
        if (i < 100) {
            CHECK(f.r_on_ohm >= 3.0);
            CHECK(f.r_on_ohm <= 10.0);
            CHECK(f.duration_s > 0.0);
            CHECK(f.t_on_s == 0.5);
            CHECK(f.bus == "MV-03");
        }
    }
    double mean = sum / n;
    double sd = std::sqrt(sum2 / n - mean * mean);
    CHECK(mean == Catch::Approx(0.150).margin(0.001));
    CHECK(sd == Catch::Approx(0.010).margin(0.0005));
    CHECK(r_min >= 3.0);
    CHECK(r_max <= 10.0);
}

TEST_CASE("degenerate duration spread collapses to the mean", "[montecarlo]") {
    FaultModel model;
    model.duration_std_s = 1e-12;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        FaultSpec f = sample_fault(rng, model, "MV-05", 0.5);
        CHECK(f.duration_s == Catch::Approx(0.150).margin(1e-9));
    }
}

TEST_CASE("invalid fault models are rejected", "[montecarlo]") {
    FaultModel bad;
    bad.duration_std_s = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = FaultModel{};
    bad.r_on_lo_ohm = 5.0;
    bad.r_on_hi_ohm = 3.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("counter-based trial seeding is order-independent", "[montecarlo]") {
    auto a = trial_rng(42, 7);
    auto b = trial_rng(42, 7);
    CHECK(a() == b());
    auto c = trial_rng(42, 8);
    CHECK(trial_rng(42, 8)() == c());
    CHECK(trial_rng(42, 7)() != trial_rng(43, 7)());
}

TEST_CASE("cell clustering", "[montecarlo]") {
    SECTION("disjoint tiling when stride equals the cell size") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> up(-2.0, 2.0);
        std::vector<PqSample> samples;
        for (int i = 0; i < 500; ++i) samples.push_back({up(rng), up(rng), i % 2 == 0});

        EnvelopeMap map = cluster_cells(samples, 0.0, 0.0, 2.0, 2.0, 0.5, 0.5, 10);
        long total = 0;
        for (const auto& c : map.cells) total += c.count;
        CHECK(total == 500);  // every sample in exactly one cell
    }

    SECTION("half-stride overlap puts interior samples in exactly four cells") {
        // Brute-force membership oracle on a handful of hand-placed samples.
        std::vector<PqSample> samples = {{0.1, 0.1, true}, {-0.6, 0.4, false},
                                         {0.9, -0.9, true}};
        const double cell = 0.5, stride = 0.25, half_range = 2.0;
        EnvelopeMap map = cluster_cells(samples, 0.0, 0.0, half_range, half_range, cell,
                                        stride, 1);
        for (const auto& s : samples) {
            long direct = 0;
            for (const auto& c : map.cells)
                if (std::abs(s.p_mw - c.p_center_mw) <= cell / 2 + 1e-12 &&
                    std::abs(s.q_mvar - c.q_center_mvar) <= cell / 2 + 1e-12)
                    ++direct;
            CHECK(direct == 4);
        }
        long total = 0;
        for (const auto& c : map.cells) total += c.count;
        CHECK(total == 3 * 4);
    }

    SECTION("empty sample list leaves every cell insufficient") {
        EnvelopeMap map = cluster_cells({}, 0.0, 0.0, 1.0, 1.0, 0.5, 0.25, 1);
        CHECK(!map.cells.empty());
        for (const auto& c : map.cells) {
            CHECK(c.count == 0);
            CHECK_FALSE(c.sufficient);
        }
    }

    SECTION("mu is the survivor fraction once the count suffices") {
        std::vector<PqSample> samples;
        for (int i = 0; i < 100; ++i) samples.push_back({0.0, 0.0, i < 40});
        EnvelopeMap map = cluster_cells(samples, 0.0, 0.0, 0.0, 0.0, 0.5, 0.25, 100);
        REQUIRE(map.cells.size() == 1);
        CHECK(map.cells[0].sufficient);
        CHECK(map.cells[0].mu == Catch::Approx(0.40));

        EnvelopeMap insufficient = cluster_cells(
            std::span(samples.data(), 99), 0.0, 0.0, 0.0, 0.0, 0.5, 0.25, 100);
        CHECK_FALSE(insufficient.cells[0].sufficient);
    }

    SECTION("invalid configurations are rejected") {
        CHECK_THROWS_AS(cluster_cells({}, 0, 0, 1, 1, 0.0, 0.1, 1), std::invalid_argument);
        CHECK_THROWS_AS(cluster_cells({}, 0, 0, 1, 1, 0.5, 0.6, 1), std::invalid_argument);
        CHECK_THROWS_AS(cluster_cells({}, 0, 0, 1, 1, 0.5, 0.25, 0), std::invalid_argument);
    }
}

TEST_CASE("single-node study: estimate invariants and determinism", "[montecarlo]") {
    auto grid = cigre12();
    LimitingCurve curve = short_curve();
    FaultModel fm;
    StudyOptions opt;
    opt.workers = 1;

    SingleNodeResult serial = single_node_survivability(
        grid, "MV-08", 12, fm, LoadModel::ConstantPQ, curve, ControlParams{}, 7, opt);

    CHECK(serial.estimate.trials == 12);
    CHECK(serial.estimate.mu >= 0.0);
    CHECK(serial.estimate.mu <= 1.0);
    CHECK(serial.estimate.survivors >= 0);
    CHECK(serial.estimate.survivors <= 12);
    CHECK(serial.estimate.ci_half_width ==
          Catch::Approx(1.0 / (2.0 * std::sqrt(12.0))).margin(1e-15));
    CHECK(serial.estimate.mu ==
          Catch::Approx(static_cast<double>(serial.estimate.survivors) / 12.0));

    SECTION("parallel execution yields bit-identical trial records") {
        StudyOptions par = opt;
        par.workers = 4;
        SingleNodeResult parallel = single_node_survivability(
            grid, "MV-08", 12, fm, LoadModel::ConstantPQ, curve, ControlParams{}, 7, par);
        CHECK(trials_to_string(serial.trials, false) ==
              trials_to_string(parallel.trials, false));
        CHECK(serial.estimate.mu == parallel.estimate.mu);
    }

    SECTION("same seed replays identically, different seed differs somewhere") {
        SingleNodeResult again = single_node_survivability(
            grid, "MV-08", 12, fm, LoadModel::ConstantPQ, curve, ControlParams{}, 7, opt);
        CHECK(trials_to_string(serial.trials, false) ==
              trials_to_string(again.trials, false));

        SingleNodeResult other = single_node_survivability(
            grid, "MV-08", 12, fm, LoadModel::ConstantPQ, curve, ControlParams{}, 8, opt);
        CHECK(trials_to_string(serial.trials, false) !=
              trials_to_string(other.trials, false));
    }
}

TEST_CASE("unviolable curve gives certain survival", "[montecarlo]") {
    auto grid = cigre12();
    LimitingCurve zero_curve({{0.0, 0.0}, {0.5, 0.0}});
    FaultModel fm;
    fm.r_on_lo_ohm = 6.0;  // keep the constant-power case solvable
    StudyOptions opt;
    opt.workers = 1;
    SingleNodeResult res = single_node_survivability(
        grid, "MV-08", 5, fm, LoadModel::ConstantImpedance, zero_curve, ControlParams{}, 3,
        opt);
    CHECK(res.estimate.mu == 1.0);
}

TEST_CASE("five-trial study equals the per-trial oracle", "[montecarlo]") {
    auto grid = cigre12();
    LimitingCurve curve = short_curve();
    FaultModel fm;
    StudyOptions opt;
    opt.workers = 2;
    const std::uint64_t seed = 11;

    SingleNodeResult study = single_node_survivability(
        grid, "MV-03", 5, fm, LoadModel::ConstantPQ, curve, ControlParams{}, seed, opt);

    // Independent route: replay each trial through simulate + check_survival.
    PowerFlowOptions pf_opt;
    pf_opt.tol = 1e-11;
    PowerFlowSolution pf = solve_power_flow(*grid, LoadModel::ConstantPQ, {}, pf_opt);
    Complex base = transformer_mv_import_mva(*grid, pf.voltages);

    long survivors = 0;
    for (long i = 0; i < 5; ++i) {
        std::mt19937_64 rng = trial_rng(seed, static_cast<std::uint64_t>(i));
        FaultSpec fault = sample_fault(rng, fm, "MV-03", opt.t_on_s);
        CHECK(fault.r_on_ohm == study.trials[i].r_on_ohm);
        CHECK(fault.duration_s == study.trials[i].duration_s);

        Scenario sc;
        sc.grid = grid;
        sc.load_model = LoadModel::ConstantPQ;
        sc.references = ReferenceSchedule({{0.0, base.real(), base.imag()}});
        sc.faults = {fault};
        sc.t_end = opt.t_on_s + curve.horizon_s();
        Trajectory traj = simulate(sc);
        SurvivalVerdict verdict = check_survival(*grid, traj, fault, curve);
        CHECK(verdict.survived() == study.trials[i].survived);
        survivors += verdict.survived() ? 1 : 0;
    }
    CHECK(study.estimate.mu == Catch::Approx(survivors / 5.0).margin(1e-15));
}

TEST_CASE("degenerate envelope box collapses onto the base point", "[montecarlo]") {
    auto grid = cigre12();
    LimitingCurve curve = short_curve();
    FaultModel fm;
    EnvelopeOptions opt;
    opt.workers = 2;
    opt.p_half_range_mw = 0.0;
    opt.q_half_range_mvar = 0.0;
    opt.min_count = 5;

    EnvelopeResult res = envelope_study(grid, "MV-08", 8, fm, LoadModel::ConstantImpedance,
                                        curve, ControlParams{}, 21, opt);

    REQUIRE(res.map.cells.size() == 1);  // collapsed sampling box -> single cell
    CHECK(res.included_count == 8);      // base point trivially passes the filter
    const auto& cell = res.map.cells[0];
    CHECK(cell.count == 8);
    CHECK(cell.p_center_mw == Catch::Approx(res.base_p_mw));
    CHECK(cell.q_center_mvar == Catch::Approx(res.base_q_mvar));

    long survivors = 0;
    for (const auto& t : res.trials) survivors += t.survived ? 1 : 0;
    CHECK(cell.survivors == survivors);
    CHECK(cell.sufficient);
    CHECK(cell.mu == Catch::Approx(static_cast<double>(survivors) / 8.0));
}

TEST_CASE("envelope study: filter, determinism, clustering", "[montecarlo]") {
    auto grid = cigre12();
    LimitingCurve curve = short_curve();
    FaultModel fm;
    EnvelopeOptions opt;
    opt.workers = 1;
    opt.p_half_range_mw = 14.0;  // includes unreachable import targets
    opt.q_half_range_mvar = 3.0;
    opt.cell_size = 4.0;
    opt.stride = 2.0;
    opt.min_count = 3;

    EnvelopeResult res = envelope_study(grid, "MV-03", 24, fm, LoadModel::ConstantPQ,
                                        curve, ControlParams{}, 5, opt);

    SECTION("the feasibility filter excludes unreachable set points") {
        CHECK(res.included_count > 0);
        CHECK(res.included_count < 24);
        for (const auto& t : res.trials) {
            if (!t.included) {
                CHECK_FALSE(t.survived);  // excluded samples carry no verdict
            }
        }
        // Set points needing more than the 11 MW of DG headroom cannot pass.
        for (const auto& t : res.trials)
            if (t.p_ref_mw < res.base_p_mw - 12.0) CHECK_FALSE(t.included);
    }

    SECTION("clustering counts only included samples") {
        long total = 0;
        for (const auto& c : res.map.cells) total += c.count;
        // every included sample lands in at least one and at most 4 cells
        CHECK(total >= res.included_count);
        CHECK(total <= 4 * res.included_count);
    }

    SECTION("worker count does not change the records") {
        EnvelopeOptions par = opt;
        par.workers = 3;
        EnvelopeResult res2 = envelope_study(grid, "MV-03", 24, fm, LoadModel::ConstantPQ,
                                             curve, ControlParams{}, 5, par);
        CHECK(trials_to_string(res.trials, true) == trials_to_string(res2.trials, true));
    }
}
