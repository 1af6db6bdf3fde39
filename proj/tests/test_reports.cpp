#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "adnsim/report.hpp"
#include "adnsim/svg.hpp"

using namespace adnsim;

namespace {

std::string data_path(const std::string& name) {
    return std::string(ADNSIM_DATA_DIR) + "/" + name;
}

std::shared_ptr<const Grid> cigre12() {
    static auto grid = std::make_shared<Grid>(load_grid_file(data_path("cigre12.json")));
    return grid;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0, pos = 0;
    while ((pos = hay.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

}  // namespace

TEST_CASE("power flow CSV round-trips through the reference reader", "[reports]") {
    auto grid = cigre12();
    PowerFlowSolution sol = solve_power_flow(*grid, LoadModel::ConstantPQ);

    std::ostringstream os;
    write_powerflow_csv(os, *grid, sol, LoadModel::ConstantPQ);
    std::string csv = os.str();

    CHECK(csv.rfind("bus_id,v_mag_pu,v_angle_deg", 0) == 0);
    CHECK(csv.find("# transformer_mv_import_mw=") != std::string::npos);

    std::istringstream is(csv);
    auto rows = read_reference_csv(is);
    REQUIRE(rows.size() == grid->bus_count());
    for (const auto& b : grid->buses) {
        Complex u = sol.voltage(*grid, b.id);
        CHECK(rows.at(b.id).v_mag_pu == Catch::Approx(std::abs(u)).margin(1e-9));
        CHECK(rows.at(b.id).v_angle_deg ==
              Catch::Approx(std::arg(u) * kDegPerRad).margin(1e-9));
    }
}

TEST_CASE("reference reader rejects malformed numerics", "[reports]") {
    std::istringstream is("bus_id,v_mag_pu,v_angle_deg\nMV-01,abc,0\n");
    CHECK_THROWS_AS(read_reference_csv(is), std::invalid_argument);
}

TEST_CASE("trajectory CSV has one column block per bus and DG", "[reports]") {
    auto grid = cigre12();
    Scenario sc;
    sc.grid = grid;
    sc.t_end = 0.02;
    sc.solver.sample_dt = 0.01;
    Trajectory traj = simulate(sc);
    REQUIRE(traj.completed());

    std::ostringstream os;
    write_trajectory_csv(os, *grid, traj);
    std::string csv = os.str();
    std::string header = csv.substr(0, csv.find('\n'));
    // time + 2 per bus + 2 meas + 2 per DG
    auto commas = count_occurrences(header, ",");
    CHECK(commas == 2 * grid->bus_count() + 2 + 2 * grid->dg_buses.size());
    CHECK(header.find("v_mag_MV-08") != std::string::npos);
    CHECK(header.find("chi_p_MV-11") != std::string::npos);
    CHECK(header.find("p_meas_mw") != std::string::npos);
}

TEST_CASE("trial and envelope CSV formats", "[reports]") {
    std::vector<TrialRecord> trials(2);
    trials[0].index = 0;
    trials[0].r_on_ohm = 4.5;
    trials[0].duration_s = 0.151;
    trials[0].survived = true;
    trials[1].index = 1;
    trials[1].numerical_failure = true;
    trials[1].failure_t_s = 0.5;

    std::ostringstream os;
    write_trials_csv(os, trials, false);
    std::string csv = os.str();
    CHECK(csv.find("trial_index,r_on_ohm,duration_ms,included,survived") == 0);
    CHECK(csv.find("0,4.5,151,1,1,,0") != std::string::npos);
    CHECK(csv.find("numerical_failure") != std::string::npos);

    std::vector<PqSample> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({10.0, 5.0, true});
    EnvelopeMap map = cluster_cells(samples, 10.0, 5.0, 1.0, 0.0, 0.5, 0.5, 5);
    std::ostringstream env;
    write_envelope_csv(env, map);
    CHECK(env.str().find("cell_p_center,cell_q_center,count,survivors,mu") == 0);
    CHECK(env.str().find("insufficient") != std::string::npos);  // empty outer cells
    CHECK(env.str().find(",10,10,1") != std::string::npos);      // the filled centre
}

TEST_CASE("line chart SVG contains every series", "[reports]") {
    std::vector<svg::Series> series(3);
    for (int s = 0; s < 3; ++s) {
        series[s].label = "series" + std::to_string(s);
        for (int i = 0; i <= 10; ++i) {
            series[s].x.push_back(i * 0.1);
            series[s].y.push_back(std::sin(i * 0.1 + s));
        }
    }
    std::string svg_text = svg::line_chart(series, "t", "y");
    CHECK(svg_text.rfind("<svg", 0) == 0);
    CHECK(svg_text.find("</svg>") != std::string::npos);
    CHECK(count_occurrences(svg_text, "<polyline") == 3);
    CHECK(svg_text.find("series2") != std::string::npos);
}

TEST_CASE("bar chart SVG has a bar and whisker per entry", "[reports]") {
    std::string svg_text = svg::bar_chart({"A", "B", "C"}, {0.5, 0.8, 0.9},
                                          {0.05, 0.05, 0.05}, "mu");
    CHECK(count_occurrences(svg_text, "<rect") == 3);
    CHECK(svg_text.find("0.9") != std::string::npos);
}

TEST_CASE("heatmap SVG maps mu monotonically to grayscale", "[reports]") {
    std::vector<svg::HeatCell> cells = {{0, 0, true, 0.0},
                                        {1, 0, true, 1.0},
                                        {0, 1, true, 0.5},
                                        {1, 1, false, 0.0}};
    std::string svg_text = svg::heatmap(cells, 1.0, 1.0, "P", "Q");
    CHECK(svg_text.find("#000000") != std::string::npos);  // mu = 0 is black
    CHECK(svg_text.find("#ffffff") != std::string::npos);  // mu = 1 is white
    CHECK(svg_text.find("#808080") != std::string::npos);  // mu = 0.5 mid-gray
    CHECK(svg_text.find("#cfe7f5") != std::string::npos);  // insufficient cell
    CHECK(svg_text.rfind("<svg", 0) == 0);
    CHECK(svg_text.find("</svg>") != std::string::npos);
}
