#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <nlohmann/json.hpp>

#include "adnsim/grid.hpp"

using namespace adnsim;
using nlohmann::json;

namespace {

std::string data_path(const std::string& name) {
    return std::string(ADNSIM_DATA_DIR) + "/" + name;
}

json minimal_two_bus() {
    return json{
        {"bases", {{"s_mva", 100.0}, {"v_hv_kv", 110.0}, {"v_mv_kv", 20.0}}},
        {"slack", {{"bus", "MV-01"}, {"v_pu", 1.0}}},
        {"buses", json::array({json{{"id", "MV-01"}, {"v_kv", 20.0}},
                               json{{"id", "MV-02"}, {"v_kv", 20.0}}})},
        {"branches", json::array({json{{"from", "MV-01"},
                                       {"to", "MV-02"},
                                       {"r_ohm", 0.0},
                                       {"x_ohm", 0.4},
                                       {"b_us", 0.0}}})},
        {"loads", {{"MV-02", {{"p_mw", 50.0}, {"q_mvar", 10.0}}}}},
    };
}

}  // namespace

TEST_CASE("bundled cigre12 grid loads and validates", "[grid]") {
    Grid grid = load_grid_file(data_path("cigre12.json"));

    CHECK(grid.bus_count() == 12);
    CHECK(grid.slack.bus == "HV-00");

    int in_service = 0;
    for (const auto& br : grid.branches)
        if (br.in_service) ++in_service;
    // 10 in-service lines plus the transformer: 11 live series elements.
    CHECK(grid.branches.size() == 12);
    CHECK(in_service == 10);
    CHECK_FALSE(grid.transformer.from.empty());

    CHECK(grid.dg_buses.size() == 11);
    CHECK(grid.loads.size() == 10);
    CHECK(grid.loads.count("MV-02") == 0);
    CHECK(grid.mv_bus_ids().size() == 11);

    // Switches MV-06/MV-07 and MV-04/MV-11 remain open.
    for (const auto& br : grid.branches) {
        if ((br.from == "MV-06" && br.to == "MV-07") ||
            (br.from == "MV-04" && br.to == "MV-11"))
            CHECK_FALSE(br.in_service);
    }
}

TEST_CASE("branch referencing unknown bus is rejected", "[grid]") {
    json doc = minimal_two_bus();
    doc["branches"].push_back(
        json{{"from", "MV-01"}, {"to", "MV-99"}, {"r_ohm", 1.0}, {"x_ohm", 1.0}});
    CHECK_THROWS_MATCHES(load_grid(doc.dump()), GridError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("MV-99")));
}

TEST_CASE("minimal two-bus document is a valid grid", "[grid]") {
    Grid grid = load_grid(minimal_two_bus().dump());
    CHECK(grid.bus_count() == 2);
    CHECK(grid.branches.size() == 1);
    CHECK(grid.transformer.from.empty());
    CHECK(grid.slack_index() == 0);
}

TEST_CASE("grid document validation failures name the offender", "[grid]") {
    SECTION("not JSON") {
        CHECK_THROWS_AS(load_grid("not json"), GridError);
    }
    SECTION("duplicate bus id") {
        json doc = minimal_two_bus();
        doc["buses"].push_back(json{{"id", "MV-02"}, {"v_kv", 20.0}});
        CHECK_THROWS_MATCHES(load_grid(doc.dump()), GridError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("MV-02")));
    }
    SECTION("zero impedance branch") {
        json doc = minimal_two_bus();
        doc["branches"][0]["x_ohm"] = 0.0;
        CHECK_THROWS_AS(load_grid(doc.dump()), GridError);
    }
    SECTION("negative branch resistance") {
        json doc = minimal_two_bus();
        doc["branches"][0]["r_ohm"] = -1.0;
        CHECK_THROWS_AS(load_grid(doc.dump()), GridError);
    }
    SECTION("unknown slack bus") {
        json doc = minimal_two_bus();
        doc["slack"]["bus"] = "MV-77";
        CHECK_THROWS_MATCHES(load_grid(doc.dump()), GridError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("MV-77")));
    }
    SECTION("load at unknown bus") {
        json doc = minimal_two_bus();
        doc["loads"]["MV-42"] = {{"p_mw", 1.0}, {"q_mvar", 0.0}};
        CHECK_THROWS_MATCHES(load_grid(doc.dump()), GridError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("MV-42")));
    }
    SECTION("negative load") {
        json doc = minimal_two_bus();
        doc["loads"]["MV-02"]["p_mw"] = -5.0;
        CHECK_THROWS_AS(load_grid(doc.dump()), GridError);
    }
    SECTION("tap position outside declared range") {
        Grid good = load_grid_file(data_path("cigre12.json"));
        Transformer tr = good.transformer;
        tr.tap.position = 25;
        CHECK_THROWS_AS(Grid::make(good.bases, good.buses, good.branches, tr, good.loads,
                                   good.dg_buses, good.slack),
                        GridError);
    }
}

TEST_CASE("per-unit conversions round trip", "[grid]") {
    Bases bases{100.0, 110.0, 20.0};
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> mag(1e-3, 1e3);
    for (int i = 0; i < 200; ++i) {
        double x = mag(rng);
        CHECK(bases.power_from_pu(bases.power_to_pu(x)) == Catch::Approx(x).epsilon(1e-12));
        CHECK(bases.voltage_from_pu(bases.voltage_to_pu(x, 20.0), 20.0) ==
              Catch::Approx(x).epsilon(1e-12));
        CHECK(bases.impedance_from_pu(bases.impedance_to_pu(x, 110.0), 110.0) ==
              Catch::Approx(x).epsilon(1e-12));
    }
    CHECK(bases.z_base_mv_ohm() == Catch::Approx(4.0));
}

TEST_CASE("tap ratio mapping lives in data", "[grid]") {
    Grid grid = load_grid_file(data_path("cigre12.json"));
    // Bundled grid: position 10 with neutral 10 -> unity ratio.
    CHECK(grid.transformer.tap.ratio() == Catch::Approx(1.0));
    TapChanger t{14, 10, 0, 20, 0.00625};
    CHECK(t.ratio() == Catch::Approx(1.025));
}
