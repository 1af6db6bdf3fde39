#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "adnsim/units.hpp"

namespace adnsim {

/// Raised on malformed or inconsistent grid documents. The message names
/// the offending element.
struct GridError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Bus {
    std::string id;
    double v_base_kv = 20.0;
};

struct Branch {
    std::string from;
    std::string to;
    double r_ohm = 0.0;
    double x_ohm = 0.0;
    double b_us = 0.0;  // total line charging susceptance, microsiemens
    bool in_service = true;
};

struct TapChanger {
    int position = 0;
    int neutral = 0;
    int min_position = 0;
    int max_position = 0;
    double step_pu = 0.0;  // per-unit ratio change per step

    [[nodiscard]] double ratio() const { return 1.0 + (position - neutral) * step_pu; }
};

/// Two-winding transformer. Impedance is given in per unit on the
/// transformer's own rating; winding nominals equal the bus voltage bases.
struct Transformer {
    std::string from;  // HV side
    std::string to;    // MV side
    double r_pu = 0.0;
    double x_pu = 0.0;
    double rating_mva = 0.0;
    TapChanger tap;
    double phase_shift_deg = 0.0;
};

struct LoadSpec {
    double p_mw = 0.0;
    double q_mvar = 0.0;
};

/// Study-wide load representation switch.
enum class LoadModel { ConstantPQ, ConstantImpedance };

struct SlackSpec {
    std::string bus;
    double v_pu = 1.0;
    double angle_deg = 0.0;
};

/// Immutable static description of the network. Construct through
/// load_grid() or make_grid(); both validate all invariants.
class Grid {
public:
    Bases bases;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    Transformer transformer;
    std::map<std::string, LoadSpec> loads;
    std::vector<std::string> dg_buses;
    SlackSpec slack;

    [[nodiscard]] std::size_t bus_count() const { return buses.size(); }

    [[nodiscard]] std::size_t bus_index(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw GridError("unknown bus id: " + id);
        return it->second;
    }

    [[nodiscard]] bool has_bus(const std::string& id) const { return index_.count(id) > 0; }

    [[nodiscard]] std::size_t slack_index() const { return bus_index(slack.bus); }

    [[nodiscard]] Complex slack_voltage() const {
        double ang = slack.angle_deg / kDegPerRad;
        return std::polar(slack.v_pu, ang);
    }

    /// MV bus ids in declaration order (everything that is not the slack's
    /// voltage level is treated as MV here; the network is two-level).
    [[nodiscard]] std::vector<std::string> mv_bus_ids() const {
        std::vector<std::string> out;
        for (const auto& b : buses)
            if (b.v_base_kv == bases.v_mv_kv) out.push_back(b.id);
        return out;
    }

    static Grid make(Bases bases, std::vector<Bus> buses, std::vector<Branch> branches,
                     Transformer transformer, std::map<std::string, LoadSpec> loads,
                     std::vector<std::string> dg_buses, SlackSpec slack) {
        Grid g;
        g.bases = bases;
        g.buses = std::move(buses);
        g.branches = std::move(branches);
        g.transformer = std::move(transformer);
        g.loads = std::move(loads);
        g.dg_buses = std::move(dg_buses);
        g.slack = std::move(slack);
        g.validate();
        return g;
    }

private:
    std::unordered_map<std::string, std::size_t> index_;

    void validate() {
        if (buses.empty()) throw GridError("grid has no buses");
        index_.clear();
        for (std::size_t i = 0; i < buses.size(); ++i) {
            if (buses[i].id.empty()) throw GridError("bus with empty id");
            if (!index_.emplace(buses[i].id, i).second)
                throw GridError("duplicate bus id: " + buses[i].id);
            if (buses[i].v_base_kv <= 0.0)
                throw GridError("bus " + buses[i].id + ": non-positive voltage base");
        }
        if (!has_bus(slack.bus)) throw GridError("slack bus not declared: " + slack.bus);
        if (slack.v_pu <= 0.0) throw GridError("slack voltage must be positive");

        for (const auto& br : branches) {
            check_endpoint("branch", br.from);
            check_endpoint("branch", br.to);
            if (br.from == br.to)
                throw GridError("branch " + br.from + "-" + br.to + ": self loop");
            if (br.r_ohm == 0.0 && br.x_ohm == 0.0)
                throw GridError("branch " + br.from + "-" + br.to + ": zero impedance");
            if (br.r_ohm < 0.0)
                throw GridError("branch " + br.from + "-" + br.to + ": negative resistance");
            if (buses[bus_index(br.from)].v_base_kv != buses[bus_index(br.to)].v_base_kv)
                throw GridError("branch " + br.from + "-" + br.to +
                                ": endpoints on different voltage levels");
        }

        if (!transformer.from.empty() || !transformer.to.empty()) {
            check_endpoint("transformer", transformer.from);
            check_endpoint("transformer", transformer.to);
            if (transformer.rating_mva <= 0.0)
                throw GridError("transformer: non-positive rating");
            if (transformer.r_pu == 0.0 && transformer.x_pu == 0.0)
                throw GridError("transformer: zero impedance");
            if (transformer.r_pu < 0.0)
                throw GridError("transformer: negative resistance");
            if (transformer.phase_shift_deg != 0.0)
                throw GridError("transformer: phase shift not supported");
            const auto& tap = transformer.tap;
            if (tap.position < tap.min_position || tap.position > tap.max_position)
                throw GridError("transformer: tap position outside declared range");
            if (tap.ratio() <= 0.0) throw GridError("transformer: non-positive tap ratio");
        }

        for (const auto& [bus, load] : loads) {
            if (!has_bus(bus)) throw GridError("load at unknown bus: " + bus);
            if (load.p_mw < 0.0) throw GridError("load at " + bus + ": negative p_mw");
        }
        for (const auto& bus : dg_buses) {
            if (!has_bus(bus)) throw GridError("dg at unknown bus: " + bus);
        }
    }

    void check_endpoint(const char* what, const std::string& id) const {
        if (!has_bus(id))
            throw GridError(std::string(what) + " references unknown bus: " + id);
    }
};

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& key,
                             const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_number())
        throw GridError(ctx + ": missing or non-numeric field '" + key + "'");
    return j[key].get<double>();
}

inline std::string require_string(const nlohmann::json& j, const std::string& key,
                                  const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_string())
        throw GridError(ctx + ": missing or non-string field '" + key + "'");
    return j[key].get<std::string>();
}

}  // namespace detail

/// Parse and validate a grid document (see data/cigre12.json for the schema).
inline Grid load_grid(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw GridError(std::string("grid document is not valid JSON: ") + e.what());
    }

    using detail::require_number;
    using detail::require_string;

    Bases bases;
    if (j.contains("bases")) {
        const auto& jb = j["bases"];
        bases.s_mva = require_number(jb, "s_mva", "bases");
        bases.v_hv_kv = require_number(jb, "v_hv_kv", "bases");
        bases.v_mv_kv = require_number(jb, "v_mv_kv", "bases");
    }

    if (!j.contains("buses") || !j["buses"].is_array())
        throw GridError("grid document: missing 'buses' array");
    std::vector<Bus> buses;
    for (const auto& jb : j["buses"]) {
        Bus b;
        b.id = require_string(jb, "id", "bus");
        b.v_base_kv = require_number(jb, "v_kv", "bus " + b.id);
        buses.push_back(std::move(b));
    }

    std::vector<Branch> branches;
    if (j.contains("branches")) {
        for (const auto& jb : j["branches"]) {
            Branch br;
            br.from = require_string(jb, "from", "branch");
            br.to = require_string(jb, "to", "branch");
            const std::string ctx = "branch " + br.from + "-" + br.to;
            br.r_ohm = require_number(jb, "r_ohm", ctx);
            br.x_ohm = require_number(jb, "x_ohm", ctx);
            br.b_us = jb.value("b_us", 0.0);
            br.in_service = jb.value("in_service", true);
            branches.push_back(std::move(br));
        }
    }

    Transformer tr;
    if (j.contains("transformer") && !j["transformer"].is_null()) {
        const auto& jt = j["transformer"];
        tr.from = require_string(jt, "from", "transformer");
        tr.to = require_string(jt, "to", "transformer");
        tr.rating_mva = require_number(jt, "rating_mva", "transformer");
        tr.r_pu = require_number(jt, "r_pu", "transformer");
        tr.x_pu = require_number(jt, "x_pu", "transformer");
        tr.phase_shift_deg = jt.value("phase_shift_deg", 0.0);
        if (jt.contains("tap")) {
            const auto& jtap = jt["tap"];
            tr.tap.position = static_cast<int>(require_number(jtap, "position", "transformer tap"));
            tr.tap.neutral = static_cast<int>(require_number(jtap, "neutral", "transformer tap"));
            tr.tap.step_pu = require_number(jtap, "step_pu", "transformer tap");
            tr.tap.min_position = static_cast<int>(jtap.value("min", double(tr.tap.position)));
            tr.tap.max_position = static_cast<int>(jtap.value("max", double(tr.tap.position)));
        }
    }

    std::map<std::string, LoadSpec> loads;
    if (j.contains("loads")) {
        for (const auto& [bus, jl] : j["loads"].items()) {
            LoadSpec l;
            l.p_mw = require_number(jl, "p_mw", "load at " + bus);
            l.q_mvar = require_number(jl, "q_mvar", "load at " + bus);
            loads.emplace(bus, l);
        }
    }

    std::vector<std::string> dg;
    if (j.contains("dg")) {
        for (const auto& jd : j["dg"]) {
            if (!jd.is_string()) throw GridError("dg list entries must be bus ids");
            dg.push_back(jd.get<std::string>());
        }
    }

    if (!j.contains("slack")) throw GridError("grid document: missing 'slack'");
    SlackSpec slack;
    slack.bus = require_string(j["slack"], "bus", "slack");
    slack.v_pu = j["slack"].value("v_pu", 1.0);
    slack.angle_deg = j["slack"].value("angle_deg", 0.0);

    return Grid::make(bases, std::move(buses), std::move(branches), std::move(tr),
                      std::move(loads), std::move(dg), std::move(slack));
}

inline Grid load_grid_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GridError("cannot open grid file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_grid(ss.str());
}

}  // namespace adnsim
