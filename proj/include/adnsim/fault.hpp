#pragma once

#include <string>

namespace adnsim {

/// One sampled short-circuit: a resistive shunt applied at a bus for a
/// time window [t_on, t_on + duration).
struct FaultSpec {
    std::string bus;
    double r_on_ohm = 0.0;
    double t_on_s = 0.0;
    double duration_s = 0.0;

    [[nodiscard]] double t_off_s() const { return t_on_s + duration_s; }
    [[nodiscard]] bool valid() const { return r_on_ohm > 0.0 && duration_s > 0.0; }
};

}  // namespace adnsim
