#pragma once

#include <string>

#include "shopgraph/instance.hpp"

namespace shopgraph {

/// SVG 1.1 Gantt chart: one lane per machine, one bar per operation, bars of
/// the same job share a color. Throws std::invalid_argument if the schedule
/// is incomplete. Output is a pure function of the input.
std::string render_gantt(const Instance& instance, const Schedule& schedule);

}  // namespace shopgraph
