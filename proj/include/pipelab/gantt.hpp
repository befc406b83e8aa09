#pragma once

// Gantt export of a simulated timeline: one row per device, colored by
// (pass kind, stage parity). The JSON and SVG forms carry identical
// interval data and are byte-identical across reruns of the same inputs.

#include <string>

#include "pipelab/schedule.hpp"
#include "pipelab/simulator.hpp"

namespace pipelab {

std::string gantt_json(const Schedule& schedule, const Timeline& timeline);
std::string gantt_svg(const Schedule& schedule, const Timeline& timeline);

}  // namespace pipelab
