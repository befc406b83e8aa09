#pragma once

// Schedule generation for the compared pipeline schemes. A schedule is a
// per-device program order over passes plus explicit dependency edges; the
// simulator executes it, the validator checks its structural invariants.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pipelab/workload.hpp"

namespace pipelab {

enum class Scheme {
  GPipe,
  TeraPipe,
  OneFOneB,
  Interleaved1F1B,
  ZBV,
  VHalf,
  SlimPipe,
};

const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

using PassId = std::int32_t;

struct Pass {
  std::int32_t microbatch = 1;  // k, 1..m
  std::int32_t slice = 1;       // i, 1..n (1 for unsliced schemes)
  std::int32_t stage = 1;       // s, 1..p*v
  std::int32_t device = 1;      // owner(stage); any device for vocab passes
  PassKind kind = PassKind::Forward;
};

struct Edge {
  PassId from;
  PassId to;
};

struct ScheduleMeta {
  Scheme scheme = Scheme::OneFOneB;
  std::int32_t p = 1;  // pipeline devices
  std::int32_t v = 1;  // stages per device
  std::int32_t m = 1;  // microbatches
  std::int32_t n = 1;  // slices per microbatch
  bool vocab_passes = false;
  bool vocab_distributed = false;
};

struct Schedule {
  ScheduleMeta meta;
  std::vector<Pass> passes;
  std::vector<std::vector<PassId>> device_order;  // [device-1] -> pass ids
  std::vector<Edge> edges;

  std::int32_t num_stages() const { return meta.p * meta.v; }
  // Pipeline device owning a stage under this scheme's placement map.
  std::int32_t stage_owner(std::int32_t stage) const;
};

struct GenConfig {
  std::int32_t p = 1;
  std::int32_t v = 1;
  std::int32_t m = 1;
  std::int32_t n = 1;
  // The zero-bubble generators place weight-grad passes into idle slots;
  // the fill decisions depend on the pass costs.
  CostModel cost;
  std::int64_t seq_len = 1;
};

Schedule gen_gpipe(const GenConfig& cfg);
Schedule gen_1f1b(const GenConfig& cfg);
Schedule gen_interleaved_1f1b(const GenConfig& cfg);
Schedule gen_terapipe(const GenConfig& cfg);
Schedule gen_slimpipe(const GenConfig& cfg);
Schedule gen_zbv(const GenConfig& cfg);
Schedule gen_vhalf(const GenConfig& cfg);

Schedule generate(Scheme scheme, const GenConfig& cfg);

struct Violation {
  std::string rule;     // "acyclicity", "coverage", "reverse-order", ...
  std::string message;
  std::optional<PassId> pass;
};

struct Diagnostics {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  const Violation* first() const {
    return violations.empty() ? nullptr : &violations.front();
  }
};

// Structural checks: DAG acyclicity (edges plus program order), complete
// coverage of every (k,i,s,kind), stage-placement consistency, backward
// order the exact reverse of forward order per (device, microbatch), and
// the one-forward-one-backward steady-state shape for the 1F1B family.
Diagnostics validate_schedule(const Schedule& schedule);

// Serialized form used by golden-file tests and the Gantt exporter.
std::string schedule_to_json(const Schedule& schedule);

}  // namespace pipelab
