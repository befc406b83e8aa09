#pragma once

// Deterministic discrete-event execution of a Schedule under a CostModel:
// list scheduling by per-device program order, a pass launches when its
// device is free and every dependency (and inbound transfer) has completed.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pipelab/exchange.hpp"
#include "pipelab/schedule.hpp"
#include "pipelab/workload.hpp"

namespace pipelab {

enum class ExchangeMode { Off, On, OnEarly };

const char* to_string(ExchangeMode m);
ExchangeMode exchange_mode_from_string(const std::string& s);

struct CommModel {
  double bandwidth = 0.0;  // bytes per work unit; 0 means infinite
  double latency = 0.0;    // fixed per-transfer work units

  double transfer_time(double bytes) const {
    if (bandwidth <= 0.0 && latency <= 0.0) return 0.0;
    double t = latency;
    if (bandwidth > 0.0) t += bytes / bandwidth;
    return t;
  }
  bool zero() const { return bandwidth <= 0.0 && latency <= 0.0; }
};

// One aligned column of attention passes together with its balancing plan.
struct TickPlan {
  std::int64_t tick = 0;              // column index, 1-based
  bool forward = true;                // forward or backward column
  bool juncture = false;              // two microbatches coexist
  std::vector<TickLoad> loads;        // present devices only
  std::vector<PassId> passes;         // column passes, same order as loads
  ExchangePlan plan;
};

// Result of apply_exchange: per-pass balanced attention loads plus the
// per-tick plans the transfers came from.
struct ExchangeAnnotation {
  ExchangeMode mode = ExchangeMode::Off;
  std::vector<TickPlan> ticks;
  // pass id -> balanced kv chunk count (only passes whose work changed)
  std::map<PassId, std::int64_t> balanced_chunks;
};

// Build per-tick plans for every attention column of the schedule and
// balance them. With beta_attn == 0 there is no attention work to move and
// the annotation is empty.
ExchangeAnnotation apply_exchange(const Schedule& schedule, const CostModel& cost,
                                  ExchangeMode mode);

struct TimelineEntry {
  PassId pass;
  double start = 0.0;
  double end = 0.0;
};

struct TransferEvent {
  std::int32_t src = 0;
  std::int32_t dst = 0;
  double bytes = 0.0;
  double start = 0.0;
  double end = 0.0;
  std::string tag;  // "stage", "kv", "query", "output"
};

struct Timeline {
  std::vector<std::vector<TimelineEntry>> per_device;
  std::vector<TransferEvent> transfers;
  double makespan = 0.0;
};

struct MemoryStep {
  double time = 0.0;
  std::int64_t activation_units = 0;  // resident slice-stage activations
  std::int64_t logits_units = 0;      // resident logits slices
};

struct DeviceMemory {
  std::vector<MemoryStep> steps;
  std::int64_t peak_activation_units = 0;
  std::int64_t peak_logits_units = 0;
  std::int64_t chunk_pool_size = 0;   // high-water of the slice-sized pool
  std::int64_t final_activation_units = 0;
  Rat peak_activation_bytes;
  Rat peak_logits_bytes;
};

struct MemoryLedger {
  std::vector<DeviceMemory> per_device;
  Rat slice_stage_bytes;   // byte value of one activation unit
  Rat logits_slice_bytes;  // byte value of one logits unit (full share)
};

struct DevicePhases {
  double warmup_idle = 0.0;    // idle before the first releasing backward
  double midstream_idle = 0.0; // idle between first backward and last forward
  double cooldown_idle = 0.0;  // idle after the last forward
};

struct Metrics {
  double makespan = 0.0;
  double bubble_fraction = 0.0;          // (p*makespan - sum busy) / sum busy
  std::vector<double> device_busy;
  std::vector<double> device_idle;
  std::vector<DevicePhases> phases;
  std::vector<Rat> p2p_bytes_sent;       // stage-to-stage activation traffic
  std::vector<Rat> exchange_bytes;       // context-exchange traffic, Eq-style
  Rat exchange_bytes_per_microbatch_device;
  std::int64_t forward_ticks = 0;
  std::int64_t juncture_ticks = 0;
};

struct SimResult {
  Timeline timeline;
  MemoryLedger memory;
  Metrics metrics;
};

struct SimInputs {
  CostModel cost;
  MemoryModel memory;
  CommModel comm;
  std::int64_t seq_len = 1;  // tokens per microbatch
  ExchangeMode exchange = ExchangeMode::Off;
};

// Throws std::runtime_error on deadlock (names the blocked passes); that
// indicates a generator bug, not an input error.
SimResult simulate(const Schedule& schedule, const SimInputs& in);

// Insert vocabulary output-layer passes. With distribute=false the
// forward/backward GEMM passes attach to the last stage on its owner
// device; with distribute=true every device runs a 1/p share at the slot
// aligned with the last stage's pass, with a broadcast dependency on the
// hidden states and a statistics sync before the backward.
Schedule place_vocab(const Schedule& schedule, bool distribute,
                     const SimInputs& in);

}  // namespace pipelab
