#pragma once

// Closed-form memory and bubble models for every compared pipeline scheme,
// used standalone and as oracles against the simulator.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pipelab/rational.hpp"
#include "pipelab/schedule.hpp"

namespace pipelab {

// Peak activation memory in units of M_a.
//   GPipe/TeraPipe: m/p    1F1B, ZB-V: 1      V-Half: 1/2 + 1/p
//   interleaved:    1 + (p-1)/(vp) for v >= 2 (v=1 degenerates to 1F1B)
//   SlimPipe:       1/p + 2(p-1)/(nvp)
Rat memory_multiplier(Scheme scheme, std::int64_t p, std::int64_t m,
                      std::int64_t n, std::int64_t v);

// Accumulated activation bytes of the sliced 1F1B schedule:
// (1 + 2(p-1)/n) * M_a / p.
Rat slim_acc_memory(std::int64_t p, std::int64_t n, const Rat& microbatch_bytes);

struct BubbleBound {
  // Exactly one of these is set. `exact` also serves as an upper bound for
  // the sliced schemes (TeraPipe, SlimPipe), whose fraction only shrinks
  // further when attention dominates.
  std::optional<Rat> exact;
  std::optional<std::pair<Rat, Rat>> interval;  // soft endpoints
  bool upper_bound_only = false;
};

BubbleBound bubble_bounds(Scheme scheme, std::int64_t p, std::int64_t m,
                          std::int64_t n, std::int64_t v);

// Attention-dominated asymptote for SlimPipe: (p-1)p / ((n+1)nvm).
Rat slim_attention_bubble(std::int64_t p, std::int64_t m, std::int64_t n,
                          std::int64_t v);

// Whether the closed forms above are attainable at this size (enough
// microbatches to fill the warm-up). Outside the domain the simulated peak
// is lower than the formula.
bool memory_form_valid(Scheme scheme, std::int64_t p, std::int64_t m,
                       std::int64_t n, std::int64_t v);

// Whether a generator accepts this configuration at all.
bool scheme_accepts(Scheme scheme, std::int64_t p, std::int64_t m,
                    std::int64_t n, std::int64_t v);

struct CompareRow {
  Scheme scheme;
  std::int64_t p, v, m, n;
  double closed_memory;     // M_a units
  double closed_bubble;     // exact value or upper bound
  double simulated_memory;  // M_a units
  double simulated_bubble;
  bool within_bound = true;
  bool memory_exact = true;
};

// Runs every grid point through both the closed forms and the simulator
// (unit costs for memory, linear costs for bubbles) and flags any simulated
// value outside its closed-form bound.
std::vector<CompareRow> compare_report(const std::vector<Scheme>& schemes,
                                       const std::vector<std::int64_t>& ps,
                                       const std::vector<std::int64_t>& vs,
                                       const std::vector<std::int64_t>& ms,
                                       const std::vector<std::int64_t>& ns_per_p);

std::string compare_report_csv(const std::vector<CompareRow>& rows);

}  // namespace pipelab
