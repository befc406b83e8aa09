#pragma once

// Attention context exchange: per-tick workload balancing across pipeline
// devices, communication-volume accounting, and the context-parallelism
// volume comparison.

#include <cstdint>
#include <vector>

#include "pipelab/rational.hpp"

namespace pipelab {

struct TickLoad {
  std::int32_t device = 0;      // 1-based
  std::int64_t kv_chunks = 1;   // attended KV slices for the current slice
};

struct Transfer {
  std::int32_t src = 0;
  std::int32_t dst = 0;
  std::vector<std::int64_t> kv_chunk_indices;  // whole chunks, 1-based
  bool carries_query = true;   // sender ships its query slice
  bool carries_output = true;  // partial output returned to the sender
};

struct ExchangePlan {
  std::vector<Transfer> transfers;
  std::vector<std::int64_t> resulting_loads;  // same order as the input
};

// Balance one aligned column of attention passes. Devices are sorted by
// load, extremes are paired, and each pair moves floor((hi-lo)/2) chunks;
// rounds repeat until max-min <= 1. Chunk work is conserved. A device can
// only hand off chunks it still holds itself.
ExchangePlan balance_tick(const std::vector<TickLoad>& loads);

// Rewrite a plan to ship the earliest-produced chunks instead of the most
// recent ones, keeping the work balance identical. Throws if a transfer
// would need the chunk the sender's current pass is itself producing.
ExchangePlan to_early_exchange(const std::vector<TickLoad>& loads,
                               const ExchangePlan& plan);

// Total exchanged context per microbatch per device:
//   Theta = (2n + 2(n-p+1)*floor((p-1)/2) + 2(p-1)*floor((n-1)/2))
//           * L * M_h / (p*n)
// A single device has no peer, so p=1 reports zero.
Rat exchange_volume(std::int64_t p, std::int64_t n, std::int64_t layers,
                    const Rat& embedding_bytes);

// Closed-form upper bound (2 - (p-1)/n) * L * M_h.
Rat exchange_volume_bound(std::int64_t p, std::int64_t n, std::int64_t layers,
                          const Rat& embedding_bytes);

enum class CpVariant { KvRing, Commutated };

// Communication volume of context parallelism over n slices with a KV
// cache. The ring variant re-sends cached key-value for every later slice
// (quadratic in n); the commutated variant ships query/output/normalizer
// instead (linear in n).
Rat cp_comm_volume(CpVariant variant, std::int64_t n, const Rat& chunk_bytes);

}  // namespace pipelab
