#include "pipelab/exchange.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace pipelab {

ExchangePlan balance_tick(const std::vector<TickLoad>& loads) {
  if (loads.empty()) throw std::invalid_argument("balance_tick: empty loads");
  const std::size_t p = loads.size();
  std::int64_t total = 0;
  for (const TickLoad& l : loads) {
    if (l.kv_chunks < 1)
      throw std::invalid_argument("balance_tick: a slice attends at least itself");
    total += l.kv_chunks;
  }

  // Balanced targets: floor(total/p) everywhere, with the remainder's
  // ceilings handed to the heaviest devices. Heaviest donors feed lightest
  // receivers, so the exchange always spans the extremes first.
  std::vector<std::size_t> by_load(p);
  std::iota(by_load.begin(), by_load.end(), 0);
  std::sort(by_load.begin(), by_load.end(), [&](std::size_t a, std::size_t b) {
    if (loads[a].kv_chunks != loads[b].kv_chunks)
      return loads[a].kv_chunks > loads[b].kv_chunks;
    return loads[a].device < loads[b].device;
  });
  const std::int64_t base = total / static_cast<std::int64_t>(p);
  std::int64_t remainder = total % static_cast<std::int64_t>(p);
  std::vector<std::int64_t> target(p, base);
  for (std::size_t k = 0; k < p; ++k)
    if (static_cast<std::int64_t>(k) < remainder) target[by_load[k]] = base + 1;

  ExchangePlan plan;
  plan.resulting_loads = target;

  std::size_t donor = 0;              // heaviest first
  std::size_t receiver = p;           // lightest first, walking backwards
  std::int64_t donor_sent = 0, receiver_got = 0;
  while (donor < p) {
    std::size_t di = by_load[donor];
    std::int64_t excess = loads[di].kv_chunks - target[di] - donor_sent;
    if (excess <= 0) {
      ++donor;
      donor_sent = 0;
      continue;
    }
    if (receiver == 0) break;
    std::size_t ri = by_load[receiver - 1];
    std::int64_t deficit = target[ri] - loads[ri].kv_chunks - receiver_got;
    if (deficit <= 0) {
      --receiver;
      receiver_got = 0;
      continue;
    }
    std::int64_t move = std::min(excess, deficit);
    Transfer tr;
    tr.src = loads[di].device;
    tr.dst = loads[ri].device;
    // The retained prefix stays with the sender; the top chunks move.
    std::int64_t first = target[di] + donor_sent + 1;
    for (std::int64_t c = first; c < first + move; ++c)
      tr.kv_chunk_indices.push_back(c);
    plan.transfers.push_back(std::move(tr));
    donor_sent += move;
    receiver_got += move;
  }
  std::sort(plan.transfers.begin(), plan.transfers.end(),
            [](const Transfer& a, const Transfer& b) {
              return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
            });
  return plan;
}

ExchangePlan to_early_exchange(const std::vector<TickLoad>& loads,
                               const ExchangePlan& plan) {
  std::map<std::int32_t, std::int64_t> own;
  for (const TickLoad& l : loads) own[l.device] = l.kv_chunks;
  std::map<std::int32_t, std::int64_t> cursor;  // next early index per sender
  ExchangePlan early = plan;
  for (Transfer& tr : early.transfers) {
    std::int64_t count = static_cast<std::int64_t>(tr.kv_chunk_indices.size());
    std::int64_t& cur = cursor[tr.src];
    if (cur + count > own[tr.src] - 1)
      throw std::invalid_argument(
          "early exchange: transfer would need the chunk the current pass is "
          "producing");
    tr.kv_chunk_indices.clear();
    for (std::int64_t c = cur + 1; c <= cur + count; ++c)
      tr.kv_chunk_indices.push_back(c);
    cur += count;
  }
  return early;
}

Rat exchange_volume(std::int64_t p, std::int64_t n, std::int64_t layers,
                    const Rat& embedding_bytes) {
  if (p < 1 || n < 1 || n % p != 0)
    throw std::invalid_argument("exchange_volume: n must be a multiple of p");
  if (p == 1) return Rat(0);  // no peer to exchange with
  std::int64_t slices = 2 * n + 2 * (n - p + 1) * ((p - 1) / 2) +
                        2 * (p - 1) * ((n - 1) / 2);
  return Rat(slices) * Rat(layers) * embedding_bytes / Rat(p * n);
}

Rat exchange_volume_bound(std::int64_t p, std::int64_t n, std::int64_t layers,
                          const Rat& embedding_bytes) {
  return (Rat(2) - Rat(p - 1, n)) * Rat(layers) * embedding_bytes;
}

Rat cp_comm_volume(CpVariant variant, std::int64_t n, const Rat& chunk_bytes) {
  if (n < 1) throw std::invalid_argument("cp_comm_volume: n must be >= 1");
  switch (variant) {
    case CpVariant::KvRing:
      // Slice i re-communicates its i cached KV chunks (keys and values).
      return Rat(n * (n + 1)) * chunk_bytes;
    case CpVariant::Commutated:
      // Query and output only; the softmax normalizer is negligible.
      return Rat(2 * n) * chunk_bytes;
  }
  throw std::invalid_argument("cp_comm_volume: unknown variant");
}

}  // namespace pipelab
