#include "pipelab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace pipelab {

namespace {

bool is_releasing_backward(PassKind k) {
  return k == PassKind::BackwardInput || k == PassKind::BackwardFused;
}

bool is_vocab(PassKind k) {
  return k == PassKind::VocabForward || k == PassKind::VocabBackward;
}

struct Dep {
  PassId pass;
  double lag = 0.0;
};

// Exchanged work received from a peer: the local pass may start on its own
// slice, but cannot finish before the peer's data arrives plus the time to
// process it.
struct Gate {
  PassId pass;
  double lag = 0.0;
  bool at_start = false;    // gate on the peer pass's start (pass-boundary
                            // query/grad sends) instead of its end
  double remote_work = 0.0;
};

}  // namespace

const char* to_string(ExchangeMode m) {
  switch (m) {
    case ExchangeMode::Off: return "off";
    case ExchangeMode::On: return "on";
    case ExchangeMode::OnEarly: return "early";
  }
  return "?";
}

ExchangeMode exchange_mode_from_string(const std::string& s) {
  if (s == "off") return ExchangeMode::Off;
  if (s == "on") return ExchangeMode::On;
  if (s == "early" || s == "on+early") return ExchangeMode::OnEarly;
  throw std::invalid_argument("unknown exchange mode: " + s);
}

ExchangeAnnotation apply_exchange(const Schedule& sched, const CostModel& cost,
                                  ExchangeMode mode) {
  ExchangeAnnotation ann;
  ann.mode = mode;
  // Nothing to balance without attention work, and no peer at p=1.
  if (mode == ExchangeMode::Off || cost.beta_attn <= 0.0 || sched.meta.p < 2)
    return ann;

  const auto& meta = sched.meta;
  const std::int64_t period = static_cast<std::int64_t>(meta.n) * meta.v;

  // Column index of each attention pass: position in the device's
  // forward-only (or backward-only) program order plus the staircase offset.
  std::map<std::pair<bool, std::int64_t>, std::vector<PassId>> columns;
  for (std::size_t d = 0; d < sched.device_order.size(); ++d) {
    std::int64_t fidx = 0, bidx = 0;
    for (PassId id : sched.device_order[d]) {
      const Pass& ps = sched.passes[id];
      if (ps.kind == PassKind::Forward) {
        ++fidx;
        columns[{true, fidx + static_cast<std::int64_t>(d)}].push_back(id);
      } else if (is_releasing_backward(ps.kind)) {
        ++bidx;
        columns[{false, bidx + (meta.p - 1 - static_cast<std::int64_t>(d))}]
            .push_back(id);
      }
    }
  }

  for (auto& [key, ids] : columns) {
    TickPlan tp;
    tp.forward = key.first;
    tp.tick = key.second;
    // Positional juncture rule: the first p-1 columns of every microbatch
    // period carry the wider key-value allotment.
    tp.juncture = (tp.tick - 1) % period <= meta.p - 2;
    std::sort(ids.begin(), ids.end(), [&](PassId a, PassId b) {
      return sched.passes[a].device < sched.passes[b].device;
    });
    for (PassId id : ids) {
      const Pass& ps = sched.passes[id];
      tp.loads.push_back({ps.device, ps.slice});
      tp.passes.push_back(id);
    }
    tp.plan = balance_tick(tp.loads);
    if (ann.mode == ExchangeMode::OnEarly && tp.forward)
      tp.plan = to_early_exchange(tp.loads, tp.plan);
    for (std::size_t i = 0; i < tp.passes.size(); ++i)
      ann.balanced_chunks[tp.passes[i]] = tp.plan.resulting_loads[i];
    ann.ticks.push_back(std::move(tp));
  }
  return ann;
}

SimResult simulate(const Schedule& sched, const SimInputs& in) {
  const auto& meta = sched.meta;
  const std::size_t np = sched.passes.size();
  const std::int64_t tok = in.seq_len / meta.n;
  const double mh_slice = (in.memory.embedding_bytes / Rat(meta.n)).to_double();
  const double ex_slice = in.memory.exchange_slice_bytes.to_double();

  ExchangeAnnotation ann = apply_exchange(sched, in.cost, in.exchange);

  // Pass durations; attention terms use balanced kv loads when exchanged.
  std::vector<double> cost(np);
  for (std::size_t id = 0; id < np; ++id) {
    const Pass& ps = sched.passes[id];
    std::int64_t chunks = ps.slice;
    auto it = ann.balanced_chunks.find(static_cast<PassId>(id));
    if (it != ann.balanced_chunks.end()) chunks = it->second;
    double c = pass_cost(in.cost, ps.kind, tok, chunks * tok);
    if (is_vocab(ps.kind) && meta.vocab_distributed) c /= meta.p;
    cost[id] = c;
  }

  std::vector<std::vector<Dep>> deps(np);
  std::vector<std::vector<Gate>> gates(np);
  for (const Edge& e : sched.edges) {
    const Pass& a = sched.passes[e.from];
    const Pass& b = sched.passes[e.to];
    double lag = 0.0;
    if (a.device != b.device) {
      double bytes = mh_slice;
      if (a.kind == PassKind::VocabForward && b.kind == PassKind::VocabBackward)
        bytes = 0.0;  // softmax statistics, negligible next to the logits
      lag = in.comm.transfer_time(bytes);
    }
    deps[e.to].push_back({e.from, lag});
  }

  std::map<PassId, std::vector<PassId>> edge_dependents;
  for (const Edge& e : sched.edges) edge_dependents[e.from].push_back(e.to);

  std::map<std::tuple<int, int, int>, PassId> fwd_index;
  for (std::size_t id = 0; id < np; ++id) {
    const Pass& ps = sched.passes[id];
    if (ps.kind == PassKind::Forward)
      fwd_index[{ps.microbatch, ps.slice, ps.stage}] = static_cast<PassId>(id);
  }

  for (const TickPlan& tp : ann.ticks) {
    auto pass_of_device = [&](std::int32_t dev) -> PassId {
      for (std::size_t i = 0; i < tp.loads.size(); ++i)
        if (tp.loads[i].device == dev) return tp.passes[i];
      return -1;
    };
    auto own_load = [&](std::int32_t dev) -> std::int64_t {
      for (const TickLoad& l : tp.loads)
        if (l.device == dev) return l.kv_chunks;
      return 0;
    };
    for (const Transfer& tr : tp.plan.transfers) {
      PassId sender = pass_of_device(tr.src);
      PassId receiver = pass_of_device(tr.dst);
      if (sender < 0 || receiver < 0) continue;
      const Pass& sp = sched.passes[sender];
      const Pass& rp = sched.passes[receiver];
      // The receiver's extra attention work needs the peer's query (or
      // output gradient) and the shipped key-value chunks.
      std::int64_t extra =
          std::max<std::int64_t>(0, ann.balanced_chunks.at(receiver) -
                                        own_load(tr.dst));
      double unit = in.cost.beta_attn * static_cast<double>(tok) *
                    static_cast<double>(tok);
      if (is_releasing_backward(rp.kind)) unit *= in.cost.bwd_input_mult;
      double remote = static_cast<double>(extra) * unit;
      gates[receiver].push_back(
          {sender, in.comm.transfer_time(ex_slice), true, remote});
      if (tp.forward && !tr.kv_chunk_indices.empty()) {
        double kv_bytes =
            2.0 * ex_slice * static_cast<double>(tr.kv_chunk_indices.size());
        if (ann.mode == ExchangeMode::OnEarly) {
          auto itp = fwd_index.find(
              {sp.microbatch, static_cast<int>(tr.kv_chunk_indices.back()),
               sp.stage});
          if (itp != fwd_index.end() && itp->second != sender)
            gates[receiver].push_back(
                {itp->second, in.comm.transfer_time(kv_bytes), false, remote});
        } else {
          gates[receiver].push_back(
              {sender, in.comm.transfer_time(kv_bytes), true, remote});
        }
      }
      // The merged partial output returns to the sender before anything
      // downstream of the sender's pass can consume it.
      double out_lag = in.comm.transfer_time(ex_slice);
      auto dit = edge_dependents.find(sender);
      if (dit != edge_dependents.end())
        for (PassId consumer : dit->second)
          deps[consumer].push_back({receiver, out_lag});
    }
  }

  // List scheduling in per-device program order.
  std::vector<double> start(np, -1.0), end(np, -1.0);
  std::vector<std::size_t> ptr(meta.p, 0);
  std::vector<double> dev_time(meta.p, 0.0);
  std::size_t remaining = np;
  while (remaining > 0) {
    int best_dev = -1;
    double best_start = 0.0, best_end = 0.0;
    for (std::int32_t d = 0; d < meta.p; ++d) {
      if (ptr[d] >= sched.device_order[d].size()) continue;
      PassId id = sched.device_order[d][ptr[d]];
      double ready = 0.0;
      bool ok = true;
      for (const Dep& dep : deps[id]) {
        if (end[dep.pass] < 0.0) { ok = false; break; }
        ready = std::max(ready, end[dep.pass] + dep.lag);
      }
      if (!ok) continue;
      for (const Gate& g : gates[id]) {
        double base = g.at_start ? start[g.pass] : end[g.pass];
        if (base < 0.0) { ok = false; break; }
      }
      if (!ok) continue;
      double st = std::max(dev_time[d], ready);
      double en = st + cost[id];
      for (const Gate& g : gates[id]) {
        double base = g.at_start ? start[g.pass] : end[g.pass];
        en = std::max(en, base + g.lag + g.remote_work);
      }
      if (best_dev < 0 || st < best_start - 1e-12) {
        best_dev = d;
        best_start = st;
        best_end = en;
      }
    }
    if (best_dev < 0) {
      std::string blocked;
      for (std::int32_t d = 0; d < meta.p; ++d)
        if (ptr[d] < sched.device_order[d].size()) {
          const Pass& ps = sched.passes[sched.device_order[d][ptr[d]]];
          blocked += " device" + std::to_string(d + 1) + ":" +
                     to_string(ps.kind) + "(" + std::to_string(ps.microbatch) +
                     "," + std::to_string(ps.slice) + "," +
                     std::to_string(ps.stage) + ")";
        }
      throw std::runtime_error("simulate: deadlock, blocked passes:" + blocked);
    }
    PassId id = sched.device_order[best_dev][ptr[best_dev]];
    start[id] = best_start;
    end[id] = best_end;
    dev_time[best_dev] = best_end;
    ++ptr[best_dev];
    --remaining;
  }

  SimResult res;
  res.timeline.per_device.resize(meta.p);
  double makespan = 0.0;
  for (std::int32_t d = 0; d < meta.p; ++d) {
    for (PassId id : sched.device_order[d]) {
      res.timeline.per_device[d].push_back({id, start[id], end[id]});
      makespan = std::max(makespan, end[id]);
    }
  }
  res.timeline.makespan = makespan;

  for (const TickPlan& tp : ann.ticks) {
    auto pass_of_device = [&](std::int32_t dev) -> PassId {
      for (std::size_t i = 0; i < tp.loads.size(); ++i)
        if (tp.loads[i].device == dev) return tp.passes[i];
      return -1;
    };
    for (const Transfer& tr : tp.plan.transfers) {
      PassId sender = pass_of_device(tr.src);
      PassId receiver = pass_of_device(tr.dst);
      if (sender < 0 || receiver < 0) continue;
      double q_t = in.comm.transfer_time(ex_slice);
      res.timeline.transfers.push_back({tr.src, tr.dst, ex_slice,
                                        start[sender], start[sender] + q_t,
                                        tp.forward ? "query" : "grad-out"});
      if (tp.forward && !tr.kv_chunk_indices.empty()) {
        double kv_bytes =
            2.0 * ex_slice * static_cast<double>(tr.kv_chunk_indices.size());
        double from = start[sender];
        if (ann.mode == ExchangeMode::OnEarly) {
          const Pass& sp = sched.passes[sender];
          auto itp = fwd_index.find(
              {sp.microbatch, static_cast<int>(tr.kv_chunk_indices.back()),
               sp.stage});
          if (itp != fwd_index.end()) from = end[itp->second];
        }
        res.timeline.transfers.push_back(
            {tr.src, tr.dst, kv_bytes, from,
             from + in.comm.transfer_time(kv_bytes), "kv"});
      }
      double o_t = in.comm.transfer_time(ex_slice);
      res.timeline.transfers.push_back({tr.dst, tr.src, ex_slice, end[receiver],
                                        end[receiver] + o_t,
                                        tp.forward ? "output" : "grad-in"});
    }
  }

  // Memory ledger: a forward adds one slice-stage activation at its start,
  // the releasing backward returns it to the chunk pool at its end. Vocab
  // passes do the same with logits slices.
  res.memory.slice_stage_bytes = in.memory.slice_stage_bytes;
  res.memory.logits_slice_bytes = in.memory.logits_slice_bytes;
  Rat logits_unit = in.memory.logits_slice_bytes;
  if (meta.vocab_distributed) logits_unit /= Rat(meta.p);
  res.memory.per_device.resize(meta.p);
  for (std::int32_t d = 0; d < meta.p; ++d) {
    DeviceMemory& dm = res.memory.per_device[d];
    std::int64_t units = 0, logits = 0, pool_free = 0;
    for (PassId id : sched.device_order[d]) {
      const Pass& ps = sched.passes[id];
      if (ps.kind == PassKind::Forward) {
        ++units;
        if (pool_free > 0) --pool_free; else ++dm.chunk_pool_size;
        dm.steps.push_back({start[id], units, logits});
      } else if (is_releasing_backward(ps.kind)) {
        --units;
        ++pool_free;
        dm.steps.push_back({end[id], units, logits});
      } else if (ps.kind == PassKind::VocabForward) {
        ++logits;
        dm.steps.push_back({start[id], units, logits});
      } else if (ps.kind == PassKind::VocabBackward) {
        --logits;
        dm.steps.push_back({end[id], units, logits});
      }
      dm.peak_activation_units = std::max(dm.peak_activation_units, units);
      dm.peak_logits_units = std::max(dm.peak_logits_units, logits);
    }
    dm.final_activation_units = units;
    dm.peak_activation_bytes =
        Rat(dm.peak_activation_units) * in.memory.slice_stage_bytes;
    dm.peak_logits_bytes = Rat(dm.peak_logits_units) * logits_unit;
  }

  Metrics& mt = res.metrics;
  mt.makespan = makespan;
  mt.device_busy.assign(meta.p, 0.0);
  mt.device_idle.assign(meta.p, 0.0);
  mt.phases.resize(meta.p);
  mt.p2p_bytes_sent.assign(meta.p, Rat(0));
  mt.exchange_bytes.assign(meta.p, Rat(0));
  double total_busy = 0.0;
  for (std::int32_t d = 0; d < meta.p; ++d) {
    double first_b = std::numeric_limits<double>::infinity();
    double last_f = 0.0;
    for (PassId id : sched.device_order[d]) {
      const Pass& ps = sched.passes[id];
      mt.device_busy[d] += end[id] - start[id];
      if (is_releasing_backward(ps.kind)) first_b = std::min(first_b, start[id]);
      if (ps.kind == PassKind::Forward) last_f = std::max(last_f, end[id]);
    }
    total_busy += mt.device_busy[d];
    mt.device_idle[d] = makespan - mt.device_busy[d];
    DevicePhases& ph = mt.phases[d];
    double cursor = 0.0;
    auto classify = [&](double gap_start, double gap_len) {
      if (gap_len <= 1e-12) return;
      if (gap_start < first_b) ph.warmup_idle += gap_len;
      else if (gap_start >= last_f) ph.cooldown_idle += gap_len;
      else ph.midstream_idle += gap_len;
    };
    for (const TimelineEntry& te : res.timeline.per_device[d]) {
      classify(cursor, te.start - cursor);
      cursor = te.end;
    }
    classify(cursor, makespan - cursor);
  }
  mt.bubble_fraction =
      total_busy > 0.0 ? (meta.p * makespan - total_busy) / total_busy : 0.0;

  const Rat mh_slice_rat = in.memory.embedding_bytes / Rat(meta.n);
  for (std::size_t id = 0; id < np; ++id) {
    const Pass& ps = sched.passes[id];
    if (ps.kind == PassKind::Forward && ps.stage < sched.num_stages()) {
      if (sched.stage_owner(ps.stage + 1) != ps.device)
        mt.p2p_bytes_sent[ps.device - 1] += mh_slice_rat;
    } else if (is_releasing_backward(ps.kind) && ps.stage > 1) {
      if (sched.stage_owner(ps.stage - 1) != ps.device)
        mt.p2p_bytes_sent[ps.device - 1] += mh_slice_rat;
    }
  }

  // Context-exchange volume, accounted per forward column: every present
  // device books one query and one output slice plus the column's
  // key-value allotment (the juncture columns carry the wider one).
  for (const TickPlan& tp : ann.ticks) {
    if (!tp.forward) continue;
    ++mt.forward_ticks;
    if (tp.juncture) ++mt.juncture_ticks;
    std::int64_t cap = tp.juncture ? (meta.n - 1) / 2 : (meta.p - 1) / 2;
    Rat per_device = Rat(2 + 2 * cap) * in.memory.exchange_slice_bytes;
    for (const TickLoad& l : tp.loads)
      mt.exchange_bytes[l.device - 1] += per_device;
  }
  if (!ann.ticks.empty())
    mt.exchange_bytes_per_microbatch_device = mt.exchange_bytes[0] / Rat(meta.m);

  return res;
}

Schedule place_vocab(const Schedule& sched, bool distribute,
                     const SimInputs& in) {
  if (sched.meta.vocab_passes)
    throw std::invalid_argument("place_vocab: schedule already has vocab passes");
  const std::int32_t s_last = sched.num_stages();
  const std::int32_t owner = sched.stage_owner(s_last);

  Schedule out = sched;
  out.meta.vocab_passes = true;
  out.meta.vocab_distributed = distribute;

  auto add_pass = [&](std::int32_t k, std::int32_t i, PassKind kind,
                      std::int32_t device) {
    PassId id = static_cast<PassId>(out.passes.size());
    out.passes.push_back({k, i, s_last, device, kind});
    return id;
  };

  std::map<std::pair<int, int>, PassId> last_f, last_b;
  for (std::size_t id = 0; id < sched.passes.size(); ++id) {
    const Pass& ps = sched.passes[id];
    if (ps.stage != s_last) continue;
    if (ps.kind == PassKind::Forward)
      last_f[{ps.microbatch, ps.slice}] = static_cast<PassId>(id);
    else if (is_releasing_backward(ps.kind))
      last_b[{ps.microbatch, ps.slice}] = static_cast<PassId>(id);
  }

  if (!distribute) {
    std::map<PassId, PassId> vf_after, vb_before;
    for (auto& [ki, fid] : last_f) {
      PassId vf = add_pass(ki.first, ki.second, PassKind::VocabForward, owner);
      PassId vb = add_pass(ki.first, ki.second, PassKind::VocabBackward, owner);
      vf_after[fid] = vf;
      vb_before[last_b.at(ki)] = vb;
      out.edges.push_back({fid, vf});
      out.edges.push_back({vf, vb});
      out.edges.push_back({vb, last_b.at(ki)});
    }
    std::vector<PassId> order;
    for (PassId id : sched.device_order[owner - 1]) {
      auto itb = vb_before.find(id);
      if (itb != vb_before.end()) order.push_back(itb->second);
      order.push_back(id);
      auto itf = vf_after.find(id);
      if (itf != vf_after.end()) order.push_back(itf->second);
    }
    out.device_order[owner - 1] = std::move(order);
    return out;
  }

  // Distributed: every device runs a 1/p share at the slot aligned with the
  // last stage's pass; alignment comes from a base run of the vocab-free
  // schedule under the same inputs.
  SimResult base = simulate(sched, in);
  std::vector<double> b_start(sched.passes.size()), b_end(sched.passes.size());
  for (const auto& dev : base.timeline.per_device)
    for (const TimelineEntry& te : dev) {
      b_start[te.pass] = te.start;
      b_end[te.pass] = te.end;
    }

  struct Ins {
    double anchor;
    int kind_rank;  // forward shares sort before backward shares
    int k, i;
    PassId id;
  };
  std::vector<std::vector<Ins>> by_device(sched.meta.p);
  std::map<std::pair<int, int>, std::vector<PassId>> vf_ids, vb_ids;
  for (auto& [ki, fid] : last_f) {
    for (std::int32_t q = 1; q <= sched.meta.p; ++q) {
      PassId vf = add_pass(ki.first, ki.second, PassKind::VocabForward, q);
      by_device[q - 1].push_back({b_end[fid], 0, ki.first, ki.second, vf});
      vf_ids[ki].push_back(vf);
      out.edges.push_back({fid, vf});
    }
    for (std::int32_t q = 1; q <= sched.meta.p; ++q) {
      PassId vb = add_pass(ki.first, ki.second, PassKind::VocabBackward, q);
      by_device[q - 1].push_back(
          {b_start[last_b.at(ki)], 1, ki.first, ki.second, vb});
      vb_ids[ki].push_back(vb);
      out.edges.push_back({vb, last_b.at(ki)});
    }
  }
  // Softmax statistics sync: every backward shard waits for every forward
  // shard of its slice.
  for (auto& [ki, vfs] : vf_ids)
    for (PassId vb : vb_ids[ki])
      for (PassId vf : vfs) out.edges.push_back({vf, vb});

  for (std::int32_t q = 1; q <= sched.meta.p; ++q) {
    auto& ins = by_device[q - 1];
    std::sort(ins.begin(), ins.end(), [](const Ins& a, const Ins& b) {
      return std::tie(a.anchor, a.kind_rank, a.k, a.i) <
             std::tie(b.anchor, b.kind_rank, b.k, b.i);
    });
    std::vector<PassId> order;
    std::size_t next = 0;
    for (PassId id : sched.device_order[q - 1]) {
      while (next < ins.size() && ins[next].anchor <= b_end[id] - 1e-9)
        order.push_back(ins[next++].id);
      order.push_back(id);
    }
    while (next < ins.size()) order.push_back(ins[next++].id);
    out.device_order[q - 1] = std::move(order);
  }
  return out;
}

}  // namespace pipelab
