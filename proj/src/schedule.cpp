#include "pipelab/schedule.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>

#include "nlohmann/json.hpp"

namespace pipelab {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool is_releasing_backward(PassKind k) {
  return k == PassKind::BackwardInput || k == PassKind::BackwardFused;
}

// Builds passes, per-device orders and (k,i,s,kind) lookup incrementally.
class Builder {
 public:
  Builder(ScheduleMeta meta) {
    sched_.meta = meta;
    sched_.device_order.resize(meta.p);
  }

  PassId add(std::int32_t k, std::int32_t i, std::int32_t s, PassKind kind,
             std::int32_t device) {
    PassId id = static_cast<PassId>(sched_.passes.size());
    sched_.passes.push_back({k, i, s, device, kind});
    sched_.device_order[device - 1].push_back(id);
    index_[key(k, i, s, kind)] = id;
    return id;
  }

  PassId lookup(std::int32_t k, std::int32_t i, std::int32_t s,
                PassKind kind) const {
    auto it = index_.find(key(k, i, s, kind));
    if (it == index_.end())
      throw std::runtime_error("schedule builder: missing pass in lookup");
    return it->second;
  }

  bool has(std::int32_t k, std::int32_t i, std::int32_t s, PassKind kind) const {
    return index_.count(key(k, i, s, kind)) != 0;
  }

  void edge(PassId from, PassId to) { sched_.edges.push_back({from, to}); }

  Schedule take() { return std::move(sched_); }

 private:
  static std::uint64_t key(std::int32_t k, std::int32_t i, std::int32_t s,
                           PassKind kind) {
    return (static_cast<std::uint64_t>(k) << 40) |
           (static_cast<std::uint64_t>(i) << 20) |
           (static_cast<std::uint64_t>(s) << 4) |
           static_cast<std::uint64_t>(kind);
  }

  Schedule sched_;
  std::map<std::uint64_t, PassId> index_;
};

struct FB {
  std::int32_t k, i, s;
};

// Per-device program order shared by the 1F1B family: `warmup` forwards,
// then strict single-F/single-B alternation, leftovers appended. When
// `backward_first` the alternation starts with a backward (sliced form),
// otherwise with a forward (Megatron form).
std::vector<std::pair<FB, bool>> merge_1f1b(const std::vector<FB>& fwd,
                                            const std::vector<FB>& bwd,
                                            std::size_t warmup,
                                            bool backward_first) {
  std::vector<std::pair<FB, bool>> order;
  std::size_t fi = 0, bi = 0;
  warmup = std::min(warmup, fwd.size());
  while (fi < warmup) order.push_back({fwd[fi++], false});
  bool take_backward = backward_first;
  while (fi < fwd.size() || bi < bwd.size()) {
    if (take_backward && bi < bwd.size()) {
      order.push_back({bwd[bi++], true});
    } else if (fi < fwd.size()) {
      order.push_back({fwd[fi++], false});
    } else if (bi < bwd.size()) {
      order.push_back({bwd[bi++], true});
    }
    take_backward = !take_backward;
    if (fi >= fwd.size()) take_backward = true;
    if (bi >= bwd.size()) take_backward = false;
  }
  return order;
}

void add_stage_chain_edges(Builder& b, std::int32_t m, std::int32_t n,
                           std::int32_t stages, bool sliced) {
  for (std::int32_t k = 1; k <= m; ++k) {
    for (std::int32_t i = 1; i <= n; ++i) {
      for (std::int32_t s = 1; s <= stages; ++s) {
        if (s > 1) b.edge(b.lookup(k, i, s - 1, PassKind::Forward),
                          b.lookup(k, i, s, PassKind::Forward));
        if (sliced && i > 1)
          b.edge(b.lookup(k, i - 1, s, PassKind::Forward),
                 b.lookup(k, i, s, PassKind::Forward));
      }
    }
  }
}

void add_backward_edges(Builder& b, std::int32_t m, std::int32_t n,
                        std::int32_t stages, PassKind bkind, bool sliced) {
  for (std::int32_t k = 1; k <= m; ++k) {
    for (std::int32_t i = 1; i <= n; ++i) {
      for (std::int32_t s = 1; s <= stages; ++s) {
        b.edge(b.lookup(k, i, s, PassKind::Forward), b.lookup(k, i, s, bkind));
        if (s < stages)
          b.edge(b.lookup(k, i, s + 1, bkind), b.lookup(k, i, s, bkind));
        if (sliced && i < n)
          b.edge(b.lookup(k, i + 1, s, bkind), b.lookup(k, i, s, bkind));
      }
    }
  }
}

}  // namespace

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::GPipe: return "gpipe";
    case Scheme::TeraPipe: return "terapipe";
    case Scheme::OneFOneB: return "1f1b";
    case Scheme::Interleaved1F1B: return "interleaved_1f1b";
    case Scheme::ZBV: return "zbv";
    case Scheme::VHalf: return "vhalf";
    case Scheme::SlimPipe: return "slimpipe";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "gpipe") return Scheme::GPipe;
  if (s == "terapipe") return Scheme::TeraPipe;
  if (s == "1f1b") return Scheme::OneFOneB;
  if (s == "interleaved_1f1b") return Scheme::Interleaved1F1B;
  if (s == "zbv") return Scheme::ZBV;
  if (s == "vhalf") return Scheme::VHalf;
  if (s == "slimpipe") return Scheme::SlimPipe;
  throw std::invalid_argument("unknown scheme: " + s);
}

std::int32_t Schedule::stage_owner(std::int32_t stage) const {
  if (meta.scheme == Scheme::ZBV || meta.scheme == Scheme::VHalf) {
    // V placement: down the pipeline and back up.
    return stage <= meta.p ? stage : 2 * meta.p - stage + 1;
  }
  return (stage - 1) % meta.p + 1;
}

Schedule gen_gpipe(const GenConfig& cfg) {
  require(cfg.m >= 1 && cfg.p >= 1, "gpipe: m and p must be >= 1");
  require(cfg.v == 1, "gpipe: stages_per_device must be 1");
  Builder b({Scheme::GPipe, cfg.p, 1, cfg.m, 1});
  for (std::int32_t d = 1; d <= cfg.p; ++d) {
    for (std::int32_t k = 1; k <= cfg.m; ++k)
      b.add(k, 1, d, PassKind::Forward, d);
    for (std::int32_t k = 1; k <= cfg.m; ++k)
      b.add(k, 1, d, PassKind::BackwardFused, d);
  }
  add_stage_chain_edges(b, cfg.m, 1, cfg.p, false);
  add_backward_edges(b, cfg.m, 1, cfg.p, PassKind::BackwardFused, false);
  return b.take();
}

Schedule gen_terapipe(const GenConfig& cfg) {
  require(cfg.m >= 1 && cfg.p >= 1 && cfg.n >= 1, "terapipe: sizes must be >= 1");
  require(cfg.v == 1, "terapipe: stages_per_device must be 1");
  Builder b({Scheme::TeraPipe, cfg.p, 1, cfg.m, cfg.n});
  for (std::int32_t d = 1; d <= cfg.p; ++d) {
    for (std::int32_t k = 1; k <= cfg.m; ++k)
      for (std::int32_t i = 1; i <= cfg.n; ++i)
        b.add(k, i, d, PassKind::Forward, d);
    for (std::int32_t k = 1; k <= cfg.m; ++k)
      for (std::int32_t i = cfg.n; i >= 1; --i)
        b.add(k, i, d, PassKind::BackwardFused, d);
  }
  add_stage_chain_edges(b, cfg.m, cfg.n, cfg.p, true);
  add_backward_edges(b, cfg.m, cfg.n, cfg.p, PassKind::BackwardFused, true);
  return b.take();
}

Schedule gen_1f1b(const GenConfig& cfg) {
  require(cfg.v == 1, "1f1b: stages_per_device must be 1");
  require(cfg.m >= cfg.p,
          "1f1b: requires m >= p (got m=" + std::to_string(cfg.m) +
              ", p=" + std::to_string(cfg.p) + ")");
  Builder b({Scheme::OneFOneB, cfg.p, 1, cfg.m, 1});
  for (std::int32_t d = 1; d <= cfg.p; ++d) {
    std::vector<FB> fwd, bwd;
    for (std::int32_t k = 1; k <= cfg.m; ++k) fwd.push_back({k, 1, d});
    for (std::int32_t k = 1; k <= cfg.m; ++k) bwd.push_back({k, 1, d});
    auto order = merge_1f1b(fwd, bwd, static_cast<std::size_t>(cfg.p - d),
                            /*backward_first=*/false);
    for (auto& [pass, back] : order)
      b.add(pass.k, pass.i, pass.s,
            back ? PassKind::BackwardFused : PassKind::Forward, d);
  }
  add_stage_chain_edges(b, cfg.m, 1, cfg.p, false);
  add_backward_edges(b, cfg.m, 1, cfg.p, PassKind::BackwardFused, false);
  return b.take();
}

Schedule gen_interleaved_1f1b(const GenConfig& cfg) {
  if (cfg.v == 1) return gen_1f1b(cfg);  // degenerate interleaving
  require(cfg.m % cfg.p == 0,
          "interleaved_1f1b: requires m to be a multiple of p (got m=" +
              std::to_string(cfg.m) + ", p=" + std::to_string(cfg.p) + ")");
  const std::int32_t stages = cfg.p * cfg.v;
  Builder b({Scheme::Interleaved1F1B, cfg.p, cfg.v, cfg.m, 1});
  for (std::int32_t d = 1; d <= cfg.p; ++d) {
    std::vector<FB> fwd, bwd;
    for (std::int32_t g = 0; g < cfg.m / cfg.p; ++g) {
      for (std::int32_t j = 0; j < cfg.v; ++j)
        for (std::int32_t idx = 0; idx < cfg.p; ++idx)
          fwd.push_back({g * cfg.p + idx + 1, 1, d + j * cfg.p});
      for (std::int32_t j = cfg.v - 1; j >= 0; --j)
        for (std::int32_t idx = 0; idx < cfg.p; ++idx)
          bwd.push_back({g * cfg.p + idx + 1, 1, d + j * cfg.p});
    }
    std::size_t warmup = static_cast<std::size_t>(2 * (cfg.p - d)) +
                         static_cast<std::size_t>((cfg.v - 1) * cfg.p);
    auto order = merge_1f1b(fwd, bwd, warmup, /*backward_first=*/false);
    for (auto& [pass, back] : order)
      b.add(pass.k, pass.i, pass.s,
            back ? PassKind::BackwardFused : PassKind::Forward, d);
  }
  add_stage_chain_edges(b, cfg.m, 1, stages, false);
  add_backward_edges(b, cfg.m, 1, stages, PassKind::BackwardFused, false);
  return b.take();
}

Schedule gen_slimpipe(const GenConfig& cfg) {
  require(cfg.m >= 1, "slimpipe: m must be >= 1");
  require(cfg.n % cfg.p == 0,
          "slimpipe: requires n to be a multiple of p (got n=" +
              std::to_string(cfg.n) + ", p=" + std::to_string(cfg.p) + ")");
  const std::int32_t stages = cfg.p * cfg.v;
  Builder b({Scheme::SlimPipe, cfg.p, cfg.v, cfg.m, cfg.n});
  for (std::int32_t d = 1; d <= cfg.p; ++d) {
    std::vector<FB> fwd, bwd;
    for (std::int32_t k = 1; k <= cfg.m; ++k) {
      std::vector<FB> mb;
      // Stage visits rotate every p slices (reconstructed from the
      // interleaving-form timeline).
      for (std::int32_t r = 0; r < cfg.n / cfg.p; ++r)
        for (std::int32_t j = 0; j < cfg.v; ++j)
          for (std::int32_t i = r * cfg.p + 1; i <= (r + 1) * cfg.p; ++i)
            mb.push_back({k, i, d + j * cfg.p});
      fwd.insert(fwd.end(), mb.begin(), mb.end());
      // Backward passes run in the exact reverse of the forward order.
      bwd.insert(bwd.end(), mb.rbegin(), mb.rend());
    }
    std::size_t warmup = static_cast<std::size_t>(cfg.n) * cfg.v +
                         static_cast<std::size_t>(2 * (cfg.p - d));
    auto order = merge_1f1b(fwd, bwd, warmup, /*backward_first=*/true);
    for (auto& [pass, back] : order)
      b.add(pass.k, pass.i, pass.s,
            back ? PassKind::BackwardFused : PassKind::Forward, d);
  }
  add_stage_chain_edges(b, cfg.m, cfg.n, stages, true);
  add_backward_edges(b, cfg.m, cfg.n, stages, PassKind::BackwardFused, true);
  return b.take();
}

namespace {

// Shared construction for the V-shaped zero-bubble schedules. Weight-grad
// passes are decoupled from input-grad passes and fill idle slots greedily
// (earliest feasible start wins; at equal start B > F > W). An in-flight
// activation cap per device pins the peak memory of the variant.
Schedule gen_vshape(const GenConfig& cfg, Scheme scheme, std::int64_t cap_units) {
  require(cfg.v == 2, std::string(to_string(scheme)) +
                          ": requires stages_per_device == 2 (V placement)");
  require(cfg.m >= cfg.p, std::string(to_string(scheme)) + ": requires m >= p");
  const std::int32_t p = cfg.p, m = cfg.m;
  const std::int32_t stages = 2 * p;
  const std::int64_t tok = cfg.seq_len;

  auto owner = [&](std::int32_t s) { return s <= p ? s : 2 * p - s + 1; };
  auto cost = [&](PassKind kind) { return pass_cost(cfg.cost, kind, tok, tok); };

  struct Node {
    std::int32_t k, s;
    PassKind kind;
    double end = -1.0;  // < 0 while unscheduled
  };
  std::vector<Node> nodes;
  auto idx = [&](std::int32_t k, std::int32_t s, int which) {
    return ((k - 1) * stages + (s - 1)) * 3 + which;  // 0=F, 1=B, 2=W
  };
  for (std::int32_t k = 1; k <= m; ++k)
    for (std::int32_t s = 1; s <= stages; ++s) {
      nodes.push_back({k, s, PassKind::Forward});
      nodes.push_back({k, s, PassKind::BackwardInput});
      nodes.push_back({k, s, PassKind::BackwardWeight});
    }

  auto deps_ready = [&](const Node& nd, double& ready) {
    ready = 0.0;
    auto need = [&](int j) {
      double e = nodes[j].end;
      if (e < 0.0) return false;
      ready = std::max(ready, e);
      return true;
    };
    if (nd.kind == PassKind::Forward)
      return nd.s == 1 || need(idx(nd.k, nd.s - 1, 0));
    if (nd.kind == PassKind::BackwardInput)
      return need(idx(nd.k, nd.s, 0)) &&
             (nd.s == stages || need(idx(nd.k, nd.s + 1, 1)));
    return need(idx(nd.k, nd.s, 1));  // W after its B
  };

  std::vector<double> dev_time(p + 1, 0.0);
  std::vector<std::int64_t> units(p + 1, 0);
  std::vector<std::vector<int>> dev_nodes(p + 1);
  for (int j = 0; j < static_cast<int>(nodes.size()); ++j)
    dev_nodes[owner(nodes[j].s)].push_back(j);

  std::vector<std::vector<int>> order(p + 1);
  std::size_t scheduled = 0;
  while (scheduled < nodes.size()) {
    int best = -1;
    double best_start = 0.0;
    int best_prio = 99;
    for (std::int32_t d = 1; d <= p; ++d) {
      for (int j : dev_nodes[d]) {
        Node& nd = nodes[j];
        if (nd.end >= 0.0) continue;
        double ready;
        if (!deps_ready(nd, ready)) continue;
        // Descending-leg forwards keep one cap slot free so the returning
        // leg can always land and unblock the backward chain.
        std::int64_t headroom = nd.s <= p ? cap_units - 1 : cap_units;
        if (nd.kind == PassKind::Forward && units[d] >= headroom) continue;
        double start = std::max(dev_time[d], ready);
        int prio = nd.kind == PassKind::BackwardInput ? 0
                   : nd.kind == PassKind::Forward     ? 1
                                                      : 2;
        if (best < 0 || start < best_start - 1e-12 ||
            (start <= best_start + 1e-12 && prio < best_prio)) {
          best = j;
          best_start = start;
          best_prio = prio;
        }
      }
    }
    if (best < 0)
      throw std::runtime_error(std::string(to_string(scheme)) +
                               ": greedy construction stalled");
    Node& nd = nodes[best];
    std::int32_t d = owner(nd.s);
    double start = std::max(dev_time[d], best_start);
    nd.end = start + cost(nd.kind);
    dev_time[d] = nd.end;
    if (nd.kind == PassKind::Forward) ++units[d];
    if (nd.kind == PassKind::BackwardInput) --units[d];
    order[d].push_back(best);
    ++scheduled;
  }

  Builder b({scheme, p, 2, m, 1});
  for (std::int32_t d = 1; d <= p; ++d)
    for (int j : order[d]) b.add(nodes[j].k, 1, nodes[j].s, nodes[j].kind, d);
  add_stage_chain_edges(b, m, 1, stages, false);
  add_backward_edges(b, m, 1, stages, PassKind::BackwardInput, false);
  for (std::int32_t k = 1; k <= m; ++k)
    for (std::int32_t s = 1; s <= stages; ++s)
      b.edge(b.lookup(k, 1, s, PassKind::BackwardInput),
             b.lookup(k, 1, s, PassKind::BackwardWeight));
  return b.take();
}

}  // namespace

Schedule gen_zbv(const GenConfig& cfg) {
  return gen_vshape(cfg, Scheme::ZBV, 2 * static_cast<std::int64_t>(cfg.p));
}

Schedule gen_vhalf(const GenConfig& cfg) {
  return gen_vshape(cfg, Scheme::VHalf, static_cast<std::int64_t>(cfg.p) + 2);
}

Schedule generate(Scheme scheme, const GenConfig& cfg) {
  switch (scheme) {
    case Scheme::GPipe: return gen_gpipe(cfg);
    case Scheme::TeraPipe: return gen_terapipe(cfg);
    case Scheme::OneFOneB: return gen_1f1b(cfg);
    case Scheme::Interleaved1F1B: return gen_interleaved_1f1b(cfg);
    case Scheme::ZBV: return gen_zbv(cfg);
    case Scheme::VHalf: return gen_vhalf(cfg);
    case Scheme::SlimPipe: return gen_slimpipe(cfg);
  }
  throw std::invalid_argument("generate: unknown scheme");
}

Diagnostics validate_schedule(const Schedule& sched) {
  Diagnostics diag;
  auto violate = [&](const std::string& rule, const std::string& msg,
                     std::optional<PassId> pass = std::nullopt) {
    diag.violations.push_back({rule, msg, pass});
  };
  const auto& meta = sched.meta;
  const std::size_t np = sched.passes.size();

  // Per-device total order and placement.
  std::vector<int> seen(np, 0);
  if (static_cast<std::int32_t>(sched.device_order.size()) != meta.p)
    violate("order", "device_order size != p");
  for (std::size_t d = 0; d < sched.device_order.size(); ++d) {
    for (PassId id : sched.device_order[d]) {
      if (id < 0 || static_cast<std::size_t>(id) >= np) {
        violate("order", "pass id out of range");
        continue;
      }
      ++seen[id];
      const Pass& ps = sched.passes[id];
      if (ps.device != static_cast<std::int32_t>(d) + 1)
        violate("order", "pass listed on a device other than its own", id);
      bool vocab = ps.kind == PassKind::VocabForward ||
                   ps.kind == PassKind::VocabBackward;
      if (!vocab && ps.device != sched.stage_owner(ps.stage))
        violate("placement", "device does not own the pass's stage", id);
    }
  }
  for (std::size_t id = 0; id < np; ++id) {
    if (seen[id] != 1)
      violate("order", "pass missing from or duplicated in device orders",
              static_cast<PassId>(id));
  }

  // Coverage: every (k,i,s) forward exactly once; backward either fused or
  // decoupled into input+weight; vocab passes per (k,i) when present.
  {
    std::map<std::tuple<int, int, int, int>, int> count;
    std::map<std::pair<int, int>, int> vf, vb;
    for (std::size_t id = 0; id < np; ++id) {
      const Pass& ps = sched.passes[id];
      if (ps.kind == PassKind::VocabForward) ++vf[{ps.microbatch, ps.slice}];
      else if (ps.kind == PassKind::VocabBackward) ++vb[{ps.microbatch, ps.slice}];
      else ++count[{ps.microbatch, ps.slice, ps.stage, static_cast<int>(ps.kind)}];
    }
    const int stages = sched.num_stages();
    bool decoupled = meta.scheme == Scheme::ZBV || meta.scheme == Scheme::VHalf;
    for (int k = 1; k <= meta.m; ++k)
      for (int i = 1; i <= meta.n; ++i)
        for (int s = 1; s <= stages; ++s) {
          auto c = [&](PassKind kind) {
            auto it = count.find({k, i, s, static_cast<int>(kind)});
            return it == count.end() ? 0 : it->second;
          };
          if (c(PassKind::Forward) != 1)
            violate("coverage", "forward pass (" + std::to_string(k) + "," +
                                    std::to_string(i) + "," + std::to_string(s) +
                                    ") count != 1");
          if (decoupled) {
            if (c(PassKind::BackwardInput) != 1 ||
                c(PassKind::BackwardWeight) != 1 || c(PassKind::BackwardFused) != 0)
              violate("coverage", "decoupled backward coverage broken at (" +
                                      std::to_string(k) + "," + std::to_string(i) +
                                      "," + std::to_string(s) + ")");
          } else if (c(PassKind::BackwardFused) != 1 ||
                     c(PassKind::BackwardInput) != 0) {
            violate("coverage", "fused backward coverage broken at (" +
                                    std::to_string(k) + "," + std::to_string(i) +
                                    "," + std::to_string(s) + ")");
          }
        }
    if (meta.vocab_passes) {
      int expected = meta.vocab_distributed ? meta.p : 1;
      for (int k = 1; k <= meta.m; ++k)
        for (int i = 1; i <= meta.n; ++i)
          if (vf[{k, i}] != expected || vb[{k, i}] != expected)
            violate("coverage", "vocab pass coverage broken at (" +
                                    std::to_string(k) + "," + std::to_string(i) + ")");
    }
  }

  // Acyclicity over dependency edges plus per-device program order.
  {
    std::vector<std::vector<PassId>> adj(np);
    std::vector<int> indof(np, 0);
    auto add = [&](PassId a, PassId bb) {
      if (a < 0 || bb < 0 || static_cast<std::size_t>(a) >= np ||
          static_cast<std::size_t>(bb) >= np)
        return;
      adj[a].push_back(bb);
      ++indof[bb];
    };
    for (const Edge& e : sched.edges) add(e.from, e.to);
    for (const auto& ord : sched.device_order)
      for (std::size_t i = 1; i < ord.size(); ++i) add(ord[i - 1], ord[i]);
    std::queue<PassId> q;
    for (std::size_t i = 0; i < np; ++i)
      if (indof[i] == 0) q.push(static_cast<PassId>(i));
    std::size_t done = 0;
    while (!q.empty()) {
      PassId u = q.front();
      q.pop();
      ++done;
      for (PassId w : adj[u])
        if (--indof[w] == 0) q.push(w);
    }
    if (done != np) {
      PassId stuck = -1;
      for (std::size_t i = 0; i < np; ++i)
        if (indof[i] > 0) { stuck = static_cast<PassId>(i); break; }
      violate("acyclicity", "dependency edges and program order form a cycle",
              stuck);
    }
  }

  // Backward order is the exact reverse of forward order per (device,
  // microbatch).
  for (std::size_t d = 0; d < sched.device_order.size(); ++d) {
    std::map<int, std::vector<std::pair<int, int>>> fwd, bwd;
    for (PassId id : sched.device_order[d]) {
      const Pass& ps = sched.passes[id];
      if (ps.kind == PassKind::Forward)
        fwd[ps.microbatch].push_back({ps.slice, ps.stage});
      else if (is_releasing_backward(ps.kind))
        bwd[ps.microbatch].push_back({ps.slice, ps.stage});
    }
    for (auto& [k, fs] : fwd) {
      auto rev = fs;
      std::reverse(rev.begin(), rev.end());
      if (bwd[k] != rev) {
        violate("reverse-order",
                "backward order is not the reverse of forward order on device " +
                    std::to_string(d + 1) + ", microbatch " + std::to_string(k));
        break;
      }
    }
  }

  // One-forward-one-backward steady state for the 1F1B family.
  if (meta.scheme == Scheme::OneFOneB || meta.scheme == Scheme::Interleaved1F1B ||
      meta.scheme == Scheme::SlimPipe) {
    for (std::size_t d = 0; d < sched.device_order.size(); ++d) {
      std::vector<int> kinds;  // 0 = F, 1 = releasing B
      for (PassId id : sched.device_order[d]) {
        const Pass& ps = sched.passes[id];
        if (ps.kind == PassKind::Forward) kinds.push_back(0);
        else if (is_releasing_backward(ps.kind)) kinds.push_back(1);
      }
      auto first_b = std::find(kinds.begin(), kinds.end(), 1);
      auto last_f = std::find(kinds.rbegin(), kinds.rend(), 0);
      if (first_b == kinds.end() || last_f == kinds.rend()) continue;
      std::size_t lo = static_cast<std::size_t>(first_b - kinds.begin());
      std::size_t hi = kinds.size() - 1 - static_cast<std::size_t>(last_f - kinds.rbegin());
      for (std::size_t i = lo; i + 1 <= hi; ++i) {
        if (kinds[i] == kinds[i + 1]) {
          violate("steady-state", "two consecutive passes of the same kind in "
                                  "the steady phase on device " +
                                      std::to_string(d + 1));
          break;
        }
      }
    }
  }

  return diag;
}

std::string schedule_to_json(const Schedule& sched) {
  nlohmann::ordered_json j;
  j["scheme"] = to_string(sched.meta.scheme);
  j["p"] = sched.meta.p;
  j["v"] = sched.meta.v;
  j["m"] = sched.meta.m;
  j["n"] = sched.meta.n;
  j["vocab_passes"] = sched.meta.vocab_passes;
  j["vocab_distributed"] = sched.meta.vocab_distributed;
  nlohmann::ordered_json passes = nlohmann::ordered_json::array();
  for (std::size_t id = 0; id < sched.passes.size(); ++id) {
    const Pass& ps = sched.passes[id];
    passes.push_back({{"id", id},
                      {"microbatch", ps.microbatch},
                      {"slice", ps.slice},
                      {"stage", ps.stage},
                      {"device", ps.device},
                      {"kind", to_string(ps.kind)}});
  }
  j["passes"] = std::move(passes);
  j["device_order"] = sched.device_order;
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (const Edge& e : sched.edges) edges.push_back({e.from, e.to});
  j["edges"] = std::move(edges);
  return j.dump(1);
}

}  // namespace pipelab
