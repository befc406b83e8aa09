#include "pipelab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>

#include "pipelab/analytics.hpp"
#include "pipelab/attention.hpp"
#include "pipelab/exchange.hpp"
#include "pipelab/scenario.hpp"
#include "pipelab/simulator.hpp"

namespace pipelab {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

void check(std::vector<CheckResult>& out, const std::string& name, bool ok,
           const std::string& expected, const std::string& actual) {
  out.push_back({name, ok, expected, actual});
}

void check_eq(std::vector<CheckResult>& out, const std::string& name,
              const Rat& expected, const Rat& actual) {
  check(out, name, expected == actual, expected.str(), actual.str());
}

// Monolithic double-precision softmax attention, the independent oracle for
// the chunked kernel.
Mat reference_attention(const Mat& q, const Mat& k, const Mat& v, bool causal) {
  Mat out(q.rows, v.cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  for (int r = 0; r < q.rows; ++r) {
    int limit = causal ? k.rows - q.rows + r : k.rows - 1;
    if (limit < 0) continue;
    std::vector<double> s(limit + 1);
    double mx = -1e300;
    for (int j = 0; j <= limit; ++j) {
      double acc = 0.0;
      for (int c = 0; c < q.cols; ++c) acc += q.at(r, c) * k.at(j, c);
      s[j] = acc * scale;
      mx = std::max(mx, s[j]);
    }
    double denom = 0.0;
    for (int j = 0; j <= limit; ++j) denom += std::exp(s[j] - mx);
    for (int j = 0; j <= limit; ++j) {
      double w = std::exp(s[j] - mx) / denom;
      for (int c = 0; c < v.cols; ++c) out.at(r, c) += w * v.at(j, c);
    }
  }
  return out;
}

double max_rel_err(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.a.size(); ++i) {
    double denom = std::max(1.0, std::abs(b.a[i]));
    worst = std::max(worst, std::abs(a.a[i] - b.a[i]) / denom);
  }
  return worst;
}

Mat random_mat(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Mat m(rows, cols);
  for (double& x : m.a) x = dist(rng);
  return m;
}

}  // namespace

std::vector<CheckResult> verify_formulas() {
  std::vector<CheckResult> out;

  // Activation arithmetic for the 70B worked example: 1M context, 8-way TP,
  // full checkpointing lands on 160 GiB exactly.
  {
    ParallelismConfig par;
    par.tp = 8;
    RunConfig run;
    run.seq_len = 1048576;
    run.slices = 1;
    run.checkpointing = Checkpointing::Full;
    MemoryModel mm = activation_bytes(llama70b(), par, run);
    check_eq(out, "activation_bytes llama70b 1M t8 full = 160 GiB",
             Rat(160) * Rat(std::int64_t{1} << 30),
             mm.microbatch_activation_bytes);
  }
  {
    ParallelismConfig par;
    par.tp = 8;
    RunConfig run;
    run.seq_len = 32768;
    run.slices = 1;
    run.checkpointing = Checkpointing::Full;
    MemoryModel mm = activation_bytes(llama13b(), par, run);
    check_eq(out, "activation_bytes llama13b 32K t8 full = 1.5625 GiB",
             Rat(1677721600), mm.microbatch_activation_bytes);
  }

  // Logits bytes: 256K context and a 128000 vocabulary consume about 16 GiB
  // even in 8-way TP.
  {
    ModelConfig model = llama13b();
    ParallelismConfig par;
    par.tp = 8;
    RunConfig run;
    run.seq_len = 262144;
    run.slices = 1;
    Rat v = logits_bytes(model, par, run);
    check_eq(out, "logits_bytes 256K V=128000 t8 fp32", Rat(16777216000), v);
    double rel = std::abs(v.to_double() - 16.0 * 1073741824.0) /
                 (16.0 * 1073741824.0);
    check(out, "logits_bytes within 5% of 16 GiB", rel < 0.05, "<0.05",
          fmt(rel));
    RunConfig shard = run;
    shard.vocab_parallel = true;
    par.pp = 4;
    check_eq(out, "logits_bytes sharded divides by p", v / Rat(4),
             logits_bytes(model, par, shard));
  }

  // Accumulated activation law and its spot values.
  check_eq(out, "slim memory multiplier p4 n4", Rat(5, 8),
           memory_multiplier(Scheme::SlimPipe, 4, 4, 4, 1));
  check_eq(out, "slim memory multiplier p8 n8", Rat(11, 32),
           memory_multiplier(Scheme::SlimPipe, 8, 8, 8, 1));
  check_eq(out, "slim memory multiplier p16 n16", Rat(46, 256),
           memory_multiplier(Scheme::SlimPipe, 16, 16, 16, 1));
  check_eq(out, "slim_acc_memory p4 n8", Rat(7, 16),
           slim_acc_memory(4, 8, Rat(1)));
  check_eq(out, "slim_acc_memory p8 n8", Rat(11, 32),
           slim_acc_memory(8, 8, Rat(1)));

  // Exchange volume: the p=4, n=8 substitution and the closed-form bound
  // over the grid.
  check_eq(out, "exchange_volume p4 n8 = 1.375 L*M_h", Rat(11, 8),
           exchange_volume(4, 8, 1, Rat(1)));
  {
    bool all = true;
    std::string bad;
    for (std::int64_t p = 2; p <= 16; ++p)
      for (std::int64_t n = p; n <= 8 * p; n += p) {
        if (!(exchange_volume(p, n, 1, Rat(1)) <=
              exchange_volume_bound(p, n, 1, Rat(1)))) {
          all = false;
          bad = "p=" + std::to_string(p) + " n=" + std::to_string(n);
        }
      }
    check(out, "exchange_volume <= (2-(p-1)/n)*L*M_h for p in 2..16", all,
          "bound holds", all ? "bound holds" : "violated at " + bad);
  }

  // Table rows.
  check_eq(out, "1f1b bubble p8 m4", Rat(7, 4),
           *bubble_bounds(Scheme::OneFOneB, 8, 4, 1, 1).exact);
  check_eq(out, "slim bubble bound p4 m2 n4", Rat(3, 8),
           *bubble_bounds(Scheme::SlimPipe, 4, 2, 4, 1).exact);
  check_eq(out, "interleaved memory p4 v2", Rat(11, 8),
           memory_multiplier(Scheme::Interleaved1F1B, 4, 8, 1, 2));
  check_eq(out, "vhalf memory p4", Rat(3, 4),
           memory_multiplier(Scheme::VHalf, 4, 8, 1, 2));

  // Context-parallel volume comparison.
  check_eq(out, "cp volume ratio n8 = 4.5", Rat(9, 2),
           cp_comm_volume(CpVariant::KvRing, 8, Rat(1)) /
               cp_comm_volume(CpVariant::Commutated, 8, Rat(1)));
  check_eq(out, "cp volumes equal at n1",
           cp_comm_volume(CpVariant::KvRing, 1, Rat(1)),
           cp_comm_volume(CpVariant::Commutated, 1, Rat(1)));

  // Closed forms against the simulator on a small grid.
  {
    auto rows = compare_report(
        {Scheme::GPipe, Scheme::TeraPipe, Scheme::OneFOneB,
         Scheme::Interleaved1F1B, Scheme::ZBV, Scheme::VHalf, Scheme::SlimPipe},
        {2, 4}, {1, 2}, {4, 8}, {1, 2});
    bool mem_ok = true, bub_ok = true;
    for (const CompareRow& r : rows) {
      mem_ok = mem_ok && r.memory_exact;
      bub_ok = bub_ok && r.within_bound;
    }
    check(out, "compare_report memory matches closed forms", mem_ok, "exact",
          mem_ok ? "exact" : "mismatch");
    check(out, "compare_report bubbles within closed-form bounds", bub_ok,
          "within", bub_ok ? "within" : "outside");
  }

  return out;
}

std::vector<CheckResult> verify_balance(std::uint64_t seed) {
  std::vector<CheckResult> out;

  // The six-device instance: loads 7..2 rebalance to [5,5,5,4,4,4] with
  // device 1 sending two chunks to device 6 and device 2 one to device 5.
  {
    std::vector<TickLoad> loads;
    for (int d = 1; d <= 6; ++d) loads.push_back({d, 8 - d});
    ExchangePlan plan = balance_tick(loads);
    std::vector<std::int64_t> want = {5, 5, 5, 4, 4, 4};
    bool loads_ok = plan.resulting_loads == want;
    bool transfers_ok =
        plan.transfers.size() == 2 && plan.transfers[0].src == 1 &&
        plan.transfers[0].dst == 6 &&
        plan.transfers[0].kv_chunk_indices == std::vector<std::int64_t>{6, 7} &&
        plan.transfers[1].src == 2 && plan.transfers[1].dst == 5 &&
        plan.transfers[1].kv_chunk_indices == std::vector<std::int64_t>{6} &&
        plan.transfers[0].carries_query && plan.transfers[0].carries_output;
    check(out, "figure instance loads [7..2] -> [5,5,5,4,4,4]", loads_ok,
          "[5,5,5,4,4,4]",
          loads_ok ? "[5,5,5,4,4,4]" : "different");
    check(out, "figure instance transfers d1->d6 {6,7}, d2->d5 {6}",
          transfers_ok, "exact transfers", transfers_ok ? "exact" : "different");
    ExchangePlan early = to_early_exchange(loads, plan);
    bool early_ok =
        early.transfers[0].kv_chunk_indices == std::vector<std::int64_t>{1, 2} &&
        early.transfers[1].kv_chunk_indices == std::vector<std::int64_t>{1} &&
        early.resulting_loads == want;
    check(out, "early rewrite ships chunks {1,2} with identical balance",
          early_ok, "chunks {1,2}", early_ok ? "chunks {1,2}" : "different");
  }

  {
    std::vector<TickLoad> loads = {{1, 3}, {2, 3}, {3, 3}};
    ExchangePlan plan = balance_tick(loads);
    check(out, "equal loads produce an empty plan", plan.transfers.empty(),
          "0 transfers", std::to_string(plan.transfers.size()));
  }
  {
    std::vector<TickLoad> loads = {{1, 4}, {2, 3}, {3, 2}, {4, 1}};
    ExchangePlan plan = balance_tick(loads);
    std::vector<std::int64_t> want = {3, 3, 2, 2};
    check(out, "loads [4,3,2,1] -> [3,3,2,2]", plan.resulting_loads == want,
          "[3,3,2,2]", plan.resulting_loads == want ? "[3,3,2,2]" : "different");
  }

  // Arithmetic progressions, exhaustive for p <= 32: balanced to within one
  // chunk, work conserved, per-device sends capped by floor((p-1)/2).
  {
    bool ok = true;
    std::string bad;
    for (int p = 1; p <= 32 && ok; ++p)
      for (int c = 1; c <= 3 && ok; ++c) {
        std::vector<TickLoad> loads;
        for (int d = 1; d <= p; ++d) loads.push_back({d, c + p - d});
        ExchangePlan plan = balance_tick(loads);
        std::int64_t mx = 0, mn = INT64_MAX, total = 0, total_in = 0;
        for (std::int64_t l : plan.resulting_loads) {
          mx = std::max(mx, l);
          mn = std::min(mn, l);
          total += l;
        }
        for (const TickLoad& l : loads) total_in += l.kv_chunks;
        std::map<int, std::int64_t> sent;
        for (const Transfer& tr : plan.transfers)
          sent[tr.src] += static_cast<std::int64_t>(tr.kv_chunk_indices.size());
        bool cap_ok = true;
        for (auto& [src, s] : sent) cap_ok = cap_ok && s <= (p - 1) / 2;
        if (mx - mn > 1 || total != total_in || !cap_ok) {
          ok = false;
          bad = "p=" + std::to_string(p) + " c=" + std::to_string(c);
        }
      }
    check(out, "arithmetic progressions p<=32: max-min<=1, conserved, capped",
          ok, "all hold", ok ? "all hold" : "violated at " + bad);
  }

  // Random loads: the guarantee and conservation hold for arbitrary inputs.
  {
    std::mt19937_64 rng(seed);
    bool ok = true;
    for (int trial = 0; trial < 10000 && ok; ++trial) {
      std::uniform_int_distribution<int> psz(2, 16);
      int p = psz(rng);
      std::uniform_int_distribution<std::int64_t> ld(1, 64);
      std::vector<TickLoad> loads;
      std::int64_t total_in = 0;
      for (int d = 1; d <= p; ++d) {
        loads.push_back({d, ld(rng)});
        total_in += loads.back().kv_chunks;
      }
      ExchangePlan plan = balance_tick(loads);
      std::int64_t mx = 0, mn = INT64_MAX, total = 0;
      for (std::int64_t l : plan.resulting_loads) {
        mx = std::max(mx, l);
        mn = std::min(mn, l);
        total += l;
      }
      ok = mx - mn <= 1 && total == total_in;
    }
    check(out, "random loads x10000: max-min<=1 and conservation", ok, "hold",
          ok ? "hold" : "violated");
  }

  // Microbatch-juncture patterns: balanced to one chunk, each sender
  // shipping only chunks it computed itself.
  {
    bool ok = true;
    for (int p = 2; p <= 8 && ok; ++p) {
      int n = 4 * p;
      for (int shift = 1; shift < p && ok; ++shift) {
        std::vector<TickLoad> loads;
        for (int d = 1; d <= p; ++d) {
          int pos = shift - (d - 1);
          std::int64_t b = pos >= 1 ? pos : n + pos;
          loads.push_back({d, b});
        }
        ExchangePlan plan = balance_tick(loads);
        std::int64_t mx = 0, mn = INT64_MAX;
        for (std::int64_t l : plan.resulting_loads) {
          mx = std::max(mx, l);
          mn = std::min(mn, l);
        }
        std::map<int, std::int64_t> sent;
        for (const Transfer& tr : plan.transfers)
          sent[tr.src] += static_cast<std::int64_t>(tr.kv_chunk_indices.size());
        for (auto& [src, s] : sent) ok = ok && s <= loads[src - 1].kv_chunks - 1;
        ok = ok && mx - mn <= 1;
      }
    }
    check(out, "juncture patterns: balanced within one chunk", ok, "hold",
          ok ? "hold" : "violated");
  }

  return out;
}

std::vector<CheckResult> verify_kernel(std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);
  const double tol = 1e-6;

  // Single chunk equals monolithic attention.
  {
    Mat q = random_mat(rng, 16, 8);
    KvChunk ch{random_mat(rng, 16, 8), random_mat(rng, 16, 8)};
    auto [got, st] = chunk_attention(q, {ch}, true);
    Mat want = reference_attention(q, ch.keys, ch.values, true);
    double err = max_rel_err(got, want);
    check(out, "single chunk matches monolithic", err < tol, "<1e-6", fmt(err));
  }

  // 100 random instances, causal and not, 1..16 chunks.
  {
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      std::uniform_int_distribution<int> rows_d(1, 64), dim_d(1, 32),
          chunks_d(1, 16), clen_d(1, 24);
      int rows = rows_d(rng), dim = dim_d(rng), nchunks = chunks_d(rng);
      bool causal = t % 2 == 0;
      Mat q = random_mat(rng, rows, dim);
      std::vector<KvChunk> chunks;
      int total = 0;
      for (int c = 0; c < nchunks; ++c) {
        int len = clen_d(rng);
        chunks.push_back({random_mat(rng, len, dim), random_mat(rng, len, dim)});
        total += len;
      }
      if (causal && total < rows) {
        chunks.push_back({random_mat(rng, rows, dim), random_mat(rng, rows, dim)});
        total += rows;
      }
      Mat keys(total, dim), values(total, dim);
      int pos = 0;
      for (const KvChunk& ch : chunks) {
        for (int r = 0; r < ch.keys.rows; ++r)
          for (int c = 0; c < dim; ++c) {
            keys.at(pos + r, c) = ch.keys.at(r, c);
            values.at(pos + r, c) = ch.values.at(r, c);
          }
        pos += ch.keys.rows;
      }
      auto [got, st] = chunk_attention(q, chunks, causal);
      Mat want = reference_attention(q, keys, values, causal);
      worst = std::max(worst, max_rel_err(got, want));
    }
    check(out, "100 random chunked instances match monolithic", worst < tol,
          "<1e-6", fmt(worst));
  }

  // Split-point sweep and merge properties on a 16x8 instance.
  {
    int rows = 16, dim = 8, total = 32;
    Mat q = random_mat(rng, rows, dim);
    Mat keys = random_mat(rng, total, dim), values = random_mat(rng, total, dim);
    auto slice_chunk = [&](int lo, int hi) {
      KvChunk ch{Mat(hi - lo, dim), Mat(hi - lo, dim)};
      for (int r = lo; r < hi; ++r)
        for (int c = 0; c < dim; ++c) {
          ch.keys.at(r - lo, c) = keys.at(r, c);
          ch.values.at(r - lo, c) = values.at(r, c);
        }
      return ch;
    };
    Mat want = reference_attention(q, keys, values, false);
    double worst = 0.0, worst_comm = 0.0;
    for (int split = 0; split <= total; ++split) {
      AttnChunkState a = empty_state(rows, dim);
      accumulate_chunk(a, q, slice_chunk(0, split), 0, total, false);
      AttnChunkState b = empty_state(rows, dim);
      accumulate_chunk(b, q, slice_chunk(split, total), split, total, false);
      worst = std::max(worst, max_rel_err(finalize(merge_partials(a, b)), want));
      worst_comm = std::max(
          worst_comm, max_rel_err(finalize(merge_partials(b, a)), want));
    }
    check(out, "split-point sweep matches monolithic", worst < tol, "<1e-6",
          fmt(worst));
    check(out, "merge is commutative", worst_comm < tol, "<1e-6",
          fmt(worst_comm));

    AttnChunkState a = empty_state(rows, dim);
    accumulate_chunk(a, q, slice_chunk(0, total), 0, total, false);
    AttnChunkState e = empty_state(rows, dim);
    double id_err =
        max_rel_err(finalize(merge_partials(a, e)), finalize(a));
    check(out, "empty state is the merge identity", id_err == 0.0, "0",
          fmt(id_err));
  }

  // Keys all equal: softmax is uniform, output is the mean of values.
  {
    Mat q = random_mat(rng, 4, 8);
    KvChunk ch{Mat(6, 8), random_mat(rng, 6, 8)};
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 8; ++c) ch.keys.at(r, c) = 0.5;
    auto [got, st] = chunk_attention(q, {ch}, false);
    double worst = 0.0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 8; ++c) {
        double mean = 0.0;
        for (int j = 0; j < 6; ++j) mean += ch.values.at(j, c);
        mean /= 6.0;
        worst = std::max(worst, std::abs(got.at(r, c) - mean));
      }
    check(out, "equal keys give the mean of values", worst < 1e-12, "<1e-12",
          fmt(worst));
  }

  return out;
}

std::vector<CheckResult> verify_fixtures() {
  std::vector<CheckResult> out;
  GenConfig gc;
  gc.p = 4;
  gc.v = 1;
  gc.m = 2;
  gc.n = 8;
  gc.seq_len = 8;
  Schedule good = gen_slimpipe(gc);
  check(out, "generator output validates cleanly", validate_schedule(good).ok(),
        "no violations", validate_schedule(good).ok() ? "no violations" : "?");

  // Backward slices of one microbatch swapped out of reverse order.
  {
    Schedule bad = good;
    auto& order = bad.device_order[0];
    int b1 = -1, b2 = -1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Pass& ps = bad.passes[order[i]];
      if (ps.kind == PassKind::BackwardFused && ps.microbatch == 1) {
        if (ps.slice == 2) b2 = static_cast<int>(i);
        if (ps.slice == 1) b1 = static_cast<int>(i);
      }
    }
    std::swap(order[b1], order[b2]);
    Diagnostics d = validate_schedule(bad);
    bool found = false;
    for (const Violation& v : d.violations) found |= v.rule == "reverse-order";
    check(out, "swapped backwards trip the reverse-order rule", found,
          "reverse-order", found ? "reverse-order" : "not reported");
  }

  // A missing pass breaks coverage.
  {
    Schedule bad = good;
    PassId victim = bad.device_order[2].back();
    bad.device_order[2].pop_back();
    (void)victim;
    Diagnostics d = validate_schedule(bad);
    bool found = false;
    for (const Violation& v : d.violations) found |= v.rule == "order";
    check(out, "dropped pass trips the order/coverage rule", found, "order",
          found ? "order" : "not reported");
  }

  // An extra edge that closes a cycle.
  {
    Schedule bad = good;
    PassId first = bad.device_order[0].front();
    PassId second = bad.device_order[0][1];
    bad.edges.push_back({second, first});
    Diagnostics d = validate_schedule(bad);
    bool found = false;
    for (const Violation& v : d.violations) found |= v.rule == "acyclicity";
    check(out, "cycle-closing edge trips the acyclicity rule", found,
          "acyclicity", found ? "acyclicity" : "not reported");
  }

  return out;
}

int run_verify_suite(const std::string& suite, std::ostream& os) {
  std::vector<std::pair<std::string, std::vector<CheckResult>>> suites;
  if (suite == "formulas" || suite == "all")
    suites.push_back({"formulas", verify_formulas()});
  if (suite == "balance" || suite == "all")
    suites.push_back({"balance", verify_balance()});
  if (suite == "kernel" || suite == "all")
    suites.push_back({"kernel", verify_kernel()});
  if (suite == "fixtures" || suite == "all")
    suites.push_back({"fixtures", verify_fixtures()});
  if (suites.empty()) {
    os << "unknown suite: " << suite
       << " (expected formulas|balance|kernel|fixtures|all)\n";
    return -1;
  }
  int failures = 0;
  for (auto& [name, results] : suites) {
    for (const CheckResult& r : results) {
      os << (r.passed ? "PASS" : "FAIL") << " [" << name << "] " << r.name
         << " (expected " << r.expected << ", actual " << r.actual << ")\n";
      if (!r.passed) ++failures;
    }
  }
  os << (failures == 0 ? "all checks passed" : std::to_string(failures) +
                                                   " check(s) failed")
     << "\n";
  return failures;
}

}  // namespace pipelab
