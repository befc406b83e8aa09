#include "pipelab/analytics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pipelab/simulator.hpp"

namespace pipelab {

Rat memory_multiplier(Scheme scheme, std::int64_t p, std::int64_t m,
                      std::int64_t n, std::int64_t v) {
  switch (scheme) {
    case Scheme::GPipe:
    case Scheme::TeraPipe:
      return Rat(m, p);
    case Scheme::OneFOneB:
      return Rat(1);
    case Scheme::Interleaved1F1B:
      // v=1 is plain 1F1B; the interleaved form keeps one extra wave of
      // (p-1) stage activations in flight.
      return v == 1 ? Rat(1) : Rat(1) + Rat(p - 1, v * p);
    case Scheme::ZBV:
      return Rat(1);
    case Scheme::VHalf:
      return Rat(1, 2) + Rat(1, p);
    case Scheme::SlimPipe:
      return Rat(1, p) + Rat(2 * (p - 1), n * v * p);
  }
  throw std::invalid_argument("memory_multiplier: unknown scheme");
}

Rat slim_acc_memory(std::int64_t p, std::int64_t n, const Rat& microbatch_bytes) {
  if (n < p) throw std::invalid_argument("slim_acc_memory: requires n >= p");
  return (Rat(1) + Rat(2 * (p - 1), n)) * microbatch_bytes / Rat(p);
}

BubbleBound bubble_bounds(Scheme scheme, std::int64_t p, std::int64_t m,
                          std::int64_t n, std::int64_t v) {
  BubbleBound b;
  switch (scheme) {
    case Scheme::GPipe:
    case Scheme::OneFOneB:
      b.exact = Rat(p - 1, m);
      break;
    case Scheme::Interleaved1F1B:
      b.exact = Rat(p - 1, v * m);
      break;
    case Scheme::TeraPipe:
      b.exact = Rat(p - 1, n * m);
      b.upper_bound_only = true;
      break;
    case Scheme::SlimPipe:
      b.exact = Rat(p - 1, n * v * m);
      b.upper_bound_only = true;
      break;
    case Scheme::ZBV:
      b.interval = {Rat(0), Rat(2 * (p - 1), 3 * m)};
      break;
    case Scheme::VHalf:
      b.interval = {Rat(p, 2 * m), Rat(1, 3) + Rat(p, 2 * m)};
      break;
  }
  return b;
}

Rat slim_attention_bubble(std::int64_t p, std::int64_t m, std::int64_t n,
                          std::int64_t v) {
  return Rat((p - 1) * p, (n + 1) * n * v * m);
}

bool scheme_accepts(Scheme scheme, std::int64_t p, std::int64_t m,
                    std::int64_t n, std::int64_t v) {
  if (p < 1 || m < 1 || n < 1 || v < 1) return false;
  switch (scheme) {
    case Scheme::GPipe: return v == 1 && n == 1;
    case Scheme::TeraPipe: return v == 1;
    case Scheme::OneFOneB: return v == 1 && n == 1 && m >= p;
    case Scheme::Interleaved1F1B:
      return n == 1 && (v == 1 ? m >= p : m % p == 0);
    case Scheme::ZBV:
    case Scheme::VHalf:
      return v == 2 && n == 1 && m >= p;
    case Scheme::SlimPipe: return n % p == 0;
  }
  return false;
}

bool memory_form_valid(Scheme scheme, std::int64_t p, std::int64_t m,
                       std::int64_t n, std::int64_t v) {
  if (!scheme_accepts(scheme, p, m, n, v)) return false;
  switch (scheme) {
    case Scheme::GPipe:
    case Scheme::TeraPipe:
    case Scheme::OneFOneB:
      return true;
    case Scheme::Interleaved1F1B:
      // The warm-up needs m*v forwards to reach the formula's peak.
      return v == 1 || m * v >= p * v + p - 1;
    case Scheme::ZBV:
      return m >= 2 * p - 1;
    case Scheme::VHalf:
      return m >= p + 1;
    case Scheme::SlimPipe:
      return static_cast<std::int64_t>(m) * n * v >= n * v + 2 * (p - 1);
  }
  return false;
}

std::vector<CompareRow> compare_report(const std::vector<Scheme>& schemes,
                                       const std::vector<std::int64_t>& ps,
                                       const std::vector<std::int64_t>& vs,
                                       const std::vector<std::int64_t>& ms,
                                       const std::vector<std::int64_t>& ns_per_p) {
  std::vector<CompareRow> rows;
  for (Scheme scheme : schemes)
    for (std::int64_t p : ps)
      for (std::int64_t v : vs)
        for (std::int64_t m : ms) {
          std::vector<std::int64_t> ns;
          bool sliced = scheme == Scheme::SlimPipe || scheme == Scheme::TeraPipe;
          if (sliced)
            for (std::int64_t mult : ns_per_p) ns.push_back(mult * p);
          else
            ns.push_back(1);
          for (std::int64_t n : ns) {
            if (!scheme_accepts(scheme, p, m, n, v)) continue;
            GenConfig gc;
            gc.p = static_cast<std::int32_t>(p);
            gc.v = static_cast<std::int32_t>(v);
            gc.m = static_cast<std::int32_t>(m);
            gc.n = static_cast<std::int32_t>(n);
            gc.cost.alpha_linear = 1.0;
            gc.cost.beta_attn = 0.0;
            gc.seq_len = n;
            Schedule sched = generate(scheme, gc);
            SimInputs in;
            in.cost = gc.cost;
            in.memory = unit_memory_model(p, v, n);
            in.seq_len = n;
            SimResult res = simulate(sched, in);
            std::int64_t peak = 0;
            for (const auto& dm : res.memory.per_device)
              peak = std::max(peak, dm.peak_activation_units);
            Rat sim_mem = Rat(peak, n * p * v);
            Rat closed = memory_multiplier(scheme, p, m, n, v);
            BubbleBound bb = bubble_bounds(scheme, p, m, n, v);

            CompareRow row;
            row.scheme = scheme;
            row.p = p; row.v = v; row.m = m; row.n = n;
            row.closed_memory = closed.to_double();
            row.simulated_memory = sim_mem.to_double();
            row.memory_exact = !memory_form_valid(scheme, p, m, n, v) ||
                               sim_mem == closed;
            row.simulated_bubble = res.metrics.bubble_fraction;
            if (bb.exact.has_value()) {
              row.closed_bubble = bb.exact->to_double();
              row.within_bound =
                  bb.upper_bound_only
                      ? row.simulated_bubble <= row.closed_bubble + 1e-9
                      : std::abs(row.simulated_bubble - row.closed_bubble) < 1e-9;
            } else {
              row.closed_bubble = bb.interval->second.to_double();
              double lo = bb.interval->first.to_double();
              double hi = bb.interval->second.to_double();
              row.within_bound = row.simulated_bubble >= 0.9 * lo - 1e-9 &&
                                 row.simulated_bubble <= 1.1 * hi + 1e-9;
            }
            rows.push_back(row);
          }
        }
  return rows;
}

std::string compare_report_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "scheme,p,v,m,n,closed_memory,simulated_memory,memory_exact,"
        "closed_bubble,simulated_bubble,within_bound\n";
  char buf[64];
  auto num = [&](double x) {
    snprintf(buf, sizeof buf, "%.10g", x);
    return std::string(buf);
  };
  for (const CompareRow& r : rows) {
    os << to_string(r.scheme) << ',' << r.p << ',' << r.v << ',' << r.m << ','
       << r.n << ',' << num(r.closed_memory) << ',' << num(r.simulated_memory)
       << ',' << (r.memory_exact ? 1 : 0) << ',' << num(r.closed_bubble) << ','
       << num(r.simulated_bubble) << ',' << (r.within_bound ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace pipelab
