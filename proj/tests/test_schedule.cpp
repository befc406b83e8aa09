#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <set>

#include "pipelab/analytics.hpp"
#include "pipelab/schedule.hpp"

using namespace pipelab;

namespace {

GenConfig cfg(int p, int v, int m, int n) {
  GenConfig c;
  c.p = p;
  c.v = v;
  c.m = m;
  c.n = n;
  c.seq_len = n;
  return c;
}

// Passes on one device as compact strings, for order assertions.
std::vector<std::string> device_trace(const Schedule& s, int device) {
  std::vector<std::string> out;
  for (PassId id : s.device_order[device - 1]) {
    const Pass& ps = s.passes[id];
    out.push_back(std::string(to_string(ps.kind)) + std::to_string(ps.microbatch) +
                  "." + std::to_string(ps.slice) + "s" +
                  std::to_string(ps.stage));
  }
  return out;
}

int warmup_forwards(const Schedule& s, int device) {
  int count = 0;
  for (PassId id : s.device_order[device - 1]) {
    PassKind k = s.passes[id].kind;
    if (k == PassKind::Forward) ++count;
    else if (k == PassKind::BackwardFused || k == PassKind::BackwardInput) break;
  }
  return count;
}

}  // namespace

TEST_CASE("gpipe layout") {
  Schedule s = gen_gpipe(cfg(1, 1, 1, 1));
  CHECK(device_trace(s, 1) == std::vector<std::string>{"F1.1s1", "BW1.1s1"});

  Schedule s4 = gen_gpipe(cfg(4, 1, 4, 1));
  CHECK(device_trace(s4, 1) ==
        std::vector<std::string>{"F1.1s1", "F2.1s1", "F3.1s1", "F4.1s1",
                                 "BW1.1s1", "BW2.1s1", "BW3.1s1", "BW4.1s1"});
  CHECK(validate_schedule(s4).ok());
  CHECK(warmup_forwards(s4, 1) == 4);  // m*n on every device
}

TEST_CASE("1f1b layout and constraints") {
  CHECK_THROWS_AS(gen_1f1b(cfg(4, 1, 3, 1)), std::invalid_argument);

  Schedule s = gen_1f1b(cfg(4, 1, 4, 1));
  CHECK(validate_schedule(s).ok());
  // Last device alternates from its first pass.
  auto d4 = device_trace(s, 4);
  CHECK(d4[0] == "F1.1s4");
  CHECK(d4[1] == "BW1.1s4");
  CHECK(d4[2] == "F2.1s4");
  CHECK(warmup_forwards(s, 1) == 4);  // p forwards before the first backward

  Schedule s1 = gen_1f1b(cfg(1, 1, 3, 1));
  CHECK(device_trace(s1, 1) ==
        std::vector<std::string>{"F1.1s1", "BW1.1s1", "F2.1s1", "BW2.1s1",
                                 "F3.1s1", "BW3.1s1"});
}

TEST_CASE("interleaved 1f1b") {
  CHECK_THROWS_AS(gen_interleaved_1f1b(cfg(4, 2, 6, 1)), std::invalid_argument);
  // m=2 with p=4 is rejected (must be a multiple of p).
  CHECK_THROWS_AS(gen_interleaved_1f1b(cfg(4, 2, 2, 1)), std::invalid_argument);

  // v=1 degenerates to plain 1f1b, pass for pass.
  Schedule a = gen_interleaved_1f1b(cfg(4, 1, 8, 1));
  Schedule b = gen_1f1b(cfg(4, 1, 8, 1));
  REQUIRE(a.device_order.size() == b.device_order.size());
  for (int d = 1; d <= 4; ++d) CHECK(device_trace(a, d) == device_trace(b, d));

  Schedule s = gen_interleaved_1f1b(cfg(2, 2, 4, 1));
  CHECK(validate_schedule(s).ok());
  // Device 1 owns stages 1 and 3; 2(p-d) + (v-1)p forwards warm up, and the
  // steady loop issues one more before the first backward.
  CHECK(warmup_forwards(s, 1) == 5);
  auto d1 = device_trace(s, 1);
  CHECK(d1[0] == "F1.1s1");
  CHECK(d1[1] == "F2.1s1");
  CHECK(d1[2] == "F1.1s3");
  CHECK(d1[3] == "F2.1s3");
}

TEST_CASE("terapipe reduces to gpipe at n=1 and accumulates everything") {
  Schedule a = gen_terapipe(cfg(3, 1, 2, 1));
  Schedule b = gen_gpipe(cfg(3, 1, 2, 1));
  for (int d = 1; d <= 3; ++d) {
    auto ta = device_trace(a, d), tb = device_trace(b, d);
    CHECK(ta == tb);
  }
  Schedule s = gen_terapipe(cfg(2, 1, 2, 4));
  CHECK(validate_schedule(s).ok());
  CHECK(warmup_forwards(s, 1) == 8);  // m*n
}

TEST_CASE("slimpipe reproduces the four-device eight-slice timeline") {
  Schedule s = gen_slimpipe(cfg(4, 1, 4, 8));
  CHECK(validate_schedule(s).ok());

  // Device 1: all 8 slices of microbatch 1 plus 6 of microbatch 2, then
  // backwards interleave with the remaining forwards in LIFO order.
  auto d1 = device_trace(s, 1);
  for (int i = 0; i < 8; ++i)
    CHECK(d1[i] == "F1." + std::to_string(i + 1) + "s1");
  for (int i = 0; i < 6; ++i)
    CHECK(d1[8 + i] == "F2." + std::to_string(i + 1) + "s1");
  CHECK(d1[14] == "BW1.8s1");
  CHECK(d1[15] == "F2.7s1");
  CHECK(d1[16] == "BW1.7s1");
  CHECK(d1[17] == "F2.8s1");
  CHECK(d1[18] == "BW1.6s1");
  CHECK(d1[19] == "F3.1s1");

  // Warm-up depth n + 2(p-d).
  CHECK(warmup_forwards(s, 1) == 14);
  CHECK(warmup_forwards(s, 2) == 12);
  CHECK(warmup_forwards(s, 3) == 10);
  CHECK(warmup_forwards(s, 4) == 8);

  auto d4 = device_trace(s, 4);
  CHECK(d4[8] == "BW1.8s4");
  CHECK(d4[9] == "F2.1s4");
}

TEST_CASE("slimpipe requires n to be a multiple of p") {
  CHECK_THROWS_AS(gen_slimpipe(cfg(4, 1, 2, 6)), std::invalid_argument);
}

TEST_CASE("slimpipe with n=p=v=1 is pass-for-pass 1f1b") {
  Schedule a = gen_slimpipe(cfg(1, 1, 5, 1));
  Schedule b = gen_1f1b(cfg(1, 1, 5, 1));
  CHECK(device_trace(a, 1) == device_trace(b, 1));
}

TEST_CASE("interleaved slimpipe matches the two-microbatch figure") {
  // p=4, v=2, n=8, m=2: interleaved 1F1B would need at least 4 microbatches.
  Schedule s = gen_slimpipe(cfg(4, 2, 2, 8));
  CHECK(validate_schedule(s).ok());
  CHECK_THROWS_AS(gen_interleaved_1f1b(cfg(4, 2, 2, 1)), std::invalid_argument);

  auto d1 = device_trace(s, 1);
  // Stage visits rotate every p slices: s1 slices 1-4, s5 slices 1-4,
  // s1 slices 5-8, s5 slices 5-8.
  CHECK(d1[0] == "F1.1s1");
  CHECK(d1[3] == "F1.4s1");
  CHECK(d1[4] == "F1.1s5");
  CHECK(d1[7] == "F1.4s5");
  CHECK(d1[8] == "F1.5s1");
  CHECK(d1[15] == "F1.8s5");
  // Warm-up depth n*v + 2(p-d) = 22 on device 1.
  CHECK(warmup_forwards(s, 1) == 22);
  CHECK(warmup_forwards(s, 4) == 16);
  // First backward is the last stage's slice 8, then LIFO.
  CHECK(d1[22] == "BW1.8s5");
}

TEST_CASE("zero-bubble v-shape schedules") {
  GenConfig c = cfg(2, 2, 4, 1);
  c.cost.alpha_linear = 1.0;
  c.cost.bwd_input_mult = 1.0;
  c.cost.bwd_weight_mult = 1.0;
  Schedule s = gen_zbv(c);
  CHECK(validate_schedule(s).ok());
  // V placement: device 1 owns stages 1 and 4.
  std::set<int> stages_d1;
  for (PassId id : s.device_order[0]) stages_d1.insert(s.passes[id].stage);
  CHECK(stages_d1 == std::set<int>{1, 4});

  Schedule vh = gen_vhalf(c);
  CHECK(validate_schedule(vh).ok());

  CHECK_THROWS_AS(gen_zbv(cfg(2, 1, 4, 1)), std::invalid_argument);
  CHECK_THROWS_AS(gen_vhalf(cfg(4, 2, 2, 1)), std::invalid_argument);
}

TEST_CASE("every generator validates over the grid") {
  for (int p : {1, 2, 4}) {
    for (int m : {1, 2, 4, 8}) {
      for (int n : {1, 2, 4}) {
        for (int v : {1, 2}) {
          for (Scheme sch :
               {Scheme::GPipe, Scheme::TeraPipe, Scheme::OneFOneB,
                Scheme::Interleaved1F1B, Scheme::ZBV, Scheme::VHalf,
                Scheme::SlimPipe}) {
            std::int64_t nn = sch == Scheme::SlimPipe || sch == Scheme::TeraPipe
                                  ? static_cast<std::int64_t>(n) * p
                                  : 1;
            if (!scheme_accepts(sch, p, m, nn, v)) continue;
            GenConfig c = cfg(p, v, m, static_cast<int>(nn));
            Schedule s = generate(sch, c);
            Diagnostics d = validate_schedule(s);
            INFO(to_string(sch) << " p=" << p << " v=" << v << " m=" << m
                                << " n=" << nn);
            if (!d.ok()) { INFO(d.first()->rule << ": " << d.first()->message); }
            CHECK(d.ok());
          }
        }
      }
    }
  }
}

TEST_CASE("validator rejects the constructed negative fixtures") {
  Schedule good = gen_slimpipe(cfg(4, 1, 2, 8));

  SUBCASE("reverse-order violation") {
    Schedule bad = good;
    auto& order = bad.device_order[0];
    int a = -1, b = -1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Pass& ps = bad.passes[order[i]];
      if (ps.kind == PassKind::BackwardFused && ps.microbatch == 1) {
        if (ps.slice == 2) a = static_cast<int>(i);
        if (ps.slice == 1) b = static_cast<int>(i);
      }
    }
    REQUIRE(a >= 0);
    REQUIRE(b >= 0);
    std::swap(order[a], order[b]);
    Diagnostics d = validate_schedule(bad);
    REQUIRE_FALSE(d.ok());
    bool found = false;
    for (const Violation& v : d.violations) found |= v.rule == "reverse-order";
    CHECK(found);
  }

  SUBCASE("coverage violation from a missing pass") {
    Schedule bad = good;
    bad.device_order[1].pop_back();
    Diagnostics d = validate_schedule(bad);
    REQUIRE_FALSE(d.ok());
    bool found = false;
    for (const Violation& v : d.violations)
      found |= v.rule == "order" || v.rule == "coverage";
    CHECK(found);
  }

  SUBCASE("acyclicity violation") {
    Schedule bad = good;
    bad.edges.push_back({bad.device_order[0][1], bad.device_order[0][0]});
    Diagnostics d = validate_schedule(bad);
    REQUIRE_FALSE(d.ok());
    CHECK(d.first() != nullptr);
    bool found = false;
    for (const Violation& v : d.violations) found |= v.rule == "acyclicity";
    CHECK(found);
  }
}

TEST_CASE("schedule JSON is stable") {
  Schedule s = gen_gpipe(cfg(1, 1, 1, 1));
  std::string j = schedule_to_json(s);
  CHECK(j == schedule_to_json(s));
  CHECK(j.find("\"scheme\": \"gpipe\"") != std::string::npos);
  CHECK(j.find("\"passes\"") != std::string::npos);
  CHECK(j.find("\"edges\"") != std::string::npos);
}
