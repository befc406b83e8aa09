#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pipelab/analytics.hpp"
#include "pipelab/scenario.hpp"
#include "pipelab/workload.hpp"

using namespace pipelab;

namespace {

ParallelismConfig tp8() {
  ParallelismConfig par;
  par.tp = 8;
  return par;
}

RunConfig full_run(std::int64_t S) {
  RunConfig run;
  run.seq_len = S;
  run.slices = 1;
  run.checkpointing = Checkpointing::Full;
  return run;
}

}  // namespace

TEST_CASE("full-checkpointing activation bytes reproduce the worked examples") {
  // 1048576 * 8192 * 80 * 2 / 8 = 160 GiB
  MemoryModel mm = activation_bytes(llama70b(), tp8(), full_run(1048576));
  CHECK(mm.microbatch_activation_bytes == Rat(160) * Rat(std::int64_t{1} << 30));

  // 32768 * 5120 * 40 * 2 / 8 = 1.5625 GiB
  MemoryModel mm13 = activation_bytes(llama13b(), tp8(), full_run(32768));
  CHECK(mm13.microbatch_activation_bytes == Rat(1677721600));

  // Empty sequence stores nothing.
  MemoryModel mm0 = activation_bytes(llama70b(), tp8(), full_run(0));
  CHECK(mm0.microbatch_activation_bytes == Rat(0));
}

TEST_CASE("activation bytes are linear in S and L and scale with 1/t") {
  ModelConfig model = llama13b();
  MemoryModel a = activation_bytes(model, tp8(), full_run(32768));
  MemoryModel b = activation_bytes(model, tp8(), full_run(65536));
  CHECK(b.microbatch_activation_bytes == a.microbatch_activation_bytes * Rat(2));

  ModelConfig twice = model;
  twice.layers *= 2;
  MemoryModel c = activation_bytes(twice, tp8(), full_run(32768));
  CHECK(c.microbatch_activation_bytes == a.microbatch_activation_bytes * Rat(2));

  ParallelismConfig par4;
  par4.tp = 4;
  MemoryModel d = activation_bytes(model, par4, full_run(32768));
  CHECK(d.microbatch_activation_bytes == a.microbatch_activation_bytes * Rat(2));
  CHECK(d.embedding_bytes == a.embedding_bytes * Rat(2));
}

TEST_CASE("grouped queries scale the stored key/value bytes by g/a") {
  ModelConfig model = llama70b();  // g=8, a=64
  RunConfig run = full_run(4096);
  run.checkpointing = Checkpointing::Selective;
  MemoryModel grouped = activation_bytes(model, tp8(), run);
  ModelConfig ungrouped = model;
  ungrouped.query_groups = ungrouped.heads;
  MemoryModel fullkv = activation_bytes(ungrouped, tp8(), run);
  // 6h + 2h*(g/a) vs 6h + 2h
  Rat h(model.hidden);
  CHECK(fullkv.per_token_layer_bytes - grouped.per_token_layer_bytes ==
        Rat(2) * h * (Rat(1) - Rat(8, 64)) * Rat(2) / Rat(8));
}

TEST_CASE("checkpointing modes order as full < selective < none") {
  ModelConfig model = llama13b();
  RunConfig run = full_run(8192);
  run.checkpointing = Checkpointing::None;
  Rat none = activation_bytes(model, tp8(), run).microbatch_activation_bytes;
  run.checkpointing = Checkpointing::Selective;
  Rat sel = activation_bytes(model, tp8(), run).microbatch_activation_bytes;
  run.checkpointing = Checkpointing::Full;
  Rat full = activation_bytes(model, tp8(), run).microbatch_activation_bytes;
  CHECK(full < sel);
  CHECK(sel < none);
}

TEST_CASE("offload ratio shrinks resident activations") {
  ModelConfig model = llama13b();
  RunConfig run = full_run(32768);
  run.offload_ratio = 0.75;
  MemoryModel mm = activation_bytes(model, tp8(), run);
  MemoryModel base = activation_bytes(model, tp8(), full_run(32768));
  CHECK(mm.microbatch_activation_bytes ==
        base.microbatch_activation_bytes * Rat(1, 4));
}

TEST_CASE("uniform slicing requires divisibility") {
  RunConfig run = full_run(100);
  run.slices = 3;
  CHECK_THROWS_AS(activation_bytes(llama13b(), tp8(), run),
                  std::invalid_argument);
}

TEST_CASE("logits bytes") {
  ModelConfig model = llama13b();
  RunConfig run = full_run(262144);
  CHECK(logits_bytes(model, tp8(), run) == Rat(16777216000));
  // within 5% of 16 GiB
  double rel = std::abs(16777216000.0 / (16.0 * 1073741824.0) - 1.0);
  CHECK(rel < 0.05);

  RunConfig sharded = run;
  sharded.vocab_parallel = true;
  ParallelismConfig par = tp8();
  par.pp = 4;
  CHECK(logits_bytes(model, par, sharded) ==
        logits_bytes(model, tp8(), run) / Rat(4));

  ModelConfig tiny;
  tiny.vocab = 1;
  RunConfig tiny_run = full_run(8);
  ParallelismConfig one;
  CHECK(logits_bytes(tiny, one, tiny_run) == Rat(32));
}

TEST_CASE("pass costs") {
  CostModel cm;
  cm.alpha_linear = 1.0;
  cm.beta_attn = 0.0;
  CHECK(pass_cost(cm, PassKind::Forward, 10, 10) == doctest::Approx(10.0));
  CHECK(pass_cost(cm, PassKind::BackwardInput, 10, 10) == doctest::Approx(20.0));

  CostModel attn;
  attn.alpha_linear = 0.0;
  attn.beta_attn = 1.0;
  CHECK(pass_cost(attn, PassKind::Forward, 4, 12) == doctest::Approx(48.0));
  // Attention contributes nothing to weight gradients.
  CHECK(pass_cost(attn, PassKind::BackwardWeight, 4, 12) == doctest::Approx(0.0));

  CHECK_THROWS_AS(pass_cost(cm, PassKind::Forward, -1, 0), std::invalid_argument);
}

TEST_CASE("forward cost with beta=0 is independent of kv length") {
  CostModel cm;
  cm.alpha_linear = 2.0;
  cm.beta_attn = 0.0;
  CHECK(pass_cost(cm, PassKind::Forward, 7, 0) ==
        pass_cost(cm, PassKind::Forward, 7, 1000));
}

TEST_CASE("causal slice costs sum to the triangular closed form") {
  // sum over n uniform slices of (alpha*S/n + beta*(S/n)*(i*S/n))
  //   = alpha*S + beta*S^2*(n+1)/(2n), checked by direct summation.
  const double alpha = 0.7, beta = 1.3;
  const std::int64_t S = 960;
  CostModel cm;
  cm.alpha_linear = alpha;
  cm.beta_attn = beta;
  for (std::int64_t n : {1, 2, 4, 8, 16, 32}) {
    double total = 0.0;
    for (std::int64_t i = 1; i <= n; ++i)
      total += pass_cost(cm, PassKind::Forward, S / n, i * S / n);
    double closed = alpha * S + beta * S * S * (n + 1) / (2.0 * n);
    CHECK(total == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("parameter count matches the published model sizes") {
  CHECK(parameter_count(llama13b()) / 100000000 == 133);   // 13.3e9
  CHECK(parameter_count(llama70b()) / 1000000000 == 69);   // 69.5e9
  CHECK(parameter_count(llama149b()) / 1000000000 == 148); // 148.9e9
}

TEST_CASE("max context solver basics") {
  ParallelismConfig par = tp8();
  par.pp = 8;
  RunConfig run;
  run.microbatches = 8;
  run.slices = 8;
  run.checkpointing = Checkpointing::Full;

  CHECK(max_context_solver(llama13b(), par, run, "1f1b", 0) == 0);

  std::int64_t budget = std::int64_t{80} << 30;
  std::int64_t s1 = max_context_solver(llama13b(), par, run, "1f1b", budget);
  std::int64_t s2 = max_context_solver(llama13b(), par, run, "1f1b", 2 * budget);
  CHECK(s1 > 0);
  CHECK(s1 % run.slices == 0);
  CHECK(s2 >= s1);  // doubling the budget never shrinks the answer

  // Monotone nonincreasing in L and V.
  ModelConfig deeper = llama13b();
  deeper.layers *= 2;
  CHECK(max_context_solver(deeper, par, run, "1f1b", budget) <= s1);
  ModelConfig wider = llama13b();
  wider.vocab *= 4;
  CHECK(max_context_solver(wider, par, run, "1f1b", budget) <= s1);

  // SlimPipe's shrinking peak stretches the viable context.
  std::int64_t slim = max_context_solver(llama13b(), par, run, "slimpipe", budget);
  CHECK(slim > s1);
}

TEST_CASE("classic 1F1B context limit lands near the reported 124K") {
  // The byte model behind the reported limit is not fully specified; with
  // flash-style attention and the gated activation recomputed (stored
  // gate/up projections), the solver lands within the soft +-15% band.
  ParallelismConfig par = tp8();
  par.pp = 8;
  RunConfig run;
  run.microbatches = 8;
  run.slices = 8;
  run.checkpointing = Checkpointing::None;
  ActivationCoeffs coeffs;
  coeffs.mlp_act = 0.0;  // recompute the activation between up and down proj
  std::int64_t S =
      max_context_solver(llama13b(), par, run, "1f1b", std::int64_t{80} << 30,
                         coeffs);
  CHECK(S > 124000 * 0.85);
  CHECK(S < 124000 * 1.15);
}

TEST_CASE("rational arithmetic rounds bytes up at the boundary") {
  CHECK(Rat(7, 2).ceil_int() == 4);
  CHECK(Rat(8, 2).ceil_int() == 4);
  CHECK((Rat(1, 3) + Rat(2, 3)).ceil_int() == 1);
  CHECK(Rat(1, 3) + Rat(1, 6) == Rat(1, 2));
  CHECK(Rat(10, 4) == Rat(5, 2));
  CHECK(Rat(1, 2) < Rat(2, 3));
}
