#include "pipelab/workload.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pipelab/analytics.hpp"

namespace pipelab {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Scales a double coefficient into an exact rational with ppm resolution;
// the default tables are small integers so this is exact in practice.
Rat rat_from_coeff(double c) {
  return Rat(static_cast<std::int64_t>(std::llround(c * 720720.0)), 720720);
}

}  // namespace

void ModelConfig::validate() const {
  require(layers >= 1, "model: layers must be >= 1");
  require(hidden >= 1 && ffn_hidden >= 1 && heads >= 1 && vocab >= 1,
          "model: all counts must be positive");
  require(query_groups >= 1, "model: query_groups must be >= 1");
  require(hidden % heads == 0, "model: hidden must be divisible by heads");
  require(heads % query_groups == 0,
          "model: heads must be divisible by query_groups");
  require(bytes_per_element >= 1 && loss_bytes_per_element >= 1,
          "model: byte widths must be positive");
}

void ParallelismConfig::validate() const {
  require(tp >= 1 && cp >= 1 && dp >= 1 && ep >= 1 && pp >= 1 &&
              stages_per_device >= 1,
          "parallelism: all sizes must be >= 1");
}

void RunConfig::validate() const {
  require(seq_len >= 0, "run: seq_len must be >= 0");
  require(microbatches >= 1, "run: microbatches must be >= 1");
  require(slices >= 1, "run: slices must be >= 1");
  require(seq_len % slices == 0,
          "run: seq_len must be divisible by slices (uniform slicing)");
  require(offload_ratio >= 0.0 && offload_ratio <= 1.0,
          "run: offload_ratio must lie in [0,1]");
}

void CostModel::validate() const {
  require(alpha_linear >= 0 && beta_attn >= 0 && bwd_input_mult >= 0 &&
              bwd_weight_mult >= 0 && vocab_gemm >= 0,
          "cost: all coefficients must be nonnegative");
}

const char* to_string(Checkpointing c) {
  switch (c) {
    case Checkpointing::None: return "none";
    case Checkpointing::Selective: return "selective";
    case Checkpointing::Full: return "full";
  }
  return "?";
}

Checkpointing checkpointing_from_string(const std::string& s) {
  if (s == "none") return Checkpointing::None;
  if (s == "selective") return Checkpointing::Selective;
  if (s == "full") return Checkpointing::Full;
  throw std::invalid_argument("unknown checkpointing mode: " + s);
}

const char* to_string(PassKind k) {
  switch (k) {
    case PassKind::Forward: return "F";
    case PassKind::BackwardInput: return "B";
    case PassKind::BackwardWeight: return "W";
    case PassKind::BackwardFused: return "BW";
    case PassKind::VocabForward: return "VF";
    case PassKind::VocabBackward: return "VB";
  }
  return "?";
}

MemoryModel activation_bytes(const ModelConfig& model,
                             const ParallelismConfig& par, const RunConfig& run,
                             const ActivationCoeffs& coeffs) {
  model.validate();
  par.validate();
  run.validate();

  const Rat tc = Rat(par.tp * par.cp);
  const Rat h(model.hidden);
  const Rat H(model.ffn_hidden);
  const Rat gqa = Rat(model.query_groups, model.heads);

  Rat elems;  // stored elements per token per layer, before the t*c divide
  switch (run.checkpointing) {
    case Checkpointing::Full:
      // Only one hidden tensor per layer survives; everything else is
      // recomputed in backward.
      elems = h;
      break;
    case Checkpointing::Selective: {
      // Recomputes the up projection plus the gated activation, so the
      // H-sized intermediates are dropped.
      Rat hterm = rat_from_coeff(coeffs.attn_input + coeffs.query +
                                 coeffs.attn_output + coeffs.norm_outputs +
                                 coeffs.mlp_input);
      Rat kvterm = rat_from_coeff(coeffs.key + coeffs.value) * gqa;
      elems = (hterm + kvterm) * h;
      break;
    }
    case Checkpointing::None: {
      Rat hterm = rat_from_coeff(coeffs.attn_input + coeffs.query +
                                 coeffs.attn_output + coeffs.norm_outputs +
                                 coeffs.mlp_input);
      Rat kvterm = rat_from_coeff(coeffs.key + coeffs.value) * gqa;
      Rat Hterm = rat_from_coeff(coeffs.mlp_gate_up + coeffs.mlp_act);
      elems = hterm * h + kvterm * h + Hterm * H;
      break;
    }
  }

  MemoryModel mm;
  mm.per_token_layer_bytes = elems * Rat(model.bytes_per_element) / tc;
  mm.embedding_bytes = Rat(run.seq_len) * h * Rat(model.bytes_per_element) / tc;
  Rat resident = Rat(1) - rat_from_coeff(run.offload_ratio);
  mm.microbatch_activation_bytes =
      Rat(run.seq_len) * mm.per_token_layer_bytes * Rat(model.layers) * resident;
  const std::int64_t stages = par.pp * par.stages_per_device;
  mm.slice_stage_bytes =
      mm.microbatch_activation_bytes / Rat(run.slices * stages);
  Rat logits_full = logits_bytes(model, par, run);
  mm.logits_slice_bytes = logits_full / Rat(run.slices);
  mm.exchange_slice_bytes =
      Rat(model.layers) * mm.embedding_bytes / Rat(stages * run.slices);
  return mm;
}

MemoryModel unit_memory_model(std::int64_t p, std::int64_t v, std::int64_t n) {
  MemoryModel mm;
  mm.per_token_layer_bytes = Rat(1);
  mm.embedding_bytes = Rat(n);  // one hidden slice costs 1
  mm.microbatch_activation_bytes = Rat(n * p * v);
  mm.slice_stage_bytes = Rat(1);
  mm.logits_slice_bytes = Rat(1);
  mm.exchange_slice_bytes = Rat(1);
  return mm;
}

Rat logits_bytes(const ModelConfig& model, const ParallelismConfig& par,
                 const RunConfig& run) {
  Rat bytes = Rat(run.seq_len) * Rat(model.vocab) *
              Rat(model.loss_bytes_per_element) / Rat(par.tp);
  if (run.vocab_parallel) bytes /= Rat(par.pp);
  return bytes;
}

double pass_cost(const CostModel& cm, PassKind kind, std::int64_t slice_tokens,
                 std::int64_t kv_tokens) {
  if (slice_tokens < 0 || kv_tokens < 0)
    throw std::invalid_argument("pass_cost: negative token count");
  const double tok = static_cast<double>(slice_tokens);
  const double kv = static_cast<double>(kv_tokens);
  const double fwd_linear = cm.alpha_linear * tok;
  const double fwd_attn = cm.beta_attn * tok * kv;
  switch (kind) {
    case PassKind::Forward:
      return fwd_linear + fwd_attn;
    case PassKind::BackwardInput:
      return cm.bwd_input_mult * (fwd_linear + fwd_attn);
    case PassKind::BackwardWeight:
      // Attention has no weights: T_w = 0 for the attention term.
      return cm.bwd_weight_mult * fwd_linear;
    case PassKind::BackwardFused:
      return cm.bwd_input_mult * (fwd_linear + fwd_attn) +
             cm.bwd_weight_mult * fwd_linear;
    case PassKind::VocabForward:
      return cm.vocab_gemm * tok;
    case PassKind::VocabBackward:
      return (cm.bwd_input_mult + cm.bwd_weight_mult) * cm.vocab_gemm * tok;
  }
  return 0.0;
}

std::int64_t parameter_count(const ModelConfig& model) {
  const std::int64_t h = model.hidden;
  const std::int64_t kv_h = model.hidden * model.query_groups / model.heads;
  const std::int64_t attn = h * h + 2 * h * kv_h + h * h;  // Q, K, V, O
  const std::int64_t mlp = 3 * h * model.ffn_hidden;       // gate, up, down
  const std::int64_t norms = 2 * h;
  return model.layers * (attn + mlp + norms) + model.vocab * h;
}

Rat model_state_bytes(const ModelConfig& model, const ParallelismConfig& par,
                      const StateByteModel& sbm) {
  const std::int64_t h = model.hidden;
  const std::int64_t kv_h = model.hidden * model.query_groups / model.heads;
  const std::int64_t per_layer =
      2 * h * h + 2 * h * kv_h + 3 * h * model.ffn_hidden + 2 * h;
  // First device carries the embedding shard on top of its layer share.
  Rat params = Rat(per_layer) * Rat(model.layers) / Rat(par.pp) +
               Rat(model.vocab * h);
  Rat per_param(static_cast<std::int64_t>(std::llround(sbm.bytes_per_param * 4)),
                4);
  return params * per_param / Rat(par.tp);
}

std::int64_t max_context_solver(const ModelConfig& model,
                                const ParallelismConfig& par,
                                const RunConfig& run_template,
                                const std::string& scheme,
                                std::int64_t budget_bytes,
                                const ActivationCoeffs& coeffs,
                                const StateByteModel& sbm) {
  if (budget_bytes <= 0) return 0;
  model.validate();
  par.validate();
  const Scheme sch = scheme_from_string(scheme);
  const Rat states = model_state_bytes(model, par, sbm);
  if (Rat(budget_bytes) <= states) return 0;
  const Rat mult =
      memory_multiplier(sch, par.pp, run_template.microbatches,
                        run_template.slices, par.stages_per_device);

  auto fits = [&](std::int64_t S) {
    RunConfig run = run_template;
    run.seq_len = S;
    MemoryModel mm = activation_bytes(model, par, run, coeffs);
    Rat act = mm.microbatch_activation_bytes * mult;
    // The first device carries the activation peak, the last one carries
    // the fp32 logits on top of a 1/p share of in-flight activations.
    Rat first_dev = states + act;
    Rat last_dev = states + act / Rat(par.pp) + logits_bytes(model, par, run);
    Rat worst = first_dev < last_dev ? last_dev : first_dev;
    return worst <= Rat(budget_bytes);
  };

  const std::int64_t n = run_template.slices;
  if (!fits(n)) return 0;
  std::int64_t lo = 1, hi = 1;  // multiples of n
  while (fits(hi * n)) {
    lo = hi;
    hi *= 2;
    if (hi * n > (std::int64_t{1} << 40)) break;
  }
  while (lo + 1 < hi) {
    std::int64_t mid = lo + (hi - lo) / 2;
    if (fits(mid * n)) lo = mid; else hi = mid;
  }
  return lo * n;
}

}  // namespace pipelab
