#pragma once

// Transformer/parallelism configuration and its conversion into bytes and
// work units. Everything downstream (schedules, simulator, analytics)
// consumes these numbers.

#include <cstdint>
#include <string>

#include "pipelab/rational.hpp"

namespace pipelab {

struct ModelConfig {
  std::int64_t layers = 1;        // L
  std::int64_t hidden = 1;        // h
  std::int64_t ffn_hidden = 1;    // H
  std::int64_t heads = 1;         // a
  std::int64_t query_groups = 1;  // g (== heads when queries are not grouped)
  std::int64_t vocab = 1;         // V
  std::int64_t bytes_per_element = 2;       // half precision
  std::int64_t loss_bytes_per_element = 4;  // logits kept in float32

  void validate() const;
};

struct ParallelismConfig {
  std::int64_t tp = 1;  // t
  std::int64_t cp = 1;  // c
  std::int64_t dp = 1;  // d
  std::int64_t ep = 1;  // e
  std::int64_t pp = 1;  // p
  std::int64_t stages_per_device = 1;  // v

  void validate() const;
};

enum class Checkpointing { None, Selective, Full };

const char* to_string(Checkpointing c);
Checkpointing checkpointing_from_string(const std::string& s);

struct RunConfig {
  std::int64_t seq_len = 1;       // S, tokens per microbatch
  std::int64_t microbatches = 1;  // m
  std::int64_t slices = 1;        // n
  Checkpointing checkpointing = Checkpointing::Full;
  double offload_ratio = 0.0;  // fraction of resident activations offloaded
  bool vocab_parallel = false;

  void validate() const;
};

// Per-token per-layer stored elements, in units of the hidden size h (the
// FFN entries are in units of H). The paper never enumerates its per-layer
// byte model, so the table is config-supplied; defaults reproduce the
// full-checkpointing arithmetic exactly and give a conventional breakdown
// for the other modes. key/value are scaled by g/a for grouped queries.
struct ActivationCoeffs {
  double attn_input = 1.0;
  double query = 1.0;
  double key = 1.0;
  double value = 1.0;
  double attn_output = 1.0;
  double norm_outputs = 2.0;
  double mlp_input = 1.0;
  double mlp_gate_up = 2.0;  // x H/h, dropped under Selective
  double mlp_act = 1.0;      // x H/h, dropped under Selective
};

struct MemoryModel {
  Rat per_token_layer_bytes;          // after dividing by t*c
  Rat embedding_bytes;                // M_h, one full-sequence hidden tensor
  Rat microbatch_activation_bytes;    // M_a
  Rat slice_stage_bytes;              // M_a / (n * p * v)
  Rat logits_slice_bytes;             // fp32 logits for one slice on one device
  Rat exchange_slice_bytes;           // one Q/K/V/O slice: L * M_h / (p*v*n)
};

struct CostModel {
  double alpha_linear = 1.0;    // work per token (GEMM/MLP/projections)
  double beta_attn = 0.0;       // work per query-token x kv-token
  double bwd_input_mult = 2.0;  // input-grad cost / forward cost
  double bwd_weight_mult = 1.0; // weight-grad cost / forward cost (linear only)
  double vocab_gemm = 0.0;      // work per token for the output projection

  void validate() const;
};

enum class PassKind {
  Forward,
  BackwardInput,
  BackwardWeight,
  BackwardFused,
  VocabForward,
  VocabBackward,
};

const char* to_string(PassKind k);

// Bytes of activations a microbatch leaves resident per device, plus the
// derived per-slice and logits sizes. Throws on S not divisible by n.
MemoryModel activation_bytes(const ModelConfig& model,
                             const ParallelismConfig& par, const RunConfig& run,
                             const ActivationCoeffs& coeffs = {});

// Unit activation model: one slice-stage activation costs exactly 1, so a
// microbatch (M_a) costs n*p*v. Used by the formula-equivalence checks.
MemoryModel unit_memory_model(std::int64_t p, std::int64_t v, std::int64_t n);

// fp32 logits bytes for one full microbatch: S*V*loss_bytes/t, divided
// additionally by p when the vocabulary is sharded across the pipeline.
Rat logits_bytes(const ModelConfig& model, const ParallelismConfig& par,
                 const RunConfig& run);

// Work units of one pass over slice_tokens attending kv_tokens. The
// attention term contributes nothing to weight gradients (it has no
// weights).
double pass_cost(const CostModel& cm, PassKind kind, std::int64_t slice_tokens,
                 std::int64_t kv_tokens);

// Parameter count of the transformer trunk (per layer x L) plus one
// vocabulary matrix; used for model-state byte estimates.
std::int64_t parameter_count(const ModelConfig& model);

struct StateByteModel {
  double bytes_per_param = 18.0;  // bf16 param + fp32 grad + Adam m/v + master
};

// Model-state bytes on the worst pipeline device (first device carries the
// embedding shard).
Rat model_state_bytes(const ModelConfig& model, const ParallelismConfig& par,
                      const StateByteModel& sbm = {});

// Largest sequence length (multiple of run_template.slices) whose model
// states plus peak schedule activations fit in budget_bytes. The peak is
// memory_multiplier(scheme) * M_a(S); scheme tags are the schedule-gen
// names ("1f1b", "slimpipe", ...). Returns 0 if even S = n does not fit.
std::int64_t max_context_solver(const ModelConfig& model,
                                const ParallelismConfig& par,
                                const RunConfig& run_template,
                                const std::string& scheme,
                                std::int64_t budget_bytes,
                                const ActivationCoeffs& coeffs = {},
                                const StateByteModel& sbm = {});

}  // namespace pipelab
