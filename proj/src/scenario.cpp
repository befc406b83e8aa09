#include "pipelab/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nlohmann/json.hpp"

namespace pipelab {

namespace {

using json = nlohmann::ordered_json;

// Strict object reader: every present key must be consumed, unknown keys
// are an error.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw std::invalid_argument("scenario: " + path_ + " must be an object");
  }
  ~Obj() = default;

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;  // keep default
    out = it->get<T>();
    used_.insert(key);
  }

  void get_string(const char* key, std::string& out) { get<std::string>(key, out); }

  bool has(const char* key) const { return j_.contains(key); }

  const json* sub(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key()))
        throw std::invalid_argument("scenario: unknown field \"" + path_ + "." +
                                    it.key() + "\"");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

void Scenario::validate() const {
  model.validate();
  parallelism.validate();
  run.validate();
  cost.validate();
  if (scheme == Scheme::SlimPipe && run.slices % parallelism.pp != 0)
    throw std::invalid_argument(
        "scenario: slimpipe requires slices to be a multiple of pp");
}

Scenario scenario_from_json(const std::string& text) {
  json j = json::parse(text);
  Scenario sc;
  Obj root(j, "");
  if (const json* mj = root.sub("model")) {
    Obj o(*mj, "model");
    o.get("layers", sc.model.layers);
    o.get("hidden", sc.model.hidden);
    o.get("ffn", sc.model.ffn_hidden);
    o.get("heads", sc.model.heads);
    o.get("query_groups", sc.model.query_groups);
    o.get("vocab", sc.model.vocab);
    o.get("bytes_per_element", sc.model.bytes_per_element);
    o.get("loss_bytes_per_element", sc.model.loss_bytes_per_element);
    o.finish();
  }
  if (const json* pj = root.sub("parallelism")) {
    Obj o(*pj, "parallelism");
    o.get("tp", sc.parallelism.tp);
    o.get("cp", sc.parallelism.cp);
    o.get("dp", sc.parallelism.dp);
    o.get("ep", sc.parallelism.ep);
    o.get("pp", sc.parallelism.pp);
    o.get("stages_per_device", sc.parallelism.stages_per_device);
    o.finish();
  }
  if (const json* rj = root.sub("run")) {
    Obj o(*rj, "run");
    o.get("seq_len", sc.run.seq_len);
    o.get("microbatches", sc.run.microbatches);
    o.get("slices", sc.run.slices);
    std::string ck = to_string(sc.run.checkpointing);
    o.get_string("checkpointing", ck);
    sc.run.checkpointing = checkpointing_from_string(ck);
    o.get("offload_ratio", sc.run.offload_ratio);
    o.get("vocab_parallel", sc.run.vocab_parallel);
    o.finish();
  }
  {
    std::string s = to_string(sc.scheme);
    root.get_string("scheme", s);
    sc.scheme = scheme_from_string(s);
  }
  if (const json* cj = root.sub("cost")) {
    Obj o(*cj, "cost");
    o.get("alpha_linear", sc.cost.alpha_linear);
    o.get("beta_attn", sc.cost.beta_attn);
    o.get("bwd_input_mult", sc.cost.bwd_input_mult);
    o.get("bwd_weight_mult", sc.cost.bwd_weight_mult);
    o.get("vocab_gemm", sc.cost.vocab_gemm);
    o.finish();
  }
  if (const json* cj = root.sub("comm")) {
    Obj o(*cj, "comm");
    o.get("bandwidth", sc.comm.bandwidth);
    o.get("latency", sc.comm.latency);
    o.finish();
  }
  if (const json* aj = root.sub("coeffs")) {
    Obj o(*aj, "coeffs");
    o.get("attn_input", sc.coeffs.attn_input);
    o.get("query", sc.coeffs.query);
    o.get("key", sc.coeffs.key);
    o.get("value", sc.coeffs.value);
    o.get("attn_output", sc.coeffs.attn_output);
    o.get("norm_outputs", sc.coeffs.norm_outputs);
    o.get("mlp_input", sc.coeffs.mlp_input);
    o.get("mlp_gate_up", sc.coeffs.mlp_gate_up);
    o.get("mlp_act", sc.coeffs.mlp_act);
    o.finish();
  }
  {
    std::string ex = to_string(sc.exchange);
    root.get_string("exchange", ex);
    sc.exchange = exchange_mode_from_string(ex);
  }
  root.get("seed", sc.seed);
  root.finish();
  sc.validate();
  return sc;
}

std::string scenario_to_json(const Scenario& sc) {
  json j;
  j["model"] = {{"layers", sc.model.layers},
                {"hidden", sc.model.hidden},
                {"ffn", sc.model.ffn_hidden},
                {"heads", sc.model.heads},
                {"query_groups", sc.model.query_groups},
                {"vocab", sc.model.vocab},
                {"bytes_per_element", sc.model.bytes_per_element},
                {"loss_bytes_per_element", sc.model.loss_bytes_per_element}};
  j["parallelism"] = {{"tp", sc.parallelism.tp},
                      {"cp", sc.parallelism.cp},
                      {"dp", sc.parallelism.dp},
                      {"ep", sc.parallelism.ep},
                      {"pp", sc.parallelism.pp},
                      {"stages_per_device", sc.parallelism.stages_per_device}};
  j["run"] = {{"seq_len", sc.run.seq_len},
              {"microbatches", sc.run.microbatches},
              {"slices", sc.run.slices},
              {"checkpointing", to_string(sc.run.checkpointing)},
              {"offload_ratio", sc.run.offload_ratio},
              {"vocab_parallel", sc.run.vocab_parallel}};
  j["scheme"] = to_string(sc.scheme);
  j["cost"] = {{"alpha_linear", sc.cost.alpha_linear},
               {"beta_attn", sc.cost.beta_attn},
               {"bwd_input_mult", sc.cost.bwd_input_mult},
               {"bwd_weight_mult", sc.cost.bwd_weight_mult},
               {"vocab_gemm", sc.cost.vocab_gemm}};
  j["comm"] = {{"bandwidth", sc.comm.bandwidth}, {"latency", sc.comm.latency}};
  j["coeffs"] = {{"attn_input", sc.coeffs.attn_input},
                 {"query", sc.coeffs.query},
                 {"key", sc.coeffs.key},
                 {"value", sc.coeffs.value},
                 {"attn_output", sc.coeffs.attn_output},
                 {"norm_outputs", sc.coeffs.norm_outputs},
                 {"mlp_input", sc.coeffs.mlp_input},
                 {"mlp_gate_up", sc.coeffs.mlp_gate_up},
                 {"mlp_act", sc.coeffs.mlp_act}};
  j["exchange"] = to_string(sc.exchange);
  j["seed"] = sc.seed;
  return j.dump(1);
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return scenario_from_json(ss.str());
}

ModelConfig llama13b() {
  return {40, 5120, 13824, 40, 40, 128000, 2, 4};
}
ModelConfig llama70b() {
  return {80, 8192, 28672, 64, 8, 128000, 2, 4};
}
ModelConfig llama149b() {
  return {96, 12288, 32768, 96, 8, 128000, 2, 4};
}
ModelConfig mixtral8x7b() {
  return {32, 4096, 14336, 32, 8, 128000, 2, 4};
}
ModelConfig mixtral8x22b() {
  return {56, 6144, 16384, 48, 8, 128000, 2, 4};
}

}  // namespace pipelab
