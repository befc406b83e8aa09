#pragma once

// The shared JSON scenario schema: one file describes a model, parallel
// sizes, run shape, scheme, cost model and simulator knobs. Parsing is
// strict; unknown fields are rejected so config typos fail loudly.

#include <cstdint>
#include <string>

#include "pipelab/simulator.hpp"
#include "pipelab/workload.hpp"

namespace pipelab {

struct Scenario {
  ModelConfig model;
  ParallelismConfig parallelism;
  RunConfig run;
  Scheme scheme = Scheme::SlimPipe;
  CostModel cost;
  CommModel comm;
  ActivationCoeffs coeffs;
  ExchangeMode exchange = ExchangeMode::Off;
  std::int64_t seed = 0;

  void validate() const;
};

Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& sc);

Scenario load_scenario_file(const std::string& path);

// Model shapes used across the bundled scenarios and tests.
ModelConfig llama13b();
ModelConfig llama70b();
ModelConfig llama149b();
ModelConfig mixtral8x7b();
ModelConfig mixtral8x22b();

}  // namespace pipelab
