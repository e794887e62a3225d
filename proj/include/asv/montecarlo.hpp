#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "asv/refnet.hpp"

namespace asv {

/// Trial-count cap: ASV_BUDGET from the environment, else 2^22 trials.
long long default_budget();

struct McConfig {
  int n_param_draws = 8;
  int n_input_draws = 512;
  std::uint64_t seed = 0;
  double q0 = 1.0;
  double rL = 1.0;
  long long budget = default_budget();  // cap on n_param_draws * n_input_draws
};

struct LayerVariance {
  int layer = 0;
  double q_pred = 0, q_est = 0, q_stderr = 0;  // Var(u^(l))
  double r_pred = 0, r_est = 0, r_stderr = 0;  // Var(dz^(l-1))

  double q_rel_error() const;
  double r_rel_error() const;
};

struct VarianceTrace {
  double q0 = 1.0, q0_est = 0.0, q0_stderr = 0.0;
  double rL = 1.0;
  bool has_forward = false;
  bool has_backward = false;
  std::vector<LayerVariance> layers;
};

// Per-layer variances pooled over units and draws; the standard error comes from
// the dispersion of per-parameter-draw means. Draws are independent and merged in
// draw order, so results depend only on (plan, cfg).
VarianceTrace estimate_forward(std::shared_ptr<const Topology> topo, const InitPlan& plan, const McConfig& cfg);
VarianceTrace estimate_backward(std::shared_ptr<const Topology> topo, const InitPlan& plan, const McConfig& cfg);
VarianceTrace estimate(std::shared_ptr<const Topology> topo, const InitPlan& plan, const McConfig& cfg);

VarianceTrace estimate_forward(const Architecture& arch, const InitPlan& plan, const McConfig& cfg);
VarianceTrace estimate_backward(const Architecture& arch, const InitPlan& plan, const McConfig& cfg);

struct CompareRow {
  int layer = 0;
  char quantity = 'q';  // 'q' forward, 'r' backward
  double predicted = 0, estimated = 0, stderr_ = 0, rel_error = 0;
  bool ok = true;
};

struct CompareReport {
  double threshold = 0.0;
  double max_rel_error = 0.0;
  bool pass = true;
  std::vector<CompareRow> rows;
  std::vector<std::string> failing;  // e.g. "q@3"
};

CompareReport compare(const VarianceTrace& trace, double threshold);

}  // namespace asv
