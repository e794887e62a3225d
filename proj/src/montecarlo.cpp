#include "asv/montecarlo.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>

namespace asv {

long long default_budget() {
  if (const char* env = std::getenv("ASV_BUDGET")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return 1LL << 22;
}

namespace {

double rel_error(double pred, double est) {
  if (pred == 0.0) return est == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(est - pred) / std::abs(pred);
}

void check_config(const McConfig& cfg) {
  if (cfg.n_param_draws < 1 || cfg.n_input_draws < 1) throw Error("trial counts must be >= 1");
  if (!(cfg.q0 > 0.0) || !(cfg.rL > 0.0)) throw Error("q0 and rL must be positive");
  const long long trials = 1LL * cfg.n_param_draws * cfg.n_input_draws;
  if (trials > cfg.budget)
    throw BudgetExceeded(std::to_string(trials) + " trials exceed the budget of " + std::to_string(cfg.budget));
}

double mean_square(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

// Per-draw results: for every quantity, the mean over inputs and units, plus the
// per-input means (used for the error bar when only one parameter draw exists).
struct DrawResult {
  std::vector<double> q;  // index 0 is the input, then u^(1..L)
  std::vector<double> r;  // r[l] = Var(dz^(l)), l = 0..L-1
  std::vector<std::vector<double>> q_per_input, r_per_input;
};

DrawResult run_draw(const std::shared_ptr<const Topology>& topo, const InitPlan& plan, const McConfig& cfg, int draw,
                    bool fwd, bool bwd) {
  const std::size_t L = topo->shapes.layers.size();
  std::seed_seq param_seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(draw), 0u};
  std::seed_seq input_seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(draw), 1u};
  std::mt19937_64 param_rng(param_seq);
  std::mt19937_64 input_rng(input_seq);
  const VectorNet net = sample_parameters(topo, plan, param_rng());
  std::normal_distribution<double> normal(0.0, 1.0);
  const double q_sd = std::sqrt(cfg.q0), r_sd = std::sqrt(cfg.rL);

  DrawResult res;
  res.q.assign(L + 1, 0.0);
  res.r.assign(L, 0.0);
  res.q_per_input.assign(L + 1, {});
  res.r_per_input.assign(L, {});

  std::vector<double> z0(static_cast<std::size_t>(topo->arch.input.size()));
  std::vector<double> top(static_cast<std::size_t>(topo->shapes.layers.back().M_prime));
  for (int n = 0; n < cfg.n_input_draws; ++n) {
    for (double& x : z0) x = q_sd * normal(input_rng);
    SignalTrace tr = forward(net, z0, Exec::Serial);
    if (fwd) {
      res.q_per_input[0].push_back(mean_square(tr.input));
      for (std::size_t l = 0; l < L; ++l) res.q_per_input[l + 1].push_back(mean_square(tr.layers[l].u));
    }
    if (bwd) {
      for (double& x : top) x = r_sd * normal(input_rng);
      backward(net, tr, top, Exec::Serial);
      res.r_per_input[0].push_back(mean_square(tr.dinput));
      for (std::size_t l = 1; l < L; ++l) res.r_per_input[l].push_back(mean_square(tr.layers[l - 1].dz));
    }
  }
  const auto avg = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  for (std::size_t k = 0; k <= L; ++k) res.q[k] = avg(res.q_per_input[k]);
  for (std::size_t k = 0; k < L; ++k) res.r[k] = avg(res.r_per_input[k]);
  return res;
}

void mean_and_stderr(const std::vector<double>& xs, double& mean, double& se) {
  const auto n = static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += x;
  mean = s / n;
  if (xs.size() < 2) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / (n - 1.0) / n);
}

VarianceTrace run(std::shared_ptr<const Topology> topo, const InitPlan& plan, const McConfig& cfg, bool fwd,
                  bool bwd) {
  check_config(cfg);
  const std::size_t L = topo->shapes.layers.size();
  std::vector<DrawResult> draws(static_cast<std::size_t>(cfg.n_param_draws));
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < cfg.n_param_draws; ++k) draws[static_cast<std::size_t>(k)] = run_draw(topo, plan, cfg, k, fwd, bwd);

  const VariancePrediction pred = predict(topo->shapes, plan, cfg.q0, cfg.rL);
  VarianceTrace out;
  out.q0 = cfg.q0;
  out.rL = cfg.rL;
  out.has_forward = fwd;
  out.has_backward = bwd;
  out.layers.resize(L);

  // Samples for quantity `pick(draw)`; with one parameter draw, fall back to per-input means.
  const auto collect = [&](auto pick, auto pick_inputs) {
    std::vector<double> xs;
    if (draws.size() == 1) return pick_inputs(draws[0]);
    for (const auto& d : draws) xs.push_back(pick(d));
    return xs;
  };

  if (fwd) {
    double m = 0, se = 0;
    mean_and_stderr(collect([](const DrawResult& d) { return d.q[0]; },
                            [](const DrawResult& d) { return d.q_per_input[0]; }),
                    m, se);
    out.q0_est = m;
    out.q0_stderr = se;
  }
  for (std::size_t l = 0; l < L; ++l) {
    auto& row = out.layers[l];
    row.layer = static_cast<int>(l) + 1;
    row.q_pred = pred.q[l];
    row.r_pred = pred.r[l];
    if (fwd)
      mean_and_stderr(collect([l](const DrawResult& d) { return d.q[l + 1]; },
                              [l](const DrawResult& d) { return d.q_per_input[l + 1]; }),
                      row.q_est, row.q_stderr);
    if (bwd)
      mean_and_stderr(collect([l](const DrawResult& d) { return d.r[l]; },
                              [l](const DrawResult& d) { return d.r_per_input[l]; }),
                      row.r_est, row.r_stderr);
  }
  return out;
}

}  // namespace

double LayerVariance::q_rel_error() const { return rel_error(q_pred, q_est); }
double LayerVariance::r_rel_error() const { return rel_error(r_pred, r_est); }

VarianceTrace estimate_forward(std::shared_ptr<const Topology> topo, const InitPlan& plan, const McConfig& cfg) {
  return run(std::move(topo), plan, cfg, true, false);
}

VarianceTrace estimate_backward(std::shared_ptr<const Topology> topo, const InitPlan& plan, const McConfig& cfg) {
  return run(std::move(topo), plan, cfg, false, true);
}

VarianceTrace estimate(std::shared_ptr<const Topology> topo, const InitPlan& plan, const McConfig& cfg) {
  return run(std::move(topo), plan, cfg, true, true);
}

VarianceTrace estimate_forward(const Architecture& arch, const InitPlan& plan, const McConfig& cfg) {
  check_config(cfg);
  return estimate_forward(Topology::build(arch), plan, cfg);
}

VarianceTrace estimate_backward(const Architecture& arch, const InitPlan& plan, const McConfig& cfg) {
  check_config(cfg);
  return estimate_backward(Topology::build(arch), plan, cfg);
}

CompareReport compare(const VarianceTrace& trace, double threshold) {
  CompareReport rep;
  rep.threshold = threshold;
  const auto add = [&](int layer, char qty, double pred, double est, double se) {
    CompareRow row{layer, qty, pred, est, se, rel_error(pred, est), true};
    row.ok = row.rel_error <= threshold;
    rep.max_rel_error = std::max(rep.max_rel_error, row.rel_error);
    if (!row.ok) {
      rep.pass = false;
      rep.failing.push_back(std::string(1, qty) + "@" + std::to_string(layer));
    }
    rep.rows.push_back(row);
  };
  for (const auto& l : trace.layers) {
    if (trace.has_forward) add(l.layer, 'q', l.q_pred, l.q_est, l.q_stderr);
    if (trace.has_backward) add(l.layer, 'r', l.r_pred, l.r_est, l.r_stderr);
  }
  return rep;
}

}  // namespace asv
