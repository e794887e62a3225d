#include "asv/variance.hpp"

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <shared_mutex>

namespace asv {

namespace {

constexpr int kNodes = 10;

struct GaussLegendre {
  std::array<double, kNodes> x{};
  std::array<double, kNodes> w{};

  GaussLegendre() {
    // Newton iteration on P_n from the Chebyshev initial guess.
    for (int i = 0; i < kNodes; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (kNodes + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= kNodes; ++k) {
          const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = kNodes * (z * p1 - p0) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      x[i] = z;
      w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }
};

const GaussLegendre& rule() {
  static const GaussLegendre gl;
  return gl;
}

double composite(const std::function<double(double)>& f, double a, double b, int panels) {
  const auto& gl = rule();
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    double part = 0.0;
    for (int i = 0; i < kNodes; ++i) part += gl.w[i] * f(mid + 0.5 * h * gl.x[i]);
    sum += 0.5 * h * part;
  }
  return sum;
}

double phi(double s) { return std::exp(-0.5 * s * s) / std::sqrt(2.0 * std::numbers::pi); }
double Phi(double s) { return 0.5 * std::erfc(-s / std::numbers::sqrt2); }

// The integrand s^2 phi(s) is below 1e-28 beyond |s| = 12.
constexpr double kUpper = 12.0;

double max_pool_second_moment(int T, Activation act) {
  static std::shared_mutex mu;
  static std::map<std::pair<int, int>, double> memo;
  const auto key = std::make_pair(static_cast<int>(act), T);
  {
    std::shared_lock lock(mu);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
  }
  const double lower = act == Activation::ReLU ? 0.0 : -kUpper;
  const auto f = [T](double s) { return s * s * phi(s) * std::pow(Phi(s), T - 1); };
  const double value = T * integrate(f, lower, kUpper).value;
  std::unique_lock lock(mu);
  memo.emplace(key, value);
  return value;
}

void require_window(int T) {
  if (T < 1) throw Error("pooling window cardinality must be >= 1, got " + std::to_string(T));
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b, double tol,
                           double fail_tol) {
  int panels = 4;
  double prev = composite(f, a, b, panels);
  double diff = 0.0;
  for (int level = 0; level < 16; ++level) {
    panels *= 2;
    const double cur = composite(f, a, b, panels);
    diff = std::abs(cur - prev);
    prev = cur;
    if (diff < tol) return {cur, diff, panels};
  }
  if (!(diff <= fail_tol))
    throw QuadratureFailure("quadrature did not converge: last difference " + std::to_string(diff));
  return {prev, diff, panels};
}

double tau(PoolClass kind, int T, Activation act) {
  require_window(T);
  const bool relu = act == Activation::ReLU;
  switch (kind) {
    case PoolClass::NoPool: return relu ? 0.5 : 1.0;
    case PoolClass::Average:
      return relu ? (1.0 / (2.0 * T)) * (1.0 + (T - 1) / std::numbers::pi) : 1.0 / T;
    case PoolClass::Max: return max_pool_second_moment(T, act);
  }
  return 0.0;
}

double gamma(PoolClass kind, int T, Activation act) {
  require_window(T);
  const bool relu = act == Activation::ReLU;
  switch (kind) {
    case PoolClass::NoPool: return relu ? 0.5 : 1.0;
    // (2^T - 1)/(T 2^T) written to stay finite for large T
    case PoolClass::Max: return relu ? -std::expm1(-T * std::numbers::ln2) / T : 1.0 / T;
    case PoolClass::Average: return relu ? 1.0 / (2.0 * T * T) : 1.0 / (1.0 * T * T);
  }
  return 0.0;
}

double tau(PoolClass kind, int T) { return tau(kind, T, Activation::ReLU); }
double gamma(PoolClass kind, int T) { return gamma(kind, T, Activation::ReLU); }

PoolClass pool_class(const LayerShape& shape) {
  if (!shape.pool) return PoolClass::NoPool;
  return *shape.pool == PoolKind::Max ? PoolClass::Max : PoolClass::Average;
}

PoolConstants layer_constants(const LayerShape& shape) {
  PoolConstants c;
  c.kind = pool_class(shape);
  c.T = c.kind == PoolClass::NoPool ? 1 : shape.T;
  c.tau = tau(c.kind, c.T, shape.activation);
  c.gamma = gamma(c.kind, c.T, shape.activation);
  return c;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Xavier: return "xavier";
    case Method::KaimingForward: return "kaiming-forward";
    case Method::KaimingBackward: return "kaiming-backward";
    case Method::AsvForward: return "asv-forward";
    case Method::AsvBackward: return "asv-backward";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (to_string(m) == name) return m;
  throw UnknownName("unknown initialization method '" + std::string(name) + "'");
}

InitPlan init_plan(Method method, const ShapeReport& shapes, const InitOptions& opts) {
  InitPlan plan;
  plan.method = method;
  plan.options = opts;

  double prev_tau = opts.tau0;
  for (const auto& ls : shapes.layers) {
    const PoolConstants pc = layer_constants(ls);
    const double eps = static_cast<double>(ls.eps_fwd);

    LayerInit li;
    li.layer = ls.layer;
    li.tau = pc.tau;
    li.gamma = pc.gamma;

    double var = 0.0;
    switch (method) {
      case Method::Xavier: var = 2.0 / static_cast<double>(ls.S + ls.J); break;
      case Method::KaimingForward: var = 2.0 / static_cast<double>(ls.S); break;
      case Method::KaimingBackward: var = 2.0 / static_cast<double>(ls.J); break;
      case Method::AsvForward:
        if (prev_tau < 1e-12)
          throw NumericalError("layer " + std::to_string(ls.layer) + ": previous tau below 1e-12");
        var = static_cast<double>(ls.M_prime) / (prev_tau * eps);
        break;
      case Method::AsvBackward: {
        if (pc.gamma < 1e-12) throw NumericalError("layer " + std::to_string(ls.layer) + ": gamma below 1e-12");
        var = static_cast<double>(ls.M_prev) / (pc.gamma * eps);
        if (opts.clamp_factor) {
          const double gamma_unpooled = gamma(PoolClass::NoPool, 1, ls.activation);
          const double unpooled = static_cast<double>(ls.M_prev) / (gamma_unpooled * eps);
          const double f = *opts.clamp_factor;
          const double ceiling = opts.clamp_mode == ClampMode::Variance ? f * unpooled : f * f * unpooled;
          if (ceiling < var) {
            var = ceiling;
            li.clamped = true;
          }
        }
        break;
      }
    }
    li.sigma_w = std::sqrt(var);
    li.sigma_b = 0.0;
    if (!std::isfinite(li.sigma_w) || li.sigma_w <= 0.0)
      throw NumericalError("layer " + std::to_string(ls.layer) + ": non-positive or non-finite sigma");
    plan.layers.push_back(li);
    prev_tau = pc.tau;
  }
  return plan;
}

void override_sigmas(InitPlan& plan, const std::vector<double>& sigma_w) {
  if (sigma_w.size() != plan.layers.size())
    throw ShapeMismatch("sigma override has " + std::to_string(sigma_w.size()) + " entries, plan has " +
                        std::to_string(plan.layers.size()) + " layers");
  for (std::size_t i = 0; i < sigma_w.size(); ++i) {
    if (!std::isfinite(sigma_w[i]) || sigma_w[i] < 0.0)
      throw Error("sigma override for layer " + std::to_string(i + 1) + " must be finite and >= 0");
    plan.layers[i].sigma_w = sigma_w[i];
    plan.layers[i].clamped = false;
  }
}

std::vector<double> predict_forward(const ShapeReport& shapes, const InitPlan& plan, double q0) {
  if (plan.layers.size() != shapes.layers.size()) throw ShapeMismatch("plan does not cover every layer");
  std::vector<double> q;
  q.reserve(shapes.layers.size());
  double prev_q = q0;
  double prev_tau = plan.options.tau0;
  for (std::size_t l = 0; l < shapes.layers.size(); ++l) {
    const auto& ls = shapes.layers[l];
    const auto& li = plan.layers[l];
    const double cur = li.sigma_b * li.sigma_b + li.sigma_w * li.sigma_w * prev_q * prev_tau *
                                                     static_cast<double>(ls.eps_fwd) /
                                                     static_cast<double>(ls.M_prime);
    q.push_back(cur);
    prev_q = cur;
    prev_tau = layer_constants(ls).tau;
  }
  return q;
}

std::vector<double> predict_backward(const ShapeReport& shapes, const InitPlan& plan, double rL) {
  if (plan.layers.size() != shapes.layers.size()) throw ShapeMismatch("plan does not cover every layer");
  const std::size_t L = shapes.layers.size();
  std::vector<double> r(L);
  double above = rL;
  for (std::size_t l = L; l-- > 0;) {
    const auto& ls = shapes.layers[l];
    const double s = plan.layers[l].sigma_w;
    const double g = layer_constants(ls).gamma;
    r[l] = s * s * above * g * static_cast<double>(ls.eps_bwd) / static_cast<double>(ls.M_prev);
    above = r[l];
  }
  return r;
}

VariancePrediction predict(const ShapeReport& shapes, const InitPlan& plan, double q0, double rL) {
  return {q0, rL, predict_forward(shapes, plan, q0), predict_backward(shapes, plan, rL)};
}

}  // namespace asv
