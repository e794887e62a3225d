#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "asv/shapes.hpp"

namespace asv {

enum class PoolClass { NoPool, Max, Average };

/// Second-moment factors of a layer's activation+pooling composite.
///  tau   = E[z^2] / q     (forward, z the pooled output, q the pre-activation variance)
///  gamma = E[(dz/du)^2]   (backward, per contributing unit)
struct PoolConstants {
  double tau = 0.5;
  double gamma = 0.5;
  int T = 1;
  PoolClass kind = PoolClass::NoPool;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;  // |I_2n - I_n| at the last refinement
  int panels = 0;
};

/// Composite Gauss-Legendre on [a, b], doubling the panel count until two
/// successive estimates differ by less than tol. Throws QuadratureFailure if the
/// final difference exceeds fail_tol.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double tol = 1e-10, double fail_tol = 1e-9);

// Constants for ReLU activation (the modeled case).
double tau(PoolClass kind, int T);
double gamma(PoolClass kind, int T);

// Same constants with the activation made explicit. Identity activation drops
// the ReLU half-factor: NoPool gives tau = gamma = 1.
double tau(PoolClass kind, int T, Activation act);
double gamma(PoolClass kind, int T, Activation act);

PoolClass pool_class(const LayerShape& shape);
PoolConstants layer_constants(const LayerShape& shape);

enum class Method { Xavier, KaimingForward, KaimingBackward, AsvForward, AsvBackward };

inline constexpr Method kAllMethods[] = {Method::Xavier, Method::KaimingForward, Method::KaimingBackward,
                                         Method::AsvForward, Method::AsvBackward};

std::string_view to_string(Method m);
Method parse_method(std::string_view name);  // throws UnknownName

/// How the ASV-backward ceiling is applied: on the variance (default) or on the
/// standard deviation (equivalent to squaring the factor).
enum class ClampMode { Variance, StdDev };

struct InitOptions {
  std::optional<double> clamp_factor = 3.0;  // nullopt disables the ASV-backward ceiling
  ClampMode clamp_mode = ClampMode::Variance;
  double tau0 = 1.0;  // constant for the raw input "layer 0"
};

struct LayerInit {
  int layer = 0;
  double sigma_w = 0.0;
  double sigma_b = 0.0;
  double tau = 0.0;
  double gamma = 0.0;
  bool clamped = false;
};

struct InitPlan {
  Method method = Method::AsvForward;
  InitOptions options;
  std::vector<LayerInit> layers;
};

InitPlan init_plan(Method method, const ShapeReport& shapes, const InitOptions& opts = {});

/// Replace every layer's sigma_w (e.g. a sweep or a user override file).
void override_sigmas(InitPlan& plan, const std::vector<double>& sigma_w);

struct VariancePrediction {
  double q0 = 1.0;
  double rL = 1.0;
  std::vector<double> q;  // q[l-1] = Var(u^(l)),       l = 1..L
  std::vector<double> r;  // r[l-1] = Var(dz^(l-1)),    l = 1..L  (gradient entering layer l's input)
};

std::vector<double> predict_forward(const ShapeReport& shapes, const InitPlan& plan, double q0 = 1.0);
std::vector<double> predict_backward(const ShapeReport& shapes, const InitPlan& plan, double rL = 1.0);
VariancePrediction predict(const ShapeReport& shapes, const InitPlan& plan, double q0 = 1.0, double rL = 1.0);

}  // namespace asv
