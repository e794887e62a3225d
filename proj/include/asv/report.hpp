#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "asv/montecarlo.hpp"

namespace asv {

// Shape report: one row per layer.
std::string shape_report_json(const ShapeReport& rep);
std::string shape_report_csv(const ShapeReport& rep);
ShapeReport parse_shape_report_json(std::string_view text);
ShapeReport parse_shape_report_csv(std::string_view text);

// Init plans with their variance predictions. CSV columns:
// layer,method,sigma_w,sigma_b,tau,gamma,epsilon,M,M_prime,q_pred,r_pred,clamped
// where M is M_(l-1) (the layer's fan-in units) and r_pred is Var(dz^(l-1)).
std::string plans_json(const ShapeReport& shapes, const std::vector<InitPlan>& plans, double q0 = 1.0,
                       double rL = 1.0);
std::string plans_csv(const ShapeReport& shapes, const std::vector<InitPlan>& plans, double q0 = 1.0,
                      double rL = 1.0);

/// Side-by-side sigma_w table, one column per plan.
std::string sigma_table_csv(const std::vector<InitPlan>& plans);
std::string sigma_table_text(const ShapeReport& shapes, const std::vector<InitPlan>& plans);

// Monte Carlo results.
std::string variance_report_json(const VarianceTrace& trace, const CompareReport& cmp);
std::string variance_report_csv(const VarianceTrace& trace, const CompareReport& cmp);

/// Weight file: one JSON header line, then little-endian float64 W then b per layer.
void write_weights(std::ostream& out, const VectorNet& net, const InitPlan& plan, std::uint64_t seed);

struct WeightFile {
  std::string header;  // the JSON line without its newline
  std::vector<std::vector<double>> W, b;
};
WeightFile read_weights(std::istream& in);

/// Per-layer min/max/mean/var of every signal vector in the trace.
std::string trace_summary_json(const SignalTrace& trace);

}  // namespace asv
