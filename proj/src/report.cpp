#include "asv/report.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace asv {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string num(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string pool_name(const LayerShape& l) { return l.pool ? std::string(to_string(*l.pool)) : "none"; }

std::optional<PoolKind> parse_pool_name(const std::string& s) {
  if (s == "none") return std::nullopt;
  for (PoolKind k : {PoolKind::Max, PoolKind::Average, PoolKind::GlobalAverage})
    if (to_string(k) == s) return k;
  throw SchemaError("unknown pool kind '" + s + "'");
}

LayerKind parse_kind(const std::string& s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "fc") return LayerKind::FullyConnected;
  throw SchemaError("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw SchemaError("unknown activation '" + s + "'");
}

std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

constexpr const char* kShapeColumns[] = {
    "layer", "kind",    "activation", "pool",    "in_w",    "in_h",   "in_d",    "conv_w",  "conv_h",
    "conv_d", "out_w",  "out_h",      "out_d",   "pool_w",  "pool_h", "pool_sw", "pool_sh", "pool_pw",
    "pool_ph", "M_prev", "M_prime",   "M",       "S",       "J",      "C",       "C_tilde", "T",
    "eps_fwd", "eps_bwd", "params"};

ordered_json layer_json(const LayerShape& l) {
  ordered_json j;
  j["layer"] = l.layer;
  j["kind"] = to_string(l.kind);
  j["activation"] = to_string(l.activation);
  j["pool"] = pool_name(l);
  j["in"] = {l.in.w, l.in.h, l.in.d};
  j["conv_out"] = {l.conv_out.w, l.conv_out.h, l.conv_out.d};
  j["out"] = {l.out.w, l.out.h, l.out.d};
  j["pool_size"] = {l.pool_size.w, l.pool_size.h};
  j["pool_stride"] = {l.pool_stride.w, l.pool_stride.h};
  j["pool_padding"] = {l.pool_padding.w, l.pool_padding.h};
  j["M_prev"] = l.M_prev;
  j["M_prime"] = l.M_prime;
  j["M"] = l.M;
  j["S"] = l.S;
  j["J"] = l.J;
  j["C"] = l.C;
  j["C_tilde"] = l.C_tilde;
  j["T"] = l.T;
  j["eps_fwd"] = l.eps_fwd;
  j["eps_bwd"] = l.eps_bwd;
  j["params"] = l.params;
  return j;
}

Shape3 shape_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }
Extent2 extent_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

}  // namespace

std::string shape_report_json(const ShapeReport& rep) {
  ordered_json j;
  j["arch"] = rep.arch_name;
  j["input"] = {rep.input.w, rep.input.h, rep.input.d};
  j["total_params"] = rep.total_params();
  j["layers"] = ordered_json::array();
  for (const auto& l : rep.layers) j["layers"].push_back(layer_json(l));
  return j.dump(2) + "\n";
}

ShapeReport parse_shape_report_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    ShapeReport rep;
    rep.arch_name = j.at("arch").get<std::string>();
    rep.input = shape_from(j.at("input"));
    for (const auto& lj : j.at("layers")) {
      LayerShape l;
      l.layer = lj.at("layer").get<int>();
      l.kind = parse_kind(lj.at("kind").get<std::string>());
      l.activation = parse_activation(lj.at("activation").get<std::string>());
      l.pool = parse_pool_name(lj.at("pool").get<std::string>());
      l.in = shape_from(lj.at("in"));
      l.conv_out = shape_from(lj.at("conv_out"));
      l.out = shape_from(lj.at("out"));
      l.pool_size = extent_from(lj.at("pool_size"));
      l.pool_stride = extent_from(lj.at("pool_stride"));
      l.pool_padding = extent_from(lj.at("pool_padding"));
      for (auto [key, field] : {std::pair{"M_prev", &l.M_prev}, {"M_prime", &l.M_prime}, {"M", &l.M}, {"S", &l.S},
                                {"J", &l.J}, {"C", &l.C}, {"C_tilde", &l.C_tilde}, {"eps_fwd", &l.eps_fwd},
                                {"eps_bwd", &l.eps_bwd}, {"params", &l.params}})
        *field = lj.at(key).get<long long>();
      l.T = lj.at("T").get<int>();
      rep.layers.push_back(l);
    }
    return rep;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad shape report: ") + e.what());
  }
}

std::string shape_report_csv(const ShapeReport& rep) {
  std::ostringstream os;
  os << "# arch=" << rep.arch_name << " input=" << rep.input.w << "x" << rep.input.h << "x" << rep.input.d
     << " total_params=" << rep.total_params() << "\n";
  for (std::size_t i = 0; i < std::size(kShapeColumns); ++i) os << (i ? "," : "") << kShapeColumns[i];
  os << "\n";
  for (const auto& l : rep.layers) {
    os << l.layer << ',' << to_string(l.kind) << ',' << to_string(l.activation) << ',' << pool_name(l) << ','
       << l.in.w << ',' << l.in.h << ',' << l.in.d << ',' << l.conv_out.w << ',' << l.conv_out.h << ','
       << l.conv_out.d << ',' << l.out.w << ',' << l.out.h << ',' << l.out.d << ',' << l.pool_size.w << ','
       << l.pool_size.h << ',' << l.pool_stride.w << ',' << l.pool_stride.h << ',' << l.pool_padding.w << ','
       << l.pool_padding.h << ',' << l.M_prev << ',' << l.M_prime << ',' << l.M << ',' << l.S << ',' << l.J << ','
       << l.C << ',' << l.C_tilde << ',' << l.T << ',' << l.eps_fwd << ',' << l.eps_bwd << ',' << l.params << "\n";
  }
  return os.str();
}

ShapeReport parse_shape_report_csv(std::string_view text) {
  ShapeReport rep;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.starts_with("#")) {
      std::istringstream meta(line.substr(1));
      std::string tok;
      while (meta >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "arch") rep.arch_name = val;
        if (key == "input") {
          const auto parts = split(val, 'x');
          if (parts.size() != 3) throw SchemaError("bad input shape in CSV header");
          rep.input = {std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2])};
        }
      }
      continue;
    }
    const auto f = split(line);
    if (!header_seen) {
      if (f.size() != std::size(kShapeColumns) || f[0] != "layer") throw SchemaError("unexpected CSV header");
      header_seen = true;
      continue;
    }
    if (f.size() != std::size(kShapeColumns)) throw SchemaError("CSV row has wrong field count");
    try {
      LayerShape l;
      std::size_t k = 0;
      const auto i = [&] { return std::stoi(f[k++]); };
      const auto ll = [&] { return std::stoll(f[k++]); };
      l.layer = i();
      l.kind = parse_kind(f[k++]);
      l.activation = parse_activation(f[k++]);
      l.pool = parse_pool_name(f[k++]);
      l.in = {i(), i(), i()};
      l.conv_out = {i(), i(), i()};
      l.out = {i(), i(), i()};
      l.pool_size = {i(), i()};
      l.pool_stride = {i(), i()};
      l.pool_padding = {i(), i()};
      l.M_prev = ll();
      l.M_prime = ll();
      l.M = ll();
      l.S = ll();
      l.J = ll();
      l.C = ll();
      l.C_tilde = ll();
      l.T = i();
      l.eps_fwd = ll();
      l.eps_bwd = ll();
      l.params = ll();
      rep.layers.push_back(l);
    } catch (const std::logic_error&) {
      throw SchemaError("non-numeric field in shape CSV");
    }
  }
  return rep;
}

std::string plans_json(const ShapeReport& shapes, const std::vector<InitPlan>& plans, double q0, double rL) {
  ordered_json j;
  j["arch"] = shapes.arch_name;
  j["q0"] = q0;
  j["rL"] = rL;
  j["plans"] = ordered_json::array();
  for (const auto& plan : plans) {
    const VariancePrediction pred = predict(shapes, plan, q0, rL);
    ordered_json pj;
    pj["method"] = to_string(plan.method);
    if (plan.options.clamp_factor) pj["clamp_factor"] = *plan.options.clamp_factor;
    else pj["clamp_factor"] = nullptr;
    pj["clamp_mode"] = plan.options.clamp_mode == ClampMode::Variance ? "variance" : "stddev";
    pj["tau0"] = plan.options.tau0;
    pj["layers"] = ordered_json::array();
    for (std::size_t l = 0; l < plan.layers.size(); ++l) {
      const auto& li = plan.layers[l];
      const auto& ls = shapes.layers[l];
      ordered_json row;
      row["layer"] = li.layer;
      row["sigma_w"] = li.sigma_w;
      row["sigma_b"] = li.sigma_b;
      row["tau"] = li.tau;
      row["gamma"] = li.gamma;
      row["epsilon"] = ls.eps_fwd;
      row["M"] = ls.M_prev;
      row["M_prime"] = ls.M_prime;
      row["q_pred"] = pred.q[l];
      row["r_pred"] = pred.r[l];
      row["clamped"] = li.clamped;
      pj["layers"].push_back(row);
    }
    j["plans"].push_back(pj);
  }
  return j.dump(2) + "\n";
}

std::string plans_csv(const ShapeReport& shapes, const std::vector<InitPlan>& plans, double q0, double rL) {
  std::ostringstream os;
  os << "layer,method,sigma_w,sigma_b,tau,gamma,epsilon,M,M_prime,q_pred,r_pred,clamped\n";
  for (const auto& plan : plans) {
    const VariancePrediction pred = predict(shapes, plan, q0, rL);
    for (std::size_t l = 0; l < plan.layers.size(); ++l) {
      const auto& li = plan.layers[l];
      const auto& ls = shapes.layers[l];
      os << li.layer << ',' << to_string(plan.method) << ',' << num(li.sigma_w) << ',' << num(li.sigma_b) << ','
         << num(li.tau) << ',' << num(li.gamma) << ',' << ls.eps_fwd << ',' << ls.M_prev << ',' << ls.M_prime << ','
         << num(pred.q[l]) << ',' << num(pred.r[l]) << ',' << (li.clamped ? "true" : "false") << "\n";
    }
  }
  return os.str();
}

std::string sigma_table_csv(const std::vector<InitPlan>& plans) {
  std::ostringstream os;
  os << "layer";
  for (const auto& p : plans) os << ',' << to_string(p.method);
  os << "\n";
  if (plans.empty()) return os.str();
  for (std::size_t l = 0; l < plans.front().layers.size(); ++l) {
    os << plans.front().layers[l].layer;
    for (const auto& p : plans) os << ',' << num(p.layers[l].sigma_w);
    os << "\n";
  }
  return os.str();
}

std::string sigma_table_text(const ShapeReport& shapes, const std::vector<InitPlan>& plans) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "layer" << std::setw(16) << "out shape";
  for (const auto& p : plans) os << std::right << std::setw(18) << to_string(p.method);
  os << "\n";
  for (std::size_t l = 0; l < shapes.layers.size(); ++l) {
    const auto& ls = shapes.layers[l];
    std::ostringstream shp;
    shp << ls.out.d << "x" << ls.out.w << "x" << ls.out.h;
    os << std::left << std::setw(6) << ls.layer << std::setw(16) << shp.str();
    for (const auto& p : plans) {
      std::ostringstream cell;
      cell << std::scientific << std::setprecision(4) << p.layers[l].sigma_w << (p.layers[l].clamped ? "*" : " ");
      os << std::right << std::setw(18) << cell.str();
    }
    os << "\n";
  }
  return os.str();
}

std::string variance_report_json(const VarianceTrace& trace, const CompareReport& cmp) {
  ordered_json j;
  j["q0"] = trace.q0;
  j["q0_est"] = trace.q0_est;
  j["q0_stderr"] = trace.q0_stderr;
  j["rL"] = trace.rL;
  j["threshold"] = cmp.threshold;
  j["max_rel_error"] = std::isfinite(cmp.max_rel_error) ? ordered_json(cmp.max_rel_error) : ordered_json("inf");
  j["pass"] = cmp.pass;
  j["failing"] = cmp.failing;
  j["layers"] = ordered_json::array();
  for (const auto& l : trace.layers) {
    ordered_json row;
    row["layer"] = l.layer;
    if (trace.has_forward) {
      row["q_pred"] = l.q_pred;
      row["q_est"] = l.q_est;
      row["q_stderr"] = l.q_stderr;
      row["q_rel_error"] = l.q_rel_error();
    }
    if (trace.has_backward) {
      row["r_pred"] = l.r_pred;
      row["r_est"] = l.r_est;
      row["r_stderr"] = l.r_stderr;
      row["r_rel_error"] = std::isfinite(l.r_rel_error()) ? ordered_json(l.r_rel_error()) : ordered_json("inf");
    }
    j["layers"].push_back(row);
  }
  return j.dump(2) + "\n";
}

std::string variance_report_csv(const VarianceTrace& trace, const CompareReport& cmp) {
  std::ostringstream os;
  os << "layer,quantity,predicted,estimated,stderr,rel_error,ok\n";
  for (const auto& r : cmp.rows)
    os << r.layer << ',' << r.quantity << ',' << num(r.predicted) << ',' << num(r.estimated) << ',' << num(r.stderr_)
       << ',' << num(r.rel_error) << ',' << (r.ok ? "true" : "false") << "\n";
  if (trace.has_forward) os << "0,q," << num(trace.q0) << ',' << num(trace.q0_est) << ',' << num(trace.q0_stderr) << ",,\n";
  return os.str();
}

namespace {

void put_le(std::ostream& out, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double get_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw SchemaError("weight file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_weights(std::ostream& out, const VectorNet& net, const InitPlan& plan, std::uint64_t seed) {
  ordered_json h;
  h["format"] = "asv-weights-1";
  h["dtype"] = "float64";
  h["byte_order"] = "little";
  h["arch"] = net.topo->arch.name;
  h["method"] = to_string(plan.method);
  h["seed"] = seed;
  h["layers"] = ordered_json::array();
  for (std::size_t l = 0; l < net.params.size(); ++l) {
    const auto& ls = net.topo->shapes.layers[l];
    ordered_json lj;
    lj["layer"] = ls.layer;
    lj["kind"] = to_string(ls.kind);
    lj["W"] = {ls.C, ls.S};
    lj["b"] = {ls.C};
    lj["sigma_w"] = plan.layers[l].sigma_w;
    h["layers"].push_back(lj);
  }
  out << h.dump() << "\n";
  for (const auto& p : net.params) {
    for (double w : p.W) put_le(out, w);
    for (double b : p.b) put_le(out, b);
  }
}

WeightFile read_weights(std::istream& in) {
  WeightFile wf;
  if (!std::getline(in, wf.header)) throw SchemaError("weight file has no header");
  json h;
  try {
    h = json::parse(wf.header);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("bad weight file header: ") + e.what());
  }
  for (const auto& lj : h.at("layers")) {
    const auto rows = lj.at("W").at(0).get<long long>(), cols = lj.at("W").at(1).get<long long>();
    const auto nb = lj.at("b").at(0).get<long long>();
    std::vector<double> W(static_cast<std::size_t>(rows * cols)), b(static_cast<std::size_t>(nb));
    for (double& x : W) x = get_le(in);
    for (double& x : b) x = get_le(in);
    wf.W.push_back(std::move(W));
    wf.b.push_back(std::move(b));
  }
  return wf;
}

std::string trace_summary_json(const SignalTrace& trace) {
  const auto stats = [](const std::vector<double>& v) {
    ordered_json s;
    if (v.empty()) return ordered_json(nullptr);
    double lo = v[0], hi = v[0], sum = 0.0;
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      sum += x;
    }
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    s["min"] = lo;
    s["max"] = hi;
    s["mean"] = mean;
    s["var"] = ss / static_cast<double>(v.size());
    return s;
  };
  ordered_json j;
  j["input"] = stats(trace.input);
  if (trace.has_backward) j["dinput"] = stats(trace.dinput);
  j["layers"] = ordered_json::array();
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& s = trace.layers[l];
    ordered_json lj;
    lj["layer"] = l + 1;
    lj["u"] = stats(s.u);
    lj["v"] = stats(s.v);
    lj["z"] = stats(s.z);
    if (trace.has_backward) {
      lj["du"] = stats(s.du);
      lj["dv"] = stats(s.dv);
      lj["dz"] = stats(s.dz);
    }
    j["layers"].push_back(lj);
  }
  return j.dump(2) + "\n";
}

}  // namespace asv
