#include "asv/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "asv/report.hpp"

namespace asv {

namespace {

struct Common {
  std::string builtin_name;
  std::string arch_path;
  std::string format = "json";
  std::string out_path;
};

struct InitFlags {
  std::string method = "all";
  double clamp_factor = 3.0;
  bool no_clamp = false;
  std::string clamp_mode = "variance";
  std::string sigma_override;
  double tau0 = 1.0;
};

Architecture resolve(const Common& c) {
  if (!c.builtin_name.empty() && !c.arch_path.empty()) throw SchemaError("use either --builtin or --arch, not both");
  if (!c.builtin_name.empty()) return builtin(c.builtin_name);
  if (!c.arch_path.empty()) return load_architecture(c.arch_path);
  throw SchemaError("an architecture is required (--builtin or --arch)");
}

InitOptions options_from(const InitFlags& f) {
  InitOptions o;
  o.clamp_factor = f.no_clamp ? std::nullopt : std::optional<double>(f.clamp_factor);
  if (f.clamp_mode == "variance") o.clamp_mode = ClampMode::Variance;
  else if (f.clamp_mode == "stddev") o.clamp_mode = ClampMode::StdDev;
  else throw UnknownName("unknown clamp mode '" + f.clamp_mode + "'");
  o.tau0 = f.tau0;
  return o;
}

std::vector<double> read_sigma_override(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sigma override file '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    return j.at("sigma_w").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad sigma override file '" + path + "': " + e.what());
  }
}

std::vector<InitPlan> make_plans(const ShapeReport& shapes, const InitFlags& f) {
  const InitOptions opts = options_from(f);
  std::vector<InitPlan> plans;
  if (f.method == "all") {
    for (Method m : kAllMethods) plans.push_back(init_plan(m, shapes, opts));
  } else {
    plans.push_back(init_plan(parse_method(f.method), shapes, opts));
  }
  if (!f.sigma_override.empty()) {
    const auto sigmas = read_sigma_override(f.sigma_override);
    for (auto& p : plans) override_sigmas(p, sigmas);
  }
  return plans;
}

// Either the user's --out file or the caller's stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw Error("cannot write '" + path + "'");
      os_ = &file_;
    }
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

void check_format(const std::string& fmt, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (fmt == a) return;
  throw SchemaError("unsupported --format '" + fmt + "' for this command");
}

std::pair<int, int> parse_trials(const std::string& s) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw SchemaError("--trials must look like AxB");
  try {
    std::size_t n1 = 0, n2 = 0;
    const int a = std::stoi(s.substr(0, x), &n1);
    const int b = std::stoi(s.substr(x + 1), &n2);
    if (n1 != x || n2 != s.size() - x - 1 || a < 1 || b < 1) throw std::invalid_argument("");
    return {a, b};
  } catch (const std::logic_error&) {
    throw SchemaError("--trials must look like AxB with positive integers");
  }
}

void add_arch_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--builtin", c.builtin_name, "Builtin architecture (arch34, arch50)");
  cmd->add_option("--arch", c.arch_path, "Architecture JSON file");
  cmd->add_option("--out", c.out_path, "Write the report here instead of stdout");
}

void add_init_flags(CLI::App* cmd, InitFlags& f) {
  cmd->add_option("--clamp-factor", f.clamp_factor, "ASV-backward ceiling relative to the unpooled value")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--no-clamp", f.no_clamp, "Disable the ASV-backward ceiling");
  cmd->add_option("--clamp-mode", f.clamp_mode, "Apply the ceiling to the variance or to the std dev")
      ->check(CLI::IsMember({"variance", "stddev"}));
  cmd->add_option("--tau0", f.tau0, "Second-moment constant of the raw input (0.5 treats it as a ReLU output)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--sigma-override", f.sigma_override, "JSON file {\"sigma_w\": [...]} replacing every sigma_w");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variance-preserving weight initialization for Conv+Pool networks", "asvinit"};
  app.require_subcommand(1);

  Common common;
  InitFlags init_flags;
  std::uint64_t seed = 0;
  std::string trials = "8x512";
  double threshold = 0.2;
  std::string direction = "auto";
  std::string emit_weights;
  double q0 = 1.0, rL = 1.0;

  auto* analyze = app.add_subcommand("analyze", "Shapes, connection counts and window sizes per layer");
  add_arch_flags(analyze, common);
  analyze->add_option("--format", common.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  auto* init = app.add_subcommand("init", "Per-layer sigma for one or all methods");
  add_arch_flags(init, common);
  add_init_flags(init, init_flags);
  init->add_option("--method", init_flags.method, "xavier, kaiming-forward, kaiming-backward, asv-forward, "
                                                  "asv-backward or all");
  init->add_option("--format", common.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  init->add_option("--seed", seed, "Seed for --emit-weights");
  init->add_option("--emit-weights", emit_weights, "Sample parameters and write them to this file");

  auto* cmp = app.add_subcommand("compare-methods", "Side-by-side sigma table of all five methods");
  add_arch_flags(cmp, common);
  add_init_flags(cmp, init_flags);
  cmp->add_option("--format", common.format, "text, json or csv")->check(CLI::IsMember({"text", "json", "csv"}));

  auto* sim = app.add_subcommand("simulate", "Monte Carlo check of the predicted variances");
  add_arch_flags(sim, common);
  add_init_flags(sim, init_flags);
  sim->add_option("--method", init_flags.method, "Initialization method (not 'all')");
  sim->add_option("--format", common.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sim->add_option("--seed", seed, "Base seed");
  sim->add_option("--trials", trials, "Parameter draws x input draws, e.g. 8x512");
  sim->add_option("--threshold", threshold, "Largest accepted relative error")->check(CLI::NonNegativeNumber);
  sim->add_option("--direction", direction, "forward, backward, both, or auto (by method)")
      ->check(CLI::IsMember({"auto", "forward", "backward", "both"}));
  sim->add_option("--q0", q0, "Input variance")->check(CLI::PositiveNumber);
  sim->add_option("--rL", rL, "Variance of the injected top gradient")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (*init && init_flags.method == "all" && !emit_weights.empty())
      throw SchemaError("--emit-weights needs a single --method");
    if (*cmp) common.format = cmp->count("--format") ? common.format : "text";
    if (*sim && init_flags.method == "all") throw SchemaError("simulate needs a single --method");

    const Architecture arch = resolve(common);
    const ShapeReport shapes = infer_shapes(arch);

    if (*analyze) {
      Sink sink(common.out_path, out);
      *sink << (common.format == "csv" ? shape_report_csv(shapes) : shape_report_json(shapes));
      return kExitOk;
    }

    if (*init) {
      const auto plans = make_plans(shapes, init_flags);
      {
        Sink sink(common.out_path, out);
        *sink << (common.format == "csv" ? plans_csv(shapes, plans) : plans_json(shapes, plans));
      }
      if (!emit_weights.empty()) {
        const VectorNet net = sample_parameters(Topology::build(arch), plans.front(), seed);
        std::ofstream wf(emit_weights, std::ios::binary);
        if (!wf) throw Error("cannot write '" + emit_weights + "'");
        write_weights(wf, net, plans.front(), seed);
      }
      return kExitOk;
    }

    if (*cmp) {
      InitFlags all = init_flags;
      all.method = "all";
      const auto plans = make_plans(shapes, all);
      Sink sink(common.out_path, out);
      if (common.format == "csv") *sink << sigma_table_csv(plans);
      else if (common.format == "json") *sink << plans_json(shapes, plans);
      else *sink << sigma_table_text(shapes, plans);
      return kExitOk;
    }

    // simulate
    check_format(common.format, {"json", "csv"});
    const auto plans = make_plans(shapes, init_flags);
    const auto [a, b] = parse_trials(trials);
    McConfig cfg;
    cfg.n_param_draws = a;
    cfg.n_input_draws = b;
    cfg.seed = seed;
    cfg.q0 = q0;
    cfg.rL = rL;
    const Method m = plans.front().method;
    if (direction == "auto") {
      direction = (m == Method::AsvForward || m == Method::KaimingForward)     ? "forward"
                  : (m == Method::AsvBackward || m == Method::KaimingBackward) ? "backward"
                                                                               : "both";
    }
    if (1LL * a * b > cfg.budget)
      throw BudgetExceeded(std::to_string(1LL * a * b) + " trials exceed the budget of " + std::to_string(cfg.budget));
    const auto topo = Topology::build(arch);
    const VarianceTrace trace = direction == "forward"    ? estimate_forward(topo, plans.front(), cfg)
                                : direction == "backward" ? estimate_backward(topo, plans.front(), cfg)
                                                          : estimate(topo, plans.front(), cfg);
    const CompareReport rep = compare(trace, threshold);
    Sink sink(common.out_path, out);
    *sink << (common.format == "csv" ? variance_report_csv(trace, rep) : variance_report_json(trace, rep));
    if (!rep.pass) {
      err << "simulate: " << rep.failing.size() << " value(s) outside threshold " << threshold << ":";
      for (const auto& f : rep.failing) err << ' ' << f;
      err << "\n";
      return kExitCheckFailed;
    }
    return kExitOk;
  } catch (const BudgetExceeded& e) {
    err << "asvinit: " << e.what() << " (raise ASV_BUDGET to allow it)\n";
    return kExitBudget;
  } catch (const NumericalError& e) {
    err << "asvinit: " << e.what() << "\n";
    return kExitInternal;
  } catch (const QuadratureFailure& e) {
    err << "asvinit: " << e.what() << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    err << "asvinit: " << e.what() << "\n";
    return kExitBadInput;
  }
}

}  // namespace asv
