// Command-line front end: simulate / optimize / sweep / gap / calibrate.
// Flags mirror the manifest fields one-to-one, a flat key=value config file
// can preload any of them (command-line values win), and every error leaves a
// single machine-readable JSON line on stderr with a nonzero exit code.

#include <qst/harness.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace {

using namespace qst;

struct CliOptions {
  ExperimentSpec spec = default_experiment();
  std::string lindblad = "lowering";
  std::string oz_source = "zero-delay";
  std::string control = "ideal";
  std::optional<int> steps;
  std::optional<double> dt;
  std::string out;
  int workers = std::max(1u, std::thread::hardware_concurrency());
  // sweep
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  std::vector<std::string> arm_names = {"none", "ideal", "adam"};
  // gap
  int gap_samples = 96;
  // calibrate
  double cal_target = 0.99;
  double cal_lo = 0.1;
  double cal_hi = 2.0;
  int cal_points = 96;
};

// The config option lives on the root app, but the options it should fill
// live on whichever subcommand parsed. CLI11 reports config keys relative to
// the app owning the config option, so reparent flat keys onto the parsed
// subcommand; values given on the command line keep priority because config
// items never overwrite non-empty options.
class FlatConfig : public CLI::ConfigBase {
 public:
  explicit FlatConfig(const CLI::App* root) : root_(root) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigBase::from_config(input);
    const auto parsed = root_->get_subcommands();
    if (!parsed.empty()) {
      const std::string name = parsed.front()->get_name();
      for (auto& item : items)
        if (item.parents.empty()) item.parents.push_back(name);
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

void add_common(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--n-sites", o.spec.scenario.chain.n_sites, "chain length N")
      ->capture_default_str();
  cmd->add_option("--coupling", o.spec.scenario.chain.coupling, "hopping strength J")
      ->capture_default_str();
  cmd->add_option("--h-m", o.spec.scenario.chain.field_slope, "site field slope h_m")
      ->capture_default_str();
  cmd->add_option("--total-time", o.spec.scenario.chain.total_time, "evolution window T")
      ->capture_default_str();
  cmd->add_option("--gamma-coupling", o.spec.scenario.bath.gamma_coupling,
                  "system-bath coupling strength")
      ->capture_default_str();
  cmd->add_option("--gamma-bath", o.spec.scenario.bath.gamma_bath,
                  "bath frequency (inverse memory time)")
      ->capture_default_str();
  cmd->add_option("--temperature", o.spec.scenario.bath.temperature, "bath temperature")
      ->capture_default_str();
  cmd->add_option("--lindblad", o.lindblad, "coupling operator")
      ->check(CLI::IsMember({"lowering", "x", "z"}))
      ->capture_default_str();
  cmd->add_flag("--normalized-lowering", o.spec.scenario.bath.normalized_lowering,
                "use the 1/2-normalized lowering convention");
  cmd->add_option("--oz-source", o.oz_source, "memory-operator source coefficient variant")
      ->check(CLI::IsMember({"zero-delay", "gamma-squared"}))
      ->capture_default_str();
  cmd->add_option("--control", o.control, "control arm")
      ->check(CLI::IsMember({"none", "ideal", "gap-tuned", "adam"}))
      ->capture_default_str();
  cmd->add_option("--pulse-strength", o.spec.pulse_strength, "rectangle amplitude I")
      ->capture_default_str();
  cmd->add_option("--tau", o.spec.tau, "control half-period")->capture_default_str();
  cmd->add_option("--gap-floor", o.spec.gap_floor, "lower bound on the gap divisor")
      ->capture_default_str();
  cmd->add_option("--steps", o.steps, "integration steps over T");
  cmd->add_option("--dt", o.dt, "step size (alternative to --steps; --steps wins)");
  cmd->add_flag("--markov", o.spec.scenario.markov, "integrate the memoryless limit");
  cmd->add_flag("--force-dense", o.spec.scenario.force_dense, "skip the sector-blocked path");
  cmd->add_option("--stride", o.spec.sample_stride, "record every this many steps")
      ->capture_default_str();
  cmd->add_option("--seed", o.spec.optimizer.seed, "optimizer coordinate-pick seed")
      ->capture_default_str();
  cmd->add_option("--out", o.out, "output file (default: stdout)");
}

void add_optimizer(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--alpha", o.spec.optimizer.alpha, "learning rate")->capture_default_str();
  cmd->add_option("--beta1", o.spec.optimizer.beta1, "first-moment decay")->capture_default_str();
  cmd->add_option("--beta2", o.spec.optimizer.beta2, "second-moment decay")
      ->capture_default_str();
  cmd->add_option("--epsilon", o.spec.optimizer.epsilon, "denominator guard")
      ->capture_default_str();
  cmd->add_option("--lambda", o.spec.optimizer.lambda, "control-maximum penalty weight")
      ->capture_default_str();
  cmd->add_option("--xi", o.spec.optimizer.xi, "loss threshold for early stop")
      ->capture_default_str();
  cmd->add_option("--k-max", o.spec.optimizer.k_max, "iteration budget")->capture_default_str();
  cmd->add_option("--fd-step", o.spec.optimizer.fd_step, "finite-difference probe size")
      ->capture_default_str();
}

// Flags hold strings and optionals; fold them into the spec after parsing.
void resolve(CliOptions& o) {
  o.spec.scenario.bath.kind = lindblad_kind_from_name(o.lindblad);
  o.spec.scenario.bath.oz_source = oz_source_from_name(o.oz_source);
  o.spec.control_arm = control_arm_from_name(o.control);
  if (o.steps) {
    o.spec.scenario.n_steps = *o.steps;
  } else if (o.dt) {
    if (!(*o.dt > 0)) throw std::invalid_argument("--dt must be > 0");
    o.spec.scenario.n_steps =
        static_cast<int>(std::llround(o.spec.scenario.chain.total_time / *o.dt));
  }
  o.spec.output_path = o.out;
}

template <class Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open output file: " + path);
  fn(os);
}

void print_summary(const nlohmann::json& j) { std::cout << j.dump() << "\n"; }

int run_simulate(CliOptions& o) {
  const auto rec = run_fidelity_trace(o.spec);
  with_output(o.out, [&](std::ostream& os) { write_run_csv(os, rec); });
  if (!o.out.empty())
    print_summary({{"final_fidelity", rec.final_fidelity},
                   {"c_max", rec.c_max},
                   {"wall_seconds", rec.wall_seconds},
                   {"failed", rec.failed},
                   {"out", o.out}});
  return rec.failed ? 1 : 0;
}

int run_optimize(CliOptions& o) {
  o.spec.control_arm = ControlArm::AdamOptimized;
  const auto rec = run_fidelity_trace(o.spec);
  with_output(o.out,
              [&](std::ostream& os) { write_convergence_csv(os, rec.manifest, rec.convergence); });
  nlohmann::json summary{{"final_fidelity", rec.final_fidelity},
                         {"c_max", rec.c_max},
                         {"iterations", rec.convergence.empty() ? 0 : rec.convergence.back().k},
                         {"wall_seconds", rec.wall_seconds},
                         {"failed", rec.failed}};
  if (rec.failed) summary["error"] = rec.error;
  summary["amplitudes"] = rec.schedule.amplitudes;
  if (!o.out.empty()) print_summary(summary);
  return rec.failed ? 1 : 0;
}

int run_sweep_cmd(CliOptions& o) {
  if (o.sweep_param.empty()) throw std::invalid_argument("sweep: --sweep-param is required");
  o.spec.sweep.parameter = sweep_parameter_from_name(o.sweep_param);
  if (o.spec.sweep.parameter == SweepParameter::Kind) {
    if (o.sweep_values.empty()) {
      o.spec.sweep.kinds = default_sweep_kinds();
    } else {
      for (const auto& v : o.sweep_values)
        o.spec.sweep.kinds.push_back(lindblad_kind_from_name(v));
    }
  } else if (o.sweep_values.empty()) {
    o.spec.sweep.values = default_sweep_values(o.spec.sweep.parameter);
  } else {
    for (const auto& v : o.sweep_values) o.spec.sweep.values.push_back(std::stod(v));
  }

  std::vector<ControlArm> arms;
  for (const auto& name : o.arm_names) arms.push_back(control_arm_from_name(name));

  const auto records = run_sweep(o.spec, arms, o.workers);
  with_output(o.out,
              [&](std::ostream& os) { write_sweep_csv(os, spec_to_manifest(o.spec), records); });
  int failed = 0;
  for (const auto& r : records) failed += r.failed ? 1 : 0;
  if (!o.out.empty())
    print_summary({{"points", o.spec.sweep.points()},
                   {"records", records.size()},
                   {"failed_records", failed},
                   {"out", o.out}});
  return 0;  // per-point failures are data, not a sweep failure
}

int run_gap(CliOptions& o) {
  if (o.gap_samples < 2) throw std::invalid_argument("gap: --samples must be >= 2");
  const auto& chain = o.spec.scenario.chain;
  chain.validate();
  with_output(o.out, [&](std::ostream& os) {
    os << "t,gap\n";
    for (int i = 0; i < o.gap_samples; ++i) {
      const double t = chain.total_time * i / (o.gap_samples - 1);
      os << g17(t) << ',' << g17(energy_gap(t, chain)) << '\n';
    }
  });
  return 0;
}

int run_calibrate(CliOptions& o) {
  const auto cal =
      calibrate_hm(o.cal_target, o.cal_lo, o.cal_hi, o.cal_points, o.steps.value_or(2000));
  if (!o.out.empty()) {
    with_output(o.out, [&](std::ostream& os) {
      os << "h_m,fidelity\n";
      for (const auto& [h, f] : cal.scan) os << g17(h) << ',' << g17(f) << '\n';
    });
  }
  print_summary({{"field_slope", cal.field_slope},
                 {"fidelity", cal.fidelity},
                 {"succeeded", cal.succeeded},
                 {"target", o.cal_target}});
  return 0;
}

void print_error(const std::string& message) {
  nlohmann::json j{{"status", "error"}, {"message", message}};
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driven spin-chain state-transmission simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // inherited by the subcommands: --config may follow them
  app.config_formatter(std::make_shared<FlatConfig>(&app));
  app.set_config("--config", "", "flat key=value config file; command-line flags win");
  CliOptions o;

  auto* sim = app.add_subcommand("simulate", "integrate one scenario and emit the F(t) trace");
  add_common(sim, o);
  add_optimizer(sim, o);

  auto* opt = app.add_subcommand("optimize", "run the pulse optimizer and emit convergence");
  add_common(opt, o);
  add_optimizer(opt, o);

  auto* swp = app.add_subcommand("sweep", "run a parameter sweep over the control arms");
  add_common(swp, o);
  add_optimizer(swp, o);
  swp->add_option("--sweep-param", o.sweep_param, "swept parameter")
      ->check(CLI::IsMember({"gamma-coupling", "gamma-bath", "temperature", "n-sites",
                             "lindblad"}));
  swp->add_option("--sweep-values", o.sweep_values,
                  "explicit sweep values (default: the stock grid)");
  swp->add_option("--arms", o.arm_names, "control arms to run at each point")
      ->capture_default_str();
  swp->add_option("--workers", o.workers, "thread pool size")->capture_default_str();

  auto* gap = app.add_subcommand("gap", "sample the lowest spectral gap over [0, T]");
  add_common(gap, o);
  gap->add_option("--samples", o.gap_samples, "number of sample times")->capture_default_str();

  auto* cal = app.add_subcommand("calibrate", "scan h_m for the best closed-system transfer");
  add_common(cal, o);
  cal->add_option("--target", o.cal_target, "fidelity the scan should reach")
      ->capture_default_str();
  cal->add_option("--lo", o.cal_lo, "scan range lower edge")->capture_default_str();
  cal->add_option("--hi", o.cal_hi, "scan range upper edge")->capture_default_str();
  cal->add_option("--points", o.cal_points, "scan grid size")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error(e.what());
    return 2;
  }

  try {
    resolve(o);
    if (sim->parsed()) return run_simulate(o);
    if (opt->parsed()) return run_optimize(o);
    if (swp->parsed()) return run_sweep_cmd(o);
    if (gap->parsed()) return run_gap(o);
    if (cal->parsed()) return run_calibrate(o);
    throw std::logic_error("no subcommand dispatched");
  } catch (const std::exception& e) {
    print_error(e.what());
    return 1;
  }
}
