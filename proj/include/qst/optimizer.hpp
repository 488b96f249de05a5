#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "qst/simulate.hpp"

// Stochastic pulse search: one randomly chosen segment per iteration gets a
// central finite-difference gradient of the penalized fidelity error, an
// Adam step proposes new amplitudes, and the proposal is kept only if the
// end-of-window fidelity improves. Rejections revert the amplitudes but keep
// the moment vectors and the iteration counter, so the moving averages keep
// their meaning across discarded pulses.

namespace qst {

struct OptimizerConfig {
  double alpha = 1.0;       // learning rate
  double beta1 = 0.9;       // first-moment decay
  double beta2 = 0.999;     // second-moment decay
  double epsilon = 1e-8;    // denominator guard
  double lambda = 0.01;     // amplitude-penalty weight
  double xi = 0.001;        // loss threshold for early termination
  int k_max = 3000;         // iteration cap
  double fd_step = 0.01;    // finite-difference step in amplitude units
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0)) throw std::invalid_argument("optimizer: alpha must be > 0");
    if (!(beta1 >= 0) || beta1 >= 1) throw std::invalid_argument("optimizer: beta1 in [0,1)");
    if (!(beta2 >= 0) || beta2 >= 1) throw std::invalid_argument("optimizer: beta2 in [0,1)");
    if (!(epsilon > 0)) throw std::invalid_argument("optimizer: epsilon must be > 0");
    if (!(lambda >= 0)) throw std::invalid_argument("optimizer: lambda must be >= 0");
    if (!(fd_step > 0)) throw std::invalid_argument("optimizer: fd_step must be > 0");
    if (k_max < 0) throw std::invalid_argument("optimizer: k_max must be >= 0");
  }
};

struct LogRow {
  int k = 0;
  double fidelity = 0.0;  // fidelity of the schedule evaluated this iteration
  double loss = 0.0;
  double c_max = 0.0;
  bool accepted = false;
};

struct OptimizerRun {
  std::vector<double> params;  // current (= best, accepts only improve) amplitudes
  std::vector<double> m, v;    // Adam moment vectors
  int k = 0;                   // last iteration executed
  PulseSchedule best_schedule;
  double best_fidelity = 0.0;
  std::vector<LogRow> log;     // row 0 is the initial schedule's evaluation
  bool aborted = false;
  std::string error;
  double sims_equivalent = 0.0;  // integration work in full-trajectory units
};

// Penalized fidelity error 1 - F(T) + lambda * c_max. The penalty uses the
// realized control maximum, which for flat piecewise schedules is just the
// largest |amplitude|.
inline double loss(const PulseSchedule& schedule, const Scenario& sc, double lambda = 0.01) {
  SimOptions opts;
  opts.n_steps = sc.n_steps;
  opts.markov = sc.markov;
  opts.force_dense = sc.force_dense;
  opts.record_trajectory = false;
  const double f = simulate(sc.chain, sc.bath, schedule, opts).final_fidelity;
  return 1.0 - f + lambda * c_max(schedule, sc.chain);
}

// Central difference of an arbitrary loss functional over one coordinate.
template <class LossFn>
double fd_central(LossFn&& loss_of, const std::vector<double>& params, int coord, double step) {
  if (coord < 0 || coord >= static_cast<int>(params.size()))
    throw std::invalid_argument("fd_central: coordinate out of range");
  if (!(step > 0)) throw std::invalid_argument("fd_central: step must be > 0");
  std::vector<double> up = params, dn = params;
  up[coord] += step;
  dn[coord] -= step;
  return (loss_of(up) - loss_of(dn)) / (2 * step);
}

inline double fd_gradient(const PulseSchedule& schedule, int coord, const Scenario& sc,
                          double fd_step, double lambda = 0.01) {
  return fd_central(
      [&](const std::vector<double>& amps) {
        PulseSchedule probe = schedule;
        probe.amplitudes = amps;
        return loss(probe, sc, lambda);
      },
      schedule.amplitudes, coord, fd_step);
}

// One Adam step over the full amplitude vector: moments update with the
// (mostly zero) gradient, bias correction uses the powered 1 - beta^k form,
// and the proposal moves every coordinate with a live moment estimate.
// Mutates run.m and run.v; the caller owns acceptance of the proposal.
inline std::vector<double> adam_update(OptimizerRun& run, const std::vector<double>& g,
                                       const OptimizerConfig& cfg) {
  if (run.k < 1) throw std::invalid_argument("adam_update: iteration counter must be >= 1");
  const size_t n = run.params.size();
  if (g.size() != n || run.m.size() != n || run.v.size() != n)
    throw std::invalid_argument("adam_update: vector length mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, run.k);
  const double bc2 = 1.0 - std::pow(cfg.beta2, run.k);
  std::vector<double> proposal(n);
  for (size_t j = 0; j < n; ++j) {
    run.m[j] = cfg.beta1 * run.m[j] + (1.0 - cfg.beta1) * g[j];
    run.v[j] = cfg.beta2 * run.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
    const double mhat = run.m[j] / bc1;
    const double vhat = run.v[j] / bc2;
    proposal[j] = run.params[j] - cfg.alpha * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
  return proposal;
}

inline OptimizerRun optimize(const PulseSchedule& initial, const Scenario& sc,
                             const OptimizerConfig& cfg) {
  cfg.validate();
  if (initial.segments() < 1)
    throw std::invalid_argument("optimize: schedule needs at least one segment");
  detail::check_schedule_window(sc.chain, initial, sc.n_steps);
  const int mseg = initial.segments();

  OptimizerRun run;
  run.params = initial.amplitudes;
  run.m.assign(mseg, 0.0);
  run.v.assign(mseg, 0.0);
  run.best_schedule = initial;
  std::mt19937_64 rng(cfg.seed);

  try {
    SegmentCheckpointEvaluator ev(sc.chain, sc.bath, sc.n_steps, sc.markov, sc.force_dense);
    double cur_f = ev.set_current(initial);
    double cur_cmax = c_max(initial);
    double cur_loss = 1.0 - cur_f + cfg.lambda * cur_cmax;
    run.best_fidelity = cur_f;
    run.log.push_back({0, cur_f, cur_loss, cur_cmax, true});

    PulseSchedule cand = initial;
    for (int k = 1; k <= cfg.k_max; ++k) {
      if (cur_loss < cfg.xi) break;
      run.k = k;
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(mseg));

      // Central difference on segment j; probes restart at its boundary.
      cand.amplitudes = run.params;
      cand.amplitudes[j] += cfg.fd_step;
      const double lp = 1.0 - ev.eval_probe(cand, j) + cfg.lambda * c_max(cand);
      cand.amplitudes[j] = run.params[j] - cfg.fd_step;
      const double lm = 1.0 - ev.eval_probe(cand, j) + cfg.lambda * c_max(cand);
      std::vector<double> g(mseg, 0.0);
      g[j] = (lp - lm) / (2 * cfg.fd_step);

      cand.amplitudes = adam_update(run, g, cfg);
      const double f = ev.eval_candidate(cand);
      const double cm = c_max(cand);
      const double lo = 1.0 - f + cfg.lambda * cm;
      const bool accepted = f > cur_f;
      if (accepted) {
        ev.accept();
        run.params = cand.amplitudes;
        run.best_schedule = cand;
        run.best_fidelity = f;
        cur_f = f;
        cur_loss = lo;
        cur_cmax = cm;
      }
      run.log.push_back({k, f, lo, cm, accepted});
    }
    run.sims_equivalent = ev.sims_equivalent();
  } catch (const std::runtime_error& e) {
    run.aborted = true;
    run.error = e.what();
  }
  return run;
}

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_convergence_csv(std::ostream& os, const std::vector<LogRow>& log) {
  os << "k,fidelity,loss,c_max,accepted\n";
  for (const auto& row : log)
    os << row.k << ',' << g17(row.fidelity) << ',' << g17(row.loss) << ',' << g17(row.c_max)
       << ',' << (row.accepted ? 1 : 0) << '\n';
}

}  // namespace qst
