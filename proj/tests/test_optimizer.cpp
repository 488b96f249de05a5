#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qst/optimizer.hpp"

using namespace qst;

namespace {

PulseSchedule piecewise(std::vector<double> amps, double total_time) {
  PulseSchedule s;
  s.mode = PulseMode::FreePiecewise;
  s.amplitudes = std::move(amps);
  s.tau = total_time / s.segments();
  return s;
}

Scenario small_scenario() {
  Scenario sc;
  sc.chain.n_sites = 3;
  sc.bath.gamma_coupling = 0.02;
  sc.bath.gamma_bath = 5.0;
  sc.bath.temperature = 8.0;
  sc.n_steps = 200;
  return sc;
}

}  // namespace

TEST_CASE("optimizer config rejects out-of-range hyperparameters") {
  OptimizerConfig cfg;
  REQUIRE_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.beta1 = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.beta2 = -0.1;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.alpha = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.epsilon = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.fd_step = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lambda = -0.01;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.k_max = -1;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("loss is fidelity error plus the amplitude penalty") {
  const auto sc = small_scenario();
  const auto s = ideal_rect(20.0, sc.chain.total_time / 10, sc.chain.total_time);

  SimOptions opts;
  opts.n_steps = sc.n_steps;
  opts.record_trajectory = false;
  const double f = simulate(sc.chain, sc.bath, s, opts).final_fidelity;

  REQUIRE(loss(s, sc, 0.0) == 1.0 - f);                    // lambda = 0 collapses exactly
  REQUIRE(loss(s, sc, 0.01) == 1.0 - f + 0.01 * 20.0);     // c_max of the +/-20 rectangle
  REQUIRE(loss(s, sc, 0.5) == 1.0 - f + 0.5 * 20.0);
}

TEST_CASE("central differences are exact on quadratics and zero on constants") {
  const std::vector<double> params{5.0, 1.0, -2.0};
  auto quad = [](const std::vector<double>& p) { return (p[0] - 3.0) * (p[0] - 3.0); };
  REQUIRE(std::abs(fd_central(quad, params, 0, 0.01) - 4.0) < 1e-12);
  REQUIRE(fd_central(quad, params, 1, 0.01) == 0.0);  // loss locally constant in coord 1

  auto constant = [](const std::vector<double>&) { return 0.375; };
  REQUIRE(fd_central(constant, params, 2, 0.01) == 0.0);

  REQUIRE_THROWS_AS(fd_central(quad, params, 3, 0.01), std::invalid_argument);
  REQUIRE_THROWS_AS(fd_central(quad, params, 0, 0.0), std::invalid_argument);
}

TEST_CASE("simulator finite differences are self-consistent under step halving") {
  Scenario sc;  // five-site chain, default bath
  sc.n_steps = 1000;
  const auto init = piecewise({10, -10, 10, -10, 10, -10, 10, -10, 10, -10},
                              sc.chain.total_time);
  const double g1 = fd_gradient(init, 3, sc, 0.01);
  const double g2 = fd_gradient(init, 3, sc, 0.005);
  REQUIRE(g1 != 0.0);
  REQUIRE(std::abs(g2 - g1) < 0.05 * std::abs(g1));
}

TEST_CASE("first adam step moves the populated coordinate by -alpha sign(g)") {
  const OptimizerConfig cfg;
  for (double g0 : {2.0, -1.5, 1.0, -37.0, 1e3}) {
    for (int coord : {0, 2}) {
      OptimizerRun run;
      run.params = {1.0, 2.0, 3.0};
      run.m.assign(3, 0.0);
      run.v.assign(3, 0.0);
      run.k = 1;
      std::vector<double> g(3, 0.0);
      g[coord] = g0;
      const auto prop = adam_update(run, g, cfg);
      for (int j = 0; j < 3; ++j) {
        if (j == coord)
          REQUIRE(std::abs(prop[j] - (run.params[j] - cfg.alpha * (g0 > 0 ? 1.0 : -1.0))) < 1e-6);
        else
          REQUIRE(prop[j] == run.params[j]);
      }
      REQUIRE(run.v[coord] >= 0.0);
    }
  }
}

TEST_CASE("adam update with a zero gradient proposes the unchanged amplitudes") {
  const OptimizerConfig cfg;
  OptimizerRun run;
  run.params = {4.0, -7.0};
  run.m.assign(2, 0.0);
  run.v.assign(2, 0.0);
  run.k = 1;
  const auto prop = adam_update(run, std::vector<double>(2, 0.0), cfg);
  REQUIRE(prop == run.params);
  REQUIRE(run.m == std::vector<double>(2, 0.0));

  run.k = 0;  // counter must already be advanced
  REQUIRE_THROWS_AS(adam_update(run, std::vector<double>(2, 0.0), cfg), std::invalid_argument);
  run.k = 1;
  REQUIRE_THROWS_AS(adam_update(run, std::vector<double>(3, 0.0), cfg), std::invalid_argument);
}

TEST_CASE("adam moments and proposals match a frozen five-step reference") {
  // Reference sequence generated independently with IEEE-754 double
  // arithmetic: alpha=1, beta1=0.9, beta2=0.999, eps=1e-8, params start
  // (1,2,3), one populated gradient coordinate per step, proposal accepted
  // every step.
  const OptimizerConfig cfg;
  const int coords[5] = {0, 2, 1, 0, 0};
  const double gvals[5] = {2.0, -1.5, 0.3, -0.7, 1.1};
  const double want_m[5][3] = {
      {0.19999999999999996, 0, 0},
      {0.17999999999999997, 0, -0.14999999999999997},
      {0.16199999999999998, 0.029999999999999992, -0.13499999999999998},
      {0.075800000000000006, 0.026999999999999993, -0.12149999999999998},
      {0.17821999999999999, 0.024299999999999995, -0.10934999999999999}};
  const double want_v[5][3] = {
      {0.0040000000000000036, 0, 0},
      {0.0039960000000000039, 0, 0.002250000000000002},
      {0.0039920040000000039, 9.0000000000000073e-05, 0.0022477500000000019},
      {0.0044780119960000035, 8.9910000000000079e-05, 0.002245502250000002},
      {0.0056835339840040043, 8.9820090000000078e-05, 0.002243256747750002}};
  const double want_p[5][3] = {
      {4.9999999696126451e-09, 2, 3},
      {-0.67005824439732586, 2, 3.7441368165529472},
      {-1.1880152123947245, 1.3611864374649634, 4.3193567312686856},
      {-1.3961758680128884, 0.83790924231124464, 4.7905418835186593},
      {-1.8039628909019134, 0.39562069421994001, 5.1888007797889735}};

  OptimizerRun run;
  run.params = {1.0, 2.0, 3.0};
  run.m.assign(3, 0.0);
  run.v.assign(3, 0.0);
  for (int k = 1; k <= 5; ++k) {
    run.k = k;
    std::vector<double> g(3, 0.0);
    g[coords[k - 1]] = gvals[k - 1];
    const auto prop = adam_update(run, g, cfg);
    for (int j = 0; j < 3; ++j) {
      REQUIRE(std::abs(run.m[j] - want_m[k - 1][j]) < 1e-12);
      REQUIRE(std::abs(run.v[j] - want_v[k - 1][j]) < 1e-12);
      REQUIRE(std::abs(prop[j] - want_p[k - 1][j]) < 1e-12);
    }
    run.params = prop;
  }
}

TEST_CASE("optimization runs are deterministic and monotone in best fidelity") {
  const auto sc = small_scenario();
  const auto init = piecewise({4, -4, 4, -4, 4, -4, 4, -4, 4, -4}, sc.chain.total_time);
  OptimizerConfig cfg;
  cfg.k_max = 40;
  cfg.seed = 7;

  const auto a = optimize(init, sc, cfg);
  const auto b = optimize(init, sc, cfg);
  REQUIRE_FALSE(a.aborted);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    REQUIRE(a.log[i].k == b.log[i].k);
    REQUIRE(a.log[i].fidelity == b.log[i].fidelity);  // bit-identical
    REQUIRE(a.log[i].loss == b.log[i].loss);
    REQUIRE(a.log[i].c_max == b.log[i].c_max);
    REQUIRE(a.log[i].accepted == b.log[i].accepted);
  }
  REQUIRE(a.params == b.params);

  // Initial row, then one row per iteration up to the cap.
  REQUIRE(a.log.front().k == 0);
  REQUIRE(a.log.front().accepted);
  REQUIRE(a.log.size() == size_t(cfg.k_max) + 1);
  REQUIRE(a.k == cfg.k_max);

  // Reconstruct the running best from the log: accepted rows never regress,
  // and the run's best matches.
  double best = a.log.front().fidelity;
  for (const auto& row : a.log) {
    if (row.accepted && row.k > 0) {
      REQUIRE(row.fidelity > best);
      best = row.fidelity;
    }
  }
  REQUIRE(a.best_fidelity == best);
  REQUIRE(a.best_fidelity >= a.log.front().fidelity);
  // Accepts only ever improve, so the current amplitudes ARE the best ones.
  REQUIRE(a.best_schedule.amplitudes == a.params);

  // A second seed explores a different path but obeys the same guard.
  OptimizerConfig cfg2 = cfg;
  cfg2.seed = 8;
  const auto c = optimize(init, sc, cfg2);
  REQUIRE(c.best_fidelity >= c.log.front().fidelity);
}

TEST_CASE("optimization stops once the loss threshold or iteration cap is hit") {
  const auto sc = small_scenario();
  const auto init = piecewise({4, -4, 4, -4}, sc.chain.total_time);
  OptimizerConfig cfg;
  cfg.k_max = 25;

  cfg.xi = std::numeric_limits<double>::infinity();
  const auto immediate = optimize(init, sc, cfg);
  REQUIRE(immediate.log.size() == 1);  // initial evaluation only
  REQUIRE(immediate.k == 0);

  cfg.xi = 0.001;
  cfg.k_max = 0;
  const auto capped = optimize(init, sc, cfg);
  REQUIRE(capped.log.size() == 1);
  REQUIRE_FALSE(capped.aborted);
}

TEST_CASE("integration blowups abort the run and keep the partial log") {
  auto sc = small_scenario();
  sc.bath.gamma_bath = 4e5;  // bath pole far outside the RK4 stability disc
  sc.n_steps = 10;           // dt ~ 0.314: the memory ODEs overflow within the window
  const auto init = piecewise({4, -4, 4, -4, 4, -4, 4, -4, 4, -4}, sc.chain.total_time);
  OptimizerConfig cfg;
  cfg.k_max = 15;
  const auto run = optimize(init, sc, cfg);
  REQUIRE(run.aborted);
  REQUIRE_FALSE(run.error.empty());

  // Shape errors are caller bugs and still throw.
  auto misaligned = piecewise({4, -4, 4}, sc.chain.total_time);
  sc.n_steps = 200;
  REQUIRE_THROWS_AS(optimize(misaligned, sc, cfg), std::invalid_argument);
}

TEST_CASE("the amplitude penalty steers gradients against the loudest segment") {
  // The penalty enters through the gradient: probing the unique largest
  // amplitude changes c_max by +/- the probe step, so the gradient gains
  // exactly lambda relative to the unpenalized one. Off-maximum segments
  // leave c_max untouched and gain nothing.
  auto sc = small_scenario();
  auto s = piecewise({4, -4, 4, -4, 4, -4, 4, -4, 4, -4}, sc.chain.total_time);
  s.amplitudes[2] = 5.0;  // unique maximum
  const double lambda = 0.2;
  const double g_pen = fd_gradient(s, 2, sc, 0.01, lambda);
  const double g_raw = fd_gradient(s, 2, sc, 0.01, 0.0);
  REQUIRE(std::abs((g_pen - g_raw) - lambda) < 1e-9);

  const double o_pen = fd_gradient(s, 5, sc, 0.01, lambda);
  const double o_raw = fd_gradient(s, 5, sc, 0.01, 0.0);
  REQUIRE(std::abs(o_pen - o_raw) < 1e-9);
}

TEST_CASE("raising the amplitude penalty tenfold never raises converged c_max") {
  Scenario sc;  // default five-site chain and bath
  sc.n_steps = 1000;
  const auto init = piecewise({10, -10, 10, -10, 10, -10, 10, -10, 10, -10},
                              sc.chain.total_time);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    OptimizerConfig lo;
    lo.k_max = 50;
    lo.seed = seed;
    OptimizerConfig hi = lo;
    hi.lambda = lo.lambda * 10;
    const auto rl = optimize(init, sc, lo);
    const auto rh = optimize(init, sc, hi);
    REQUIRE_FALSE(rl.aborted);
    REQUIRE_FALSE(rh.aborted);
    REQUIRE(c_max(rh.best_schedule) <= c_max(rl.best_schedule) + 1e-12);
  }
}

TEST_CASE("convergence log serializes with the fixed header and full precision") {
  std::vector<LogRow> log{{0, 0.5, 0.6, 10.0, true},
                          {1, 0.4999999999999999, 0.7000000000000001, 10.01, false}};
  std::ostringstream os;
  write_convergence_csv(os, log);
  const std::string text = os.str();
  REQUIRE(text.rfind("k,fidelity,loss,c_max,accepted\n", 0) == 0);
  REQUIRE(text.find("0,0.5,") != std::string::npos);
  REQUIRE(text.find("0.49999999999999989") != std::string::npos);  // %.17g round trip
  REQUIRE(text.find(",1\n") != std::string::npos);
  REQUIRE(text.find(",0\n") != std::string::npos);
}
