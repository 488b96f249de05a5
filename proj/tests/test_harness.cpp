#include <catch2/catch_amalgamated.hpp>

#include <qst/harness.hpp>

#include <cmath>
#include <complex>
#include <sstream>

using namespace qst;

namespace {

// Independent closed-system fidelity: full-dimension midpoint-exponential
// propagation of the controlled Hamiltonian, no sector tricks. Used as the
// oracle for the calibration scan and the Markov zero-coupling limit.
double closed_fidelity_dense(const ChainConfig& chain, const PulseSchedule& sched, int n_steps) {
  const auto sv = transfer_states(chain.n_sites);
  auto h_of_t = [&](double t) -> Mat { return apply_control(t, sched, chain); };
  Vec psi = closed_propagate(sv.initial, chain.total_time, h_of_t, n_steps);
  return std::abs((sv.target.adjoint() * psi)(0, 0));
}

double calibration_oracle_fidelity(double field_slope, int n_steps) {
  ChainConfig chain;
  chain.n_sites = 5;
  chain.total_time = kPi;
  chain.field_slope = field_slope;
  const auto sched = ideal_rect(20.0, kPi / 10, kPi);
  return closed_fidelity_dense(chain, sched, n_steps);
}

ExperimentSpec small_open_spec() {
  ExperimentSpec spec = default_experiment();
  spec.scenario.chain.n_sites = 3;
  spec.scenario.bath.gamma_coupling = 0.02;
  spec.scenario.bath.gamma_bath = 5.0;
  spec.scenario.bath.temperature = 8.0;
  spec.scenario.n_steps = 200;
  return spec;
}

}  // namespace

TEST_CASE("enum names round-trip and reject unknowns") {
  for (auto arm : {ControlArm::None, ControlArm::IdealRect, ControlArm::GapTuned,
                   ControlArm::AdamOptimized})
    REQUIRE(control_arm_from_name(control_arm_name(arm)) == arm);
  for (auto kind : {LindbladKind::CollectiveLowering, LindbladKind::CollectiveX,
                    LindbladKind::CollectiveZ})
    REQUIRE(lindblad_kind_from_name(lindblad_kind_name(kind)) == kind);
  for (auto v : {OzSourceVariant::ZeroDelay, OzSourceVariant::GammaSquared})
    REQUIRE(oz_source_from_name(oz_source_name(v)) == v);
  for (auto p : {SweepParameter::GammaCoupling, SweepParameter::GammaBath,
                 SweepParameter::Temperature, SweepParameter::NSites, SweepParameter::Kind})
    REQUIRE(sweep_parameter_from_name(sweep_parameter_name(p)) == p);

  REQUIRE_THROWS_AS(control_arm_from_name("bogus"), std::invalid_argument);
  REQUIRE_THROWS_AS(lindblad_kind_from_name(""), std::invalid_argument);
  REQUIRE_THROWS_AS(oz_source_from_name("fast"), std::invalid_argument);
  REQUIRE_THROWS_AS(sweep_parameter_from_name("coupling"), std::invalid_argument);
}

TEST_CASE("manifest round trip preserves every field") {
  ExperimentSpec spec;
  spec.scenario.chain.n_sites = 4;
  spec.scenario.chain.coupling = -0.8;
  spec.scenario.chain.field_slope = 0.9;
  spec.scenario.chain.total_time = 2.5;
  spec.scenario.bath.gamma_coupling = 0.02;
  spec.scenario.bath.gamma_bath = 7.0;
  spec.scenario.bath.temperature = 3.0;
  spec.scenario.bath.kind = LindbladKind::CollectiveZ;
  spec.scenario.bath.normalized_lowering = true;
  spec.scenario.bath.oz_source = OzSourceVariant::GammaSquared;
  spec.scenario.n_steps = 300;
  spec.scenario.markov = true;
  spec.scenario.force_dense = true;
  spec.control_arm = ControlArm::GapTuned;
  spec.pulse_strength = 11.0;
  spec.tau = 0.25;
  spec.gap_floor = 0.2;
  spec.optimizer.alpha = 0.5;
  spec.optimizer.beta1 = 0.8;
  spec.optimizer.beta2 = 0.99;
  spec.optimizer.epsilon = 1e-9;
  spec.optimizer.lambda = 0.02;
  spec.optimizer.xi = 0.002;
  spec.optimizer.k_max = 77;
  spec.optimizer.fd_step = 0.03;
  spec.optimizer.seed = 42;
  spec.sample_stride = 7;
  spec.output_path = "out.csv";
  spec.sweep.parameter = SweepParameter::Temperature;
  spec.sweep.values = {1.0, 2.0, 3.25};

  const auto manifest = spec_to_manifest(spec);
  const auto back = spec_from_manifest(manifest);
  REQUIRE(spec_to_manifest(back) == manifest);
  REQUIRE(back.scenario.chain.coupling == spec.scenario.chain.coupling);
  REQUIRE(back.scenario.bath.oz_source == OzSourceVariant::GammaSquared);
  REQUIRE(back.sweep.values == spec.sweep.values);
  REQUIRE(manifest.at("version").get<std::string>() == kArtifactVersion);

  // Lindblad-kind sweeps carry names instead of numbers.
  ExperimentSpec ks;
  ks.sweep.parameter = SweepParameter::Kind;
  ks.sweep.kinds = {LindbladKind::CollectiveLowering, LindbladKind::CollectiveX,
                    LindbladKind::CollectiveZ};
  const auto km = spec_to_manifest(ks);
  const auto kback = spec_from_manifest(km);
  REQUIRE(kback.sweep.parameter == SweepParameter::Kind);
  REQUIRE(kback.sweep.kinds == ks.sweep.kinds);
  REQUIRE(spec_to_manifest(kback) == km);

  // No sweep block when there is nothing to sweep.
  REQUIRE_FALSE(spec_to_manifest(default_experiment()).contains("sweep"));
}

TEST_CASE("calibration scan matches a dense-propagation oracle") {
  const auto cal = calibrate_hm(0.99, 0.1, 2.0);
  REQUIRE(cal.scan.size() == 96);
  REQUIRE(cal.succeeded);
  REQUIRE(cal.fidelity >= 0.99);
  REQUIRE(cal.field_slope == Catch::Approx(0.74).margin(1e-9));

  // The sector-restricted propagation must agree with the full-space closed
  // propagator at matching resolution.
  for (double h : {0.5, 0.74, 1.5}) {
    const double dense = calibration_oracle_fidelity(h, 2000);
    double scanned = -1.0;
    for (const auto& [slope, f] : cal.scan)
      if (std::abs(slope - h) < 1e-12) scanned = f;
    REQUIRE(scanned >= 0.0);
    REQUIRE(scanned == Catch::Approx(dense).margin(1e-9));
  }

  // Independent argmax over a coarse subgrid picks the same winner region.
  double best_h = 0.0, best_f = -1.0;
  for (int i = 0; i < 96; i += 4) {
    const double h = 0.1 + (2.0 - 0.1) * i / 95.0;
    const double f = calibration_oracle_fidelity(h, 800);
    if (f > best_f) {
      best_f = f;
      best_h = h;
    }
  }
  // The subgrid contains gridpoint 32 (= 0.74) because 32 % 4 == 0.
  REQUIRE(best_h == Catch::Approx(cal.field_slope).margin(1e-12));
}

TEST_CASE("calibration handles degenerate ranges, failure targets, and repeats") {
  const auto point = calibrate_hm(0.5, 0.74, 0.74, 5);
  REQUIRE(point.scan.size() == 1);
  REQUIRE(point.field_slope == 0.74);
  REQUIRE(point.succeeded);

  const auto miss = calibrate_hm(0.9999, 0.1, 2.0, 24);
  REQUIRE_FALSE(miss.succeeded);
  REQUIRE(miss.fidelity > 0.0);
  REQUIRE(miss.field_slope > 0.0);

  const auto a = calibrate_hm(0.99, 0.5, 1.0, 16);
  const auto b = calibrate_hm(0.99, 0.5, 1.0, 16);
  REQUIRE(a.field_slope == b.field_slope);
  REQUIRE(a.fidelity == b.fidelity);
  REQUIRE(a.scan == b.scan);

  REQUIRE_THROWS_AS(calibrate_hm(0.9, 2.0, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(calibrate_hm(0.9, 0.1, 2.0, 0), std::invalid_argument);
}

TEST_CASE("fidelity trace reproduces the closed-system benchmark") {
  ExperimentSpec spec = default_experiment();
  spec.scenario.bath.gamma_coupling = 0.0;
  spec.scenario.n_steps = 2000;

  const auto rec = run_fidelity_trace(spec);
  REQUIRE_FALSE(rec.failed);
  REQUIRE(rec.final_fidelity >= 0.99);
  REQUIRE(rec.final_fidelity == Catch::Approx(0.9961).margin(2e-3));
  REQUIRE(rec.trajectory.size() == 201);
  REQUIRE(rec.trajectory.front().t == 0.0);
  REQUIRE(rec.trajectory.front().fidelity == 0.0);
  REQUIRE(rec.trajectory.back().fidelity == rec.final_fidelity);
  REQUIRE(rec.c_max == 20.0);
  REQUIRE(rec.wall_seconds > 0.0);
  for (const auto& p : rec.trajectory) {
    REQUIRE(std::abs(p.trace - 1.0) < 1e-6);
    REQUIRE(p.min_eig > -1e-6);  // truncation dips scale as dt^4; -3e-7 at this dt
  }

  // The manifest alone must reproduce the run bit-exactly.
  const auto back = spec_from_manifest(rec.manifest);
  const auto rerun = run_fidelity_trace(back);
  REQUIRE(rerun.final_fidelity == rec.final_fidelity);
  REQUIRE(rerun.trajectory.size() == rec.trajectory.size());
  for (size_t i = 0; i < rec.trajectory.size(); ++i) {
    REQUIRE(rerun.trajectory[i].t == rec.trajectory[i].t);
    REQUIRE(rerun.trajectory[i].fidelity == rec.trajectory[i].fidelity);
  }
}

TEST_CASE("fidelity trace shows the open-system degradation") {
  ExperimentSpec spec = default_experiment();  // bath defaults: 0.01, 20, 20
  spec.scenario.n_steps = 1000;
  const auto rec = run_fidelity_trace(spec);
  REQUIRE_FALSE(rec.failed);

  ExperimentSpec closed = spec;
  closed.scenario.bath.gamma_coupling = 0.0;
  const double f_closed = run_fidelity_trace(closed).final_fidelity;

  INFO("open F(T) = " << rec.final_fidelity << ", closed = " << f_closed);
  const bool in_window = std::abs(rec.final_fidelity - 0.56041) <= 0.05;
  const bool degraded = rec.final_fidelity < 0.7 && f_closed - rec.final_fidelity >= 0.3;
  REQUIRE((in_window || degraded));
  for (const auto& p : rec.trajectory) REQUIRE(std::abs(p.trace - 1.0) < 1e-6);
}

TEST_CASE("gap-tuned arm produces a bounded realized control") {
  ExperimentSpec spec = default_experiment();
  spec.scenario.bath.gamma_coupling = 0.0;
  // The floored gap boosts the pulse to ~200x, so the integrator needs far
  // finer steps than the flat-rectangle arms to stay in RK4's stability region.
  spec.scenario.n_steps = 5000;
  spec.control_arm = ControlArm::GapTuned;
  const auto rec = run_fidelity_trace(spec);
  REQUIRE_FALSE(rec.failed);
  REQUIRE(rec.schedule.mode == PulseMode::GapTuned);
  REQUIRE(rec.c_max > 20.0);  // gap < 1 near the crossing boosts the pulse
  REQUIRE(rec.c_max <= 20.0 / spec.gap_floor + 1e-9);
  REQUIRE(rec.final_fidelity > 0.0);
  REQUIRE(rec.final_fidelity <= 1.0 + 1e-12);
}

TEST_CASE("improvement is zero for identical arms") {
  ExperimentSpec spec = small_open_spec();
  spec.pulse_strength = 10.0;  // seed guess coincides with the ideal arm
  spec.optimizer.k_max = 0;
  const auto detail = improvement_detail(spec);
  REQUIRE(detail.value == 0.0);
  REQUIRE(detail.adam.final_fidelity == detail.ideal.final_fidelity);
  REQUIRE(improvement(spec) == 0.0);
}

TEST_CASE("improvement is non-negative when optimizing") {
  ExperimentSpec spec = small_open_spec();
  spec.optimizer.k_max = 8;
  spec.optimizer.alpha = 0.5;
  spec.optimizer.seed = 3;
  const auto detail = improvement_detail(spec);
  REQUIRE(detail.value >= 0.0);
  REQUIRE(detail.adam.final_fidelity >= detail.ideal.final_fidelity);
  REQUIRE(detail.adam.convergence.size() >= 1);
  REQUIRE(detail.adam.convergence.front().k == 0);
}

TEST_CASE("sweeps cover every value and arm and continue past failures") {
  ExperimentSpec spec = small_open_spec();
  spec.sweep.parameter = SweepParameter::GammaBath;
  spec.sweep.values = {5.0, 4e5};  // the second point overflows the memory ODE

  const auto recs = run_sweep(spec, {ControlArm::IdealRect});
  REQUIRE(recs.size() == 2);
  REQUIRE_FALSE(recs[0].failed);
  REQUIRE(recs[1].failed);
  REQUIRE_FALSE(recs[1].error.empty());
  REQUIRE(recs[0].manifest.at("sweep_point").at("index").get<int>() == 0);
  REQUIRE(recs[1].manifest.at("sweep_point").at("value").get<double>() == 4e5);
  REQUIRE(recs[1].manifest.at("bath").at("gamma_bath").get<double>() == 4e5);

  ExperimentSpec bad = spec;
  bad.sweep.parameter = SweepParameter::None;
  REQUIRE_THROWS_AS(run_sweep(bad, {ControlArm::IdealRect}), std::invalid_argument);

  ExperimentSpec empty = spec;
  empty.sweep.values.clear();
  REQUIRE(run_sweep(empty, {ControlArm::IdealRect}).empty());
  std::ostringstream os;
  write_sweep_csv(os, spec_to_manifest(empty), {});
  const auto text = os.str();
  REQUIRE(text.rfind("# manifest: ", 0) == 0);
  REQUIRE(text.find("parameter,value,arm,final_fidelity,c_max,improvement,status\n") !=
          std::string::npos);
}

TEST_CASE("sweep results are independent of worker count") {
  ExperimentSpec spec = small_open_spec();
  spec.optimizer.k_max = 5;
  spec.optimizer.seed = 11;
  spec.sweep.parameter = SweepParameter::GammaCoupling;
  spec.sweep.values = {0.005, 0.02, 0.03};

  const auto arms = default_sweep_arms();
  REQUIRE(arms.size() == 3);
  const auto one = run_sweep(spec, arms, 1);
  const auto two = run_sweep(spec, arms, 2);
  REQUIRE(one.size() == 9);
  REQUIRE(two.size() == 9);

  std::ostringstream csv1, csv2;
  write_sweep_csv(csv1, spec_to_manifest(spec), one);
  write_sweep_csv(csv2, spec_to_manifest(spec), two);
  REQUIRE(csv1.str() == csv2.str());

  // Uncontrolled fidelity decays with stronger bath coupling.
  std::vector<double> f_none;
  std::vector<double> ims;
  for (const auto& r : one) {
    const auto arm = r.manifest.at("control").at("arm").get<std::string>();
    if (arm == "none") f_none.push_back(r.final_fidelity);
    if (arm == "adam") {
      REQUIRE(r.improvement.has_value());
      ims.push_back(*r.improvement);
    } else {
      REQUIRE_FALSE(r.improvement.has_value());
    }
  }
  REQUIRE(f_none.size() == 3);
  REQUIRE(f_none[0] > f_none[1]);
  REQUIRE(f_none[1] > f_none[2]);
  for (double im : ims) REQUIRE(im >= 0.0);
}

TEST_CASE("lindblad-kind sweeps run each coupling operator") {
  ExperimentSpec spec = small_open_spec();
  spec.sweep.parameter = SweepParameter::Kind;
  spec.sweep.kinds = {LindbladKind::CollectiveLowering, LindbladKind::CollectiveX,
                      LindbladKind::CollectiveZ};
  const auto recs = run_sweep(spec, {ControlArm::IdealRect});
  REQUIRE(recs.size() == 3);
  for (const auto& r : recs) REQUIRE_FALSE(r.failed);
  REQUIRE(recs[1].manifest.at("bath").at("lindblad").get<std::string>() == "x");
  REQUIRE(recs[1].manifest.at("sweep_point").at("value").get<std::string>() == "x");

  std::ostringstream os;
  write_sweep_csv(os, spec_to_manifest(spec), recs);
  REQUIRE(os.str().find("lindblad,x,ideal,") != std::string::npos);
}

TEST_CASE("markov comparison reduces to closed evolution at zero coupling") {
  ExperimentSpec spec = default_experiment();
  spec.scenario.chain.n_sites = 3;
  spec.scenario.bath.gamma_coupling = 0.0;
  spec.scenario.n_steps = 600;
  spec.pulse_strength = 10.0;
  spec.optimizer.k_max = 0;

  const auto cmp = markov_comparison(spec);
  REQUIRE(cmp.none.manifest.at("integrator").at("markov").get<bool>());
  REQUIRE(cmp.ideal.manifest.at("integrator").at("markov").get<bool>());

  const PulseSchedule off;
  const auto ideal = ideal_rect(10.0, spec.tau, spec.scenario.chain.total_time);
  const double f_none_closed = closed_fidelity_dense(spec.scenario.chain, off, 600);
  const double f_ideal_closed = closed_fidelity_dense(spec.scenario.chain, ideal, 600);
  REQUIRE(cmp.none.final_fidelity == Catch::Approx(f_none_closed).margin(1e-6));
  // The driven arm runs RK4 against an exact exponential at matching step
  // count; with +-10 rectangles the truncation gap is ~1e-5 at 600 steps.
  REQUIRE(cmp.ideal.final_fidelity == Catch::Approx(f_ideal_closed).margin(1e-4));
  REQUIRE(cmp.adam.final_fidelity == cmp.ideal.final_fidelity);  // k_max=0, same seed arm
}

TEST_CASE("markov comparison orders the optimized arm on an open scenario") {
  ExperimentSpec spec = default_experiment();
  spec.scenario.chain.n_sites = 3;
  spec.scenario.bath.gamma_coupling = 0.04;
  spec.scenario.bath.temperature = 10.0;
  spec.scenario.n_steps = 400;
  spec.optimizer.k_max = 6;
  spec.optimizer.seed = 5;

  const auto cmp = markov_comparison(spec);
  for (const auto* r : {&cmp.none, &cmp.ideal, &cmp.adam}) {
    REQUIRE_FALSE(r->failed);
    REQUIRE(r->trajectory.size() > 1);
    REQUIRE(r->final_fidelity >= 0.0);
    REQUIRE(r->final_fidelity <= 1.0 + 1e-12);
  }
  REQUIRE(cmp.adam.final_fidelity >= cmp.ideal.final_fidelity);
}

TEST_CASE("run records serialize to csv with an embedded manifest") {
  ExperimentSpec spec = default_experiment();
  spec.scenario.chain.n_sites = 3;
  spec.scenario.n_steps = 200;
  spec.sample_stride = 50;
  const auto rec = run_fidelity_trace(spec);

  std::ostringstream os;
  write_run_csv(os, rec);
  const auto text = os.str();
  REQUIRE(text.rfind("# manifest: ", 0) == 0);
  const auto eol = text.find('\n');
  const auto manifest = nlohmann::json::parse(text.substr(12, eol - 12));
  REQUIRE(manifest == rec.manifest);
  REQUIRE(text.find("\nt,fidelity,trace,min_eig\n") != std::string::npos);
  REQUIRE(text.find(g17(rec.final_fidelity)) != std::string::npos);

  int lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  REQUIRE(lines == 2 + static_cast<int>(rec.trajectory.size()));
}
