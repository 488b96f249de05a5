#pragma once

#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qst/control.hpp"
#include "qst/sector.hpp"

// Trajectory driver over either backend. Control discontinuities sit on step
// boundaries (enforced by the alignment check) and the control factor is
// frozen at each step's midpoint, which samples the correct one-sided value
// when a step ends exactly on a switch.

namespace qst {

struct SimOptions {
  int n_steps = 4000;
  int sample_stride = 10;          // record every this many steps
  bool markov = false;             // integrate the memoryless limit instead
  bool force_dense = false;        // skip the sector-blocked fast path
  bool record_trajectory = true;   // false: final-state summary only
};

// A complete physical setup plus its integrator resolution; the unit the
// optimizer and the experiment harness are parameterized over.
struct Scenario {
  ChainConfig chain;
  BathConfig bath;
  int n_steps = 4000;
  bool markov = false;
  bool force_dense = false;
};

struct TrajectoryPoint {
  double t = 0.0;
  double fidelity = 0.0;
  double trace = 0.0;
  double min_eig = 0.0;
};

struct SimResult {
  std::vector<TrajectoryPoint> trajectory;
  double final_fidelity = 0.0;
  double max_trace_err = 0.0;
  double max_herm_err = 0.0;
  double min_eigenvalue = 1.0;
  Mat final_rho;
  bool used_packed = false;
};

namespace detail {

inline double dense_min_eig(const Mat& rho) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline void check_schedule_window(const ChainConfig& chain, const PulseSchedule& schedule,
                                  int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("simulate: n_steps must be >= 1");
  if (schedule.segments() == 0) return;
  const double slack = 1e-9 * std::max(1.0, chain.total_time);
  if (std::abs(schedule.total_time() - chain.total_time) > slack)
    throw std::invalid_argument("simulate: schedule window does not span the transfer window");
  if (n_steps % schedule.segments() != 0)
    throw std::invalid_argument("simulate: n_steps must be a multiple of the segment count");
}

}  // namespace detail

inline SimResult simulate(const ChainConfig& chain, const BathConfig& bath,
                          const PulseSchedule& schedule, const SimOptions& opts) {
  chain.validate();
  bath.validate();
  detail::check_schedule_window(chain, schedule, opts.n_steps);
  if (opts.sample_stride < 1)
    throw std::invalid_argument("simulate: sample_stride must be >= 1");

  const double dt = chain.total_time / opts.n_steps;
  SimResult res;
  res.used_packed = !opts.force_dense && PackedEngine::supports(bath);

  auto note = [&res](double t, double f, double tr, double herm, double mineig, bool record) {
    if (record) res.trajectory.push_back({t, f, tr, mineig});
    res.max_trace_err = std::max(res.max_trace_err, std::abs(tr - 1.0));
    res.max_herm_err = std::max(res.max_herm_err, herm);
    res.min_eigenvalue = std::min(res.min_eigenvalue, mineig);
  };

  if (res.used_packed) {
    PackedEngine eng(chain, bath);
    PackedState st = eng.initial_state();
    if (opts.record_trajectory)
      note(0.0, eng.transfer_fidelity(st), eng.trace_real(st), eng.hermiticity_error(st),
           eng.min_eigenvalue(st), true);
    for (int k = 0; k < opts.n_steps; ++k) {
      const double sc = 1.0 + control_value((k + 0.5) * dt, schedule, chain);
      if (opts.markov)
        eng.step_markov(st, dt, sc);
      else
        eng.step(st, dt, sc);
      const bool last = k + 1 == opts.n_steps;
      if (last || (opts.record_trajectory && (k + 1) % opts.sample_stride == 0))
        note(st.t, eng.transfer_fidelity(st), eng.trace_real(st), eng.hermiticity_error(st),
             eng.min_eigenvalue(st), opts.record_trajectory);
    }
    res.final_fidelity = eng.transfer_fidelity(st);
    res.final_rho = eng.unpack_rho(st);
    return res;
  }

  const auto terms = HamiltonianTerms::build(chain);
  const Mat l = build_lindblad(bath.kind, chain.n_sites, bath.normalized_lowering);
  const auto sv = transfer_states(chain.n_sites);
  EvolutionState st = initial_evolution_state(chain.n_sites);
  auto dense_note = [&](bool record) {
    note(st.t, fidelity(st.rho, sv.target), st.rho.trace().real(),
         (st.rho - st.rho.adjoint()).cwiseAbs().maxCoeff(), detail::dense_min_eig(st.rho),
         record);
  };
  if (opts.record_trajectory) dense_note(true);
  for (int k = 0; k < opts.n_steps; ++k) {
    const double sc = 1.0 + control_value((k + 0.5) * dt, schedule, chain);
    auto h_of_t = [&terms, sc](double tt) -> Mat { return sc * terms.at(tt); };
    st = opts.markov ? step_lindblad(st, dt, h_of_t, l, bath)
                     : step_nonmarkovian(st, dt, h_of_t, l, bath);
    const bool last = k + 1 == opts.n_steps;
    if (last || (opts.record_trajectory && (k + 1) % opts.sample_stride == 0))
      dense_note(opts.record_trajectory);
  }
  res.final_fidelity = fidelity(st.rho, sv.target);
  res.final_rho = st.rho;
  return res;
}

// Final-fidelity evaluator with cached states at segment boundaries. When a
// candidate schedule differs from the cached one only from segment j on, the
// integration restarts at boundary j and is arithmetically identical to a
// cold run, since the boundary state and the per-step control factors over
// the unchanged prefix are the same doubles. This is what keeps the finite-
// difference loop at roughly two trajectory-equivalents per iteration
// instead of three-plus.
class SegmentCheckpointEvaluator {
 public:
  SegmentCheckpointEvaluator(const ChainConfig& chain, const BathConfig& bath, int n_steps,
                             bool markov = false, bool force_dense = false)
      : chain_(chain), bath_(bath), n_steps_(n_steps), markov_(markov) {
    chain.validate();
    bath.validate();
    if (n_steps < 1) throw std::invalid_argument("evaluator: n_steps must be >= 1");
    if (!force_dense && PackedEngine::supports(bath)) {
      eng_.emplace(chain, bath);
    } else {
      terms_ = HamiltonianTerms::build(chain);
      l_dense_ = build_lindblad(bath.kind, chain.n_sites, bath.normalized_lowering);
      target_ = transfer_states(chain.n_sites).target;
    }
    dt_ = chain.total_time / n_steps_;
  }

  bool packed() const { return eng_.has_value(); }

  double set_current(const PulseSchedule& s) {
    if (s.segments() < 1)
      throw std::invalid_argument("evaluator: schedule must have at least one segment");
    detail::check_schedule_window(chain_, s, n_steps_);
    segments_ = s.segments();
    steps_per_seg_ = n_steps_ / segments_;
    if (eng_) {
      pk_cps_.assign(segments_ + 1, eng_->initial_state());
      fid_ = integrate(s, 0, &pk_cps_, nullptr);
    } else {
      dn_cps_.assign(segments_ + 1, initial_evolution_state(chain_.n_sites));
      fid_ = integrate(s, 0, nullptr, &dn_cps_);
    }
    current_ = s;
    has_candidate_ = false;
    return fid_;
  }

  // Fidelity of a schedule equal to the current one before segment
  // first_changed; never moves the cached trajectory.
  double eval_probe(const PulseSchedule& s, int first_changed) {
    require_current(s);
    const int seg0 = std::clamp(first_changed, 0, segments_);
    if (seg0 == segments_) return fid_;
    return integrate(s, seg0, nullptr, nullptr);
  }

  // Full-fidelity evaluation reusing the unchanged prefix, cached so accept()
  // can promote it without re-integrating.
  double eval_candidate(const PulseSchedule& s) {
    require_current(s);
    int d = 0;
    while (d < segments_ && s.amplitudes[d] == current_.amplitudes[d]) ++d;
    if (d == segments_) {
      candidate_ = s;
      candidate_fid_ = fid_;
      has_candidate_ = true;
      return fid_;
    }
    if (eng_) {
      pk_scratch_ = pk_cps_;
      candidate_fid_ = integrate(s, d, &pk_scratch_, nullptr);
    } else {
      dn_scratch_ = dn_cps_;
      candidate_fid_ = integrate(s, d, nullptr, &dn_scratch_);
    }
    candidate_ = s;
    has_candidate_ = true;
    return candidate_fid_;
  }

  void accept() {
    if (!has_candidate_) throw std::logic_error("evaluator: no candidate to accept");
    if (eng_)
      pk_cps_.swap(pk_scratch_);
    else
      dn_cps_.swap(dn_scratch_);
    current_ = candidate_;
    fid_ = candidate_fid_;
    has_candidate_ = false;
  }

  const PulseSchedule& current() const { return current_; }
  double current_fidelity() const { return fid_; }
  double sims_equivalent() const { return sims_equivalent_; }

 private:
  void require_current(const PulseSchedule& s) const {
    if (segments_ == 0) throw std::logic_error("evaluator: set_current first");
    if (s.segments() != segments_ || std::abs(s.tau - current_.tau) > 1e-12)
      throw std::invalid_argument("evaluator: schedule shape changed; call set_current");
  }

  // Integrate segments [seg0, M) starting from the cached boundary state,
  // optionally saving boundary states (slots seg0+1..M of a prefix-seeded
  // vector). Returns the final transfer fidelity.
  double integrate(const PulseSchedule& s, int seg0, std::vector<PackedState>* pk_save,
                   std::vector<EvolutionState>* dn_save) {
    sims_equivalent_ += double(segments_ - seg0) / segments_;
    if (eng_) {
      PackedState st = pk_save ? (*pk_save)[seg0] : pk_cps_[seg0];
      for (int seg = seg0; seg < segments_; ++seg) {
        for (int k = 0; k < steps_per_seg_; ++k) {
          const int g = seg * steps_per_seg_ + k;
          const double sc = 1.0 + control_value((g + 0.5) * dt_, s, chain_);
          if (markov_)
            eng_->step_markov(st, dt_, sc);
          else
            eng_->step(st, dt_, sc);
        }
        if (pk_save) (*pk_save)[seg + 1] = st;
      }
      return eng_->transfer_fidelity(st);
    }
    EvolutionState st = dn_save ? (*dn_save)[seg0] : dn_cps_[seg0];
    for (int seg = seg0; seg < segments_; ++seg) {
      for (int k = 0; k < steps_per_seg_; ++k) {
        const int g = seg * steps_per_seg_ + k;
        const double sc = 1.0 + control_value((g + 0.5) * dt_, s, chain_);
        auto h_of_t = [this, sc](double tt) -> Mat { return sc * terms_.at(tt); };
        st = markov_ ? step_lindblad(st, dt_, h_of_t, l_dense_, bath_)
                     : step_nonmarkovian(st, dt_, h_of_t, l_dense_, bath_);
      }
      if (dn_save) (*dn_save)[seg + 1] = st;
    }
    return fidelity(st.rho, target_);
  }

  ChainConfig chain_;
  BathConfig bath_;
  int n_steps_ = 0;
  bool markov_ = false;
  double dt_ = 0.0;

  std::optional<PackedEngine> eng_;
  HamiltonianTerms terms_;
  Mat l_dense_;
  Vec target_;

  int segments_ = 0;
  int steps_per_seg_ = 0;
  PulseSchedule current_, candidate_;
  double fid_ = 0.0, candidate_fid_ = 0.0;
  bool has_candidate_ = false;
  double sims_equivalent_ = 0.0;

  std::vector<PackedState> pk_cps_, pk_scratch_;
  std::vector<EvolutionState> dn_cps_, dn_scratch_;
};

}  // namespace qst
