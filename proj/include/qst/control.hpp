#pragma once

// Piecewise-constant control schedules c(t) and their application to the
// drive: H(t) = [1 + c(t)] * H_s(t). Three flavours: fixed alternating
// rectangles, gap-tracked rectangles, and free per-segment amplitudes (the
// optimizer's search space).

#include <qst/operators.hpp>

#include <json.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace qst {

enum class PulseMode { IdealRect, GapTuned, FreePiecewise };

struct PulseSchedule {
  double tau = kPi / 10;               // half-period: segment n covers [n tau, (n+1) tau)
  std::vector<double> amplitudes;      // empty schedule means c == 0
  PulseMode mode = PulseMode::FreePiecewise;
  double gap_floor = 0.1;              // GapTuned only: lower bound on the divisor gap

  int segments() const { return static_cast<int>(amplitudes.size()); }
  double total_time() const { return tau * segments(); }

  // Right-continuous segment lookup; the final endpoint folds into the last
  // segment so t = T stays evaluable.
  int segment_index(double t) const {
    if (amplitudes.empty()) return 0;
    int n = static_cast<int>(std::floor(t / tau));
    if (n < 0) n = 0;
    if (n >= segments()) n = segments() - 1;
    return n;
  }

  double amplitude_at(double t) const {
    if (amplitudes.empty()) return 0.0;
    return amplitudes[segment_index(t)];
  }
};

// Alternating +I/-I rectangles starting positive; the window must hold an
// integer number of half-periods.
inline PulseSchedule ideal_rect(double strength, double tau, double total_time) {
  if (!(tau > 0)) throw std::invalid_argument("ideal_rect: tau must be > 0");
  const double ratio = total_time / tau;
  const int m = static_cast<int>(std::lround(ratio));
  if (m < 1 || std::abs(ratio - m) > 1e-9)
    throw std::invalid_argument("ideal_rect: total_time must be an integer multiple of tau");
  PulseSchedule s;
  s.tau = tau;
  s.mode = PulseMode::IdealRect;
  s.amplitudes.resize(m);
  for (int n = 0; n < m; ++n) s.amplitudes[n] = (n % 2 == 0) ? strength : -strength;
  return s;
}

// Intensity tracking the instantaneous two-level gap, floored so the
// mid-window spectral crossing cannot push it to infinity.
inline double gap_tuned_intensity(double t, double base_strength, const ChainConfig& cfg,
                                  double gap_floor = 0.1) {
  if (!(gap_floor > 0)) throw std::invalid_argument("gap_tuned_intensity: gap_floor must be > 0");
  return base_strength / std::max(energy_gap(t, cfg), gap_floor);
}

// Mode-aware control value. GapTuned divides the segment amplitude by the
// floored instantaneous gap, keeping the segment's sign pattern.
inline double control_value(double t, const PulseSchedule& schedule, const ChainConfig& cfg) {
  if (schedule.amplitudes.empty()) return 0.0;
  const double base = schedule.amplitude_at(t);
  if (schedule.mode == PulseMode::GapTuned)
    return base / std::max(energy_gap(t, cfg), schedule.gap_floor);
  return base;
}

inline Mat apply_control(double t, const PulseSchedule& schedule, const ChainConfig& cfg) {
  return (1.0 + control_value(t, schedule, cfg)) * system_hamiltonian(t, cfg);
}

// Segment boundaries {0, tau, ..., M tau}; integration steps must land on
// these so no step straddles a discontinuity.
inline std::vector<double> switch_times(const PulseSchedule& schedule) {
  std::vector<double> ts;
  ts.reserve(schedule.segments() + 1);
  for (int n = 0; n <= schedule.segments(); ++n) ts.push_back(n * schedule.tau);
  return ts;
}

// Largest control magnitude. Flat modes read it off the amplitudes; the
// gap-tuned mode samples the realized floored intensity on a fine grid.
inline double c_max(const PulseSchedule& schedule) {
  double m = 0.0;
  for (double a : schedule.amplitudes) m = std::max(m, std::abs(a));
  return m;
}

inline double c_max(const PulseSchedule& schedule, const ChainConfig& cfg, int samples = 2000) {
  if (schedule.mode != PulseMode::GapTuned || schedule.amplitudes.empty())
    return c_max(schedule);
  const double total = schedule.total_time();
  double m = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double t = total * (k + 0.5) / samples;
    m = std::max(m, std::abs(control_value(t, schedule, cfg)));
  }
  return m;
}

inline const char* pulse_mode_name(PulseMode mode) {
  switch (mode) {
    case PulseMode::IdealRect: return "ideal-rect";
    case PulseMode::GapTuned: return "gap-tuned";
    case PulseMode::FreePiecewise: return "free-piecewise";
  }
  return "free-piecewise";
}

inline PulseMode pulse_mode_from_name(const std::string& name) {
  if (name == "ideal-rect") return PulseMode::IdealRect;
  if (name == "gap-tuned") return PulseMode::GapTuned;
  if (name == "free-piecewise") return PulseMode::FreePiecewise;
  throw std::invalid_argument("unknown pulse mode: " + name);
}

inline nlohmann::json schedule_to_json(const PulseSchedule& schedule) {
  nlohmann::json j;
  j["mode"] = pulse_mode_name(schedule.mode);
  j["tau"] = schedule.tau;
  j["gap_floor"] = schedule.gap_floor;
  auto segs = nlohmann::json::array();
  for (int n = 0; n < schedule.segments(); ++n) {
    segs.push_back({{"segment_index", n},
                    {"t_start", n * schedule.tau},
                    {"t_end", (n + 1) * schedule.tau},
                    {"amplitude", schedule.amplitudes[n]}});
  }
  j["segments"] = std::move(segs);
  return j;
}

inline PulseSchedule schedule_from_json(const nlohmann::json& j) {
  PulseSchedule s;
  s.mode = pulse_mode_from_name(j.at("mode").get<std::string>());
  s.tau = j.at("tau").get<double>();
  if (j.contains("gap_floor")) s.gap_floor = j.at("gap_floor").get<double>();
  const auto& segs = j.at("segments");
  s.amplitudes.resize(segs.size());
  for (const auto& seg : segs) {
    const int n = seg.at("segment_index").get<int>();
    if (n < 0 || n >= static_cast<int>(segs.size()))
      throw std::invalid_argument("schedule_from_json: segment_index out of range");
    s.amplitudes[n] = seg.at("amplitude").get<double>();
  }
  return s;
}

}  // namespace qst
