#pragma once

// Open-system propagation: the memory-kernel master equation with its two
// auxiliary operator ODEs, the memoryless (Lindblad) limit, the closed-system
// reference propagator, and the transfer fidelity.

#include <qst/control.hpp>
#include <qst/operators.hpp>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <utility>

namespace qst {

// Inhomogeneous-source convention for the O_z ODE. ZeroDelay uses the
// zero-separation correlation value (Gamma*Tem*gamma/2 + i*Gamma*gamma/2),
// the form consistent with the memoryless limit; GammaSquared replaces the
// imaginary part with -i*Gamma*gamma^2/2 and is kept as a sensitivity switch.
enum class OzSourceVariant { ZeroDelay, GammaSquared };

struct BathConfig {
  double gamma_coupling = 0.01;  // system-bath coupling strength
  double gamma_bath = 20.0;      // bath characteristic frequency; 1/gamma_bath is the memory time
  double temperature = 20.0;
  LindbladKind kind = LindbladKind::CollectiveLowering;
  bool normalized_lowering = false;
  OzSourceVariant oz_source = OzSourceVariant::ZeroDelay;

  void validate() const {
    if (!(gamma_coupling >= 0) || !std::isfinite(gamma_coupling))
      throw std::invalid_argument("gamma_coupling must be >= 0");
    if (!(gamma_bath > 0) || !std::isfinite(gamma_bath))
      throw std::invalid_argument("gamma_bath must be > 0");
    if (!(temperature >= 0) || !std::isfinite(temperature))
      throw std::invalid_argument("temperature must be >= 0");
  }

  cplx oz_source_coeff() const {
    const double re = gamma_coupling * temperature * gamma_bath / 2;
    if (oz_source == OzSourceVariant::ZeroDelay)
      return cplx(re, gamma_coupling * gamma_bath / 2);
    return cplx(re, -gamma_coupling * gamma_bath * gamma_bath / 2);
  }

  cplx ow_source_coeff() const {
    return cplx(gamma_coupling * temperature * gamma_bath / 2, 0.0);
  }
};

// Exponentially decaying bath correlation pair at separation dt:
// Lambda = (gamma/2) e^{-gamma |dt|}; alpha_z = G*Tem*Lambda + i*G*Lambda,
// alpha_w = G*Tem*Lambda.
inline std::pair<cplx, cplx> bath_correlation(double dt, const BathConfig& bath) {
  const double lam = (bath.gamma_bath / 2) * std::exp(-bath.gamma_bath * std::abs(dt));
  return {cplx(bath.gamma_coupling * bath.temperature * lam, bath.gamma_coupling * lam),
          cplx(bath.gamma_coupling * bath.temperature * lam, 0.0)};
}

// Density matrix plus the two bath-memory operators, all starting from zero
// memory at t = 0.
struct EvolutionState {
  double t = 0.0;
  Mat rho;
  Mat o_z;
  Mat o_w;
};

inline EvolutionState initial_evolution_state(int n_sites) {
  auto sv = transfer_states(n_sites);
  const int dim = 1 << n_sites;
  return {0.0, sv.initial * sv.initial.adjoint(), Mat::Zero(dim, dim), Mat::Zero(dim, dim)};
}

struct StateDerivs {
  Mat drho;
  Mat doz;
  Mat dow;
};

// Coupled right-hand side. The five rho terms are evaluated as a Hermitian
// pair, drho = M + M^dag with M = G rho + L(rho Oz^dag) + L^dag(rho Ow^dag)
// and G = -iH - L^dag Oz - L Ow, which is identical to the term-by-term sum
// for Hermitian rho and shares G with the two commutator ODEs:
//   dOz = c_z L      - gamma Oz + [G, Oz]
//   dOw = c_w L^dag  - gamma Ow + [G, Ow].
inline StateDerivs nonmarkovian_rhs(const EvolutionState& st, const Mat& h, const Mat& l,
                                    const BathConfig& bath) {
  if (h.rows() != st.rho.rows() || l.rows() != st.rho.rows() ||
      st.o_z.rows() != st.rho.rows() || st.o_w.rows() != st.rho.rows())
    throw std::invalid_argument("nonmarkovian_rhs: operator dimension mismatch");
  const cplx i(0, 1);
  const Mat ld = l.adjoint();
  const Mat g = (-i) * h - ld * st.o_z - l * st.o_w;
  const Mat m = g * st.rho + l * (st.rho * st.o_z.adjoint()) + ld * (st.rho * st.o_w.adjoint());

  StateDerivs d;
  d.drho = m + m.adjoint().eval();
  d.doz = bath.oz_source_coeff() * l - bath.gamma_bath * st.o_z + g * st.o_z - st.o_z * g;
  d.dow = bath.ow_source_coeff() * ld - bath.gamma_bath * st.o_w + g * st.o_w - st.o_w * g;
  return d;
}

// Memoryless limit: both collapse directions carry rate Gamma*Tem/2 on the
// unnormalized dissipator 2 A rho A^dag - A^dag A rho - rho A^dag A.
inline Mat lindblad_rhs(const Mat& rho, const Mat& h, const Mat& l, const BathConfig& bath) {
  const cplx i(0, 1);
  const double rate = bath.gamma_coupling * bath.temperature / 2;
  const Mat ld = l.adjoint();
  const Mat lddl = ld * l;
  const Mat lld = l * ld;
  Mat out = (-i) * (h * rho - rho * h);
  out += rate * (2.0 * (l * rho * ld) - lddl * rho - rho * lddl);
  out += rate * (2.0 * (ld * rho * l) - lld * rho - rho * lld);
  return out;
}

// One fixed-step RK4 update of the coupled state. dt = 0 returns the input
// unchanged; callers must keep control discontinuities on step boundaries.
template <class HFn>
EvolutionState step_nonmarkovian(const EvolutionState& st, double dt, HFn&& h_of_t, const Mat& l,
                                 const BathConfig& bath) {
  if (dt < 0) throw std::invalid_argument("step_nonmarkovian: dt must be >= 0");
  if (dt == 0.0) return st;
  const StateDerivs k1 = nonmarkovian_rhs(st, h_of_t(st.t), l, bath);
  const EvolutionState s2{st.t, st.rho + (0.5 * dt) * k1.drho, st.o_z + (0.5 * dt) * k1.doz,
                          st.o_w + (0.5 * dt) * k1.dow};
  const StateDerivs k2 = nonmarkovian_rhs(s2, h_of_t(st.t + dt / 2), l, bath);
  const EvolutionState s3{st.t, st.rho + (0.5 * dt) * k2.drho, st.o_z + (0.5 * dt) * k2.doz,
                          st.o_w + (0.5 * dt) * k2.dow};
  const StateDerivs k3 = nonmarkovian_rhs(s3, h_of_t(st.t + dt / 2), l, bath);
  const EvolutionState s4{st.t, st.rho + dt * k3.drho, st.o_z + dt * k3.doz,
                          st.o_w + dt * k3.dow};
  const StateDerivs k4 = nonmarkovian_rhs(s4, h_of_t(st.t + dt), l, bath);

  EvolutionState out;
  out.t = st.t + dt;
  out.rho = st.rho + (dt / 6) * (k1.drho + 2 * k2.drho + 2 * k3.drho + k4.drho);
  out.o_z = st.o_z + (dt / 6) * (k1.doz + 2 * k2.doz + 2 * k3.doz + k4.doz);
  out.o_w = st.o_w + (dt / 6) * (k1.dow + 2 * k2.dow + 2 * k3.dow + k4.dow);
  return out;
}

// RK4 update of rho alone in the memoryless limit. The memory operators are
// carried through untouched.
template <class HFn>
EvolutionState step_lindblad(const EvolutionState& st, double dt, HFn&& h_of_t, const Mat& l,
                             const BathConfig& bath) {
  if (dt < 0) throw std::invalid_argument("step_lindblad: dt must be >= 0");
  if (dt == 0.0) return st;
  const Mat k1 = lindblad_rhs(st.rho, h_of_t(st.t), l, bath);
  const Mat k2 = lindblad_rhs(st.rho + (0.5 * dt) * k1, h_of_t(st.t + dt / 2), l, bath);
  const Mat k3 = lindblad_rhs(st.rho + (0.5 * dt) * k2, h_of_t(st.t + dt / 2), l, bath);
  const Mat k4 = lindblad_rhs(st.rho + dt * k3, h_of_t(st.t + dt), l, bath);
  EvolutionState out = st;
  out.t = st.t + dt;
  out.rho = st.rho + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  return out;
}

namespace detail {
// Exactly unitary step factor via eigendecomposition of the Hermitian
// generator; preserves norm to roundoff regardless of dt.
inline Mat unitary_factor(const Mat& h, double dt) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("closed_propagate: eigendecomposition failed");
  Eigen::VectorXcd phases(h.rows());
  for (int k = 0; k < h.rows(); ++k) phases(k) = std::exp(cplx(0, -es.eigenvalues()(k) * dt));
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}
}  // namespace detail

// Closed-system evolution as a product of per-step matrix exponentials with
// midpoint Hamiltonian evaluation. Serves as the brute-force oracle for the
// RK4 integrators.
template <class HFn>
Vec closed_propagate(const Vec& psi, double total_time, HFn&& h_of_t, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("closed_propagate: n_steps must be >= 1");
  const double dt = total_time / n_steps;
  Vec out = psi;
  for (int k = 0; k < n_steps; ++k)
    out = detail::unitary_factor(h_of_t((k + 0.5) * dt), dt) * out;
  return out;
}

template <class HFn>
Mat closed_propagate(const Mat& rho, double total_time, HFn&& h_of_t, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("closed_propagate: n_steps must be >= 1");
  const double dt = total_time / n_steps;
  Mat out = rho;
  for (int k = 0; k < n_steps; ++k) {
    Mat u = detail::unitary_factor(h_of_t((k + 0.5) * dt), dt);
    out = u * out * u.adjoint();
  }
  return out;
}

// Square root of the target-state population. The averaged master equation is
// not completely positive, so converged trajectories show transient population
// dips at the 1e-8 scale; those clamp to zero. The thresholds only catch
// integrator divergence, which overshoots them within a few steps.
inline double fidelity(const Mat& rho, const Vec& target) {
  const double pop = target.dot(rho * target).real();
  if (!std::isfinite(pop))
    throw std::runtime_error("fidelity: integration diverged (non-finite population)");
  if (pop < -1e-6)
    throw std::runtime_error("fidelity: negative target population (integration diverged)");
  if (pop > 1.0 + 1e-6)
    throw std::runtime_error("fidelity: target population above one (integration diverged)");
  return std::sqrt(std::max(0.0, pop));
}

inline double fidelity(const Vec& psi, const Vec& target) { return std::abs(target.dot(psi)); }

}  // namespace qst
