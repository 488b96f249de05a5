#pragma once

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qst/dynamics.hpp"

// Excitation-number block structure. The drive conserves the number of
// excited sites, so every operator in the coupled evolution lives in a small
// family of blocks: the density matrix is block-diagonal over sectors and the
// two memory operators shift sector number by a fixed offset inherited from
// the coupling operator. Integrating in this representation replaces one
// dim^3 product per term with a handful of binomial-sized ones (dim 32 ->
// blocks of at most 10 at five sites), which is what makes the optimization
// loop affordable.

namespace qst {

struct SectorBasis {
  int n_sites = 0;
  std::vector<std::vector<int>> states;  // states[p]: ascending basis indices with p excitations
  std::vector<int> sector_of;            // basis index -> excitation count
  std::vector<int> pos_of;               // basis index -> row within its sector

  static SectorBasis build(int n_sites) {
    if (n_sites < 1 || n_sites > 30)
      throw std::invalid_argument("SectorBasis: n_sites out of range");
    SectorBasis b;
    b.n_sites = n_sites;
    const int dim = 1 << n_sites;
    b.states.resize(n_sites + 1);
    b.sector_of.resize(dim);
    b.pos_of.resize(dim);
    for (int i = 0; i < dim; ++i) {
      const int p = excitation_count(i);
      b.sector_of[i] = p;
      b.pos_of[i] = static_cast<int>(b.states[p].size());
      b.states[p].push_back(i);
    }
    return b;
  }

  int sectors() const { return n_sites + 1; }
  int size(int p) const {
    if (p < 0 || p >= sectors()) return 0;
    return static_cast<int>(states[p].size());
  }
};

// Operator taking sector p to sector p + delta; blocks[p] has shape
// size(p+delta) x size(p), with 0x0 placeholders where a sector falls off
// either end. delta = 0 is the block-diagonal case.
struct ShiftOp {
  int delta = 0;
  std::vector<Mat> blocks;
};

inline ShiftOp make_shift_op(const SectorBasis& basis, int delta) {
  ShiftOp op;
  op.delta = delta;
  op.blocks.resize(basis.sectors());
  for (int p = 0; p < basis.sectors(); ++p) {
    const int rows = basis.size(p + delta);
    const int cols = basis.size(p);
    if (rows > 0 && cols > 0) op.blocks[p] = Mat::Zero(rows, cols);
  }
  return op;
}

struct PackResult {
  ShiftOp op;
  double residual = 0.0;  // largest |entry| falling outside the shift pattern
};

inline PackResult pack_operator(const Mat& dense, const SectorBasis& basis, int delta) {
  const int dim = 1 << basis.n_sites;
  if (dense.rows() != dim || dense.cols() != dim)
    throw std::invalid_argument("pack_operator: dimension mismatch");
  PackResult out;
  out.op = make_shift_op(basis, delta);
  for (int c = 0; c < dim; ++c) {
    const int p = basis.sector_of[c];
    for (int r = 0; r < dim; ++r) {
      const cplx v = dense(r, c);
      if (v == cplx(0, 0)) continue;
      if (basis.sector_of[r] == p + delta)
        out.op.blocks[p](basis.pos_of[r], basis.pos_of[c]) = v;
      else
        out.residual = std::max(out.residual, std::abs(v));
    }
  }
  return out;
}

inline Mat unpack_operator(const ShiftOp& op, const SectorBasis& basis) {
  const int dim = 1 << basis.n_sites;
  Mat dense = Mat::Zero(dim, dim);
  for (int p = 0; p < basis.sectors(); ++p) {
    const Mat& blk = op.blocks[p];
    if (blk.size() == 0) continue;
    const auto& cols = basis.states[p];
    const auto& rows = basis.states[p + op.delta];
    for (int c = 0; c < blk.cols(); ++c)
      for (int r = 0; r < blk.rows(); ++r) dense(rows[r], cols[c]) = blk(r, c);
  }
  return dense;
}

// out = alpha * a * b, or += with accumulate. Sector bookkeeping: the block of
// the product acting on sector p is a_{p + delta_b} * b_p.
inline void shift_mul(const ShiftOp& a, const ShiftOp& b, ShiftOp& out, cplx alpha = cplx(1, 0),
                      bool accumulate = false) {
  if (out.delta != a.delta + b.delta) throw std::logic_error("shift_mul: delta mismatch");
  const int sectors = static_cast<int>(out.blocks.size());
  for (int p = 0; p < sectors; ++p) {
    Mat& dst = out.blocks[p];
    if (dst.size() == 0) continue;
    const int q = p + b.delta;
    const bool have = q >= 0 && q < static_cast<int>(a.blocks.size()) &&
                      b.blocks[p].size() != 0 && a.blocks[q].size() != 0;
    if (!have) {
      if (!accumulate) dst.setZero();
      continue;
    }
    const Mat& ab = a.blocks[q];
    const Mat& bb = b.blocks[p];
    if (ab.cols() != bb.rows() || dst.rows() != ab.rows() || dst.cols() != bb.cols())
      throw std::logic_error("shift_mul: block shape mismatch");
    if (accumulate)
      dst.noalias() += alpha * (ab * bb);
    else
      dst.noalias() = alpha * (ab * bb);
  }
}

inline void shift_adjoint(const ShiftOp& a, ShiftOp& out) {
  if (out.delta != -a.delta) throw std::logic_error("shift_adjoint: delta mismatch");
  const int sectors = static_cast<int>(out.blocks.size());
  for (int r = 0; r < sectors; ++r) {
    Mat& dst = out.blocks[r];
    if (dst.size() == 0) continue;
    const int q = r - a.delta;  // a's block q -> q + delta = r; its adjoint maps r -> q
    if (q >= 0 && q < static_cast<int>(a.blocks.size()) && a.blocks[q].size() != 0)
      dst = a.blocks[q].adjoint();
    else
      dst.setZero();
  }
}

inline void shift_axpy(cplx alpha, const ShiftOp& x, ShiftOp& y) {
  if (x.delta != y.delta || x.blocks.size() != y.blocks.size())
    throw std::logic_error("shift_axpy: operand mismatch");
  for (size_t p = 0; p < x.blocks.size(); ++p) {
    if (x.blocks[p].size() == 0) continue;
    if (y.blocks[p].size() == 0) throw std::logic_error("shift_axpy: block shape mismatch");
    y.blocks[p] += alpha * x.blocks[p];
  }
}

// Sector offset of each coupling operator: the literal lowering combination
// sx - i sy = 2|1><0| raises the excitation count, its normalized variant
// |0><1| lowers it, the z coupling conserves it, and the x coupling mixes
// both directions so it has no single-shift structure.
inline std::optional<int> lindblad_shift(LindbladKind kind, bool normalized_lowering) {
  switch (kind) {
    case LindbladKind::CollectiveLowering: return normalized_lowering ? -1 : +1;
    case LindbladKind::CollectiveZ: return 0;
    case LindbladKind::CollectiveX: return std::nullopt;
  }
  return std::nullopt;
}

struct PackedState {
  double t = 0.0;
  ShiftOp rho;  // delta 0
  ShiftOp o_z;  // delta = coupling shift
  ShiftOp o_w;  // delta = -coupling shift
};

// Sector-blocked integrator for the coupled memory-kernel evolution and its
// memoryless limit. One instance owns preallocated stage workspaces, so a
// single engine must not be shared across threads; construction is cheap.
class PackedEngine {
 public:
  PackedEngine(const ChainConfig& chain, const BathConfig& bath) : chain_(chain), bath_(bath) {
    chain.validate();
    bath.validate();
    const auto shift = lindblad_shift(bath.kind, bath.normalized_lowering);
    if (!shift)
      throw std::invalid_argument("PackedEngine: coupling operator has no sector-shift structure");
    delta_ = *shift;
    basis_ = SectorBasis::build(chain.n_sites);
    omega_ = kPi / chain.total_time;

    auto packed_or_throw = [&](const Mat& m, int d) -> ShiftOp {
      auto r = pack_operator(m, basis_, d);
      if (r.residual != 0.0) throw std::logic_error("PackedEngine: operator violates its shift");
      return std::move(r.op);
    };
    hxy_ = packed_or_throw(build_hxy(chain), 0);
    hz_ = packed_or_throw(build_hz(chain), 0);
    const Mat ldense = build_lindblad(bath.kind, chain.n_sites, bath.normalized_lowering);
    l_ = packed_or_throw(ldense, delta_);
    ldag_ = make_shift_op(basis_, -delta_);
    shift_adjoint(l_, ldag_);

    rate_ = bath.gamma_coupling * bath.temperature / 2;
    const Mat wdense = ldense.adjoint() * ldense + ldense * ldense.adjoint();
    w_ = packed_or_throw(rate_ * wdense, 0);
    cz_ = bath.oz_source_coeff();
    cw_ = bath.ow_source_coeff();
    gamma_ = bath.gamma_bath;

    const auto sv = transfer_states(chain.n_sites);
    int init_idx = 0, tgt_idx = 0;
    for (int i = 0; i < sv.initial.size(); ++i) {
      if (sv.initial(i) != cplx(0, 0)) init_idx = i;
      if (sv.target(i) != cplx(0, 0)) tgt_idx = i;
    }
    init_pos_ = {basis_.sector_of[init_idx], basis_.pos_of[init_idx]};
    target_pos_ = {basis_.sector_of[tgt_idx], basis_.pos_of[tgt_idx]};

    h_ = make_shift_op(basis_, 0);
    g_ = make_shift_op(basis_, 0);
    gadj_ = make_shift_op(basis_, 0);
    m_ = make_shift_op(basis_, 0);
    bd0_ = make_shift_op(basis_, 0);
    bd1_ = make_shift_op(basis_, 0);
    x_ = make_shift_op(basis_, -delta_);
    ozadj_ = make_shift_op(basis_, -delta_);
    y_ = make_shift_op(basis_, delta_);
    owadj_ = make_shift_op(basis_, delta_);
    for (PackedState* s : {&k1_, &k2_, &k3_, &k4_, &stage_}) *s = zero_state();
  }

  static bool supports(const BathConfig& bath) {
    return lindblad_shift(bath.kind, bath.normalized_lowering).has_value();
  }

  const SectorBasis& basis() const { return basis_; }

  PackedState initial_state() const {
    PackedState st = zero_state();
    st.rho.blocks[init_pos_.first](init_pos_.second, init_pos_.second) = 1.0;
    return st;
  }

  // One RK4 step with the control factor (1 + c) frozen across the step; the
  // drive itself is still evaluated at the three stage times.
  void step(PackedState& st, double dt, double control_scale) {
    if (dt < 0) throw std::invalid_argument("PackedEngine::step: dt must be >= 0");
    if (dt == 0.0) return;
    rhs(st, st.t, control_scale, k1_);
    stage_from(st, 0.5 * dt, k1_);
    rhs(stage_, st.t + 0.5 * dt, control_scale, k2_);
    stage_from(st, 0.5 * dt, k2_);
    rhs(stage_, st.t + 0.5 * dt, control_scale, k3_);
    stage_from(st, dt, k3_);
    rhs(stage_, st.t + dt, control_scale, k4_);
    const double w = dt / 6;
    for (size_t p = 0; p < st.rho.blocks.size(); ++p) {
      if (st.rho.blocks[p].size())
        st.rho.blocks[p] += w * (k1_.rho.blocks[p] + 2 * k2_.rho.blocks[p] +
                                 2 * k3_.rho.blocks[p] + k4_.rho.blocks[p]);
      if (st.o_z.blocks[p].size())
        st.o_z.blocks[p] += w * (k1_.o_z.blocks[p] + 2 * k2_.o_z.blocks[p] +
                                 2 * k3_.o_z.blocks[p] + k4_.o_z.blocks[p]);
      if (st.o_w.blocks[p].size())
        st.o_w.blocks[p] += w * (k1_.o_w.blocks[p] + 2 * k2_.o_w.blocks[p] +
                                 2 * k3_.o_w.blocks[p] + k4_.o_w.blocks[p]);
    }
    st.t += dt;
  }

  // Memoryless-limit step: only rho moves, the memory operators are carried.
  void step_markov(PackedState& st, double dt, double control_scale) {
    if (dt < 0) throw std::invalid_argument("PackedEngine::step_markov: dt must be >= 0");
    if (dt == 0.0) return;
    rhs_markov(st.rho, st.t, control_scale, k1_.rho);
    stage_rho(st.rho, 0.5 * dt, k1_.rho);
    rhs_markov(stage_.rho, st.t + 0.5 * dt, control_scale, k2_.rho);
    stage_rho(st.rho, 0.5 * dt, k2_.rho);
    rhs_markov(stage_.rho, st.t + 0.5 * dt, control_scale, k3_.rho);
    stage_rho(st.rho, dt, k3_.rho);
    rhs_markov(stage_.rho, st.t + dt, control_scale, k4_.rho);
    const double w = dt / 6;
    for (size_t p = 0; p < st.rho.blocks.size(); ++p)
      if (st.rho.blocks[p].size())
        st.rho.blocks[p] += w * (k1_.rho.blocks[p] + 2 * k2_.rho.blocks[p] +
                                 2 * k3_.rho.blocks[p] + k4_.rho.blocks[p]);
    st.t += dt;
  }

  // Same guard thresholds as the dense fidelity(): converged runs of the
  // equation show transient negative dips at the 1e-8 scale (it is not a
  // completely positive map), so only divergence-scale values throw.
  double target_population(const PackedState& st) const {
    const double pop = st.rho.blocks[target_pos_.first](target_pos_.second, target_pos_.second)
                           .real();
    if (!std::isfinite(pop))
      throw std::runtime_error("transfer_fidelity: integration diverged (non-finite population)");
    if (pop < -1e-6)
      throw std::runtime_error("transfer_fidelity: target population went negative");
    if (pop > 1.0 + 1e-6)
      throw std::runtime_error("transfer_fidelity: target population above one");
    return std::max(pop, 0.0);
  }

  double transfer_fidelity(const PackedState& st) const { return std::sqrt(target_population(st)); }

  Mat unpack_rho(const PackedState& st) const { return unpack_operator(st.rho, basis_); }

  double trace_real(const PackedState& st) const {
    double tr = 0;
    for (const Mat& b : st.rho.blocks)
      if (b.size()) tr += b.trace().real();
    return tr;
  }

  double hermiticity_error(const PackedState& st) const {
    double e = 0;
    for (const Mat& b : st.rho.blocks)
      if (b.size()) e = std::max(e, (b - b.adjoint()).cwiseAbs().maxCoeff());
    return e;
  }

  // Exact: the spectrum of a block-diagonal matrix is the union of the block
  // spectra.
  double min_eigenvalue(const PackedState& st) const {
    double m = std::numeric_limits<double>::infinity();
    for (const Mat& b : st.rho.blocks) {
      if (b.size() == 0) continue;
      Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (b + b.adjoint()), Eigen::EigenvaluesOnly);
      m = std::min(m, es.eigenvalues().minCoeff());
    }
    return m;
  }

 private:
  PackedState zero_state() const {
    PackedState st;
    st.rho = make_shift_op(basis_, 0);
    st.o_z = make_shift_op(basis_, delta_);
    st.o_w = make_shift_op(basis_, -delta_);
    return st;
  }

  void build_drive(double tt, double scale) {
    const double sn = scale * std::sin(omega_ * tt);
    const double cs = scale * std::cos(omega_ * tt);
    for (size_t p = 0; p < h_.blocks.size(); ++p)
      if (h_.blocks[p].size()) h_.blocks[p] = sn * hxy_.blocks[p] + cs * hz_.blocks[p];
  }

  // Coupled derivatives in the Hermitian-pair arrangement: drho = M + M^dag
  // with M = G rho + L (rho Oz^dag) + L^dag (rho Ow^dag) and
  // G = -iH - L^dag Oz - L Ow shared with both commutator equations.
  void rhs(const PackedState& s, double tt, double scale, PackedState& d) {
    build_drive(tt, scale);
    const cplx minus_i(0, -1);
    shift_mul(ldag_, s.o_z, g_);
    shift_mul(l_, s.o_w, g_, cplx(1, 0), true);
    for (size_t p = 0; p < g_.blocks.size(); ++p)
      if (g_.blocks[p].size()) g_.blocks[p] = minus_i * h_.blocks[p] - g_.blocks[p];

    shift_adjoint(s.o_z, ozadj_);
    shift_adjoint(s.o_w, owadj_);
    shift_mul(s.rho, ozadj_, x_);
    shift_mul(s.rho, owadj_, y_);
    shift_mul(g_, s.rho, m_);
    shift_mul(l_, x_, m_, cplx(1, 0), true);
    shift_mul(ldag_, y_, m_, cplx(1, 0), true);
    for (size_t p = 0; p < m_.blocks.size(); ++p)
      if (d.rho.blocks[p].size()) d.rho.blocks[p] = m_.blocks[p] + m_.blocks[p].adjoint();

    shift_mul(g_, s.o_z, d.o_z);
    shift_mul(s.o_z, g_, d.o_z, cplx(-1, 0), true);
    shift_axpy(cz_, l_, d.o_z);
    shift_axpy(cplx(-gamma_, 0), s.o_z, d.o_z);

    shift_mul(g_, s.o_w, d.o_w);
    shift_mul(s.o_w, g_, d.o_w, cplx(-1, 0), true);
    shift_axpy(cw_, ldag_, d.o_w);
    shift_axpy(cplx(-gamma_, 0), s.o_w, d.o_w);
  }

  // Memoryless limit as the exact superoperator
  //   drho = G rho + rho G^dag + 2 rate (L rho L^dag + L^dag rho L),
  //   G = -iH - rate (L^dag L + L L^dag).
  // G rho + (G rho)^dag would coincide on Hermitian inputs, but it drops the
  // damping on the anti-Hermitian roundoff floor while keeping the sandwich
  // gain, and that mode grows exponentially once the chain is long enough.
  // The superoperator form keeps every mode of the generator contractive.
  void rhs_markov(const ShiftOp& rho, double tt, double scale, ShiftOp& drho) {
    build_drive(tt, scale);
    const cplx minus_i(0, -1);
    for (size_t p = 0; p < g_.blocks.size(); ++p)
      if (g_.blocks[p].size()) {
        g_.blocks[p] = minus_i * h_.blocks[p] - w_.blocks[p];
        gadj_.blocks[p] = g_.blocks[p].adjoint();
      }
    shift_mul(g_, rho, m_);
    shift_mul(rho, gadj_, m_, cplx(1, 0), true);
    shift_mul(l_, rho, y_);
    shift_mul(y_, ldag_, bd0_);
    shift_mul(ldag_, rho, x_);
    shift_mul(x_, l_, bd1_);
    for (size_t p = 0; p < m_.blocks.size(); ++p)
      if (drho.blocks[p].size())
        drho.blocks[p] = m_.blocks[p] + (2 * rate_) * (bd0_.blocks[p] + bd1_.blocks[p]);
  }

  void stage_from(const PackedState& base, double h, const PackedState& k) {
    for (size_t p = 0; p < base.rho.blocks.size(); ++p) {
      if (base.rho.blocks[p].size())
        stage_.rho.blocks[p] = base.rho.blocks[p] + h * k.rho.blocks[p];
      if (base.o_z.blocks[p].size())
        stage_.o_z.blocks[p] = base.o_z.blocks[p] + h * k.o_z.blocks[p];
      if (base.o_w.blocks[p].size())
        stage_.o_w.blocks[p] = base.o_w.blocks[p] + h * k.o_w.blocks[p];
    }
  }

  void stage_rho(const ShiftOp& base, double h, const ShiftOp& k) {
    for (size_t p = 0; p < base.blocks.size(); ++p)
      if (base.blocks[p].size()) stage_.rho.blocks[p] = base.blocks[p] + h * k.blocks[p];
  }

  ChainConfig chain_;
  BathConfig bath_;
  SectorBasis basis_;
  int delta_ = 0;
  double omega_ = 1.0, gamma_ = 0.0, rate_ = 0.0;
  cplx cz_{0, 0}, cw_{0, 0};
  ShiftOp hxy_, hz_, l_, ldag_, w_;
  std::pair<int, int> init_pos_{0, 0}, target_pos_{0, 0};

  ShiftOp h_, g_, gadj_, m_, bd0_, bd1_, x_, y_, ozadj_, owadj_;
  PackedState k1_, k2_, k3_, k4_, stage_;
};

}  // namespace qst
