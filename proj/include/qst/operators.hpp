#pragma once

// Operator construction for a driven XY spin chain with a linear on-site
// field gradient. Dense complex matrices on the full 2^N product space,
// big-endian site order (site 1 owns the most significant bit) with the
// per-site basis (|0>, |1>) and sz = diag(+1, -1).

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qst {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr double kPi = 3.14159265358979323846;

// Chain geometry and drive window. field_slope is the gradient slope of the
// on-site term h(i) = field_slope * i; coupling is the hopping strength of
// the XY term.
struct ChainConfig {
  int n_sites = 5;
  double coupling = -1.0;
  double field_slope = 0.5;
  double total_time = kPi;

  int dim() const { return 1 << n_sites; }
  double field_at(int site) const { return field_slope * site; }

  // Full validation for simulation entry points. Operator builders accept
  // n_sites >= 1 so single-site checks stay possible.
  void validate() const {
    if (n_sites < 2) throw std::invalid_argument("n_sites must be >= 2");
    if (n_sites > 12) throw std::invalid_argument("n_sites capped at 12 (dense 4^N cost)");
    if (!(total_time > 0)) throw std::invalid_argument("total_time must be > 0");
    if (!(field_slope > 0))
      throw std::invalid_argument("field_slope must be > 0 (strictly increasing field)");
    if (!std::isfinite(coupling)) throw std::invalid_argument("coupling must be finite");
  }
};

enum class PauliAxis { X, Y, Z, Minus };
enum class LindbladKind { CollectiveLowering, CollectiveX, CollectiveZ };
enum class GapSector { Full, SingleExcitation };

// Bit position owned by a 1-based site index.
inline int site_bit(int site, int n_sites) { return n_sites - site; }

// Number of excited (|1>) sites in a basis index.
inline int excitation_count(int basis_index) {
  return std::popcount(static_cast<unsigned>(basis_index));
}

// Kronecker embedding of one single-site operator, identity elsewhere.
// The lowering axis is the literal combination sx - i*sy = 2|1><0|.
inline Mat pauli_site(PauliAxis axis, int site, int n_sites) {
  if (n_sites < 1) throw std::invalid_argument("pauli_site: n_sites must be >= 1");
  if (site < 1 || site > n_sites)
    throw std::out_of_range("pauli_site: site index out of range");
  const int dim = 1 << n_sites;
  const int mask = 1 << site_bit(site, n_sites);
  Mat m = Mat::Zero(dim, dim);
  for (int col = 0; col < dim; ++col) {
    const bool excited = (col & mask) != 0;
    switch (axis) {
      case PauliAxis::X:
        m(col ^ mask, col) = 1.0;
        break;
      case PauliAxis::Y:
        m(col ^ mask, col) = excited ? cplx(0, -1) : cplx(0, 1);
        break;
      case PauliAxis::Z:
        m(col, col) = excited ? -1.0 : 1.0;
        break;
      case PauliAxis::Minus:
        if (!excited) m(col ^ mask, col) = 2.0;
        break;
    }
  }
  return m;
}

// Nearest-neighbour hopping J * sum_i (sx_i sx_{i+1} + sy_i sy_{i+1}).
// On each bond the two-site action is 2J (|01><10| + |10><01|).
inline Mat build_hxy(const ChainConfig& cfg) {
  if (cfg.n_sites < 1) throw std::invalid_argument("build_hxy: n_sites must be >= 1");
  const int dim = cfg.dim();
  Mat m = Mat::Zero(dim, dim);
  for (int site = 1; site < cfg.n_sites; ++site) {
    const int m1 = 1 << site_bit(site, cfg.n_sites);
    const int m2 = 1 << site_bit(site + 1, cfg.n_sites);
    for (int col = 0; col < dim; ++col) {
      const bool b1 = (col & m1) != 0;
      const bool b2 = (col & m2) != 0;
      if (b1 != b2) m(col ^ (m1 | m2), col) += 2.0 * cfg.coupling;
    }
  }
  return m;
}

// On-site gradient term sum_i h(i) sz_i; diagonal in the computational basis.
inline Mat build_hz(const ChainConfig& cfg) {
  if (cfg.n_sites < 1) throw std::invalid_argument("build_hz: n_sites must be >= 1");
  const int dim = cfg.dim();
  Mat m = Mat::Zero(dim, dim);
  for (int col = 0; col < dim; ++col) {
    double e = 0.0;
    for (int site = 1; site <= cfg.n_sites; ++site) {
      const int mask = 1 << site_bit(site, cfg.n_sites);
      e += (col & mask) ? -cfg.field_at(site) : cfg.field_at(site);
    }
    m(col, col) = e;
  }
  return m;
}

// Precomputed drive terms. at(t) = sin(pi t/T) Hxy + cos(pi t/T) Hz, so the
// drive starts as the pure gradient at t=0 and ends as its negative at t=T.
struct HamiltonianTerms {
  Mat hxy;
  Mat hz;
  double total_time = kPi;

  static HamiltonianTerms build(const ChainConfig& cfg) {
    return HamiltonianTerms{build_hxy(cfg), build_hz(cfg), cfg.total_time};
  }

  Mat at(double t) const {
    const double omega = kPi / total_time;
    return std::sin(omega * t) * hxy + std::cos(omega * t) * hz;
  }
};

inline Mat system_hamiltonian(double t, const ChainConfig& cfg) {
  const double slack = 1e-9 * std::max(1.0, cfg.total_time);
  if (t < -slack || t > cfg.total_time + slack)
    throw std::domain_error("system_hamiltonian: t outside [0, total_time]");
  return HamiltonianTerms::build(cfg).at(t);
}

// Collective bath coupling operator, the sum over all sites of one per-site
// operator. normalized_lowering swaps the literal 2|1><0| per-site lowering
// for the unit-amplitude decay operator |0><1|.
inline Mat build_lindblad(LindbladKind kind, int n_sites, bool normalized_lowering = false) {
  if (n_sites < 1) throw std::invalid_argument("build_lindblad: n_sites must be >= 1");
  const int dim = 1 << n_sites;
  Mat m = Mat::Zero(dim, dim);
  for (int site = 1; site <= n_sites; ++site) {
    const int mask = 1 << site_bit(site, n_sites);
    for (int col = 0; col < dim; ++col) {
      const bool excited = (col & mask) != 0;
      switch (kind) {
        case LindbladKind::CollectiveLowering:
          if (normalized_lowering) {
            if (excited) m(col ^ mask, col) += 1.0;
          } else {
            if (!excited) m(col ^ mask, col) += 2.0;
          }
          break;
        case LindbladKind::CollectiveX:
          m(col ^ mask, col) += 1.0;
          break;
        case LindbladKind::CollectiveZ:
          m(col, col) += excited ? -1.0 : 1.0;
          break;
      }
    }
  }
  return m;
}

namespace detail {
inline double gap_of(const Mat& h) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("energy_gap: eigensolver failed");
  const auto& ev = es.eigenvalues();
  return std::max(0.0, ev(1) - ev(0));
}
}  // namespace detail

// Instantaneous gap between the two lowest levels of the drive Hamiltonian.
// The default scans the full 2^N spectrum; SingleExcitation restricts to the
// one-excitation subspace for analysis.
inline double energy_gap(double t, const ChainConfig& cfg, GapSector sector = GapSector::Full) {
  const double slack = 1e-9 * std::max(1.0, cfg.total_time);
  if (t < -slack || t > cfg.total_time + slack)
    throw std::domain_error("energy_gap: t outside [0, total_time]");
  Mat h = system_hamiltonian(std::clamp(t, 0.0, cfg.total_time), cfg);
  if (sector == GapSector::Full) return detail::gap_of(h);

  std::vector<int> idx;
  for (int b = 0; b < cfg.dim(); ++b)
    if (excitation_count(b) == 1) idx.push_back(b);
  Mat hr(idx.size(), idx.size());
  for (size_t i = 0; i < idx.size(); ++i)
    for (size_t j = 0; j < idx.size(); ++j) hr(i, j) = h(idx[i], idx[j]);
  return detail::gap_of(hr);
}

// Transfer endpoints: one excitation on the first site in, one excitation on
// the last site out.
struct StateVectors {
  Vec initial;
  Vec target;
};

inline StateVectors transfer_states(int n_sites) {
  if (n_sites < 2) throw std::invalid_argument("transfer_states: n_sites must be >= 2");
  const int dim = 1 << n_sites;
  StateVectors sv;
  sv.initial = Vec::Zero(dim);
  sv.target = Vec::Zero(dim);
  sv.initial(1 << site_bit(1, n_sites)) = 1.0;
  sv.target(1 << site_bit(n_sites, n_sites)) = 1.0;
  return sv;
}

}  // namespace qst
