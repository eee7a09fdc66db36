// Copyright 2026 The bellgate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// State and operator algebra for two three-level ions (down, up, leaked)
// sharing one truncated harmonic-oscillator mode.
//
// Basis ordering: |ion1, ion2, n> -> (3 * ion1 + ion2) * fock_dim + n, with
// ion levels down = 0, up = 1, leak = 2. sigma_z is +1 on |down>, -1 on |up>
// and 0 on the leaked level.

#pragma once

#include <array>
#include <cmath>
#include <variant>

#include "bellgate/error.hpp"
#include "bellgate/types.hpp"

namespace bellgate::hilbert {

enum class Level : int { down = 0, up = 1, leak = 2 };

inline constexpr int kIonLevels = 3;
inline constexpr int kSpinDim = kIonLevels * kIonLevels;

constexpr int spin_index(Level ion1, Level ion2) {
  return kIonLevels * static_cast<int>(ion1) + static_cast<int>(ion2);
}

/// sigma_z eigenvalue of a single ion level.
constexpr int sigma_z_value(Level level) {
  switch (level) {
    case Level::down: return 1;
    case Level::up: return -1;
    case Level::leak: return 0;
  }
  return 0;
}

/// Eigenvalue of (sigma_z1 - sigma_z2) on a two-ion basis index.
constexpr int differential_z(int spin) {
  return sigma_z_value(static_cast<Level>(spin / kIonLevels)) -
         sigma_z_value(static_cast<Level>(spin % kIonLevels));
}

struct HilbertSpec {
  int fock_dim = 16;

  int dim() const { return kSpinDim * fock_dim; }
  void validate() const {
    require(fock_dim >= 2, ErrorKind::invalid_spec, "fock_dim must be >= 2");
  }
};

/// A pure ket or a density operator over (qutrit x qutrit x motion).
///
/// motion_dim == 1 denotes the two-qutrit spin space with the motion traced out.
class QuantumState {
 public:
  enum class Kind { ket, density };

  static QuantumState from_ket(CVectorXd psi, int motion_dim);
  static QuantumState from_density(CMatrixXd rho, int motion_dim);

  Kind kind() const { return kind_; }
  bool is_pure() const { return kind_ == Kind::ket; }
  int motion_dim() const { return motion_dim_; }
  Eigen::Index dim() const { return kind_ == Kind::ket ? ket_.size() : rho_.rows(); }

  const CVectorXd& ket() const;
  const CMatrixXd& density() const;
  CMatrixXd& density_mut();
  CVectorXd& ket_mut();

  /// Density operator view (|psi><psi| for kets).
  CMatrixXd to_density() const;

  /// Throws invalid_spec when normalization, Hermiticity or positivity fail.
  void check_invariants(double trace_tol = 1e-12, double eig_tol = 1e-10) const;

 private:
  QuantumState(Kind kind, CVectorXd psi, CMatrixXd rho, int motion_dim);

  Kind kind_;
  CVectorXd ket_;
  CMatrixXd rho_;
  int motion_dim_;
};

/// Full-space operator embeddings.
struct OperatorSet {
  HilbertSpec spec;
  std::array<CMatrixXd, 2> sigma_z;
  std::array<CMatrixXd, 2> sigma_plus;   // |down><up| on the qubit, zero on |a>
  std::array<CMatrixXd, 2> sigma_minus;  // |up><down|
  CMatrixXd a;
  CMatrixXd a_dag;
};

OperatorSet build_operators(const HilbertSpec& spec);

template <typename DerivedA, typename DerivedB>
auto kron(const Eigen::MatrixBase<DerivedA>& lhs, const Eigen::MatrixBase<DerivedB>& rhs) {
  using Scalar = typename DerivedA::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(lhs.rows() * rhs.rows(),
                                                            lhs.cols() * rhs.cols());
  for (Eigen::Index i = 0; i < lhs.rows(); ++i)
    for (Eigen::Index j = 0; j < lhs.cols(); ++j)
      out.block(i * rhs.rows(), j * rhs.cols(), rhs.rows(), rhs.cols()) = lhs(i, j) * rhs;
  return out;
}

/// Fock-space ladder operator a (N x N).
CMatrixXd annihilation(int fock_dim);

/// Single-ion (3x3) operators; the leaked level is left untouched.
CMatrixXd ion_sigma_x();
CMatrixXd ion_sigma_y();
CMatrixXd ion_sigma_z();

/// exp(-i theta/2 (cos phi sigma_x + sin phi sigma_y)) on the qubit levels,
/// identity on |a>.
CMatrixXd qubit_rotation(double theta, double phi);

/// The same rotation applied to both ions (9x9).
CMatrixXd global_rotation(double theta, double phi);

/// op (9x9 spin operator) tensored with identity on an N-level motion factor.
CMatrixXd embed_spin(const CMatrixXd& spin_op, int motion_dim);

/// Two-qutrit basis ket |ion1, ion2>.
CVectorXd spin_ket(Level ion1, Level ion2);

/// (|down,down> + i |up,up>) / sqrt(2)
CVectorXd bell_phi();
/// (|down,up> - |up,down>) / sqrt(2)
CVectorXd bell_psi_minus();

/// Thermal motional state with mean occupation nbar (vacuum when nbar == 0).
CMatrixXd thermal_motion(double nbar, int fock_dim);

/// Leaky two-ion preparation: (1-eps)^2 |dd><dd| + eps(1-eps)(|da><da| + |ad><ad|)
/// + eps^2 |aa><aa|, tensored with a thermal motional state.
QuantumState leaky_initial_state(double eps, const HilbertSpec& spec, double nbar = 0.0);

/// Spin ket tensored with the motional ground state.
QuantumState product_state(const CVectorXd& spin, int motion_dim);

/// <psi| rho |psi> for a pure target; imaginary residue must be < 1e-12.
double state_fidelity(const QuantumState& rho, const QuantumState& target);
double state_fidelity(const CMatrixXd& rho, const CVectorXd& target);

/// Traces out the motional factor, returning a two-qutrit density operator.
QuantumState partial_trace_motion(const QuantumState& state);

template <typename Derived>
CMatrix<typename Derived::RealScalar> trace_out_motion(const Eigen::MatrixBase<Derived>& rho,
                                                       int motion_dim) {
  using Real = typename Derived::RealScalar;
  const Eigen::Index spin_dim = rho.rows() / motion_dim;
  CMatrix<Real> out = CMatrix<Real>::Zero(spin_dim, spin_dim);
  for (Eigen::Index s = 0; s < spin_dim; ++s)
    for (Eigen::Index t = 0; t < spin_dim; ++t)
      out(s, t) = rho.block(s * motion_dim, t * motion_dim, motion_dim, motion_dim).trace();
  return out;
}

template <typename Derived>
typename Derived::RealScalar purity(const Eigen::MatrixBase<Derived>& rho) {
  return (rho * rho).trace().real();
}

/// U psi or U rho U^dagger.
QuantumState apply_unitary(const QuantumState& state, const CMatrixXd& unitary);

template <typename Derived>
typename Derived::RealScalar hermiticity_defect(const Eigen::MatrixBase<Derived>& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace bellgate::hilbert
