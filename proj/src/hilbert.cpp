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

#include "bellgate/hilbert.hpp"

#include <string>

namespace bellgate::hilbert {

QuantumState::QuantumState(Kind kind, CVectorXd psi, CMatrixXd rho, int motion_dim)
    : kind_(kind), ket_(std::move(psi)), rho_(std::move(rho)), motion_dim_(motion_dim) {}

QuantumState QuantumState::from_ket(CVectorXd psi, int motion_dim) {
  require(motion_dim >= 1 && psi.size() == kSpinDim * motion_dim, ErrorKind::dimension_mismatch,
          "ket size " + std::to_string(psi.size()) + " does not match 9 x " +
              std::to_string(motion_dim));
  return QuantumState(Kind::ket, std::move(psi), CMatrixXd(), motion_dim);
}

QuantumState QuantumState::from_density(CMatrixXd rho, int motion_dim) {
  require(motion_dim >= 1 && rho.rows() == rho.cols() && rho.rows() == kSpinDim * motion_dim,
          ErrorKind::dimension_mismatch,
          "density operator size " + std::to_string(rho.rows()) + " does not match 9 x " +
              std::to_string(motion_dim));
  return QuantumState(Kind::density, CVectorXd(), std::move(rho), motion_dim);
}

const CVectorXd& QuantumState::ket() const {
  require(kind_ == Kind::ket, ErrorKind::invalid_argument, "state is not a ket");
  return ket_;
}

CVectorXd& QuantumState::ket_mut() {
  require(kind_ == Kind::ket, ErrorKind::invalid_argument, "state is not a ket");
  return ket_;
}

const CMatrixXd& QuantumState::density() const {
  require(kind_ == Kind::density, ErrorKind::invalid_argument, "state is not a density operator");
  return rho_;
}

CMatrixXd& QuantumState::density_mut() {
  require(kind_ == Kind::density, ErrorKind::invalid_argument, "state is not a density operator");
  return rho_;
}

CMatrixXd QuantumState::to_density() const {
  if (kind_ == Kind::density) return rho_;
  return ket_ * ket_.adjoint();
}

void QuantumState::check_invariants(double trace_tol, double eig_tol) const {
  if (kind_ == Kind::ket) {
    require(std::abs(ket_.norm() - 1.0) <= trace_tol, ErrorKind::invalid_spec,
            "ket is not normalized");
    return;
  }
  require(std::abs(rho_.trace() - cplx(1.0)) <= trace_tol, ErrorKind::invalid_spec,
          "density operator trace differs from 1");
  require(hermiticity_defect(rho_) <= 1e-10, ErrorKind::non_hermitian,
          "density operator is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMatrixXd> eig(rho_, Eigen::EigenvaluesOnly);
  require(eig.eigenvalues().minCoeff() >= -eig_tol, ErrorKind::invalid_spec,
          "density operator has a negative eigenvalue");
}

CMatrixXd annihilation(int fock_dim) {
  CMatrixXd a = CMatrixXd::Zero(fock_dim, fock_dim);
  for (int n = 1; n < fock_dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

CMatrixXd ion_sigma_x() {
  CMatrixXd m = CMatrixXd::Zero(3, 3);
  m(0, 1) = m(1, 0) = 1.0;
  return m;
}

CMatrixXd ion_sigma_y() {
  CMatrixXd m = CMatrixXd::Zero(3, 3);
  m(0, 1) = -kI;
  m(1, 0) = kI;
  return m;
}

CMatrixXd ion_sigma_z() {
  CMatrixXd m = CMatrixXd::Zero(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  return m;
}

namespace {

CMatrixXd ion_sigma_plus() {
  CMatrixXd m = CMatrixXd::Zero(3, 3);
  m(0, 1) = 1.0;
  return m;
}

CMatrixXd on_ion(int ion, const CMatrixXd& op) {
  const CMatrixXd id = CMatrixXd::Identity(3, 3);
  return ion == 0 ? kron(op, id) : kron(id, op);
}

}  // namespace

OperatorSet build_operators(const HilbertSpec& spec) {
  spec.validate();
  const int n = spec.fock_dim;
  OperatorSet ops;
  ops.spec = spec;
  for (int ion = 0; ion < 2; ++ion) {
    ops.sigma_z[ion] = embed_spin(on_ion(ion, ion_sigma_z()), n);
    ops.sigma_plus[ion] = embed_spin(on_ion(ion, ion_sigma_plus()), n);
    ops.sigma_minus[ion] = ops.sigma_plus[ion].adjoint();
  }
  ops.a = kron(CMatrixXd::Identity(kSpinDim, kSpinDim), annihilation(n));
  ops.a_dag = ops.a.adjoint();
  return ops;
}

CMatrixXd qubit_rotation(double theta, double phi) {
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0);
  CMatrixXd r = CMatrixXd::Identity(3, 3);
  r(0, 0) = c;
  r(1, 1) = c;
  r(0, 1) = -kI * s * std::exp(-kI * phi);
  r(1, 0) = -kI * s * std::exp(kI * phi);
  return r;
}

CMatrixXd global_rotation(double theta, double phi) {
  const CMatrixXd r = qubit_rotation(theta, phi);
  return kron(r, r);
}

CMatrixXd embed_spin(const CMatrixXd& spin_op, int motion_dim) {
  require(spin_op.rows() == kSpinDim && spin_op.cols() == kSpinDim, ErrorKind::dimension_mismatch,
          "spin operator must be 9x9");
  return kron(spin_op, CMatrixXd::Identity(motion_dim, motion_dim));
}

CVectorXd spin_ket(Level ion1, Level ion2) {
  CVectorXd v = CVectorXd::Zero(kSpinDim);
  v(spin_index(ion1, ion2)) = 1.0;
  return v;
}

CVectorXd bell_phi() {
  return (spin_ket(Level::down, Level::down) + kI * spin_ket(Level::up, Level::up)) /
         std::sqrt(2.0);
}

CVectorXd bell_psi_minus() {
  return (spin_ket(Level::down, Level::up) - spin_ket(Level::up, Level::down)) / std::sqrt(2.0);
}

CMatrixXd thermal_motion(double nbar, int fock_dim) {
  require(nbar >= 0.0, ErrorKind::invalid_argument, "thermal occupation must be >= 0");
  CMatrixXd rho = CMatrixXd::Zero(fock_dim, fock_dim);
  if (nbar == 0.0) {
    rho(0, 0) = 1.0;
    return rho;
  }
  const double q = nbar / (1.0 + nbar);
  double total = 0.0;
  for (int n = 0; n < fock_dim; ++n) {
    const double p = std::pow(q, n) / (1.0 + nbar);
    rho(n, n) = p;
    total += p;
  }
  return rho / total;
}

QuantumState leaky_initial_state(double eps, const HilbertSpec& spec, double nbar) {
  spec.validate();
  require(eps >= 0.0 && eps <= 1.0, ErrorKind::invalid_argument, "leak probability outside [0,1]");
  CMatrixXd spin = CMatrixXd::Zero(kSpinDim, kSpinDim);
  const int dd = spin_index(Level::down, Level::down);
  const int da = spin_index(Level::down, Level::leak);
  const int ad = spin_index(Level::leak, Level::down);
  const int aa = spin_index(Level::leak, Level::leak);
  spin(dd, dd) = (1.0 - eps) * (1.0 - eps);
  spin(da, da) = eps * (1.0 - eps);
  spin(ad, ad) = eps * (1.0 - eps);
  spin(aa, aa) = eps * eps;
  return QuantumState::from_density(kron(spin, thermal_motion(nbar, spec.fock_dim)),
                                    spec.fock_dim);
}

QuantumState product_state(const CVectorXd& spin, int motion_dim) {
  require(spin.size() == kSpinDim, ErrorKind::dimension_mismatch, "spin ket must have size 9");
  CVectorXd psi = CVectorXd::Zero(kSpinDim * motion_dim);
  for (int s = 0; s < kSpinDim; ++s) psi(s * motion_dim) = spin(s);
  return QuantumState::from_ket(std::move(psi), motion_dim);
}

double state_fidelity(const CMatrixXd& rho, const CVectorXd& target) {
  require(rho.rows() == target.size() && rho.cols() == target.size(),
          ErrorKind::dimension_mismatch, "state and target dimensions differ");
  const cplx f = target.dot(rho * target);
  require(std::abs(f.imag()) < 1e-12, ErrorKind::non_hermitian,
          "fidelity has a non-negligible imaginary part");
  return f.real();
}

double state_fidelity(const QuantumState& rho, const QuantumState& target) {
  require(target.is_pure(), ErrorKind::invalid_argument, "fidelity target must be pure");
  require(rho.dim() == target.dim(), ErrorKind::dimension_mismatch,
          "state and target dimensions differ");
  if (rho.is_pure()) return std::norm(target.ket().dot(rho.ket()));
  return state_fidelity(rho.density(), target.ket());
}

QuantumState partial_trace_motion(const QuantumState& state) {
  return QuantumState::from_density(trace_out_motion(state.to_density(), state.motion_dim()), 1);
}

QuantumState apply_unitary(const QuantumState& state, const CMatrixXd& unitary) {
  require(unitary.rows() == state.dim() && unitary.cols() == state.dim(),
          ErrorKind::dimension_mismatch, "unitary dimension does not match state");
  if (state.is_pure()) return QuantumState::from_ket(unitary * state.ket(), state.motion_dim());
  return QuantumState::from_density(unitary * state.density() * unitary.adjoint(),
                                    state.motion_dim());
}

}  // namespace bellgate::hilbert
