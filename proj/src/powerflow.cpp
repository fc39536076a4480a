#include "fairpv/powerflow.hpp"

#include <cmath>
#include <complex>
#include <sstream>

namespace fairpv {

using cplx = std::complex<double>;

Eigen::VectorXd InjectionVector::stacked() const {
  Eigen::VectorXd out(p.size() + q.size());
  out << p, q;
  return out;
}

Eigen::VectorXcd PowerFlowSolution::phasors() const {
  Eigen::VectorXcd v(v_mag.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = std::polar(v_mag(i), v_ang(i));
  return v;
}

namespace {
std::string nonconvergence_message(int iterations, double residual) {
  std::ostringstream os;
  os << "power flow did not converge after " << iterations << " iterations (residual " << residual << " pu)";
  return os.str();
}
}  // namespace

NonConvergence::NonConvergence(int iterations_, double residual_)
    : Error(nonconvergence_message(iterations_, residual_)), iterations(iterations_), residual(residual_) {}

PowerFlowSolver::PowerFlowSolver(const NetworkModel& net)
    : ybus_(build_ybus(net)), slack_(net.slack()), non_slack_(net.non_slack_buses()) {}

PowerFlowSolution PowerFlowSolver::solve(const InjectionVector& inj, const PowerFlowOptions& opts) const {
  const int nb = n_buses();
  const int n = nb - 1;
  if (inj.p.size() != n || inj.q.size() != n) throw Error("injection vector length does not match network");
  if (!(opts.tol > 0.0) || opts.max_iter < 1) throw Error("invalid power-flow options");

  Eigen::VectorXd vm = Eigen::VectorXd::Ones(nb);
  Eigen::VectorXd va = Eigen::VectorXd::Zero(nb);

  Eigen::VectorXd mismatch(2 * n);
  Eigen::MatrixXd jac(2 * n, 2 * n);
  Eigen::VectorXcd v(nb);

  for (int it = 1;; ++it) {
    for (int i = 0; i < nb; ++i) v(i) = std::polar(vm(i), va(i));
    const Eigen::VectorXcd current = ybus_ * v;
    const Eigen::VectorXcd s = v.cwiseProduct(current.conjugate());
    for (int k = 0; k < n; ++k) {
      const int b = non_slack_[static_cast<std::size_t>(k)];
      mismatch(k) = s(b).real() - inj.p(k);
      mismatch(n + k) = s(b).imag() - inj.q(k);
    }
    const double residual = mismatch.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(residual)) throw NonConvergence(it, residual);
    if (residual <= opts.tol) {
      PowerFlowSolution sol;
      sol.v_mag = vm;
      sol.v_ang = va;
      sol.iterations = it;
      sol.residual = residual;
      return sol;
    }
    if (it >= opts.max_iter) throw NonConvergence(it, residual);

    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    for (int r = 0; r < n; ++r) {
      const int i = non_slack_[static_cast<std::size_t>(r)];
      for (int c = 0; c < n; ++c) {
        const int k = non_slack_[static_cast<std::size_t>(c)];
        const cplx vn = v(k) / vm(k);
        cplx d_ang = cplx(0.0, 1.0) * v(i) * std::conj(-ybus_(i, k) * v(k));
        cplx d_mag = v(i) * std::conj(ybus_(i, k) * vn);
        if (i == k) {
          d_ang += cplx(0.0, 1.0) * v(i) * std::conj(current(i));
          d_mag += std::conj(current(i)) * vn;
        }
        jac(r, c) = d_ang.real();
        jac(r, n + c) = d_mag.real();
        jac(n + r, c) = d_ang.imag();
        jac(n + r, n + c) = d_mag.imag();
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) throw SingularJacobian("singular power-flow Jacobian");
    const Eigen::VectorXd step = lu.solve(mismatch);
    for (int k = 0; k < n; ++k) {
      const int b = non_slack_[static_cast<std::size_t>(k)];
      va(b) -= step(k);
      vm(b) -= step(n + k);
    }
  }
}

PowerFlowSolution solve_pf(const NetworkModel& net, const InjectionVector& inj, const PowerFlowOptions& opts) {
  return PowerFlowSolver(net).solve(inj, opts);
}

Eigen::VectorXcd bus_injections(const NetworkModel& net, const PowerFlowSolution& sol) {
  const Eigen::VectorXcd v = sol.phasors();
  const Eigen::VectorXcd current = build_ybus(net) * v;
  return v.cwiseProduct(current.conjugate());
}

double check_mismatch(const NetworkModel& net, const PowerFlowSolution& sol, const InjectionVector& inj) {
  const Eigen::VectorXcd s = bus_injections(net, sol);
  double worst = 0.0;
  for (int b : net.non_slack_buses()) {
    const int k = net.injection_index(b);
    worst = std::max(worst, std::abs(s(b).real() - inj.p(k)));
    worst = std::max(worst, std::abs(s(b).imag() - inj.q(k)));
  }
  return worst;
}

std::complex<double> branch_losses(const NetworkModel& net, const PowerFlowSolution& sol) {
  const Eigen::VectorXcd v = sol.phasors();
  cplx total(0.0, 0.0);
  for (const auto& br : net.branches) {
    const cplx z(br.r, br.x);
    const cplx vf = v(br.from_bus);
    const cplx vt = v(br.to_bus);
    const cplx i_series = (vf - vt) / z;
    total += z * std::norm(i_series);
    // each half of the line charging "consumes" -j b/2 |V|^2
    total += cplx(0.0, -br.b_shunt / 2.0) * (std::norm(vf) + std::norm(vt));
  }
  return total;
}

}  // namespace fairpv
