#include "loid/powerflow.hpp"

#include <cmath>

#include <Eigen/SparseLU>

namespace loid {

namespace {

// Complex bus power injections S = V .* conj(Y V).
Eigen::VectorXcd injections(const SparseComplex& y, const Eigen::VectorXcd& v) {
  Eigen::VectorXcd i = y * v;
  return v.cwiseProduct(i.conjugate());
}

Eigen::VectorXcd make_phasors(const Eigen::VectorXd& vm, const Eigen::VectorXd& va) {
  Eigen::VectorXcd v(vm.size());
  for (Eigen::Index k = 0; k < vm.size(); ++k) v[k] = std::polar(vm[k], va[k]);
  return v;
}

struct Indexing {
  std::vector<int> p_row;   // bus -> row in the P block, -1 for slack
  std::vector<int> q_row;   // bus -> row in the Q block (offset applied), -1 for non-PQ
  int n_p = 0;
  int n_q = 0;
};

Indexing build_indexing(const Network& net, const std::vector<BusKind>& kinds) {
  Indexing ix;
  const int n = net.bus_count();
  ix.p_row.assign(n, -1);
  ix.q_row.assign(n, -1);
  for (int b = 0; b < n; ++b)
    if (kinds[b] != BusKind::Slack) ix.p_row[b] = ix.n_p++;
  for (int b = 0; b < n; ++b)
    if (kinds[b] == BusKind::PQ) ix.q_row[b] = ix.n_q++;
  return ix;
}

}  // namespace

Eigen::VectorXcd PowerFlowSolution::phasors() const { return make_phasors(vm, va); }

std::vector<BusKind> effective_kinds(const Network& net) {
  std::vector<BusKind> kinds(net.bus_count());
  for (const auto& b : net.buses) {
    if (b.kind == BusKind::PV && !net.has_in_service_gen(b.id))
      kinds[b.id] = BusKind::PQ;  // PV without a live generator behaves as a load bus
    else
      kinds[b.id] = b.kind;
  }
  return kinds;
}

Eigen::VectorXd mismatch(const Network& net, const Eigen::VectorXd& vm,
                         const Eigen::VectorXd& va) {
  const auto kinds = effective_kinds(net);
  const auto ix = build_indexing(net, kinds);
  const SparseComplex y = admittance_matrix(net);
  const Eigen::VectorXcd s = injections(y, make_phasors(vm, va));
  const auto p_spec = net.net_p();
  const auto q_spec = net.net_q();

  Eigen::VectorXd f(ix.n_p + ix.n_q);
  for (int b = 0; b < net.bus_count(); ++b) {
    if (ix.p_row[b] >= 0) f[ix.p_row[b]] = s[b].real() - p_spec[b];
    if (ix.q_row[b] >= 0) f[ix.n_p + ix.q_row[b]] = s[b].imag() - q_spec[b];
  }
  return f;
}

Eigen::SparseMatrix<double> jacobian(const Network& net, const Eigen::VectorXd& vm,
                                     const Eigen::VectorXd& va) {
  const auto kinds = effective_kinds(net);
  const auto ix = build_indexing(net, kinds);
  const SparseComplex y = admittance_matrix(net);
  const Eigen::VectorXcd s = injections(y, make_phasors(vm, va));

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(y.nonZeros() * 4);
  const int n_p = ix.n_p;
  for (int j = 0; j < y.outerSize(); ++j) {
    for (SparseComplex::InnerIterator it(y, j); it; ++it) {
      const int i = static_cast<int>(it.row());
      const double g = it.value().real();
      const double bb = it.value().imag();
      double dp_dva, dp_dvm, dq_dva, dq_dvm;
      if (i == j) {
        dp_dva = -s[i].imag() - bb * vm[i] * vm[i];
        dp_dvm = s[i].real() / vm[i] + g * vm[i];
        dq_dva = s[i].real() - g * vm[i] * vm[i];
        dq_dvm = s[i].imag() / vm[i] - bb * vm[i];
      } else {
        const double tij = va[i] - va[j];
        const double c = std::cos(tij), sn = std::sin(tij);
        dp_dva = vm[i] * vm[j] * (g * sn - bb * c);
        dp_dvm = vm[i] * (g * c + bb * sn);
        dq_dva = -vm[i] * vm[j] * (g * c + bb * sn);
        dq_dvm = vm[i] * (g * sn - bb * c);
      }
      const int pr = ix.p_row[i], qr = ix.q_row[i];
      const int ac = ix.p_row[j], mc = ix.q_row[j];  // angle / magnitude columns
      if (pr >= 0 && ac >= 0) trips.emplace_back(pr, ac, dp_dva);
      if (pr >= 0 && mc >= 0) trips.emplace_back(pr, n_p + mc, dp_dvm);
      if (qr >= 0 && ac >= 0) trips.emplace_back(n_p + qr, ac, dq_dva);
      if (qr >= 0 && mc >= 0) trips.emplace_back(n_p + qr, n_p + mc, dq_dvm);
    }
  }
  Eigen::SparseMatrix<double> jac(ix.n_p + ix.n_q, ix.n_p + ix.n_q);
  jac.setFromTriplets(trips.begin(), trips.end());
  return jac;
}

PowerFlowSolution solve_ac(const Network& net, const SolverOptions& opts) {
  if (opts.tolerance <= 0) throw SolverError("tolerance must be positive");
  if (opts.max_iterations < 1) throw SolverError("max_iterations must be >= 1");

  const int n = net.bus_count();
  const auto kinds = effective_kinds(net);
  const auto ix = build_indexing(net, kinds);

  PowerFlowSolution sol;
  if (opts.warm_start) {
    sol.vm = opts.warm_start->vm;
    sol.va = opts.warm_start->va;
    if (sol.vm.size() != n || sol.va.size() != n)
      throw SolverError("warm start dimension mismatch");
  } else {
    sol.vm = Eigen::VectorXd::Ones(n);
    sol.va = Eigen::VectorXd::Constant(n, net.buses[net.slack_bus].va_init);
  }
  // pin controlled magnitudes and the slack angle
  for (int b = 0; b < n; ++b)
    if (kinds[b] != BusKind::PQ) sol.vm[b] = net.voltage_setpoint(b);
  sol.va[net.slack_bus] = net.buses[net.slack_bus].va_init;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  for (int iter = 0; iter <= opts.max_iterations; ++iter) {
    const Eigen::VectorXd f = mismatch(net, sol.vm, sol.va);
    sol.max_mismatch = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
    sol.iterations = iter;
    if (sol.max_mismatch <= opts.tolerance) {
      sol.converged = true;
      return sol;
    }
    if (iter == opts.max_iterations) break;

    Eigen::SparseMatrix<double> jac = jacobian(net, sol.vm, sol.va);
    jac.makeCompressed();
    lu.compute(jac);
    if (lu.info() != Eigen::Success) throw SolverError("singular Jacobian");
    const Eigen::VectorXd dx = lu.solve(f);
    if (lu.info() != Eigen::Success) throw SolverError("Jacobian solve failed");

    for (int b = 0; b < n; ++b) {
      if (ix.p_row[b] >= 0) sol.va[b] -= dx[ix.p_row[b]];
      if (ix.q_row[b] >= 0) sol.vm[b] -= dx[ix.n_p + ix.q_row[b]];
    }
  }
  sol.converged = false;
  return sol;
}

Eigen::VectorXd solve_dc(const Network& net) {
  const int n = net.bus_count();
  const int slack = net.slack_bus;

  // reduced susceptance matrix over non-slack buses
  std::vector<int> row(n, -1);
  int nr = 0;
  for (int b = 0; b < n; ++b)
    if (b != slack) row[b] = nr++;

  auto p = net.net_p();
  const double slack_angle = net.buses[slack].va_init;
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nr);
  for (int b = 0; b < n; ++b)
    if (row[b] >= 0) rhs[row[b]] = p[b];

  for (const auto& br : net.branches) {
    if (br.status != BranchStatus::InService) continue;
    if (br.x == 0.0) throw SolverError("branch " + std::to_string(br.id) + " has zero reactance");
    const double b_series = 1.0 / (br.x * br.tap);
    const int f = br.from, t = br.to;
    if (row[f] >= 0) trips.emplace_back(row[f], row[f], b_series);
    if (row[t] >= 0) trips.emplace_back(row[t], row[t], b_series);
    if (row[f] >= 0 && row[t] >= 0) {
      trips.emplace_back(row[f], row[t], -b_series);
      trips.emplace_back(row[t], row[f], -b_series);
    }
    // slack column moves to the right-hand side
    if (row[f] < 0 && row[t] >= 0) rhs[row[t]] += b_series * slack_angle;
    if (row[t] < 0 && row[f] >= 0) rhs[row[f]] += b_series * slack_angle;
    // phase shifter injects a fixed transfer
    if (br.phase_shift != 0.0) {
      if (row[f] >= 0) rhs[row[f]] += b_series * br.phase_shift;
      if (row[t] >= 0) rhs[row[t]] -= b_series * br.phase_shift;
    }
  }

  Eigen::SparseMatrix<double> bmat(nr, nr);
  bmat.setFromTriplets(trips.begin(), trips.end());
  bmat.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(bmat);
  if (lu.info() != Eigen::Success)
    throw SolverError("singular reduced susceptance matrix (network disconnected?)");
  const Eigen::VectorXd theta_r = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw SolverError("DC solve failed");

  Eigen::VectorXd theta(n);
  theta[slack] = slack_angle;
  for (int b = 0; b < n; ++b)
    if (row[b] >= 0) theta[b] = theta_r[row[b]];
  return theta;
}

}  // namespace loid
