#pragma once

#include <optional>

#include <Eigen/Dense>

#include "loid/netmodel.hpp"

namespace loid {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PowerFlowSolution {
  Eigen::VectorXd vm;  // pu
  Eigen::VectorXd va;  // rad
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;  // pu, inf-norm

  // Complex phasor vector Vm .* exp(j Va).
  Eigen::VectorXcd phasors() const;
};

struct SolverOptions {
  double tolerance = 1e-8;  // pu mismatch
  int max_iterations = 20;
  std::optional<PowerFlowSolution> warm_start;  // flat start if absent
};

// Full Newton-Raphson AC power flow in polar form. PV magnitudes are pinned
// to generator setpoints; reactive limits are not enforced. Non-convergence
// is reported through the `converged` flag, a singular Jacobian throws.
PowerFlowSolution solve_ac(const Network& net, const SolverOptions& opts = {});

// Lossless angle-only DC power flow; returns bus angles in radians with the
// slack angle fixed at its initial value.
Eigen::VectorXd solve_dc(const Network& net);

// Stacked power-injection mismatch [dP(non-slack); dQ(PQ)], pu.
Eigen::VectorXd mismatch(const Network& net, const Eigen::VectorXd& vm,
                         const Eigen::VectorXd& va);

// Analytic Newton Jacobian at the given state, in the same row/column
// ordering as `mismatch` / the internal state vector [Va(non-slack); Vm(PQ)].
Eigen::SparseMatrix<double> jacobian(const Network& net, const Eigen::VectorXd& vm,
                                     const Eigen::VectorXd& va);

// Buses whose magnitude is held fixed during the AC solve (slack + PV with
// an in-service generator); everything else behaves as PQ.
std::vector<BusKind> effective_kinds(const Network& net);

}  // namespace loid
