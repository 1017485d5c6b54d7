#pragma once

#include <functional>
#include <optional>

#include "textnav/codec.hpp"
#include "textnav/common.hpp"
#include "textnav/dynamics.hpp"
#include "textnav/rng.hpp"

namespace textnav {

struct ShootingUnknowns {
  Vector3d lam_r0 = Vector3d::Zero();
  Vector3d lam_v0 = Vector3d::Zero();
  double tf = 0.0;

  Vector6d lam() const {
    Vector6d l;
    l << lam_r0, lam_v0;
    return l;
  }
};

enum class RevFilter { ExactlyOne, SweepWindow, None };

struct ShootingOptions {
  double dt = 1e-3;         // final grid; the assembled residual lives here
  double dt_search = 4e-3;  // coarser grid for anchor/ladder/secant phases
  double inner_tol = 1e-11;
  double h_tol = 1e-11;     // transversality residual driven below this
  int inner_maxit = 150;
  int iter_budget = 4000;   // total inner iterations per solve before bailing
  double lambda0 = 1e-3;
  double fd_step = 1e-7;
  double tf_cap = 40.0;
  RevFilter rev_filter = RevFilter::ExactlyOne;
  double expected_sweep = 0.0;  // radians, SweepWindow only
  // When set, a failed direct warm start retries along the straight-line
  // homotopy from this state to the requested one, re-warming at each step.
  std::optional<StateVec> homotopy_x0;
};

struct ShootingResult {
  ShootingUnknowns unknowns;
  double residual_norm = std::numeric_limits<double>::infinity();  // inf-norm, 7-vector
  int iterations = 0;
  bool converged = false;       // solver success AND revolution filter
  bool solver_converged = false;
  Trajectory trajectory;        // dense, solver grid; controls u = -lam_v
  std::vector<Vector6d> costates;  // aligned with trajectory.samples
  double cost = 0.0;            // 1/2 integral of |u|^2
  double sweep = 0.0;           // radians
  int revolutions = -1;
  std::string failure;          // empty when converged
  double jacobian_cond = 0.0;   // diagnostic from the last LM factorization
};

struct LmResult {
  VectorXd x;
  VectorXd r;
  int iterations = 0;
  bool converged = false;
  double jacobian_cond = 0.0;
};

// Levenberg-Marquardt with Marquardt diagonal scaling; forward-difference
// Jacobian with a central-difference retry when progress stalls.
LmResult lm_solve(const std::function<VectorXd(const VectorXd&)>& fn, VectorXd x0,
                  double tol = 1e-10, int max_iter = 200, double lambda0 = 1e-3,
                  double fd_step = 1e-7);

// Entries 1-6: propagated state minus target; entry 7: final-time Hamiltonian.
Eigen::Matrix<double, 7, 1> shooting_residual(const ShootingUnknowns& u, const StateVec& x0,
                                              const StateVec& target, double dt = 1e-3);

ShootingResult solve_transfer(const StateVec& x0, const StateVec& target,
                              const std::optional<ShootingUnknowns>& guess = {},
                              const ShootingOptions& opts = {});

struct TransferDatasetCfg {
  int n_ic = 800;
  int n_mid = 800;
  int samples_per_traj = 500;
  uint64_t seed = 1;
  // Per-solve inner-iteration cap; corpus generation prefers cheap failures
  // over exhaustive rescues.
  int iter_budget = 1000;
};

struct TransferDatasetStats {
  int n_attempted = 0;
  int n_converged = 0;
  int n_pruned_revolutions = 0;
  double convergence_rate = 0.0;
  long n_records = 0;
};

TransferDatasetStats generate_transfer_dataset(const TransferParams& params,
                                               const TransferDatasetCfg& cfg,
                                               const std::string& corpus_path);

void write_transfer_stats(const TransferDatasetStats& stats, const std::string& path);

}  // namespace textnav
