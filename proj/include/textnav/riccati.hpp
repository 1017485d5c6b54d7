#pragma once

#include "textnav/common.hpp"
#include "textnav/dynamics.hpp"
#include "textnav/rng.hpp"

namespace textnav {

struct LqrSolution {
  MatrixXd P;
  MatrixXd K;
  double care_residual = 0.0;
};

// Solves M X + X M' = C for X (M must have no eigenvalue pair summing to zero).
MatrixXd solve_lyapunov(const MatrixXd& M, const MatrixXd& C);

// Newton-Kleinman iteration on the continuous algebraic Riccati equation.
LqrSolution solve_care(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                       const MatrixXd& R);

LqrSolution spring_lqr(const SpringParams& p);

Vector3d lqr_policy_action(const MatrixXd& K, const StateVec& x);

double quadratic_cost(const Trajectory& traj, const MatrixXd& Q, const MatrixXd& R);

StateVec sample_spring_ic(Rng& rng, double sigma_scale, const Vector6d& bias);

}  // namespace textnav
