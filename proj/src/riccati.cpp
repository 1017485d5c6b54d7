#include "textnav/riccati.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

namespace textnav {

namespace {

bool is_hurwitz(const MatrixXd& M) {
  Eigen::EigenSolver<MatrixXd> es(M);
  return es.eigenvalues().real().maxCoeff() < 0.0;
}

double care_residual_norm(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                          const MatrixXd& R, const MatrixXd& P) {
  MatrixXd res = A.transpose() * P + P * A - P * B * R.llt().solve(B.transpose() * P) + Q;
  return res.norm();
}

// Bass stabilization: shift A right of the spectrum, solve a Lyapunov
// equation, and read off a stabilizing gain.
MatrixXd stabilizing_gain(const MatrixXd& A, const MatrixXd& B) {
  const int n = (int)A.rows();
  if (is_hurwitz(A)) return MatrixXd::Zero(B.cols(), n);
  double beta = 2.0 * A.norm() + 1.0;
  MatrixXd M = -(A + beta * MatrixXd::Identity(n, n));
  MatrixXd X = solve_lyapunov(M, -2.0 * B * B.transpose());
  Eigen::FullPivLU<MatrixXd> lu(X);
  if (!lu.isInvertible())
    throw NumericalError("stabilizing gain failed: pair appears uncontrollable");
  MatrixXd K = B.transpose() * lu.inverse();
  if (!is_hurwitz(A - B * K))
    throw NumericalError("stabilizing gain failed: pair appears non-stabilizable");
  return K;
}

}  // namespace

MatrixXd solve_lyapunov(const MatrixXd& M, const MatrixXd& C) {
  const int n = (int)M.rows();
  MatrixXd I = MatrixXd::Identity(n, n);
  MatrixXd lhs = Eigen::kroneckerProduct(I, M).eval() + Eigen::kroneckerProduct(M, I).eval();
  VectorXd vecC = Eigen::Map<const VectorXd>(C.data(), n * n);
  Eigen::PartialPivLU<MatrixXd> lu(lhs);
  VectorXd vecX = lu.solve(vecC);
  if (!vecX.allFinite()) throw NumericalError("lyapunov solve produced non-finite values");
  return Eigen::Map<MatrixXd>(vecX.data(), n, n);
}

LqrSolution solve_care(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                       const MatrixXd& R) {
  const int n = (int)A.rows();
  if (B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols())
    throw ContractError("solve_care dimension mismatch");
  Eigen::LLT<MatrixXd> rllt(R);
  if (rllt.info() != Eigen::Success) throw ContractError("R must be positive definite");

  MatrixXd K = stabilizing_gain(A, B);
  MatrixXd P = MatrixXd::Zero(n, n);
  double res = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 60; ++it) {
    MatrixXd Acl = A - B * K;
    // (A-BK)'P + P(A-BK) = -(Q + K'RK)
    MatrixXd rhs = -(Q + K.transpose() * R * K);
    P = solve_lyapunov(Acl.transpose(), rhs);
    P = 0.5 * (P + P.transpose());
    K = rllt.solve(B.transpose() * P);
    res = care_residual_norm(A, B, Q, R, P);
    if (res < 1e-12) break;
  }
  if (!(res < 1e-10))
    throw NumericalError("newton-kleinman did not reach the riccati tolerance");
  Eigen::LLT<MatrixXd> pllt(P);
  if (pllt.info() != Eigen::Success)
    throw NumericalError("riccati iterate is not positive definite");
  if (!is_hurwitz(A - B * K))
    throw NumericalError("riccati closed loop is not stable");
  return LqrSolution{P, K, res};
}

LqrSolution spring_lqr(const SpringParams& p) {
  return solve_care(spring_A(p), spring_B(p), p.Q, p.R);
}

Vector3d lqr_policy_action(const MatrixXd& K, const StateVec& x) {
  if (K.rows() != 3 || K.cols() != 6) throw ContractError("gain must be 3x6");
  return -K * x.rv();
}

double quadratic_cost(const Trajectory& traj, const MatrixXd& Q, const MatrixXd& R) {
  if (traj.samples.empty()) throw ContractError("cost of an empty trajectory");
  auto integrand = [&](const TimedSample& s) {
    Vector6d x = s.state.rv();
    return x.dot(Q * x) + s.control.u.dot(R * s.control.u);
  };
  double J = 0.0;
  for (size_t i = 0; i + 1 < traj.samples.size(); ++i) {
    double dt = traj.samples[i + 1].t - traj.samples[i].t;
    J += 0.5 * dt * (integrand(traj.samples[i]) + integrand(traj.samples[i + 1]));
  }
  return J;
}

StateVec sample_spring_ic(Rng& rng, double sigma_scale, const Vector6d& bias) {
  if (!(sigma_scale >= 0.0)) throw ContractError("sigma_scale must be nonnegative");
  Vector6d x = bias + sigma_scale * rng.normal_vec(6);
  return StateVec::from_rv(x);
}

}  // namespace textnav
