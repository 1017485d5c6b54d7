#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "textnav/riccati.hpp"

using namespace textnav;

namespace {

// Independent oracle: P from the stable invariant subspace of the Hamiltonian
// matrix [[A, -BR^-1B'], [-Q, -A']].
MatrixXd care_eigen_oracle(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                           const MatrixXd& R) {
  const int n = (int)A.rows();
  MatrixXd H(2 * n, 2 * n);
  H << A, -B * R.inverse() * B.transpose(), -Q, -A.transpose();
  Eigen::EigenSolver<MatrixXd> es(H);
  Eigen::MatrixXcd V(2 * n, n);
  int c = 0;
  for (int i = 0; i < 2 * n; ++i)
    if (es.eigenvalues()(i).real() < 0.0) {
      REQUIRE(c < n);
      V.col(c++) = es.eigenvectors().col(i);
    }
  REQUIRE(c == n);
  Eigen::MatrixXcd X = V.topRows(n), Y = V.bottomRows(n);
  MatrixXd P = (Y * X.inverse()).real();
  return 0.5 * (P + P.transpose());
}

double care_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, const MatrixXd& P) {
  return (A.transpose() * P + P * A - P * B * R.inverse() * B.transpose() * P + Q).norm();
}

}  // namespace

TEST_CASE("lyapunov solver") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + (int)(rng.uniform() * 5);
    MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = rng.normal();
    M -= (M.eigenvalues().real().maxCoeff() + 0.5) * MatrixXd::Identity(n, n);
    MatrixXd C(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) C(i, j) = rng.normal();
    C = (0.5 * (C + C.transpose())).eval();
    MatrixXd X = solve_lyapunov(M, C);
    CHECK((M * X + X * M.transpose() - C).norm() < 1e-9);
  }
}

TEST_CASE("scalar riccati closed form") {
  MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << 0;
  B << 1;
  Q << 1;
  R << 1;
  auto sol = solve_care(A, B, Q, R);
  CHECK(sol.P(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sol.K(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("default spring riccati against two independent oracles") {
  SpringParams sp;
  auto sol = spring_lqr(sp);

  // per-axis closed form, frozen from an independent solver
  const double p11 = 1.279156197588850, p12 = 0.231662479035541, p22 = 0.392664991614216;
  const double k1 = 2.316624790355405, k2 = 3.926649916142158;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double want_pp = i == j ? p11 : 0.0;
      double want_pv = i == j ? p12 : 0.0;
      double want_vv = i == j ? p22 : 0.0;
      CHECK(sol.P(i, j) == doctest::Approx(want_pp).epsilon(1e-10));
      CHECK(sol.P(i, j + 3) == doctest::Approx(want_pv).epsilon(1e-10));
      CHECK(sol.P(i + 3, j + 3) == doctest::Approx(want_vv).epsilon(1e-10));
      CHECK(sol.K(i, j) == doctest::Approx(i == j ? k1 : 0.0).epsilon(1e-10));
      CHECK(sol.K(i, j + 3) == doctest::Approx(i == j ? k2 : 0.0).epsilon(1e-10));
    }
  }

  MatrixXd A = spring_A(sp), B = spring_B(sp);
  CHECK(care_residual(A, B, sp.Q, sp.R, sol.P) < 1e-9);
  CHECK(sol.care_residual < 1e-10);
  CHECK((sol.P - care_eigen_oracle(A, B, sp.Q, sp.R)).norm() < 1e-8);

  Eigen::EigenSolver<MatrixXd> es(A - B * sol.K);
  CHECK(es.eigenvalues().real().maxCoeff() < 0.0);
  std::vector<double> re(6);
  for (int i = 0; i < 6; ++i) re[i] = es.eigenvalues()(i).real();
  std::sort(re.begin(), re.end());
  CHECK(re[0] == doctest::Approx(-2.5).epsilon(1e-9));
  CHECK(re[5] == doctest::Approx(-1.32664991614).epsilon(1e-9));
}

TEST_CASE("riccati on random stabilizable systems matches the eigen oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 2 + (int)(rng.uniform() * 4);
    int m = 1 + (int)(rng.uniform() * 2);
    MatrixXd A(n, n), B(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) B(i, j) = rng.normal();
    MatrixXd Q = MatrixXd::Identity(n, n);
    MatrixXd R = MatrixXd::Identity(m, m);
    LqrSolution sol;
    try {
      sol = solve_care(A, B, Q, R);
    } catch (const NumericalError&) {
      continue;  // random pair happened to be (near-)unstabilizable
    }
    CHECK(care_residual(A, B, Q, R, sol.P) < 1e-8);
    CHECK((sol.P - care_eigen_oracle(A, B, Q, R)).norm() < 1e-6);
  }
}

TEST_CASE("unstabilizable pair is rejected") {
  MatrixXd A = MatrixXd::Identity(2, 2);  // two unstable modes
  MatrixXd B(2, 1);
  B << 1, 0;  // second mode unreachable
  CHECK_THROWS_AS(solve_care(A, B, MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1)),
                  NumericalError);
}

TEST_CASE("gain action") {
  auto sol = spring_lqr(SpringParams{});
  StateVec zero;
  CHECK(lqr_policy_action(sol.K, zero).isZero(0.0));

  StateVec x;
  x.r << 0.3, -0.7, 1.1;
  x.v << -0.2, 0.5, 0.9;
  Vector3d u1 = lqr_policy_action(sol.K, x);
  StateVec x2 = x;
  x2.r *= 2.0;
  x2.v *= 2.0;
  CHECK(lqr_policy_action(sol.K, x2).isApprox(2.0 * u1, 1e-14));

  StateVec e1;
  e1.r << 1, 0, 0;
  CHECK(lqr_policy_action(sol.K, e1).isApprox(-sol.K.col(0), 1e-14));

  // axis permutation (x,y,z) -> (y,z,x) permutes the control identically
  StateVec xp;
  xp.r << x.r(1), x.r(2), x.r(0);
  xp.v << x.v(1), x.v(2), x.v(0);
  Vector3d up = lqr_policy_action(sol.K, xp);
  CHECK(up(0) == doctest::Approx(u1(1)).epsilon(1e-13));
  CHECK(up(1) == doctest::Approx(u1(2)).epsilon(1e-13));
  CHECK(up(2) == doctest::Approx(u1(0)).epsilon(1e-13));
}

TEST_CASE("quadratic cost quadrature") {
  MatrixXd Q = MatrixXd::Identity(6, 6), R = 0.1 * MatrixXd::Identity(3, 3);

  Trajectory zero;
  for (int k = 0; k <= 10; ++k) {
    TimedSample s;
    s.t = 0.1 * k;
    zero.samples.push_back(s);
  }
  CHECK(quadratic_cost(zero, Q, R) == 0.0);

  Trajectory constant;
  for (int k = 0; k <= 1; ++k) {
    TimedSample s;
    s.t = k;
    s.state.r << 1, 0, 0;
    constant.samples.push_back(s);
  }
  CHECK(quadratic_cost(constant, Q, R) == doctest::Approx(1.0).epsilon(1e-15));

  Trajectory empty;
  CHECK_THROWS_AS(quadratic_cost(empty, Q, R), ContractError);
}

TEST_CASE("closed-loop cost equals the riccati quadratic form") {
  SpringParams sp;
  auto sol = spring_lqr(sp);
  MatrixXd Acl = spring_A(sp) - spring_B(sp) * sol.K;
  DerivFn field = [&](double, const VectorXd& x, const VectorXd&) -> VectorXd {
    return Acl * x;
  };
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    Vector6d x0 = rng.normal_vec(6);
    ControlFn cf = [&](double, const VectorXd& x) -> VectorXd {
      return (-sol.K * x).eval();
    };
    Trajectory tr = rk4_propagate(field, x0, 0.0, 12.0, 0.05, cf);
    double J = quadratic_cost(tr, sp.Q, sp.R);
    double Jstar = x0.dot(sol.P * x0);
    CHECK(J == doctest::Approx(Jstar).epsilon(0.02));
  }
}

TEST_CASE("spring ic sampler") {
  Rng rng(31);
  Vector6d bias = Vector6d::Zero();
  StateVec s0 = sample_spring_ic(rng, 0.0, bias);
  CHECK(s0.rv().isZero(0.0));

  Rng a(42), b(42);
  CHECK(sample_spring_ic(a, 1.0, bias).rv() == sample_spring_ic(b, 1.0, bias).rv());

  bias << 5, 5, 5, 5, 5, 5;
  Vector6d mean = Vector6d::Zero();
  int n = 4000;
  Rng rs(7);
  for (int i = 0; i < n; ++i) mean += sample_spring_ic(rs, 1.0, bias).rv();
  mean /= n;
  CHECK((mean - bias).norm() < 0.15);  // ~3 sigma of the mean estimate

  Rng r10(9);
  double big = 0.0;
  for (int i = 0; i < 200; ++i)
    big = std::max(big, sample_spring_ic(r10, 10.0, Vector6d::Zero()).rv().norm());
  CHECK(big > 15.0);  // 10-sigma draws reach far out
}
