#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lp_oracle.hpp"
#include "textnav/conic.hpp"

using namespace textnav;
using Trip = Eigen::Triplet<double>;

namespace {

ConicProgram dense_program(const Eigen::MatrixXd& A, const VectorXd& b,
                           const VectorXd& c, std::vector<Cone> cones) {
  ConicProgram p;
  p.A = A.sparseView();
  p.b = b;
  p.c = c;
  p.cones = std::move(cones);
  return p;
}

}  // namespace

TEST_CASE("scalar bound lp") {
  Eigen::MatrixXd A(1, 1);
  A << -1;
  VectorXd b(1), c(1);
  b << -1;
  c << 1;
  auto sol = solve(dense_program(A, b, c, {{ConeKind::NonNeg, 1}}));
  CHECK(sol.status == ConicStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.kkt.worst() < 1e-8);
}

TEST_CASE("pythagorean norm cone") {
  // min t  s.t.  t >= ||(3,4)||
  Eigen::MatrixXd A(5, 3);
  A.setZero();
  A(0, 1) = 1;
  A(1, 2) = 1;
  A(2, 0) = -1;
  A(3, 1) = -1;
  A(4, 2) = -1;
  VectorXd b(5), c(3);
  b << 3, 4, 0, 0, 0;
  c << 1, 0, 0;
  auto sol = solve(dense_program(A, b, c, {{ConeKind::Zero, 2}, {ConeKind::SecondOrder, 3}}));
  CHECK(sol.status == ConicStatus::Optimal);
  CHECK(std::abs(sol.x(0) - 5.0) < 1e-9);
}

TEST_CASE("random lps against vertex enumeration") {
  Rng rng(71);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ConicProgram p = oracle::random_box_lp(rng);
    const double exact = oracle::vertex_enum_min(p);
    REQUIRE(std::isfinite(exact));
    auto sol = solve(p);
    REQUIRE(sol.status == ConicStatus::Optimal);
    CHECK(std::abs(p.c.dot(sol.x) - exact) < 1e-7 * (1.0 + std::abs(exact)));
    CHECK(sol.kkt.worst() < 1e-8);
    ++solved;
  }
  CHECK(solved == 200);
}

TEST_CASE("norm socp family against closed form") {
  Rng rng(72);
  for (int trial = 0; trial < 60; ++trial) {
    auto inst = oracle::random_norm_socp(rng);
    auto sol = solve(inst.prog);
    REQUIRE(sol.status == ConicStatus::Optimal);
    CHECK(std::abs(sol.x(0) - inst.opt) < 1e-9 * (1.0 + inst.opt));
    // returned slack must sit inside the second-order cone
    const int k = static_cast<int>(inst.prog.A.cols()) - 1;
    const VectorXd sb = sol.s.tail(k + 1);
    CHECK(sb(0) >= sb.tail(k).norm() - 1e-9);
  }
}

TEST_CASE("pure feasibility lp with equality rows") {
  // zero objective, a couple of equality couplings, box bounds
  Rng rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    VectorXd x0(n);
    for (int i = 0; i < n; ++i) x0(i) = 0.5 * rng.normal();
    Eigen::MatrixXd A(2 + 2 * n, n);
    A.setZero();
    VectorXd b(2 + 2 * n);
    for (int r = 0; r < 2; ++r) {
      for (int j = 0; j < n; ++j) A(r, j) = rng.normal();
      b(r) = A.row(r).dot(x0);
    }
    for (int i = 0; i < n; ++i) {
      A(2 + 2 * i, i) = 1.0;
      b(2 + 2 * i) = std::abs(x0(i)) + 2.0;
      A(3 + 2 * i, i) = -1.0;
      b(3 + 2 * i) = std::abs(x0(i)) + 2.0;
    }
    auto sol = solve(dense_program(A, b, VectorXd::Zero(n),
                                   {{ConeKind::Zero, 2}, {ConeKind::NonNeg, 2 * n}}));
    REQUIRE(sol.status == ConicStatus::Optimal);
    CHECK(sol.kkt.primal_res < 1e-8);
  }
}

TEST_CASE("objective scaling leaves the minimizer alone") {
  Rng rng(74);
  ConicProgram p = oracle::random_box_lp(rng);
  auto base = solve(p);
  REQUIRE(base.status == ConicStatus::Optimal);
  ConicProgram q = p;
  q.c *= 1e4;
  auto scaled = solve(q);
  REQUIRE(scaled.status == ConicStatus::Optimal);
  CHECK((base.x - scaled.x).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("kkt residual formulas") {
  // hand-checkable candidate: A = [[2]], b = [3], c = [5], x = 1, s = 2, y = 7
  Eigen::MatrixXd A(1, 1);
  A << 2;
  VectorXd b(1), c(1);
  b << 3;
  c << 5;
  ConicProgram p = dense_program(A, b, c, {{ConeKind::NonNeg, 1}});
  ConicSolution sol;
  sol.x = VectorXd::Constant(1, 1.0);
  sol.s = VectorXd::Constant(1, 2.0);
  sol.y = VectorXd::Constant(1, 7.0);
  const KktResiduals k = kkt_residuals(p, sol);
  CHECK(k.primal_res == doctest::Approx(std::abs(2.0 + 2.0 - 3.0) / (1.0 + 3.0)));
  CHECK(k.dual_res == doctest::Approx(std::abs(2.0 * 7.0 + 5.0) / (1.0 + 5.0)));
  CHECK(k.gap == doctest::Approx(std::abs(5.0 + 21.0) / (1.0 + 5.0)));
}

TEST_CASE("perturbing an optimal point shows up in the residuals") {
  Rng rng(75);
  ConicProgram p = oracle::random_box_lp(rng);
  auto sol = solve(p);
  REQUIRE(sol.status == ConicStatus::Optimal);
  sol.x(0) += 1e-3;
  CHECK(kkt_residuals(p, sol).primal_res > 1e-5);
}

TEST_CASE("empty program") {
  ConicProgram p;
  p.A.resize(0, 3);
  p.b.resize(0);
  p.c = VectorXd::Zero(3);
  auto sol = solve(p);
  CHECK(sol.status == ConicStatus::Optimal);
  CHECK(sol.kkt.worst() == 0.0);
  CHECK(sol.x.norm() == 0.0);
}

TEST_CASE("infeasibility certificate") {
  // x >= 1 and x <= 0
  Eigen::MatrixXd A(2, 1);
  A << -1, 1;
  VectorXd b(2), c(1);
  b << -1, 0;
  c << 0;
  ConicProgram p = dense_program(A, b, c, {{ConeKind::NonNeg, 2}});
  auto sol = solve(p);
  REQUIRE(sol.status == ConicStatus::Infeasible);
  // Farkas: y in the dual cone, A'y ~ 0, b'y = -1
  CHECK(sol.y.minCoeff() >= 0.0);
  CHECK((p.A.transpose() * sol.y).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(p.b.dot(sol.y) == doctest::Approx(-1.0));
}

TEST_CASE("unboundedness certificate") {
  Eigen::MatrixXd A(1, 1);
  A << -1;
  VectorXd b(1), c(1);
  b << 0;
  c << -1;
  ConicProgram p = dense_program(A, b, c, {{ConeKind::NonNeg, 1}});
  auto sol = solve(p);
  REQUIRE(sol.status == ConicStatus::Unbounded);
  CHECK(p.c.dot(sol.x) == doctest::Approx(-1.0));
  CHECK((p.A * sol.x + sol.s).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(sol.s.minCoeff() >= -1e-12);
}

TEST_CASE("structurally deficient equality rows are named") {
  // row 1 is empty, rows 2 and 3 duplicate the same single column
  Eigen::MatrixXd A(4, 2);
  A.setZero();
  A(0, 0) = 1;
  A(2, 1) = 1;
  A(3, 1) = 2;
  ConicProgram p = dense_program(A, VectorXd::Zero(4), VectorXd::Zero(2),
                                 {{ConeKind::Zero, 4}});
  try {
    solve(p);
    FAIL("expected a presolve error");
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("structurally rank-deficient") != std::string::npos);
    CHECK(msg.find("1") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
}

TEST_CASE("validate catches malformed cone lists") {
  ConicProgram p;
  p.A.resize(3, 2);
  p.b = VectorXd::Zero(3);
  p.c = VectorXd::Zero(2);
  p.cones = {{ConeKind::NonNeg, 2}};
  CHECK_THROWS_AS(p.validate(), ContractError);
  p.cones = {{ConeKind::NonNeg, 2}, {ConeKind::SecondOrder, 1}};
  CHECK_THROWS_AS(p.validate(), ContractError);
}

TEST_CASE("triplet dump is readable") {
  Rng rng(76);
  ConicProgram p = oracle::random_box_lp(rng);
  const std::string path = "/tmp/textnav_conic_dump.txt";
  write_triplets(p, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);  // comment
  std::getline(in, line);
  std::istringstream head(line);
  long rows = 0, cols = 0, nnz = 0;
  head >> rows >> cols >> nnz;
  CHECK(rows == p.A.rows());
  CHECK(cols == p.A.cols());
  CHECK(nnz == p.A.nonZeros());
  std::remove(path.c_str());
}
