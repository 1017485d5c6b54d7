#pragma once

// Shared brute-force oracles for exercising the conic solver: random bounded
// inequality LPs checked by vertex enumeration, and min-norm SOCPs with
// closed-form optima.

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "textnav/common.hpp"
#include "textnav/conic.hpp"
#include "textnav/rng.hpp"

namespace textnav::oracle {

// Random LP  min c'x  s.t.  Gx <= h  with box rows plus a few extra cuts,
// built around a known interior point so it is feasible and bounded.
inline ConicProgram random_box_lp(Rng& rng, int max_vars = 8) {
  const int n = 2 + static_cast<int>(rng.uniform() * (max_vars - 1));
  VectorXd x0(n);
  for (int i = 0; i < n; ++i) x0(i) = 4.0 * (rng.uniform() - 0.5);
  const int extra = n >= 7 ? 2 : 2 + static_cast<int>(rng.uniform() * 3.0);
  const int m = 2 * n + extra;

  Eigen::MatrixXd G(m, n);
  VectorXd h(m);
  G.setZero();
  for (int i = 0; i < n; ++i) {
    const double r = 3.0 + 7.0 * rng.uniform();
    G(2 * i, i) = 1.0;
    h(2 * i) = std::abs(x0(i)) + r;
    G(2 * i + 1, i) = -1.0;
    h(2 * i + 1) = std::abs(x0(i)) + r;
  }
  for (int k = 0; k < extra; ++k) {
    for (int j = 0; j < n; ++j) G(2 * n + k, j) = rng.normal();
    h(2 * n + k) = G.row(2 * n + k).dot(x0) + 0.3 + 2.0 * rng.uniform();
  }

  ConicProgram p;
  p.c.resize(n);
  for (int i = 0; i < n; ++i) p.c(i) = rng.normal();
  p.A = G.sparseView();
  p.b = h;
  p.cones = {{ConeKind::NonNeg, m}};
  return p;
}

// Exact minimum of an inequality-only LP by enumerating vertices: every
// nonsingular n-subset of rows, kept if feasible.
inline double vertex_enum_min(const ConicProgram& p) {
  const Eigen::MatrixXd G(p.A);
  const VectorXd& h = p.b;
  const int m = static_cast<int>(G.rows()), n = static_cast<int>(G.cols());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Eigen::MatrixXd Gs(n, n);
  VectorXd hs(n);
  while (true) {
    for (int i = 0; i < n; ++i) {
      Gs.row(i) = G.row(idx[static_cast<size_t>(i)]);
      hs(i) = h(idx[static_cast<size_t>(i)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Gs);
    if (lu.isInvertible()) {
      const VectorXd v = lu.solve(hs);
      if (((G * v - h).array() <= 1e-9).all()) best = std::min(best, p.c.dot(v));
    }
    // next combination in lexicographic order
    int k = n - 1;
    while (k >= 0 && idx[static_cast<size_t>(k)] == m - n + k) --k;
    if (k < 0) break;
    ++idx[static_cast<size_t>(k)];
    for (int j = k + 1; j < n; ++j)
      idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
  }
  return best;
}

// min t  s.t.  t >= ||u||,  u pinned to d by equality rows.  Optimum ||d||.
struct NormSocp {
  ConicProgram prog;
  double opt;
};

inline NormSocp random_norm_socp(Rng& rng, int max_dim = 5) {
  const int k = 2 + static_cast<int>(rng.uniform() * (max_dim - 1));
  VectorXd d(k);
  for (int i = 0; i < k; ++i) d(i) = 3.0 * rng.normal();
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < k; ++i) t.emplace_back(i, 1 + i, 1.0);  // u = d
  for (int i = 0; i < k + 1; ++i) t.emplace_back(k + i, i, -1.0);
  NormSocp out;
  out.prog.A.resize(2 * k + 1, k + 1);
  out.prog.A.setFromTriplets(t.begin(), t.end());
  out.prog.b.resize(2 * k + 1);
  out.prog.b.head(k) = d;
  out.prog.b.tail(k + 1).setZero();
  out.prog.c = VectorXd::Zero(k + 1);
  out.prog.c(0) = 1.0;
  out.prog.cones = {{ConeKind::Zero, k}, {ConeKind::SecondOrder, k + 1}};
  out.opt = d.norm();
  return out;
}

}  // namespace textnav::oracle
