#pragma once

#include <Eigen/Sparse>

#include "textnav/common.hpp"

namespace textnav {

// Conic program in standard primal form
//   minimize    c'x
//   subject to  Ax + s = b,  s in K,
// where K is the product of the listed cones in row order.  Zero-cone rows
// are plain equality constraints; their dual components are unrestricted.
enum class ConeKind { Zero, NonNeg, SecondOrder };

struct Cone {
  ConeKind kind = ConeKind::Zero;
  int dim = 0;
};

struct ConicProgram {
  VectorXd c;
  Eigen::SparseMatrix<double> A;
  VectorXd b;
  std::vector<Cone> cones;

  void validate() const;
};

enum class ConicStatus { Optimal, Infeasible, Unbounded, MaxIter };

inline const char* to_string(ConicStatus s) {
  switch (s) {
    case ConicStatus::Optimal: return "Optimal";
    case ConicStatus::Infeasible: return "Infeasible";
    case ConicStatus::Unbounded: return "Unbounded";
    case ConicStatus::MaxIter: return "MaxIter";
  }
  return "?";
}

struct KktResiduals {
  double primal_res = 0.0;
  double dual_res = 0.0;
  double gap = 0.0;

  double worst() const { return std::max({primal_res, dual_res, gap}); }
};

struct ConicSolution {
  VectorXd x;
  VectorXd s;
  VectorXd y;
  ConicStatus status = ConicStatus::MaxIter;
  KktResiduals kkt;
  int iterations = 0;
};

struct ConicOptions {
  double tol = 1e-8;        // Optimal gate on primal/dual/gap
  double polish_tol = 1e-12;  // keep iterating toward this while progressing
  int max_iter = 200;
  double static_reg = 1e-9;  // LDL' diagonal regularization
};

ConicSolution solve(const ConicProgram& prog, const ConicOptions& opts = {});

// primal = ||Ax+s-b||_inf/(1+||b||_inf), dual = ||A'y+c||_inf/(1+||c||_inf),
// gap = |c'x+b'y|/(1+|c'x|).
KktResiduals kkt_residuals(const ConicProgram& prog, const ConicSolution& sol);

// Plain-text sparse triplet dump (one "i j v" line per entry) for
// cross-checking an instance against an external solver.
void write_triplets(const ConicProgram& prog, const std::string& path);

}  // namespace textnav
