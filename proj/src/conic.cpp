#include "textnav/conic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>

// Homogeneous self-dual interior point method with Nesterov-Todd scaling and
// a Mehrotra predictor-corrector, after the classic conelp construction.
// The embedding carries (x, y, z, s, tau, kappa) with residuals
//   r_x = E'y + G'z + c tau          (E: zero-cone rows, G: the rest)
//   r_y = E x - b_e tau
//   r_z = G x + s - h tau
//   r_t = c'x + b_e'y + h'z + kappa
// and scaled complementarity lambda o lambda = mu e, lambda = W z = W^-1 s.
// Eliminating ds and dkappa reduces each Newton step to two solves with
//   K = [ 0  E'  G' ; E  0  0 ; G  0  -W^2 ],
// one for the (c, b_e, h) column and one for the residual column, glued by a
// scalar equation for dtau.  K is factored as LDL' with static diagonal
// regularization and the solves are fixed up by iterative refinement against
// the unregularized matrix.

namespace textnav {
namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Block {
  ConeKind kind;
  int off;  // offset into the cone-row section
  int dim;
};

// Row split of the program: zero-cone rows become plain equalities, the rest
// keep their cones.  Original row order is preserved inside each part.
struct Split {
  std::vector<int> eq_rows, cone_rows;  // original indices
  std::vector<Block> blocks;
  SpMat E, G;
  VectorXd be, h;
  int ne = 0, mc = 0, barrier = 0;
};

Split split_rows(const ConicProgram& p) {
  Split sp;
  int row = 0;
  for (const Cone& k : p.cones) {
    if (k.kind == ConeKind::Zero) {
      for (int i = 0; i < k.dim; ++i) sp.eq_rows.push_back(row + i);
    } else {
      sp.blocks.push_back({k.kind, static_cast<int>(sp.cone_rows.size()), k.dim});
      for (int i = 0; i < k.dim; ++i) sp.cone_rows.push_back(row + i);
      sp.barrier += k.kind == ConeKind::NonNeg ? k.dim : 1;
    }
    row += k.dim;
  }
  sp.ne = static_cast<int>(sp.eq_rows.size());
  sp.mc = static_cast<int>(sp.cone_rows.size());

  const int n = static_cast<int>(p.A.cols());
  std::vector<int> dest(static_cast<size_t>(p.A.rows()), -1);
  for (int i = 0; i < sp.ne; ++i) dest[static_cast<size_t>(sp.eq_rows[i])] = i;
  for (int i = 0; i < sp.mc; ++i)
    dest[static_cast<size_t>(sp.cone_rows[i])] = sp.ne + i;
  std::vector<Trip> te, tg;
  for (int col = 0; col < p.A.outerSize(); ++col)
    for (SpMat::InnerIterator it(p.A, col); it; ++it) {
      const int d = dest[static_cast<size_t>(it.row())];
      if (d < sp.ne)
        te.emplace_back(d, col, it.value());
      else
        tg.emplace_back(d - sp.ne, col, it.value());
    }
  sp.E.resize(sp.ne, n);
  sp.E.setFromTriplets(te.begin(), te.end());
  sp.G.resize(sp.mc, n);
  sp.G.setFromTriplets(tg.begin(), tg.end());
  sp.be.resize(sp.ne);
  for (int i = 0; i < sp.ne; ++i) sp.be(i) = p.b(sp.eq_rows[i]);
  sp.h.resize(sp.mc);
  for (int i = 0; i < sp.mc; ++i) sp.h(i) = p.b(sp.cone_rows[i]);
  return sp;
}

// Maximum bipartite matching (Kuhn) on the equality-row sparsity pattern;
// rows left unmatched are structurally dependent.
std::vector<int> unmatched_eq_rows(const SpMat& E) {
  const int m = static_cast<int>(E.rows()), n = static_cast<int>(E.cols());
  std::vector<std::vector<int>> adj(static_cast<size_t>(m));
  for (int col = 0; col < E.outerSize(); ++col)
    for (SpMat::InnerIterator it(E, col); it; ++it)
      adj[static_cast<size_t>(it.row())].push_back(col);
  std::vector<int> col_owner(static_cast<size_t>(n), -1);
  std::vector<char> seen;
  std::function<bool(int)> try_row = [&](int r) {
    for (int c : adj[static_cast<size_t>(r)]) {
      if (seen[static_cast<size_t>(c)]) continue;
      seen[static_cast<size_t>(c)] = 1;
      if (col_owner[static_cast<size_t>(c)] < 0 ||
          try_row(col_owner[static_cast<size_t>(c)])) {
        col_owner[static_cast<size_t>(c)] = r;
        return true;
      }
    }
    return false;
  };
  std::vector<char> matched(static_cast<size_t>(m), 0);
  for (int r = 0; r < m; ++r) {
    seen.assign(static_cast<size_t>(n), 0);
    matched[static_cast<size_t>(r)] = try_row(r) ? 1 : 0;
  }
  std::vector<int> bad;
  for (int r = 0; r < m; ++r)
    if (!matched[static_cast<size_t>(r)]) bad.push_back(r);
  return bad;
}

// Nesterov-Todd scaling state, one entry per cone block.  For the orthant
// W^2 is diagonal; for a second-order block W^2 = eta^2 (2 wb wb' - J) with
// wb the J-unit scaling point, and W^{+/-1} apply as hyperbolic Householder
// transforms H(wb), H(J wb).
struct Scaling {
  std::vector<VectorXd> wsq_diag;   // NonNeg: s_i/z_i
  std::vector<VectorXd> wbar;       // SOC
  std::vector<double> eta2;         // SOC
  VectorXd lambda;                  // scaled point, all cone rows
};

double soc_res(const VectorXd& u) { return u(0) * u(0) - u.tail(u.size() - 1).squaredNorm(); }

VectorXd house_apply(const VectorXd& wb, const VectorXd& v) {
  const auto w1 = wb.tail(wb.size() - 1);
  const auto v1 = v.tail(v.size() - 1);
  const double dot = w1.dot(v1);
  VectorXd out(v.size());
  out(0) = wb(0) * v(0) + dot;
  out.tail(v.size() - 1) = v1 + (v(0) + dot / (1.0 + wb(0))) * w1;
  return out;
}

VectorXd jflip(const VectorXd& v) {
  VectorXd out = -v;
  out(0) = v(0);
  return out;
}

Scaling make_scaling(const Split& sp, const VectorXd& s, const VectorXd& z) {
  Scaling sc;
  sc.lambda.resize(sp.mc);
  for (const Block& bl : sp.blocks) {
    if (bl.kind == ConeKind::NonNeg) {
      VectorXd d(bl.dim);
      for (int i = 0; i < bl.dim; ++i) {
        const double si = s(bl.off + i), zi = z(bl.off + i);
        d(i) = si / zi;
        sc.lambda(bl.off + i) = std::sqrt(si * zi);
      }
      sc.wsq_diag.push_back(std::move(d));
      sc.wbar.emplace_back();
      sc.eta2.push_back(0.0);
    } else {
      const VectorXd sb = s.segment(bl.off, bl.dim);
      const VectorXd zb = z.segment(bl.off, bl.dim);
      const double sn = std::sqrt(std::max(soc_res(sb), 1e-300));
      const double zn = std::sqrt(std::max(soc_res(zb), 1e-300));
      const VectorXd sbar = sb / sn, zbar = zb / zn;
      const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
      const VectorXd wb = (sbar + jflip(zbar)) / (2.0 * gamma);
      const double eta = std::sqrt(sn / zn);
      sc.lambda.segment(bl.off, bl.dim) = eta * house_apply(wb, zb);
      sc.wsq_diag.emplace_back();
      sc.wbar.push_back(wb);
      sc.eta2.push_back(eta * eta);
    }
  }
  return sc;
}

// W v and W^-1 v over the full cone-row vector.
VectorXd w_apply(const Split& sp, const Scaling& sc, const VectorXd& v, bool inverse) {
  VectorXd out(sp.mc);
  for (size_t k = 0; k < sp.blocks.size(); ++k) {
    const Block& bl = sp.blocks[k];
    const auto vb = v.segment(bl.off, bl.dim);
    if (bl.kind == ConeKind::NonNeg) {
      for (int i = 0; i < bl.dim; ++i) {
        const double w = std::sqrt(sc.wsq_diag[k](i));
        out(bl.off + i) = inverse ? vb(i) / w : vb(i) * w;
      }
    } else {
      const double eta = std::sqrt(sc.eta2[k]);
      if (inverse)
        out.segment(bl.off, bl.dim) = house_apply(jflip(sc.wbar[k]), vb) / eta;
      else
        out.segment(bl.off, bl.dim) = eta * house_apply(sc.wbar[k], vb);
    }
  }
  return out;
}

// Jordan-algebra product, inverse product, and identity.
VectorXd jordan_mul(const Split& sp, const VectorXd& a, const VectorXd& b) {
  VectorXd out(sp.mc);
  for (const Block& bl : sp.blocks) {
    const auto ab = a.segment(bl.off, bl.dim);
    const auto bb = b.segment(bl.off, bl.dim);
    if (bl.kind == ConeKind::NonNeg) {
      out.segment(bl.off, bl.dim) = ab.cwiseProduct(bb);
    } else {
      out(bl.off) = ab.dot(bb);
      out.segment(bl.off + 1, bl.dim - 1) =
          ab(0) * bb.tail(bl.dim - 1) + bb(0) * ab.tail(bl.dim - 1);
    }
  }
  return out;
}

VectorXd jordan_div(const Split& sp, const VectorXd& lam, const VectorXd& v) {
  VectorXd out(sp.mc);
  for (const Block& bl : sp.blocks) {
    const auto lb = lam.segment(bl.off, bl.dim);
    const auto vb = v.segment(bl.off, bl.dim);
    if (bl.kind == ConeKind::NonNeg) {
      out.segment(bl.off, bl.dim) = vb.cwiseQuotient(lb);
    } else {
      const auto l1 = lb.tail(bl.dim - 1);
      const auto v1 = vb.tail(bl.dim - 1);
      const double det = lb(0) * lb(0) - l1.squaredNorm();
      const double u0 = (lb(0) * vb(0) - l1.dot(v1)) / det;
      out(bl.off) = u0;
      out.segment(bl.off + 1, bl.dim - 1) = (v1 - u0 * l1) / lb(0);
    }
  }
  return out;
}

VectorXd cone_identity(const Split& sp) {
  VectorXd e = VectorXd::Zero(sp.mc);
  for (const Block& bl : sp.blocks) {
    if (bl.kind == ConeKind::NonNeg)
      e.segment(bl.off, bl.dim).setOnes();
    else
      e(bl.off) = 1.0;
  }
  return e;
}

// Largest step with u + alpha d staying in the cone (u strictly interior).
double max_step(const Split& sp, const VectorXd& u, const VectorXd& d) {
  double alpha = kInf;
  for (const Block& bl : sp.blocks) {
    const auto ub = u.segment(bl.off, bl.dim);
    const auto db = d.segment(bl.off, bl.dim);
    if (bl.kind == ConeKind::NonNeg) {
      for (int i = 0; i < bl.dim; ++i)
        if (db(i) < 0.0) alpha = std::min(alpha, -ub(i) / db(i));
    } else {
      const auto u1 = ub.tail(bl.dim - 1);
      const auto d1 = db.tail(bl.dim - 1);
      const double a = db(0) * db(0) - d1.squaredNorm();
      const double b = ub(0) * db(0) - u1.dot(d1);
      const double c = ub(0) * ub(0) - u1.squaredNorm();
      const double disc = b * b - a * c;
      if (disc >= 0.0) {
        const double denom = std::sqrt(disc) - b;
        if (denom > 0.0) alpha = std::min(alpha, c / denom);
      }
      if (db(0) < 0.0) alpha = std::min(alpha, -ub(0) / db(0));
    }
  }
  return alpha;
}

struct Kkt {
  SpMat K;                // unregularized
  VectorXd reg_sign;      // +1 for x block, -1 for dual blocks
  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool analyzed = false;
  double shift = 0.0;     // shift actually used by the current factor
  mutable double solve_err = 0.0;

  void assemble(const Split& sp, const Scaling& sc, int n, double delta) {
    const int N = n + sp.ne + sp.mc;
    std::vector<Trip> t;
    t.reserve(static_cast<size_t>(2 * (sp.E.nonZeros() + sp.G.nonZeros()) + N + 4 * sp.mc));
    for (int col = 0; col < sp.E.outerSize(); ++col)
      for (SpMat::InnerIterator it(sp.E, col); it; ++it) {
        t.emplace_back(n + it.row(), it.col(), it.value());
        t.emplace_back(it.col(), n + it.row(), it.value());
      }
    for (int col = 0; col < sp.G.outerSize(); ++col)
      for (SpMat::InnerIterator it(sp.G, col); it; ++it) {
        t.emplace_back(n + sp.ne + it.row(), it.col(), it.value());
        t.emplace_back(it.col(), n + sp.ne + it.row(), it.value());
      }
    for (size_t k = 0; k < sp.blocks.size(); ++k) {
      const Block& bl = sp.blocks[k];
      const int base = n + sp.ne + bl.off;
      if (bl.kind == ConeKind::NonNeg) {
        for (int i = 0; i < bl.dim; ++i)
          t.emplace_back(base + i, base + i, -sc.wsq_diag[k](i));
      } else {
        // W^2 = eta^2 (2 wb wb' - J), dense within the block.
        const VectorXd& wb = sc.wbar[k];
        for (int i = 0; i < bl.dim; ++i)
          for (int j = 0; j < bl.dim; ++j) {
            double v = 2.0 * wb(i) * wb(j);
            if (i == j) v -= i == 0 ? 1.0 : -1.0;
            t.emplace_back(base + i, base + j, -sc.eta2[k] * v);
          }
      }
    }
    // zero diagonal entries keep the pattern stable; the shift is added below
    for (int i = 0; i < N; ++i) t.emplace_back(i, i, 0.0);
    K.resize(N, N);
    K.setFromTriplets(t.begin(), t.end());
    if (reg_sign.size() != N) {
      reg_sign.resize(N);
      reg_sign.head(n).setConstant(1.0);
      reg_sign.tail(N - n).setConstant(-1.0);
    }
    if (!analyzed) {
      ldlt.analyzePattern(K);
      analyzed = true;
    }
    // Factor K + shift*diag(reg_sign).  Unpivoted LDL' can hit a cancelled
    // pivot when mu drops toward the shift scale; escalate the shift until
    // the factor is usable and let refinement in solve() remove the bias.
    shift = delta;
    for (int attempt = 0; attempt < 6; ++attempt) {
      SpMat Kr = K;
      for (int i = 0; i < N; ++i) Kr.coeffRef(i, i) += shift * reg_sign(i);
      ldlt.factorize(Kr);
      // Pivots legitimately span many orders here; only an exact zero or a
      // non-finite value marks the factor as unusable.
      bool ok = ldlt.info() == Eigen::Success;
      if (ok) {
        const auto& d = ldlt.vectorD();
        ok = d.cwiseAbs().minCoeff() > 0.0 && std::isfinite(d.cwiseAbs().maxCoeff());
      }
#ifdef TEXTNAV_CONIC_TRACE
      std::fprintf(stderr, "  factorize shift=%.1e ok=%d\n", shift, ok ? 1 : 0);
#endif
      if (ok) return;
      shift *= 100.0;
    }
  }

  // Solve against the unshifted matrix, refining until the residual stops
  // improving: the factor's shift is a pure perturbation to remove.
  VectorXd solve(const VectorXd& rhs) const {
    const double rhs_norm = rhs.size() ? rhs.cwiseAbs().maxCoeff() : 0.0;
    VectorXd x = ldlt.solve(rhs);
    VectorXd best = x;
    double best_err = kInf;
    for (int pass = 0; pass < 30; ++pass) {
      const VectorXd r = rhs - K * x;
      const double err = r.cwiseAbs().maxCoeff();
      if (err < best_err) {
        best = x;
        best_err = err;
      }
      if (err <= 1e-14 * (1.0 + rhs_norm) || err > 0.98 * best_err) break;
      x += ldlt.solve(r);
    }
    solve_err = best_err / (1.0 + rhs_norm);
#ifdef TEXTNAV_CONIC_TRACE
    std::fprintf(stderr, "  kkt solve: rhs=%.3e err=%.3e sol=%.3e\n", rhs_norm,
                 best_err, best.cwiseAbs().maxCoeff());
#endif
    return best;
  }
};

struct Candidate {
  VectorXd x, y, s;  // y in original row order
  KktResiduals kkt;
};

// Ruiz equilibration: iterative sqrt row/column inf-norm balancing, with one
// shared factor per second-order block so the scaled rows stay a cone.  The
// scalars sb, sc then normalize the scaled rhs and objective.
struct Equil {
  VectorXd row, col;
  double sb = 1.0, sc = 1.0;
};

Equil make_equil(const ConicProgram& p) {
  const int m = static_cast<int>(p.A.rows()), n = static_cast<int>(p.A.cols());
  Equil eq;
  eq.row = VectorXd::Ones(m);
  eq.col = VectorXd::Ones(n);
  for (int pass = 0; pass < 8; ++pass) {
    VectorXd rmax = VectorXd::Zero(m), cmax = VectorXd::Zero(n);
    for (int j = 0; j < p.A.outerSize(); ++j)
      for (SpMat::InnerIterator it(p.A, j); it; ++it) {
        const double a = std::abs(eq.row(it.row()) * it.value() * eq.col(j));
        rmax(it.row()) = std::max(rmax(it.row()), a);
        cmax(j) = std::max(cmax(j), a);
      }
    int off = 0;
    for (const Cone& k : p.cones) {
      if (k.kind == ConeKind::SecondOrder)
        rmax.segment(off, k.dim).setConstant(rmax.segment(off, k.dim).maxCoeff());
      off += k.dim;
    }
    for (int i = 0; i < m; ++i)
      if (rmax(i) > 0.0) eq.row(i) /= std::sqrt(rmax(i));
    for (int j = 0; j < n; ++j)
      if (cmax(j) > 0.0) eq.col(j) /= std::sqrt(cmax(j));
  }
  if (m) eq.sb = std::max(1.0, (eq.row.array() * p.b.array()).abs().maxCoeff());
  if (n) eq.sc = std::max(1.0, (eq.col.array() * p.c.array()).abs().maxCoeff());
  return eq;
}

// Residuals of a candidate against the original combined program.
KktResiduals residuals_of(const ConicProgram& p, const VectorXd& x, const VectorXd& s,
                          const VectorXd& y) {
  KktResiduals k;
  const double bn = p.b.size() ? p.b.cwiseAbs().maxCoeff() : 0.0;
  const double cn = p.c.size() ? p.c.cwiseAbs().maxCoeff() : 0.0;
  const VectorXd pr = p.A * x + s - p.b;
  const VectorXd dr = p.A.transpose() * y + p.c;
  k.primal_res = (pr.size() ? pr.cwiseAbs().maxCoeff() : 0.0) / (1.0 + bn);
  k.dual_res = (dr.size() ? dr.cwiseAbs().maxCoeff() : 0.0) / (1.0 + cn);
  const double cx = p.c.dot(x), by = p.b.size() ? p.b.dot(y) : 0.0;
  k.gap = std::abs(cx + by) / (1.0 + std::abs(cx));
  return k;
}

}  // namespace

void ConicProgram::validate() const {
  if (A.rows() != b.size() || A.cols() != c.size())
    throw ContractError("conic program dimensions disagree");
  long total = 0;
  for (const Cone& k : cones) {
    if (k.dim <= 0) throw ContractError("cone with nonpositive dimension");
    if (k.kind == ConeKind::SecondOrder && k.dim < 2)
      throw ContractError("second-order cone needs dimension >= 2");
    total += k.dim;
  }
  if (total != A.rows()) throw ContractError("cone sizes do not cover the rows");
}

KktResiduals kkt_residuals(const ConicProgram& prog, const ConicSolution& sol) {
  if (sol.x.size() != prog.c.size() || sol.s.size() != prog.b.size() ||
      sol.y.size() != prog.b.size())
    throw ContractError("solution dimensions disagree with the program");
  return residuals_of(prog, sol.x, sol.s, sol.y);
}

void write_triplets(const ConicProgram& prog, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path);
  out << "# rows cols nnz\n"
      << prog.A.rows() << " " << prog.A.cols() << " " << prog.A.nonZeros() << "\n";
  out.precision(17);
  out << "# A (row col value)\n";
  for (int col = 0; col < prog.A.outerSize(); ++col)
    for (SpMat::InnerIterator it(prog.A, col); it; ++it)
      out << it.row() << " " << it.col() << " " << it.value() << "\n";
  out << "# b\n";
  for (int i = 0; i < prog.b.size(); ++i) out << prog.b(i) << "\n";
  out << "# c\n";
  for (int i = 0; i < prog.c.size(); ++i) out << prog.c(i) << "\n";
  out << "# cones\n";
  for (const Cone& k : prog.cones)
    out << (k.kind == ConeKind::Zero ? "zero"
            : k.kind == ConeKind::NonNeg ? "nonneg" : "soc")
        << " " << k.dim << "\n";
}

ConicSolution solve(const ConicProgram& prog, const ConicOptions& opts) {
  prog.validate();
  const int n = static_cast<int>(prog.A.cols());
  const int m = static_cast<int>(prog.A.rows());

  ConicSolution sol;
  sol.x = VectorXd::Zero(n);
  sol.s = VectorXd::Zero(m);
  sol.y = VectorXd::Zero(m);
  if (m == 0) {
    // No constraints: optimal at the origin iff the objective is flat.
    const double cn = n ? prog.c.cwiseAbs().maxCoeff() : 0.0;
    if (cn < opts.tol) {
      sol.status = ConicStatus::Optimal;
    } else {
      sol.status = ConicStatus::Unbounded;
      sol.x = -prog.c / cn;
    }
    return sol;
  }

  // The iteration runs on the equilibrated copy; candidates, certificates,
  // and the returned solution are mapped back to the caller's units.
  const Equil eq = make_equil(prog);
  ConicProgram sca;
  sca.A = prog.A;
  for (int j = 0; j < sca.A.outerSize(); ++j)
    for (SpMat::InnerIterator it(sca.A, j); it; ++it)
      it.valueRef() *= eq.row(it.row()) * eq.col(j);
  sca.b = (eq.row.array() * prog.b.array()) / eq.sb;
  sca.c = (eq.col.array() * prog.c.array()) / eq.sc;
  sca.cones = prog.cones;

  Split sp = split_rows(sca);
  {
    const std::vector<int> bad = unmatched_eq_rows(sp.E);
    if (!bad.empty()) {
      std::string msg = "structurally rank-deficient equality rows:";
      for (int r : bad) msg += " " + std::to_string(sp.eq_rows[static_cast<size_t>(r)]);
      throw ContractError(msg);
    }
  }

  // Iterates of the embedding.
  VectorXd x = VectorXd::Zero(n), y = VectorXd::Zero(sp.ne);
  VectorXd s = cone_identity(sp), z = s;
  double tau = 1.0, kappa = 1.0;
  const double nu = sp.barrier + 1.0;

  Kkt kkt;
  Candidate best;
  best.kkt.primal_res = best.kkt.dual_res = best.kkt.gap = kInf;
  double prev_worst = kInf;
  int stall = 0;

  auto pack_rows = [&](const VectorXd& eq_part, const VectorXd& cone_part) {
    VectorXd full(m);
    for (int i = 0; i < sp.ne; ++i) full(sp.eq_rows[static_cast<size_t>(i)]) = eq_part(i);
    for (int i = 0; i < sp.mc; ++i)
      full(sp.cone_rows[static_cast<size_t>(i)]) = cone_part(i);
    return full;
  };

  for (int it = 0; it < opts.max_iter; ++it) {
    sol.iterations = it + 1;

    // Candidate and stopping metrics, in original units.
    const VectorXd xc = eq.sb * (eq.col.array() * (x / tau).array()).matrix();
    const VectorXd y_full =
        eq.sc * (eq.row.array() * pack_rows(y / tau, z / tau).array()).matrix();
    const VectorXd s_full =
        eq.sb *
        (pack_rows(VectorXd::Zero(sp.ne), s / tau).array() / eq.row.array()).matrix();
    const KktResiduals res = residuals_of(prog, xc, s_full, y_full);
    if (res.worst() < best.kkt.worst()) {
      best.x = xc;
      best.y = y_full;
      best.s = s_full;
      best.kkt = res;
    }
    if (best.kkt.worst() < opts.polish_tol) break;
    if (best.kkt.worst() < opts.tol) {
      // Polish while the iteration keeps paying; stop on stall.
      stall = res.worst() > 0.5 * prev_worst ? stall + 1 : 0;
      if (stall >= 3) break;
    }
    prev_worst = res.worst();

    // Infeasibility certificates from the homogeneous part, checked in
    // original units (the sb/sc factors cancel under the normalizations).
    const VectorXd yz_u = (eq.row.array() * pack_rows(y, z).array()).matrix();
    const VectorXd x_u = (eq.col.array() * x.array()).matrix();
    const double byhz = prog.b.dot(yz_u);
    const double cx = prog.c.dot(x_u);
    if (byhz < -1e-14) {
      const VectorXd ycert = yz_u / -byhz;
      const VectorXd dr = prog.A.transpose() * ycert;
      const double dn = dr.size() ? dr.cwiseAbs().maxCoeff() : 0.0;
      if (dn < opts.tol * (1.0 + prog.c.cwiseAbs().maxCoeff())) {
        sol.status = ConicStatus::Infeasible;
        sol.y = ycert;
        sol.kkt = best.kkt;
        return sol;
      }
    }
    if (cx < -1e-14) {
      const VectorXd xcert = x_u / -cx;
      const VectorXd scert =
          (pack_rows(VectorXd::Zero(sp.ne), s).array() / eq.row.array()).matrix() / -cx;
      const VectorXd pr = prog.A * xcert + scert;
      const double pn = pr.size() ? pr.cwiseAbs().maxCoeff() : 0.0;
      if (pn < opts.tol * (1.0 + prog.b.cwiseAbs().maxCoeff())) {
        sol.status = ConicStatus::Unbounded;
        sol.x = xcert;
        sol.s = scert;
        sol.kkt = best.kkt;
        return sol;
      }
    }

    const double mu = (s.dot(z) + tau * kappa) / nu;
    if (mu < 1e-18) break;

    // Embedding residuals (scaled space).
    const VectorXd rx = sp.E.transpose() * y + sp.G.transpose() * z + sca.c * tau;
    const VectorXd ry = sp.E * x - sp.be * tau;
    const VectorXd rz = sp.G * x + s - sp.h * tau;
    const double rt = sca.c.dot(x) + (sp.ne ? sp.be.dot(y) : 0.0) +
                      (sp.mc ? sp.h.dot(z) : 0.0) + kappa;

    const Scaling scal = make_scaling(sp, s, z);
    kkt.assemble(sp, scal, n, opts.static_reg);

    // Column for the (c, b_e, h) terms, shared by both directions.
    VectorXd rhs1(n + sp.ne + sp.mc);
    rhs1 << -sca.c, sp.be, sp.h;
    const VectorXd w1 = kkt.solve(rhs1);
    if (kkt.solve_err > 1e-2) break;  // factor unusable, keep the best iterate
    const auto w1x = w1.head(n);
    const auto w1y = w1.segment(n, sp.ne);
    const auto w1z = w1.tail(sp.mc);
    const double denom =
        sca.c.dot(w1x) + sp.be.dot(w1y) + sp.h.dot(w1z) - kappa / tau;
#ifdef TEXTNAV_CONIC_TRACE
    std::fprintf(stderr, "  denom=%.6e kappa/tau=%.6e\n", denom, kappa / tau);
#endif

    auto direction = [&](const VectorXd& ds_rhs, double dtk_rhs, VectorXd& dx,
                         VectorXd& dy, VectorXd& dz, VectorXd& ds, double& dtau,
                         double& dkappa) {
      const VectorXd wdiv = w_apply(sp, scal, jordan_div(sp, scal.lambda, ds_rhs), false);
      VectorXd rhs2(n + sp.ne + sp.mc);
      rhs2 << -rx, -ry, -rz - wdiv;
      const VectorXd v = kkt.solve(rhs2);
      const auto vx = v.head(n);
      const auto vy = v.segment(n, sp.ne);
      const auto vz = v.tail(sp.mc);
      dtau = (-rt - dtk_rhs / tau - sca.c.dot(vx) - sp.be.dot(vy) - sp.h.dot(vz)) /
             denom;
      dx = vx + dtau * w1x;
      dy = vy + dtau * w1y;
      dz = vz + dtau * w1z;
      ds = wdiv - w_apply(sp, scal, w_apply(sp, scal, dz, false), false);
      dkappa = (dtk_rhs - kappa * dtau) / tau;
    };

    // Predictor.
    VectorXd dxa, dya, dza, dsa;
    double dta, dka;
    const VectorXd lam2 = jordan_mul(sp, scal.lambda, scal.lambda);
    direction(-lam2, -tau * kappa, dxa, dya, dza, dsa, dta, dka);
    if (kkt.solve_err > 1e-2 || !std::isfinite(dta)) break;

    const VectorXd rho_a = w_apply(sp, scal, dsa, true);
    const VectorXd sig_a = w_apply(sp, scal, dza, false);
    double amax = std::min(max_step(sp, scal.lambda, rho_a),
                           max_step(sp, scal.lambda, sig_a));
    if (dta < 0.0) amax = std::min(amax, -tau / dta);
    if (dka < 0.0) amax = std::min(amax, -kappa / dka);
    const double aff = std::min(1.0, amax);
    const double mu_aff =
        ((scal.lambda + aff * rho_a).dot(scal.lambda + aff * sig_a) +
         (tau + aff * dta) * (kappa + aff * dka)) /
        nu;
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    // Corrector.
    const VectorXd e = cone_identity(sp);
    const VectorXd ds_rhs =
        -lam2 - jordan_mul(sp, rho_a, sig_a) + sigma * mu * e;
    const double dtk_rhs = -tau * kappa - dta * dka + sigma * mu;
    VectorXd dx, dy, dz, ds;
    double dtau, dkappa;
    direction(ds_rhs, dtk_rhs, dx, dy, dz, ds, dtau, dkappa);
    if (kkt.solve_err > 1e-2 || !std::isfinite(dtau)) break;

    const VectorXd rho = w_apply(sp, scal, ds, true);
    const VectorXd sig = w_apply(sp, scal, dz, false);
    double step_max = std::min(max_step(sp, scal.lambda, rho),
                               max_step(sp, scal.lambda, sig));
    if (dtau < 0.0) step_max = std::min(step_max, -tau / dtau);
    if (dkappa < 0.0) step_max = std::min(step_max, -kappa / dkappa);
    const double alpha = std::min(1.0, 0.99 * step_max);
    if (alpha < 1e-11) break;  // cannot move; further iterations only repeat

    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
#ifdef TEXTNAV_CONIC_TRACE
    std::fprintf(stderr,
                 "it=%3d worst=%.3e mu=%.3e tau=%.3e kappa=%.3e alpha=%.3e sigma=%.3e\n",
                 it, res.worst(), mu, tau, kappa, alpha, sigma);
#endif
  }

  sol.x = best.x;
  sol.y = best.y;
  sol.s = best.s;
  sol.kkt = best.kkt;
  sol.status =
      best.kkt.worst() < opts.tol ? ConicStatus::Optimal : ConicStatus::MaxIter;
  return sol;
}

}  // namespace textnav
