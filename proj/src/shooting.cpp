#include "textnav/shooting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace textnav {
namespace {

// State-costate block for the thrust-augmented two-body extremal, u = -lam_v.
using Batch = Eigen::Matrix<double, 12, Eigen::Dynamic>;

void deriv_cols(const Batch& y, Batch& dy, double mu) {
  for (int c = 0; c < y.cols(); ++c) {
    const Vector3d r = y.col(c).segment<3>(0);
    const Vector3d v = y.col(c).segment<3>(3);
    const Vector3d lr = y.col(c).segment<3>(6);
    const Vector3d lv = y.col(c).segment<3>(9);
    const double rn2 = r.squaredNorm();
    const double rn = std::sqrt(rn2);
    const double ir3 = 1.0 / (rn2 * rn);
    const double ir5 = ir3 / rn2;
    dy.col(c).segment<3>(0) = v;
    dy.col(c).segment<3>(3) = -mu * ir3 * r - lv;
    dy.col(c).segment<3>(6) = mu * (ir3 * lv - 3.0 * ir5 * r.dot(lv) * r);
    dy.col(c).segment<3>(9) = -lr;
  }
}

// Single-state derivative on fixed-size storage for the non-batched paths.
Eigen::Matrix<double, 12, 1> deriv_one(const Eigen::Matrix<double, 12, 1>& y, double mu) {
  Eigen::Matrix<double, 12, 1> dy;
  const Vector3d r = y.segment<3>(0);
  const Vector3d v = y.segment<3>(3);
  const Vector3d lr = y.segment<3>(6);
  const Vector3d lv = y.segment<3>(9);
  const double rn2 = r.squaredNorm();
  const double rn = std::sqrt(rn2);
  const double ir3 = 1.0 / (rn2 * rn);
  const double ir5 = ir3 / rn2;
  dy.segment<3>(0) = v;
  dy.segment<3>(3) = -mu * ir3 * r - lv;
  dy.segment<3>(6) = mu * (ir3 * lv - 3.0 * ir5 * r.dot(lv) * r);
  dy.segment<3>(9) = -lr;
  return dy;
}

// Fixed-count RK4 over [0, tf] with h = tf/n so the endpoint map varies
// smoothly with tf (a shortened last step would kink the secant on H).
int step_count(double tf, double dt) {
  return std::max(1, static_cast<int>(std::ceil(tf / dt - 1e-12)));
}

// Propagates every column to tf.  Columns that fall inside the singularity
// guard are flagged; their residuals are poisoned so the solver backs off.
Batch propagate_batch(const Batch& y0, double tf, double dt, double mu,
                      std::vector<bool>* bad = nullptr) {
  const int n = step_count(tf, dt);
  const double h = tf / n;
  Batch y = y0, k1(12, y0.cols()), k2(12, y0.cols()), k3(12, y0.cols()),
        k4(12, y0.cols()), tmp(12, y0.cols());
  if (bad) bad->assign(static_cast<size_t>(y0.cols()), false);
  for (int i = 0; i < n; ++i) {
    deriv_cols(y, k1, mu);
    tmp = y + (0.5 * h) * k1;
    deriv_cols(tmp, k2, mu);
    tmp = y + (0.5 * h) * k2;
    deriv_cols(tmp, k3, mu);
    tmp = y + h * k3;
    deriv_cols(tmp, k4, mu);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (bad && (i & 0x3f) == 0) {
      for (int c = 0; c < y.cols(); ++c)
        if (y.col(c).head<3>().squaredNorm() < 2.5e-3) (*bad)[c] = true;
    }
  }
  return y;
}

struct InnerResult {
  bool ok = false;
  Vector6d lam = Vector6d::Zero();
  Vector6d r = Vector6d::Zero();
  Eigen::Matrix<double, 12, 1> yend = Eigen::Matrix<double, 12, 1>::Zero();
  int iterations = 0;
  double cond = 0.0;
};

// Shared bookkeeping for one solve_transfer call: options, and the total
// inner-iteration budget that caps how long a hopeless case may thrash.
struct SolveCtx {
  const ShootingOptions& o;
  double mu;
  int iters_left;
  int iters_used = 0;

  bool dead() const { return iters_left <= 0; }
};

Eigen::Matrix<double, 6, Eigen::Dynamic> residual_cols(const Vector6d& x0,
                                                       const Eigen::Matrix<double, 6, Eigen::Dynamic>& lams,
                                                       const Vector6d& xT, double tf, double dt,
                                                       double mu, Batch* ends = nullptr) {
  Batch y0(12, lams.cols());
  for (int c = 0; c < lams.cols(); ++c) {
    y0.col(c).head<6>() = x0;
    y0.col(c).tail<6>() = lams.col(c);
  }
  std::vector<bool> bad;
  Batch yf = propagate_batch(y0, tf, dt, mu, &bad);
  Eigen::Matrix<double, 6, Eigen::Dynamic> r(6, lams.cols());
  for (int c = 0; c < lams.cols(); ++c) {
    r.col(c) = yf.col(c).head<6>() - xT;
    if (bad[static_cast<size_t>(c)]) r.col(c).setConstant(1e6);
  }
  if (ends) *ends = yf;
  return r;
}

// Fixed-tf boundary solve: six unknown initial costates against the six-state
// terminal miss.  Levenberg-Marquardt with Marquardt diagonal scaling; the
// Jacobian is forward-differenced, all seven propagations in one batch.
InnerResult inner_solve(SolveCtx& ctx, const Vector6d& x0, const Vector6d& xT,
                        double tf, const Vector6d& lam0, int maxit, double dt) {
  const ShootingOptions& o = ctx.o;
  const double mu = ctx.mu;
  InnerResult res;
  res.lam = lam0;
  double damp = o.lambda0;
  Matrix6d J;
  Batch ends;
  auto done = [&ctx](InnerResult out) {
    ctx.iters_left -= out.iterations;
    ctx.iters_used += out.iterations;
    return out;
  };
  maxit = std::min(maxit, ctx.iters_left);
  // The forward-difference Jacobian costs six extra propagations, so between
  // refreshes it is carried forward by Broyden rank-1 updates; a rejected
  // step with a stale Jacobian forces a refresh instead of counting as an
  // LM failure.
  int j_age = 1000;
  for (int it = 0; it < maxit; ++it) {
    res.iterations = it + 1;
    if (j_age >= 6) {
      // Base point and all six forward-difference columns in one batch.
      Eigen::Matrix<double, 6, Eigen::Dynamic> lams(6, 7);
      Vector6d hs;
      lams.col(0) = res.lam;
      for (int j = 0; j < 6; ++j) {
        hs(j) = o.fd_step * std::max(1.0, std::abs(res.lam(j)));
        lams.col(j + 1) = res.lam;
        lams(j, j + 1) += hs(j);
      }
      const Eigen::Matrix<double, 6, Eigen::Dynamic> rs =
          residual_cols(x0, lams, xT, tf, dt, mu, &ends);
      res.r = rs.col(0);
      res.yend = ends.col(0);
      if (res.r.cwiseAbs().maxCoeff() < o.inner_tol) {
        res.ok = true;
        return done(res);
      }
      for (int j = 0; j < 6; ++j) J.col(j) = (rs.col(j + 1) - res.r) / hs(j);
      j_age = 0;
    }
    const double f = res.r.squaredNorm();
    const Matrix6d JtJ = J.transpose() * J;
    const Vector6d g = J.transpose() * res.r;
    const Vector6d dscale = JtJ.diagonal().cwiseMax(1e-10);
    const double damp_in = damp;
    const int max_tries = j_age > 0 ? 6 : 40;
    bool accepted = false;
    for (int tries = 0; tries < max_tries; ++tries) {
      Matrix6d M = JtJ;
      M.diagonal() += damp * dscale;
      const Vector6d step = M.ldlt().solve(-g);
      if (!step.allFinite()) {
        damp *= 10.0;
        continue;
      }
      const Vector6d lam_new = res.lam + step;
      const Vector6d r_new =
          residual_cols(x0, lam_new, xT, tf, dt, mu, &ends).col(0);
      if (r_new.squaredNorm() < f) {
        J += (r_new - res.r - J * step) * step.transpose() / step.squaredNorm();
        ++j_age;
        res.lam = lam_new;
        res.r = r_new;
        res.yend = ends.col(0);
        damp = std::max(damp / 10.0, 1e-14);
        accepted = true;
        break;
      }
      damp *= 10.0;
    }
    if (!accepted) {
      if (j_age > 0) {
        // Stale-Jacobian rejection: the step failure is on the update, not
        // the iterate, so restore the damping and refresh.
        damp = damp_in;
        j_age = 1000;
        continue;
      }
      Eigen::JacobiSVD<Matrix6d> svd(J);
      res.cond = svd.singularValues()(0) /
                 std::max(svd.singularValues()(5), 1e-300);
      return done(res);
    }
    if (res.r.cwiseAbs().maxCoeff() < o.inner_tol) {
      res.ok = true;
      return done(res);
    }
  }
  return done(res);
}

// Position history on a coarse grid: family checks only need the geometry,
// not solver-grade accuracy.
std::vector<Vector3d> coarse_path(const Vector6d& x0, const Vector6d& lam, double tf,
                                  double mu) {
  const double dt = 0.01;
  const int n = step_count(tf, dt);
  const double h = tf / n;
  Eigen::Matrix<double, 12, 1> y;
  y.head<6>() = x0;
  y.tail<6>() = lam;
  std::vector<Vector3d> pos;
  pos.reserve(static_cast<size_t>(n) + 1);
  pos.push_back(y.head<3>());
  for (int i = 0; i < n; ++i) {
    const auto k1 = deriv_one(y, mu);
    const auto k2 = deriv_one(y + (0.5 * h) * k1, mu);
    const auto k3 = deriv_one(y + (0.5 * h) * k2, mu);
    const auto k4 = deriv_one(y + h * k3, mu);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    pos.push_back(y.head<3>());
  }
  return pos;
}

double sweep_of(const Vector6d& x0, const Vector6d& lam, double tf, double mu) {
  return swept_angle(coarse_path(x0, lam, tf, mu));
}

double hamiltonian_at(const Eigen::Matrix<double, 12, 1>& y, double mu) {
  return transfer_hamiltonian(y.head<6>(), y.tail<6>(), mu);
}

struct LadderPoint {
  double tf = 0.0;
  double H = 0.0;
  double sweep = 0.0;
  Vector6d lam = Vector6d::Zero();
};

struct FreeSolve {
  bool ok = false;
  Vector6d lam = Vector6d::Zero();
  double tf = 0.0;
  int iterations = 0;
  double cond = 0.0;
  std::string failure;
};

// Secant on the terminal Hamiltonian over a sign-change bracket, every
// evaluation a warm inner solve.  A failed evaluation is rescued by retrying
// from the other bracket side, then at the bracket midpoint, before giving up.
FreeSolve secant_on_h(SolveCtx& ctx, const Vector6d& x0, const Vector6d& xT,
                      LadderPoint a, LadderPoint b, double dt) {
  const ShootingOptions& o = ctx.o;
  const double mu = ctx.mu;
  FreeSolve out;
  for (int it = 0; it < 40 && !ctx.dead(); ++it) {
    const double denom = b.H - a.H;
    double tc = std::abs(denom) > 1e-300 ? b.tf - b.H * (b.tf - a.tf) / denom
                                         : 0.5 * (a.tf + b.tf);
    const double lo = std::min(a.tf, b.tf), hi = std::max(a.tf, b.tf);
    if (!(tc > lo && tc < hi)) tc = 0.5 * (lo + hi);
    InnerResult in = inner_solve(ctx, x0, xT, tc, b.lam, 60, dt);
    if (!in.ok) in = inner_solve(ctx, x0, xT, tc, a.lam, 60, dt);
    if (!in.ok) {
      const double tm = 0.5 * (lo + hi);
      InnerResult im = inner_solve(ctx, x0, xT, tm, b.lam, 60, dt);
      if (im.ok) {
        tc = tm;
        in = im;
      }
    }
    if (!in.ok) {
      out.failure = "secant";
      out.cond = in.cond;
      return out;
    }
    const double Hc = hamiltonian_at(in.yend, mu);
    if (std::abs(Hc) < o.h_tol) {
      out.ok = true;
      out.lam = in.lam;
      out.tf = tc;
      return out;
    }
    if ((Hc > 0) == (a.H > 0)) {
      a = {tc, Hc, 0.0, in.lam};
    } else {
      b = {tc, Hc, 0.0, in.lam};
    }
  }
  out.failure = ctx.dead() ? "budget" : "secantmax";
  return out;
}

// Open (unbracketed) secant on the terminal Hamiltonian from a converged
// fixed-tf point.  Near a root this beats walking out a bracket by a wide
// margin; drifting past max_drift from the start abscissa means the
// iteration left the local basin and the caller should fall back.
FreeSolve open_secant(SolveCtx& ctx, const Vector6d& x0, const Vector6d& xT,
                      const LadderPoint& p0, double dt, double h0,
                      double max_drift, int maxit) {
  const ShootingOptions& o = ctx.o;
  const double mu = ctx.mu;
  FreeSolve out;
  out.failure = "secant";
  double t0 = p0.tf, H0 = p0.H;
  Vector6d lam = p0.lam;
  double t1 = t0 - (H0 > 0 ? 1.0 : -1.0) * h0;
  for (int it = 0; it < maxit && !ctx.dead(); ++it) {
    if (std::abs(t1 - p0.tf) > max_drift || t1 <= 2.0 || t1 >= o.tf_cap)
      return out;
    InnerResult in = inner_solve(ctx, x0, xT, t1, lam, 60, dt);
    if (!in.ok) {
      out.cond = in.cond;
      return out;
    }
    const double H1 = hamiltonian_at(in.yend, mu);
    lam = in.lam;
    if (std::abs(H1) < o.h_tol) {
      out.ok = true;
      out.lam = lam;
      out.tf = t1;
      out.failure.clear();
      return out;
    }
    const double denom = H1 - H0;
    if (std::abs(denom) < 1e-300) return out;
    const double t2 = t1 - H1 * (t1 - t0) / denom;
    t0 = t1;
    H0 = H1;
    t1 = t2;
  }
  return out;
}

// Warm-started ladder in tf from a converged fixed-tf point until the
// terminal Hamiltonian changes sign, then the secant.  The step halves when
// the inner solve misses or the swept angle jumps by more than 0.4 rev (a
// solution-family change); at the floor step a jump is accepted as a genuine
// feature of the H(tf) curve.
FreeSolve ladder_from(SolveCtx& ctx, const Vector6d& x0, const Vector6d& xT,
                      const LadderPoint& start, double dt) {
  const ShootingOptions& o = ctx.o;
  const double mu = ctx.mu;
  FreeSolve out;
  const double dir = start.H > 0 ? -1.0 : 1.0;
  LadderPoint cur = start;
  double step = 1.5;
  while (cur.tf < o.tf_cap && cur.tf > 2.0 && !ctx.dead()) {
    const double tn = cur.tf + dir * step;
    InnerResult in = inner_solve(ctx, x0, xT, tn, cur.lam, o.inner_maxit, dt);
    if (!in.ok) {
      if (step > 0.2) {
        step /= 2.0;
        continue;
      }
      out.failure = "walk";
      out.cond = in.cond;
      return out;
    }
    const double swn = sweep_of(x0, in.lam, tn, mu);
    if (std::abs(swn - cur.sweep) > 0.4 * 2.0 * M_PI && step > 0.2) {
      step /= 2.0;
      continue;
    }
    const double Hn = hamiltonian_at(in.yend, mu);
    const LadderPoint prev = cur;
    cur = {tn, Hn, swn, in.lam};
    step = std::min(step * 2.0, 1.5);
    if ((prev.H < 0) != (Hn < 0)) return secant_on_h(ctx, x0, xT, prev, cur, dt);
  }
  out.failure = ctx.dead() ? "budget" : "nobracket";
  return out;
}

// Cold pipeline: fixed-tf anchors from zero costates; each converged anchor
// gets its own ladder attempt, the first success wins.
FreeSolve solve_cold(SolveCtx& ctx, const Vector6d& x0, const Vector6d& xT,
                     double dt) {
  const ShootingOptions& o = ctx.o;
  const double mu = ctx.mu;
  FreeSolve out;
  out.failure = "anchor";
  for (double anchor : {12.0, 10.0, 14.0, 16.0, 8.0}) {
    if (ctx.dead()) break;
    InnerResult in =
        inner_solve(ctx, x0, xT, anchor, Vector6d::Zero(), o.inner_maxit, dt);
    if (!in.ok) {
      if (out.failure == "anchor") out.cond = in.cond;
      continue;
    }
    LadderPoint start{anchor, hamiltonian_at(in.yend, mu),
                      sweep_of(x0, in.lam, anchor, mu), in.lam};
    FreeSolve fs = ladder_from(ctx, x0, xT, start, dt);
    if (fs.ok) return fs;
    out = fs;
  }
  return out;
}

// Warm pipeline: re-solve at the guessed tf, chase the Hamiltonian root with
// an open secant, and only on a miss fall back to the bracketing probe walk.
FreeSolve attempt_warm(SolveCtx& ctx, const Vector6d& x0, const Vector6d& xT,
                       const ShootingUnknowns& guess, double dt,
                       int first_maxit) {
  const ShootingOptions& o = ctx.o;
  const double mu = ctx.mu;
  FreeSolve out;
  out.failure = "warm";
  InnerResult in =
      inner_solve(ctx, x0, xT, guess.tf, guess.lam(), first_maxit, dt);
  if (!in.ok) {
    out.cond = in.cond;
    return out;
  }
  LadderPoint prev{guess.tf, hamiltonian_at(in.yend, mu), 0.0, in.lam};
  if (std::abs(prev.H) < o.h_tol) {
    out.ok = true;
    out.lam = in.lam;
    out.tf = guess.tf;
    out.failure.clear();
    return out;
  }
  FreeSolve os = open_secant(ctx, x0, xT, prev, dt, 0.05, 2.5, 12);
  if (os.ok) return os;
  const double dir = prev.H > 0 ? -1.0 : 1.0;
  double step = 0.05;
  for (int probes = 0; probes < 9 && !ctx.dead(); ++probes) {
    const double tn = prev.tf + dir * step;
    if (tn >= o.tf_cap || tn <= 2.0) break;
    InnerResult wn = inner_solve(ctx, x0, xT, tn, prev.lam, 60, dt);
    if (!wn.ok) {
      out.cond = wn.cond;
      if (step <= 0.0126) break;
      step /= 2.0;
      continue;
    }
    const double Hn = hamiltonian_at(wn.yend, mu);
    const LadderPoint pn{tn, Hn, 0.0, wn.lam};
    if ((prev.H < 0) != (Hn < 0)) return secant_on_h(ctx, x0, xT, prev, pn, dt);
    prev = pn;
    step = std::min(step * 2.0, 1.6);
  }
  if (ctx.dead()) out.failure = "budget";
  return out;
}

// Continuation rescue for a failed warm start: walk the initial state from a
// base point with a known solution toward the target state, re-warming at
// each stop.  The stop fraction adapts: halve on a miss, double on a hit.
FreeSolve solve_homotopy(SolveCtx& ctx, const Vector6d& x0, const Vector6d& xT,
                         const Vector6d& base, const ShootingUnknowns& guess0,
                         double dt) {
  FreeSolve out;
  out.failure = "homotopy";
  ShootingUnknowns g = guess0;
  double s = 0.0, step = 0.5;
  for (int tries = 0; tries < 16 && !ctx.dead(); ++tries) {
    const double sn = std::min(1.0, s + step);
    const Vector6d xs = (1.0 - sn) * base + sn * x0;
    FreeSolve fs = attempt_warm(ctx, xs, xT, g, dt, 60);
    if (!fs.ok) {
      out.cond = fs.cond;
      if (step <= 0.0626) return out;
      step /= 2.0;
      continue;
    }
    g.lam_r0 = fs.lam.head<3>();
    g.lam_v0 = fs.lam.tail<3>();
    g.tf = fs.tf;
    s = sn;
    if (s >= 1.0) return fs;
    step = std::min(step * 2.0, 0.5);
  }
  if (ctx.dead()) out.failure = "budget";
  return out;
}

// Re-converge a search-grid solution on the reporting grid: one warm inner
// solve at the final dt, then an unbracketed secant to re-zero the terminal
// Hamiltonian.  The root moves by only the integration-error shift, so a
// drift past 0.5 time units means the refinement lost the solution.
FreeSolve refine(SolveCtx& ctx, const Vector6d& x0, const Vector6d& xT,
                 FreeSolve fs) {
  const ShootingOptions& o = ctx.o;
  const double mu = ctx.mu;
  if (o.dt == o.dt_search) return fs;
  InnerResult in = inner_solve(ctx, x0, xT, fs.tf, fs.lam, 60, o.dt);
  if (in.ok) {
    const double H0 = hamiltonian_at(in.yend, mu);
    if (std::abs(H0) < o.h_tol) {
      fs.lam = in.lam;
      return fs;
    }
    FreeSolve os =
        open_secant(ctx, x0, xT, {fs.tf, H0, 0.0, in.lam}, o.dt, 0.01, 0.5, 12);
    if (os.ok) return os;
    fs.cond = os.cond;
  } else {
    fs.cond = in.cond;
  }
  fs.ok = false;
  fs.failure = "refine";
  return fs;
}

}  // namespace

LmResult lm_solve(const std::function<VectorXd(const VectorXd&)>& fn, VectorXd x0,
                  double tol, int max_iter, double lambda0, double fd_step) {
  LmResult res;
  res.x = std::move(x0);
  res.r = fn(res.x);
  const int m = static_cast<int>(res.r.size());
  const int n = static_cast<int>(res.x.size());
  double f = res.r.squaredNorm();
  double damp = lambda0;
  MatrixXd J(m, n);
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it;
    if (res.r.cwiseAbs().maxCoeff() < tol) {
      res.converged = true;
      return res;
    }
    for (int j = 0; j < n; ++j) {
      const double h = fd_step * std::max(1.0, std::abs(res.x(j)));
      VectorXd xp = res.x;
      xp(j) += h;
      J.col(j) = (fn(xp) - res.r) / h;
    }
    const MatrixXd JtJ = J.transpose() * J;
    const VectorXd g = J.transpose() * res.r;
    const VectorXd dscale = JtJ.diagonal().cwiseMax(1e-10);
    Eigen::JacobiSVD<MatrixXd> svd(J);
    res.jacobian_cond = svd.singularValues()(0) /
                        std::max(svd.singularValues()(svd.singularValues().size() - 1),
                                 1e-300);
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      MatrixXd M = JtJ;
      M.diagonal() += damp * dscale;
      const VectorXd step = M.ldlt().solve(-g);
      if (!step.allFinite()) {
        damp *= 10.0;
        continue;
      }
      const VectorXd x_new = res.x + step;
      const VectorXd r_new = fn(x_new);
      if (r_new.squaredNorm() < f) {
        res.x = x_new;
        res.r = r_new;
        f = r_new.squaredNorm();
        damp = std::max(damp / 10.0, 1e-14);
        accepted = true;
        break;
      }
      damp *= 10.0;
    }
    if (!accepted) return res;
  }
  res.converged = res.r.cwiseAbs().maxCoeff() < tol;
  return res;
}

Eigen::Matrix<double, 7, 1> shooting_residual(const ShootingUnknowns& u,
                                              const StateVec& x0, const StateVec& target,
                                              double dt) {
  if (!(u.tf > 0.0)) throw ContractError("shooting residual needs tf > 0");
  Batch y0(12, 1);
  y0.col(0).head<6>() = x0.rv();
  y0.col(0).tail<6>() = u.lam();
  const Batch yf = propagate_batch(y0, u.tf, dt, 1.0);
  Eigen::Matrix<double, 7, 1> r;
  r.head<6>() = yf.col(0).head<6>() - target.rv();
  r(6) = hamiltonian_at(yf.col(0), 1.0);
  return r;
}

ShootingResult solve_transfer(const StateVec& x0, const StateVec& target,
                              const std::optional<ShootingUnknowns>& guess,
                              const ShootingOptions& opts) {
  const double mu = 1.0;
  if (guess && !(guess->tf > 0.0)) throw ContractError("warm-start tf must be positive");
  const Vector6d x0v = x0.rv(), xTv = target.rv();
  ShootingResult res;

  SolveCtx ctx{opts, mu, opts.iter_budget};
  // Cheap family check on the coarse grid before committing to the dense
  // final pass; a warm solve landing on the wrong branch earns a cold retry.
  auto family_ok = [&](const FreeSolve& f) {
    if (opts.rev_filter == RevFilter::None) return true;
    const auto pos = coarse_path(x0v, f.lam, f.tf, mu);
    if (opts.rev_filter == RevFilter::ExactlyOne)
      return count_revolutions(pos) == 1;
    return std::abs(swept_angle(pos) - opts.expected_sweep) < M_PI;
  };
  FreeSolve fs;
  bool wrong_family = false;
  bool gate_done = false;
  if (guess) {
    fs = attempt_warm(ctx, x0v, xTv, *guess, opts.dt_search, opts.inner_maxit);
    if (!fs.ok && opts.homotopy_x0 && !ctx.dead()) {
      // The continuation gets at most half the remaining budget so a hard
      // fold cannot starve the cold pipeline behind it.
      const int save = ctx.iters_left;
      ctx.iters_left = save / 2;
      const int before = ctx.iters_used;
      fs = solve_homotopy(ctx, x0v, xTv, opts.homotopy_x0->rv(), *guess,
                          opts.dt_search);
      ctx.iters_left = save - (ctx.iters_used - before);
    }
    if (fs.ok) {
      gate_done = family_ok(fs);
      if (!gate_done) {
        wrong_family = true;
        fs.ok = false;
      }
    }
    if (!fs.ok && !ctx.dead()) fs = solve_cold(ctx, x0v, xTv, opts.dt_search);
  } else {
    fs = solve_cold(ctx, x0v, xTv, opts.dt_search);
  }
  if (fs.ok && !gate_done && !family_ok(fs)) {
    wrong_family = true;
    fs.ok = false;
  }
  if (fs.ok) fs = refine(ctx, x0v, xTv, fs);
  if (!fs.ok && ctx.dead()) fs.failure = "budget";
  if (!fs.ok && wrong_family) fs.failure = "revolutions";
  res.iterations = ctx.iters_used;
  res.jacobian_cond = fs.cond;
  if (!fs.ok) {
    res.failure = fs.failure;
    return res;
  }

  res.unknowns.lam_r0 = fs.lam.head<3>();
  res.unknowns.lam_v0 = fs.lam.tail<3>();
  res.unknowns.tf = fs.tf;

  // Dense final pass on the solver grid, with the running cost as a 13th
  // quadrature state so the reported cost is RK4-exact.
  const int n = step_count(fs.tf, opts.dt);
  const double h = fs.tf / n;
  Eigen::Matrix<double, 13, 1> y;
  y.head<6>() = x0v;
  y.segment<6>(6) = fs.lam;
  y(12) = 0.0;
  auto deriv13 = [mu](const Eigen::Matrix<double, 13, 1>& s) {
    Eigen::Matrix<double, 13, 1> d;
    d.head<12>() = deriv_one(s.head<12>(), mu);
    d(12) = 0.5 * s.segment<3>(9).squaredNorm();
    return d;
  };
  res.trajectory.problem = Problem::Transfer;
  res.trajectory.samples.reserve(static_cast<size_t>(n) + 1);
  res.costates.reserve(static_cast<size_t>(n) + 1);
  std::vector<Vector3d> pos;
  pos.reserve(static_cast<size_t>(n) + 1);
  auto push_sample = [&](double t, const Eigen::Matrix<double, 13, 1>& s) {
    TimedSample smp;
    smp.t = t;
    smp.state = StateVec::from_rv(s.head<6>());
    smp.control.u = -s.segment<3>(9);
    res.trajectory.samples.push_back(std::move(smp));
    res.costates.push_back(s.segment<6>(6));
    pos.push_back(s.head<3>());
  };
  push_sample(0.0, y);
  for (int i = 0; i < n; ++i) {
    const auto k1 = deriv13(y);
    const auto k2 = deriv13((y + (0.5 * h) * k1).eval());
    const auto k3 = deriv13((y + (0.5 * h) * k2).eval());
    const auto k4 = deriv13((y + h * k3).eval());
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    push_sample((i + 1) * h, y);
  }
  res.cost = y(12);
  res.trajectory.cost = y(12);
  res.sweep = swept_angle(pos);
  res.revolutions = count_revolutions(pos);
  res.trajectory.revolutions = res.revolutions;

  Eigen::Matrix<double, 7, 1> r;
  r.head<6>() = y.head<6>() - xTv;
  r(6) = hamiltonian_at(y.head<12>(), mu);
  res.residual_norm = r.cwiseAbs().maxCoeff();
  res.solver_converged = res.residual_norm < 1e-10;
  if (!res.solver_converged) {
    res.failure = "tol";
    return res;
  }

  bool rev_ok = true;
  switch (opts.rev_filter) {
    case RevFilter::ExactlyOne:
      rev_ok = res.revolutions == 1;
      break;
    case RevFilter::SweepWindow:
      rev_ok = std::abs(res.sweep - opts.expected_sweep) < M_PI;
      break;
    case RevFilter::None:
      break;
  }
  if (!rev_ok) {
    res.failure = "revolutions";
    return res;
  }
  res.converged = true;
  res.trajectory.converged = true;
  return res;
}

namespace {

void write_records(CorpusWriter& writer, const ShootingResult& sol, const StateVec& target,
                   long traj_id, int samples_per_traj) {
  const long n = static_cast<long>(sol.trajectory.samples.size()) - 1;
  for (int s = 0; s < samples_per_traj; ++s) {
    const long idx = std::min(
        n - 1, static_cast<long>(llround(static_cast<double>(s) * n / samples_per_traj)));
    const TimedSample& smp = sol.trajectory.samples[static_cast<size_t>(idx)];
    PromptRecord rec;
    rec.problem = problem_id(Problem::Transfer);
    rec.prompt = render_prompt(Problem::Transfer, smp.state, target);
    rec.completion = render_completion(smp.control.u, Problem::Transfer);
    rec.traj_id = traj_id;
    rec.step = s;
    rec.t = smp.t;
    writer.write(rec);
  }
}

}  // namespace

TransferDatasetStats generate_transfer_dataset(const TransferParams& params,
                                               const TransferDatasetCfg& cfg,
                                               const std::string& corpus_path) {
  ShootingOptions base;
  base.iter_budget = cfg.iter_budget;
  ShootingResult nominal = solve_transfer(params.x0, params.xtarget, {}, base);
  if (!nominal.converged)
    throw NumericalError("nominal transfer solve failed: " + nominal.failure);

  const size_t n_nodes = nominal.trajectory.samples.size();
  std::vector<double> cum_sweep(n_nodes, 0.0);
  for (size_t k = 1; k < n_nodes; ++k) {
    const Vector3d a = nominal.trajectory.samples[k - 1].state.r;
    const Vector3d b = nominal.trajectory.samples[k].state.r;
    cum_sweep[k] = cum_sweep[k - 1] + std::atan2(a.cross(b).norm(), a.dot(b));
  }

  const Rng root(cfg.seed);
  CorpusWriter writer(corpus_path);
  TransferDatasetStats stats;

  auto account = [&](const ShootingResult& sol, long traj_id) {
    ++stats.n_attempted;
    if (sol.converged) {
      ++stats.n_converged;
      write_records(writer, sol, params.xtarget, traj_id, cfg.samples_per_traj);
    } else if (sol.failure == "revolutions") {
      ++stats.n_pruned_revolutions;
    }
    if (stats.n_attempted % 100 == 0)
      std::fprintf(stderr, "transfer corpus: %d/%d solved, %d kept\n", stats.n_attempted,
                   cfg.n_ic + cfg.n_mid, stats.n_converged);
  };

  // Each perturbed IC warms from the nearest already-solved one; as the bank
  // fills, the effective jump shrinks well below sigma and the direct warm
  // attempt almost always lands.
  ShootingOptions ic_opts = base;
  std::vector<std::pair<Vector6d, ShootingUnknowns>> bank;
  bank.reserve(static_cast<size_t>(cfg.n_ic) + 1);
  bank.emplace_back(params.x0.rv(), nominal.unknowns);
  for (int i = 0; i < cfg.n_ic; ++i) {
    Rng st = root.stream(static_cast<uint64_t>(i));
    StateVec x0p = params.x0;
    x0p.r += params.sigma_pos * st.normal3();
    x0p.v += params.sigma_vel * st.normal3();
    const Vector6d q = x0p.rv();
    size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t b = 0; b < bank.size(); ++b) {
      const double d = (bank[b].first - q).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = b;
      }
    }
    ic_opts.homotopy_x0 = StateVec::from_rv(bank[best].first);
    ShootingResult sol = solve_transfer(x0p, params.xtarget, bank[best].second, ic_opts);
    if (sol.converged) bank.emplace_back(q, sol.unknowns);
    account(sol, i);
  }

  for (int j = 0; j < cfg.n_mid; ++j) {
    Rng st = root.stream(static_cast<uint64_t>(cfg.n_ic + j));
    // Start node uniform over the nominal grid; the last node is excluded so
    // the remaining horizon is at least one step.
    const size_t k = std::min(
        n_nodes - 2, static_cast<size_t>(st.uniform() * static_cast<double>(n_nodes)));
    StateVec xs = nominal.trajectory.samples[k].state;
    xs.r += params.sigma_pos * st.normal3();
    xs.v += params.sigma_vel * st.normal3();
    ShootingUnknowns guess;
    guess.lam_r0 = nominal.costates[k].head<3>();
    guess.lam_v0 = nominal.costates[k].tail<3>();
    guess.tf = nominal.unknowns.tf - nominal.trajectory.samples[k].t;
    ShootingOptions opts = base;
    opts.homotopy_x0 = nominal.trajectory.samples[k].state;
    opts.rev_filter = RevFilter::SweepWindow;
    opts.expected_sweep = cum_sweep.back() - cum_sweep[k];
    account(solve_transfer(xs, params.xtarget, guess, opts), cfg.n_ic + j);
  }

  stats.n_records = writer.count();
  writer.close();
  stats.convergence_rate =
      stats.n_attempted > 0 ? static_cast<double>(stats.n_converged) / stats.n_attempted : 0.0;
  return stats;
}

void write_transfer_stats(const TransferDatasetStats& stats, const std::string& path) {
  nlohmann::json j;
  j["n_attempted"] = stats.n_attempted;
  j["n_converged"] = stats.n_converged;
  j["n_pruned_revolutions"] = stats.n_pruned_revolutions;
  j["convergence_rate"] = stats.convergence_rate;
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace textnav
