#include "textnav/lcvx.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace textnav {

namespace {

Matrix3d skew(const Vector3d& w) {
  Matrix3d S;
  S << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return S;
}

// ZOH of rdot = v, vdot = g + u - Wx Wx r - 2 Wx v via the augmented
// exponential; gd carries the constant-gravity response.
void landing_zoh(const LandingParams& p, double dt, Matrix6d& Ad, Matrix63d& Bd,
                 Vector6d& gd) {
  Eigen::Matrix<double, 10, 10> M = Eigen::Matrix<double, 10, 10>::Zero();
  const Matrix3d W = skew(p.omega);
  M.block<3, 3>(0, 3) = Matrix3d::Identity();
  M.block<3, 3>(3, 0) = -W * W;
  M.block<3, 3>(3, 3) = -2.0 * W;
  M.block<3, 3>(3, 6) = Matrix3d::Identity();
  M.block<3, 1>(3, 9) = p.g;
  const Eigen::Matrix<double, 10, 10> E = (M * dt).exp();
  Ad = E.topLeftCorner<6, 6>();
  Bd = E.block<6, 3>(0, 6);
  gd = E.block<6, 1>(0, 9);
}

// Mass-depletion reference for the Taylor expansion of the thrust bounds.
double z_ref(const LandingParams& p, double dt, int k) {
  return std::log(std::max(p.m_wet - p.alpha * p.rho_max * dt * k, 1e-3)) +
         p.delta_taylor;
}

}  // namespace

ConicProgram build_socp(const LandingParams& p, double tf, int N) {
  p.validate();
  if (!(tf > 0.0)) throw ContractError("descent final time must be positive");
  if (N < 2) throw ContractError("descent needs at least two steps");
  const double dt = tf / N, al = p.alpha;
  Matrix6d Ad;
  Matrix63d Bd;
  Vector6d gd;
  landing_zoh(p, dt, Ad, Bd, gd);

  const int gs_rows = (int)p.Hgs.rows();
  auto rv = [](int k) { return 7 * k; };  // r at 7k, v at 7k+3
  auto zi = [](int k) { return 7 * k + 6; };
  auto ui = [N](int k) { return 7 * (N + 1) + 4 * k; };
  auto xii = [N](int k) { return 7 * (N + 1) + 4 * k + 3; };
  const int nx = 7 * (N + 1) + 4 * N;

  std::vector<Eigen::Triplet<double>> t;
  std::vector<double> b;
  int row = 0;
  auto coef = [&](int col, double val) { t.emplace_back(row, col, val); };
  auto close = [&](double rhs) {
    b.push_back(rhs);
    ++row;
  };

  // equalities: dynamics then boundary pins
  for (int k = 0; k < N; ++k) {
    for (int i = 0; i < 6; ++i) {
      coef(rv(k + 1) + i, 1.0);
      for (int j = 0; j < 6; ++j) coef(rv(k) + j, -Ad(i, j));
      for (int j = 0; j < 3; ++j) coef(ui(k) + j, -Bd(i, j));
      close(gd(i));
    }
    coef(zi(k + 1), 1.0);
    coef(zi(k), -1.0);
    coef(xii(k), al * dt);
    close(0.0);
  }
  for (int i = 0; i < 3; ++i) {
    coef(rv(0) + i, 1.0);
    close(p.r0(i));
  }
  for (int i = 0; i < 3; ++i) {
    coef(rv(0) + 3 + i, 1.0);
    close(p.v0(i));
  }
  coef(zi(0), 1.0);
  close(std::log(p.m_wet));
  for (int i = 0; i < 6; ++i) {
    coef(rv(N) + i, 1.0);
    close(0.0);
  }
  const int neq = row;

  // one-sided rows, a.x <= rhs
  const double cp = std::cos(p.gamma_p);
  for (int k = 0; k < N; ++k) {
    const double z0 = z_ref(p, dt, k);
    const double mu2 = p.rho_max * std::exp(-z0);
    coef(xii(k), 1.0);  // upper thrust, linearized: xi <= mu2 (1 - (z - z0))
    coef(zi(k), mu2);
    close(mu2 * (1.0 + z0));
    coef(xii(k), cp);  // tilt: u_z >= xi cos(gamma_p)
    coef(ui(k) + 2, -1.0);
    close(0.0);
    coef(xii(k), -1.0);
    close(0.0);
  }
  for (int k = 1; k <= N; ++k) {
    const double lo = std::max(std::log(p.m_dry),
                               std::log(std::max(p.m_wet - al * p.rho_max * dt * k, 1e-3)));
    const double hi = std::log(std::max(p.m_wet - al * p.rho_min * dt * k, 1e-3));
    coef(zi(k), -1.0);
    close(-lo);
    coef(zi(k), 1.0);
    close(hi);
  }
  for (int k = 1; k < N; ++k)
    for (int g = 0; g < gs_rows; ++g) {
      for (int j = 0; j < 3; ++j)
        if (p.Hgs(g, j) != 0.0) coef(rv(k) + j, p.Hgs(g, j));
      close(p.hgs(g));
    }
  const int nni = row - neq;

  // cone rows; each block reads s = b - Ax
  std::vector<Cone> cones{{ConeKind::Zero, neq}, {ConeKind::NonNeg, nni}};
  for (int k = 1; k < N; ++k) {  // speed
    close(p.vmax);
    for (int i = 0; i < 3; ++i) {
      coef(rv(k) + 3 + i, 1.0);
      close(0.0);
    }
    cones.push_back({ConeKind::SecondOrder, 4});
  }
  for (int k = 0; k < N; ++k) {  // |u| <= xi
    coef(xii(k), -1.0);
    close(0.0);
    for (int i = 0; i < 3; ++i) {
      coef(ui(k) + i, 1.0);
      close(0.0);
    }
    cones.push_back({ConeKind::SecondOrder, 4});
  }
  for (int k = 0; k < N; ++k) {
    // lower thrust as SOC: with w = xi/mu1 + dz - 1, the cone
    // w + 1/2 >= |(dz, w - 1/2)| squares to xi >= mu1 (1 - dz + dz^2/2).
    const double z0 = z_ref(p, dt, k);
    const double mu1 = p.rho_min * std::exp(-z0);
    coef(xii(k), -1.0 / mu1);
    coef(zi(k), -1.0);
    close(-0.5 - z0);
    coef(zi(k), 1.0);
    close(z0);
    coef(xii(k), -1.0 / mu1);
    coef(zi(k), -1.0);
    close(-1.5 - z0);
    cones.push_back({ConeKind::SecondOrder, 3});
  }

  ConicProgram prog;
  prog.A.resize(row, nx);
  prog.A.setFromTriplets(t.begin(), t.end());
  prog.b = Eigen::Map<const VectorXd>(b.data(), (long)b.size());
  prog.c = VectorXd::Zero(nx);
  for (int k = 0; k < N; ++k) prog.c(xii(k)) = dt;  // sum xi dt, exact for ZOH xi
  prog.cones = std::move(cones);
  return prog;
}

LandingSolve solve_fixed_tf(const LandingParams& p, double tf, int N) {
  LandingSolve out;
  out.tf = tf;
  out.dt = tf / N;
  const ConicProgram prog = build_socp(p, tf, N);
  const ConicSolution sol = solve(prog);
  out.status = sol.status;
  if (sol.status != ConicStatus::Optimal) return out;

  const int base = 7 * (N + 1);
  out.u.resize((size_t)N);
  out.xi.resize((size_t)N);
  for (int k = 0; k < N; ++k) {
    out.u[(size_t)k] = sol.x.segment<3>(base + 4 * k);
    out.xi[(size_t)k] = std::max(sol.x(base + 4 * k + 3), out.u[(size_t)k].norm());
  }

  // Rebuild the state chain by exact forward propagation of the solved
  // controls (the descent dynamics are stable, so solver residuals do not
  // amplify); every dynamics row then holds to roundoff.
  Matrix6d Ad;
  Matrix63d Bd;
  Vector6d gd;
  landing_zoh(p, out.dt, Ad, Bd, gd);
  out.r.resize((size_t)N + 1);
  out.v.resize((size_t)N + 1);
  out.z.resize((size_t)N + 1);
  Vector6d x;
  x << p.r0, p.v0;
  double z = std::log(p.m_wet);
  for (int k = 0; k <= N; ++k) {
    out.r[(size_t)k] = x.head<3>();
    out.v[(size_t)k] = x.tail<3>();
    out.z[(size_t)k] = z;
    if (k < N) {
      x = Ad * x + Bd * out.u[(size_t)k] + gd;
      z -= p.alpha * out.dt * out.xi[(size_t)k];
    }
  }
  out.cost = 0.0;
  for (int k = 0; k < N; ++k) out.cost += out.dt * out.xi[(size_t)k];
  out.fuel = p.m_wet - std::exp(out.z[(size_t)N]);
  out.feasible = true;

  out.trajectory.problem = Problem::Landing;
  out.trajectory.converged = true;
  out.trajectory.cost = out.cost;
  out.trajectory.samples.reserve((size_t)N + 1);
  for (int k = 0; k <= N; ++k) {
    TimedSample ts;
    ts.t = k * out.dt;
    ts.state.r = out.r[(size_t)k];
    ts.state.v = out.v[(size_t)k];
    ts.state.z = out.z[(size_t)k];
    if (k < N) {
      ts.control.u = out.u[(size_t)k];
      ts.control.xi = out.xi[(size_t)k];
    }
    out.trajectory.samples.push_back(std::move(ts));
  }
  return out;
}

double lossless_check(const LandingSolve& sol, double tol) {
  if (sol.u.empty()) throw ContractError("lossless check needs a solved trajectory");
  int tight = 0;
  for (size_t k = 0; k < sol.u.size(); ++k)
    if (sol.xi[k] - sol.u[k].norm() <= tol) ++tight;
  return (double)tight / (double)sol.u.size();
}

TfSearch search_tf(const LandingParams& p, double tf_lo, double tf_hi, int N,
                   double tol) {
  if (!(tf_lo > 0.0 && tf_hi > tf_lo)) throw ContractError("bad final-time bracket");
  if (!(tol > 0.0)) throw ContractError("final-time tolerance must be positive");

  TfSearch res;
  std::map<double, double> probes;  // tf -> cost (inf when infeasible)
  auto probe = [&](double tf) {
    auto it = probes.find(tf);
    if (it != probes.end()) return it->second;
    const LandingSolve s = solve_fixed_tf(p, tf, N);
    ++res.n_probes;
    double cost = std::numeric_limits<double>::infinity();
    if (s.feasible) {
      ++res.n_feasible;
      cost = s.cost;
    }
    probes.emplace(tf, cost);
    return cost;
  };

  // Locate the feasible window on a coarse grid first; golden section alone
  // can discard a window that lies between its initial interior points.
  constexpr int kScan = 16;
  int best = -1;
  double grid[kScan], gcost[kScan];
  for (int i = 0; i < kScan; ++i) {
    grid[i] = tf_lo + (tf_hi - tf_lo) * i / (kScan - 1);
    gcost[i] = probe(grid[i]);
    if (std::isfinite(gcost[i]) && (best < 0 || gcost[i] < gcost[best])) best = i;
  }
  if (best < 0) {
    std::ostringstream msg;
    msg << "no feasible final time in [" << tf_lo << ", " << tf_hi << "]; probed";
    for (double g : grid) msg << " " << g;
    throw NumericalError(msg.str());
  }

  double a = grid[std::max(best - 1, 0)], c = grid[std::min(best + 1, kScan - 1)];
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = c - gr * (c - a), x2 = a + gr * (c - a);
  double f1 = probe(x1), f2 = probe(x2);
  while (c - a > tol) {
    if (f1 <= f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - gr * (c - a);
      f1 = probe(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (c - a);
      f2 = probe(x2);
    }
  }

  double tf_best = 0.0, cost_best = std::numeric_limits<double>::infinity();
  for (const auto& [tf, cost] : probes)
    if (cost < cost_best) {
      cost_best = cost;
      tf_best = tf;
    }
  res.tf = tf_best;
  res.sol = solve_fixed_tf(p, tf_best, N);
  if (!res.sol.feasible) throw NumericalError("final-time refinement lost feasibility");
  return res;
}

namespace {

Vector3d ball_draw(Rng& rng, double radius) {
  Vector3d dir(rng.normal(), rng.normal(), rng.normal());
  const double n = dir.norm();
  if (n < 1e-12) return Vector3d::Zero();
  return dir / n * radius * std::cbrt(rng.uniform());
}

}  // namespace

LandingDatasetStats generate_landing_dataset(int n, const LandingParams& base,
                                             const LandingSamplerCfg& cfg, uint64_t seed,
                                             const std::string& path) {
  if (n < 1) throw ContractError("dataset needs at least one trajectory");
  base.validate();
  const Rng root(seed);
  LandingDatasetStats stats;
  stats.n_traj = n;
  const int attempt_budget = 20 * n;  // past this, rejection exceeded 95%
  int attempts = 0;

  CorpusWriter w(path);
  const StateVec pad;  // landing site: origin at rest
  for (int i = 0; i < n; ++i) {
    Rng st = root.stream((uint64_t)i);
    for (;;) {
      if (++attempts > attempt_budget)
        throw ConfigError("landing sampler rejection rate exceeded 95% (" +
                          std::to_string(attempts - 1 - (i)) + " rejected draws for " +
                          std::to_string(n) + " trajectories)");
      LandingParams p = base;
      p.r0 = base.r0 + ball_draw(st, cfg.r_radius);
      p.v0 = base.v0 + ball_draw(st, cfg.v_radius);
      p.gamma_p = st.uniform(cfg.pointing_lo_deg, cfg.pointing_hi_deg) * M_PI / 180.0;
      p.set_glideslope_angle(st.uniform(cfg.glideslope_lo_deg, cfg.glideslope_hi_deg));
      const double cant = st.uniform(cfg.cant_lo_deg, cfg.cant_hi_deg) * M_PI / 180.0;
      p.rho_min = base.rho_min * std::cos(cant);
      p.rho_max = base.rho_max * std::cos(cant);

      TfSearch found;
      try {
        found = search_tf(p, p.tf_min, p.tf_max, p.N, p.tf_tol);
      } catch (const NumericalError&) {
        ++stats.n_rejected;
        continue;
      }
      const LandingSolve& sol = found.sol;
      for (int k = 0; k < p.N; ++k) {
        PromptRecord rec;
        rec.problem = problem_id(Problem::Landing);
        StateVec s;
        s.r = sol.r[(size_t)k];
        s.v = sol.v[(size_t)k];
        s.z = sol.z[(size_t)k];
        rec.prompt = render_prompt(Problem::Landing, s, pad);
        rec.completion = render_completion(sol.u[(size_t)k], Problem::Landing);
        rec.traj_id = i;
        rec.step = k;
        rec.t = k * sol.dt;
        w.write(rec);
        ++stats.n_records;
      }
      break;
    }
  }
  w.close();
  return stats;
}

}  // namespace textnav
