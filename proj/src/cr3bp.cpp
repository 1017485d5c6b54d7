#include "textnav/cr3bp.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

namespace textnav {

void zoh_discretize(const Matrix6d& A, const Matrix63d& B, double dt, Matrix6d& Ad,
                    Matrix63d& Bd) {
  // exp([[A,B],[0,0]] dt) = [[Ad, Bd],[0, I]]
  Eigen::Matrix<double, 9, 9> M = Eigen::Matrix<double, 9, 9>::Zero();
  M.topLeftCorner<6, 6>() = A;
  M.topRightCorner<6, 3>() = B;
  const Eigen::Matrix<double, 9, 9> E = (M * dt).exp();
  Ad = E.topLeftCorner<6, 6>();
  Bd = E.topRightCorner<6, 3>();
}

ConicProgram build_lp(const Vector6d& x0, const Cr3bpParams& p) {
  p.validate();
  const int N = p.N;
  Matrix6d Ad;
  Matrix63d Bd;
  zoh_discretize(cr3bp_linear_A(p), cr3bp_linear_B(p), p.dt, Ad, Bd);

  const int nx = 6 * N, nu = 3 * N;
  const int me = 6 * N + 6, mi = 6 * N;
  auto xcol = [&](int k, int i) { return 6 * (k - 1) + i; };  // x_1..x_N
  auto ucol = [&](int k, int i) { return nx + 3 * k + i; };

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(10 * me + mi));
  ConicProgram prog;
  prog.b = VectorXd::Zero(me + mi);
  for (int k = 0; k < N; ++k) {
    for (int i = 0; i < 6; ++i) {
      const int row = 6 * k + i;
      t.emplace_back(row, xcol(k + 1, i), 1.0);
      if (k == 0) {
        prog.b(row) = (Ad * x0)(i);
      } else {
        for (int j = 0; j < 6; ++j) t.emplace_back(row, xcol(k, j), -Ad(i, j));
      }
      for (int j = 0; j < 3; ++j) t.emplace_back(row, ucol(k, j), -Bd(i, j));
    }
  }
  for (int i = 0; i < 6; ++i) t.emplace_back(6 * N + i, xcol(N, i), 1.0);
  for (int k = 0; k < N; ++k)
    for (int d = 0; d < 3; ++d) {
      const int row = me + 6 * k + 2 * d;
      t.emplace_back(row, ucol(k, d), 1.0);
      prog.b(row) = p.umax;
      t.emplace_back(row + 1, ucol(k, d), -1.0);
      prog.b(row + 1) = p.umax;
    }
  prog.A.resize(me + mi, nx + nu);
  prog.A.setFromTriplets(t.begin(), t.end());
  prog.c = VectorXd::Zero(nx + nu);
  prog.cones = {{ConeKind::Zero, me}, {ConeKind::NonNeg, mi}};
  return prog;
}

Cr3bpSolve solve_cr3bp_transfer(const Vector6d& x0, const Cr3bpParams& p) {
  Cr3bpSolve out;
  const ConicProgram prog = build_lp(x0, p);
  const ConicSolution sol = solve(prog);
  out.status = sol.status;
  if (sol.status != ConicStatus::Optimal) return out;

  const int N = p.N;
  out.controls.resize(static_cast<size_t>(N));
  for (int k = 0; k < N; ++k) {
    Vector3d u = sol.x.segment<3>(6 * N + 3 * k);
    out.controls[static_cast<size_t>(k)] =
        u.cwiseMax(-p.umax).cwiseMin(p.umax);  // KKT-tolerance overshoot
  }

  // The L1 saddle amplifies forward-propagated solver residuals by ~e^15 over
  // the horizon, so chain the states backward from the pinned terminal origin
  // instead: the terminal condition is met exactly and each dynamics row holds
  // to roundoff, at the cost of a residual-sized shift in the initial state.
  Matrix6d Ad;
  Matrix63d Bd;
  zoh_discretize(cr3bp_linear_A(p), cr3bp_linear_B(p), p.dt, Ad, Bd);
  const Eigen::PartialPivLU<Matrix6d> lu(Ad);
  out.states.assign(static_cast<size_t>(N + 1), Vector6d::Zero());
  for (int k = N - 1; k >= 0; --k)
    out.states[static_cast<size_t>(k)] = lu.solve(
        out.states[static_cast<size_t>(k + 1)] - Bd * out.controls[static_cast<size_t>(k)]);
  out.x0_shift = (out.states[0] - x0).norm();

  Vector6d fwd = out.states[0];
  for (int k = 0; k < N; ++k) fwd = Ad * fwd + Bd * out.controls[static_cast<size_t>(k)];
  out.final_miss = fwd.norm();
  out.feasible = true;

  out.trajectory.problem = Problem::Cr3bp;
  out.trajectory.converged = true;
  out.trajectory.samples.reserve(static_cast<size_t>(N + 1));
  double cost = 0.0;
  for (int k = 0; k <= N; ++k) {
    TimedSample ts;
    ts.t = k * p.dt;
    ts.state = StateVec::from_rv(out.states[static_cast<size_t>(k)]);
    ts.control.u = k < N ? out.controls[static_cast<size_t>(k)] : Vector3d::Zero();
    if (k < N) cost += 0.5 * ts.control.u.squaredNorm() * p.dt;
    out.trajectory.samples.push_back(std::move(ts));
  }
  out.trajectory.cost = cost;
  return out;
}

std::array<int, 3> encode_control_binary(const Vector3d& u) {
  if (!u.allFinite()) throw ContractError("control must be finite to encode");
  std::array<int, 3> sym{};
  for (int i = 0; i < 3; ++i) sym[static_cast<size_t>(i)] = u(i) < 0.0 ? 1 : 2;
  return sym;
}

Vector3d decode_control_binary(const std::array<int, 3>& sym, double umax) {
  Vector3d u;
  for (int i = 0; i < 3; ++i) {
    const int s = sym[static_cast<size_t>(i)];
    if (s != 1 && s != 2)
      throw ParseError("control symbol must be 1 or 2", std::to_string(s));
    u(i) = s == 1 ? -umax : umax;
  }
  return u;
}

Vector6d sample_cr3bp_ic(Rng& rng, const Cr3bpSamplerCfg& cfg) {
  Vector6d x;
  for (int i = 0; i < 3; ++i) x(i) = cfg.box_pos * rng.uniform(-1.0, 1.0);
  for (int i = 3; i < 6; ++i) x(i) = cfg.box_vel * rng.uniform(-1.0, 1.0);
  return x;
}

namespace {

// Feasible trajectory for slot `index`, resampling infeasible draws.
Cr3bpSolve sample_feasible(const Rng& root, uint64_t index, const Cr3bpParams& p,
                           const Cr3bpSamplerCfg& cfg, int& rejected) {
  Rng st = root.stream(index);
  for (int attempt = 0; attempt < cfg.max_oversample; ++attempt) {
    const Vector6d x0 = sample_cr3bp_ic(st, cfg);
    Cr3bpSolve sol = solve_cr3bp_transfer(x0, p);
    if (sol.feasible) return sol;
    ++rejected;
  }
  throw ConfigError("sampler found no feasible initial condition in " +
                    std::to_string(cfg.max_oversample) + " draws for trajectory " +
                    std::to_string(index));
}

long write_trajectory_records(CorpusWriter& w, const Cr3bpSolve& sol, long traj_id,
                              double dt) {
  const StateVec origin;  // target: the L1 point at the origin of the deviation frame
  long n = 0;
  for (size_t k = 0; k + 1 < sol.states.size(); ++k) {
    PromptRecord rec;
    rec.problem = problem_id(Problem::Cr3bp);
    rec.prompt = render_prompt(Problem::Cr3bp, StateVec::from_rv(sol.states[k]), origin);
    rec.completion = render_completion_symbols(encode_control_binary(sol.controls[k]));
    rec.traj_id = traj_id;
    rec.step = static_cast<int>(k);
    rec.t = static_cast<double>(k) * dt;
    w.write(rec);
    ++n;
  }
  return n;
}

}  // namespace

Cr3bpDatasetStats generate_cr3bp_dataset(int n_traj, const Cr3bpParams& p,
                                         const Cr3bpSamplerCfg& cfg, uint64_t seed,
                                         const std::string& train_path,
                                         const std::string& test_path, int n_test) {
  if (n_traj < 1) throw ContractError("dataset needs at least one trajectory");
  // Test slots live in a disjoint stream range of the same seed, so every
  // training size shares the one held-out set.
  constexpr uint64_t kTestBase = 1u << 20;
  if (n_traj >= static_cast<int>(kTestBase))
    throw ContractError("dataset size collides with the test stream range");
  const Rng root(seed);
  Cr3bpDatasetStats stats;
  stats.n_traj = n_traj;

  CorpusWriter train(train_path);
  for (int i = 0; i < n_traj; ++i) {
    const Cr3bpSolve sol =
        sample_feasible(root, static_cast<uint64_t>(i), p, cfg, stats.n_rejected);
    stats.n_records += write_trajectory_records(train, sol, i, p.dt);
  }
  train.close();

  CorpusWriter test(test_path);
  for (int j = 0; j < n_test; ++j) {
    const Cr3bpSolve sol =
        sample_feasible(root, kTestBase + static_cast<uint64_t>(j), p, cfg,
                        stats.n_rejected);
    stats.n_test_records +=
        write_trajectory_records(test, sol, static_cast<long>(kTestBase) + j, p.dt);
  }
  test.close();
  return stats;
}

}  // namespace textnav
