#pragma once

#include <array>

#include "textnav/codec.hpp"
#include "textnav/common.hpp"
#include "textnav/conic.hpp"
#include "textnav/dynamics.hpp"
#include "textnav/rng.hpp"

namespace textnav {

// Earth-Moon mean distance; Table-style km reporting of nondimensional state.
inline constexpr double kCr3bpDuKm = 384400.0;

// Exact zero-order-hold discretization over dt via the augmented exponential.
void zoh_discretize(const Matrix6d& A, const Matrix63d& B, double dt, Matrix6d& Ad,
                    Matrix63d& Bd);

// Feasibility LP in L1-centered deviation coordinates: variables x_1..x_N,
// u_0..u_{N-1}; dynamics equalities, terminal pin to the origin, and per-
// component control bounds |u| <= umax.
ConicProgram build_lp(const Vector6d& x0, const Cr3bpParams& p);

struct Cr3bpSolve {
  bool feasible = false;
  ConicStatus status = ConicStatus::MaxIter;
  std::vector<Vector6d> states;    // x_0..x_N, propagation-consistent
  std::vector<Vector3d> controls;  // u_0..u_{N-1}, within bounds
  Trajectory trajectory;           // same data on the node grid
  double final_miss = 0.0;         // |x_N| of the rebuilt chain
  double x0_shift = 0.0;           // |rebuilt x_0 - requested x_0|
};

Cr3bpSolve solve_cr3bp_transfer(const Vector6d& x0, const Cr3bpParams& p);

// Binary text encoding: per component 1 if u < 0, else 2.
std::array<int, 3> encode_control_binary(const Vector3d& u);
// Symbols back to a bang-bang control at +-umax.
Vector3d decode_control_binary(const std::array<int, 3>& sym, double umax);

struct Cr3bpSamplerCfg {
  // Uniform box half-widths about L1, sized to the reachable set: the saddle
  // mode (Re λ ≈ 2.93/TU) caps recoverable position offsets near umax/λ².
  double box_pos = 1e-5;  // DU
  double box_vel = 1e-6;  // DU/TU
  int max_oversample = 100;
};

// Uniform box draw, not feasibility-checked.
Vector6d sample_cr3bp_ic(Rng& rng, const Cr3bpSamplerCfg& cfg);

struct Cr3bpDatasetStats {
  int n_traj = 0;
  int n_rejected = 0;  // infeasible draws across all slots
  long n_records = 0;
  long n_test_records = 0;
};

// Writes n_traj training trajectories and a disjoint 60-IC test set drawn
// from a separate stream range of the same seed.
Cr3bpDatasetStats generate_cr3bp_dataset(int n_traj, const Cr3bpParams& p,
                                         const Cr3bpSamplerCfg& cfg, uint64_t seed,
                                         const std::string& train_path,
                                         const std::string& test_path, int n_test = 60);

}  // namespace textnav
