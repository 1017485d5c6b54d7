#pragma once

#include "textnav/codec.hpp"
#include "textnav/common.hpp"
#include "textnav/conic.hpp"
#include "textnav/dynamics.hpp"
#include "textnav/rng.hpp"

namespace textnav {

// Discrete fuel-optimal descent SOCP over N steps of dt = tf/N: variables
// (r, v, z)_0..N and (u, xi)_0..N-1, ZOH dynamics, Taylor-linearized thrust
// bounds (the lower one as a 3-dim second-order cone), tilt, glideslope,
// speed, and mass-rate corridors, boundary rows pinning launch state and a
// zero-position/zero-velocity touchdown.
ConicProgram build_socp(const LandingParams& p, double tf, int N);

struct LandingSolve {
  bool feasible = false;
  ConicStatus status = ConicStatus::MaxIter;
  double tf = 0.0;
  double dt = 0.0;
  std::vector<Vector3d> r, v;  // N+1 nodes, propagation-consistent
  std::vector<double> z;       // ln mass
  std::vector<Vector3d> u;     // N thrust accelerations
  std::vector<double> xi;      // N slack magnitudes
  Trajectory trajectory;
  double cost = 0.0;  // dt * sum xi, the discretized objective
  double fuel = 0.0;  // m_wet - exp(z_N), kg
};

LandingSolve solve_fixed_tf(const LandingParams& p, double tf, int N);

// Fraction of control nodes where the relaxation xi >= |u| is tight to tol.
double lossless_check(const LandingSolve& sol, double tol);

struct TfSearch {
  double tf = 0.0;
  LandingSolve sol;
  int n_probes = 0;
  int n_feasible = 0;
};

// Coarse feasibility scan of [tf_lo, tf_hi] followed by golden-section
// refinement around the best probe; throws when no probe is feasible.
TfSearch search_tf(const LandingParams& p, double tf_lo, double tf_hi, int N,
                   double tol);

struct LandingSamplerCfg {
  double r_radius = 50.0;  // m, uniform ball about the nominal launch point
  double v_radius = 5.0;   // m/s
  double pointing_lo_deg = 30.0;  // tilt limit interval
  double pointing_hi_deg = 50.0;
  double glideslope_lo_deg = 80.0;  // cone half-angle interval
  double glideslope_hi_deg = 88.0;
  double cant_lo_deg = 0.0;  // engine cant, scales thrust bounds by cos
  double cant_hi_deg = 10.0;
};

struct LandingDatasetStats {
  int n_traj = 0;
  int n_rejected = 0;
  long n_records = 0;
};

// One free-final-time solve per accepted draw; each control node becomes a
// state -> thrust record.  Rejection above 95% of draws is a configuration
// error.
LandingDatasetStats generate_landing_dataset(int n, const LandingParams& base,
                                             const LandingSamplerCfg& cfg, uint64_t seed,
                                             const std::string& path);

}  // namespace textnav
