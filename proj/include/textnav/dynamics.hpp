#pragma once

#include <functional>
#include <utility>

#include "textnav/common.hpp"

namespace textnav {

struct SpringParams {
  double m = 1.0;
  double k = 1.0;
  double c = -0.1;  // negative damping: the plant is unstable by design
  Matrix6d Q = Matrix6d::Identity();
  Matrix3d R = 0.1 * Matrix3d::Identity();

  void validate() const;
};

struct TransferParams {
  double mu = 1.0;
  StateVec x0;       // periapsis of the initial orbit
  StateVec xtarget;  // point on the target circular orbit
  double sigma_pos = 0.05;  // DU
  double sigma_vel = 0.05;  // DU/TU

  static TransferParams defaults();
};

// Periapsis state of an orbit with semi-major axis a, eccentricity e,
// inclination i (ascending node and argument of periapsis zero).
StateVec periapsis_state(double a, double e, double inc, double mu);

struct Cr3bpParams {
  double mu_u = 0.012150585609624;
  double L1 = 0.8362924;
  double umax = 1e-4;
  int N = 100;
  double dt = 0.05;  // TU
  void validate() const;
};

struct LandingParams {
  Vector3d g{0.0, 0.0, -3.71};           // m/s^2
  Vector3d omega = Vector3d::Zero();     // planetary rotation, rad/s
  double alpha = 4.53257e-4;             // s/m, 1/(Isp g0) at Isp = 225 s
  double rho_min = 4970.0;               // N
  double rho_max = 13260.0;              // N
  double gamma_p = 40.0 * M_PI / 180.0;  // max tilt from vertical
  double vmax = 90.0;                    // m/s
  double m_wet = 1905.0;                 // kg
  double m_dry = 1505.0;                 // kg
  MatrixXd Hgs;                          // glideslope half-planes, rows act on r
  VectorXd hgs;
  double delta_taylor = 0.0;  // offset on the mass-depletion expansion point
  Vector3d r0{450.0, -330.0, 2400.0};
  Vector3d v0{-40.0, 10.0, -10.0};
  int N = 50;
  double tf_min = 10.0;  // s, search bracket
  double tf_max = 100.0;
  double tf_tol = 0.1;

  LandingParams();
  void set_glideslope_angle(double deg);
  void validate() const;
};

Matrix6d spring_A(const SpringParams& p);
Matrix63d spring_B(const SpringParams& p);

Vector6d two_body_thrust_deriv(const Vector6d& x, const Vector3d& u, double mu);
// returns (lam_r_dot, lam_v_dot)
std::pair<Vector3d, Vector3d> costate_deriv(const Vector3d& r, const Vector3d& lam_r,
                                            const Vector3d& lam_v, double mu);
// H = 1/2 u'u + lam_r'v + lam_v' rddot with u = -lam_v; zero at a free final time
double transfer_hamiltonian(const Vector6d& x, const Vector6d& lam, double mu);

double cr3bp_alpha(const Cr3bpParams& p);
Matrix6d cr3bp_linear_A(const Cr3bpParams& p);
Matrix63d cr3bp_linear_B(const Cr3bpParams& p);
Vector6d cr3bp_full_deriv(const Vector6d& x, const Vector3d& u, double mu_u);

// state layout (r, v, z)
Eigen::Matrix<double, 7, 1> landing_deriv(const Eigen::Matrix<double, 7, 1>& x,
                                          const Vector3d& u, double xi,
                                          const LandingParams& p);

using DerivFn = std::function<VectorXd(double t, const VectorXd& x, const VectorXd& u)>;
using ControlFn = std::function<VectorXd(double t, const VectorXd& x)>;

// One classical RK4 step with the control held across the stages.
VectorXd rk4_step(const DerivFn& f, double t, const VectorXd& x, const VectorXd& u,
                  double h);
// Integrate [t0, t1] under a fixed control, stepping by dt (last step shortened).
VectorXd rk4_span(const DerivFn& f, double t0, double t1, VectorXd x, const VectorXd& u,
                  double dt);
// Full propagation; control_fn is sampled at step boundaries and held (ZOH).
Trajectory rk4_propagate(const DerivFn& f, const VectorXd& x0, double t0, double t1,
                         double dt, const ControlFn& control_fn);

int count_revolutions(const std::vector<Vector3d>& positions);
int count_revolutions(const Trajectory& traj);
// Accumulated unsigned swept angle, radians.
double swept_angle(const std::vector<Vector3d>& positions);

void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace textnav
