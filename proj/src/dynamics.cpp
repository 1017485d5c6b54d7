#include "textnav/dynamics.hpp"

#include <cmath>
#include <cstdio>

namespace textnav {

void SpringParams::validate() const {
  if (!(m > 0.0) || !(k > 0.0) || !(c < 0.0) || !std::isfinite(m) || !std::isfinite(k) ||
      !std::isfinite(c))
    throw ContractError("spring params require m>0, k>0, c<0");
  if (!Q.isApprox(Q.transpose()) || !R.isApprox(R.transpose()))
    throw ContractError("spring weights must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(Q), er(R);
  if (eq.eigenvalues().minCoeff() <= 0.0 || er.eigenvalues().minCoeff() <= 0.0)
    throw ContractError("spring weights must be positive definite");
}

StateVec periapsis_state(double a, double e, double inc, double mu) {
  double rp = a * (1.0 - e);
  double vp = std::sqrt(mu * (2.0 / rp - 1.0 / a));
  StateVec s;
  s.r << rp, 0.0, 0.0;
  s.v << 0.0, vp * std::cos(inc), vp * std::sin(inc);
  return s;
}

TransferParams TransferParams::defaults() {
  TransferParams p;
  p.x0 = periapsis_state(1.268, 0.12, 26.6 * M_PI / 180.0, 1.0);
  // arrival on the target circular orbit a quarter turn ahead of the start
  p.xtarget.r << 0.0, 2.0, 0.0;
  p.xtarget.v << -std::sqrt(0.5), 0.0, 0.0;
  return p;
}

void Cr3bpParams::validate() const {
  if (!(mu_u > 0.0 && mu_u < 0.5)) throw ContractError("cr3bp mass ratio out of (0, 0.5)");
  if (!(L1 > 0.0 && L1 < 1.0)) throw ContractError("cr3bp L1 out of (0, 1)");
  if (!(umax > 0.0)) throw ContractError("cr3bp umax must be positive");
  if (N < 2) throw ContractError("cr3bp N must be at least 2");
  if (!(dt > 0.0)) throw ContractError("cr3bp dt must be positive");
}

LandingParams::LandingParams() { set_glideslope_angle(86.0); }

void LandingParams::set_glideslope_angle(double deg) {
  double tg = std::tan(deg * M_PI / 180.0);
  Hgs.resize(4, 3);
  Hgs << 1, 0, -tg, -1, 0, -tg, 0, 1, -tg, 0, -1, -tg;
  hgs = VectorXd::Zero(4);
}

void LandingParams::validate() const {
  if (!(m_wet > m_dry && m_dry > 0.0)) throw ContractError("landing requires m_wet > m_dry > 0");
  if (!(rho_max > rho_min && rho_min > 0.0))
    throw ContractError("landing requires rho_max > rho_min > 0");
  if (!(gamma_p > 0.0 && gamma_p < M_PI / 2))
    throw ContractError("landing tilt limit out of (0, pi/2)");
  if (!(alpha > 0.0)) throw ContractError("landing alpha must be positive");
  if (Hgs.rows() != hgs.size()) throw ContractError("glideslope matrix/vector size mismatch");
}

Matrix6d spring_A(const SpringParams& p) {
  p.validate();
  Matrix6d A = Matrix6d::Zero();
  A.topRightCorner<3, 3>() = Matrix3d::Identity();
  A.bottomLeftCorner<3, 3>() = -(p.k / p.m) * Matrix3d::Identity();
  A.bottomRightCorner<3, 3>() = -(p.c / p.m) * Matrix3d::Identity();
  return A;
}

Matrix63d spring_B(const SpringParams& p) {
  p.validate();
  Matrix63d B = Matrix63d::Zero();
  B.bottomRows<3>() = (1.0 / p.m) * Matrix3d::Identity();
  return B;
}

Vector6d two_body_thrust_deriv(const Vector6d& x, const Vector3d& u, double mu) {
  Vector3d r = x.head<3>();
  double rn = r.norm();
  if (!(rn > 0.0)) throw NumericalError("two-body singularity: zero position norm");
  Vector6d dx;
  dx.head<3>() = x.tail<3>();
  dx.tail<3>() = -mu / (rn * rn * rn) * r + u;
  return dx;
}

std::pair<Vector3d, Vector3d> costate_deriv(const Vector3d& r, const Vector3d& lam_r,
                                            const Vector3d& lam_v, double mu) {
  double rn = r.norm();
  if (!(rn > 0.0)) throw NumericalError("costate singularity: zero position norm");
  double r3 = rn * rn * rn;
  double r5 = r3 * rn * rn;
  Vector3d lrd = mu * (lam_v / r3 - 3.0 * r.dot(lam_v) / r5 * r);
  return {lrd, -lam_r};
}

double transfer_hamiltonian(const Vector6d& x, const Vector6d& lam, double mu) {
  Vector3d lam_r = lam.head<3>(), lam_v = lam.tail<3>();
  Vector3d u = -lam_v;
  Vector6d dx = two_body_thrust_deriv(x, u, mu);
  return 0.5 * u.squaredNorm() + lam_r.dot(x.tail<3>()) + lam_v.dot(dx.tail<3>());
}

double cr3bp_alpha(const Cr3bpParams& p) {
  p.validate();
  double d1 = std::abs(p.L1 + p.mu_u);
  double d2 = std::abs(p.L1 - (1.0 - p.mu_u));
  if (d1 == 0.0 || d2 == 0.0) throw NumericalError("cr3bp alpha singular at a primary");
  return (1.0 - p.mu_u) / (d1 * d1 * d1) + p.mu_u / (d2 * d2 * d2);
}

Matrix6d cr3bp_linear_A(const Cr3bpParams& p) {
  double a = cr3bp_alpha(p);
  Matrix6d A = Matrix6d::Zero();
  A.topRightCorner<3, 3>() = Matrix3d::Identity();
  A(3, 0) = 1.0 + 2.0 * a;
  A(3, 4) = 2.0;
  A(4, 1) = 1.0 - a;
  A(4, 3) = -2.0;
  A(5, 2) = -a;
  return A;
}

Matrix63d cr3bp_linear_B(const Cr3bpParams& p) {
  p.validate();
  Matrix63d B = Matrix63d::Zero();
  B.bottomRows<3>() = Matrix3d::Identity();
  return B;
}

Vector6d cr3bp_full_deriv(const Vector6d& x, const Vector3d& u, double mu_u) {
  double px = x(0), py = x(1), pz = x(2);
  double d1x = px + mu_u, d2x = px - 1.0 + mu_u;
  double r1 = std::sqrt(d1x * d1x + py * py + pz * pz);
  double r2 = std::sqrt(d2x * d2x + py * py + pz * pz);
  if (!(r1 > 0.0) || !(r2 > 0.0)) throw NumericalError("cr3bp collision singularity");
  double c1 = (1.0 - mu_u) / (r1 * r1 * r1);
  double c2 = mu_u / (r2 * r2 * r2);
  Vector6d dx;
  dx.head<3>() = x.tail<3>();
  dx(3) = 2.0 * x(4) + px - c1 * d1x - c2 * d2x + u(0);
  dx(4) = -2.0 * x(3) + py - c1 * py - c2 * py + u(1);
  dx(5) = -c1 * pz - c2 * pz + u(2);
  return dx;
}

Eigen::Matrix<double, 7, 1> landing_deriv(const Eigen::Matrix<double, 7, 1>& x,
                                          const Vector3d& u, double xi,
                                          const LandingParams& p) {
  if (!(xi >= 0.0)) throw ContractError("landing slack must be present and nonnegative");
  Vector3d r = x.head<3>(), v = x.segment<3>(3);
  Eigen::Matrix<double, 7, 1> dx;
  dx.head<3>() = v;
  dx.segment<3>(3) =
      p.g + u - p.omega.cross(p.omega.cross(r)) - 2.0 * p.omega.cross(v);
  dx(6) = -p.alpha * xi;
  return dx;
}

VectorXd rk4_step(const DerivFn& f, double t, const VectorXd& x, const VectorXd& u,
                  double h) {
  VectorXd k1 = f(t, x, u);
  VectorXd k2 = f(t + 0.5 * h, x + 0.5 * h * k1, u);
  VectorXd k3 = f(t + 0.5 * h, x + 0.5 * h * k2, u);
  VectorXd k4 = f(t + h, x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

VectorXd rk4_span(const DerivFn& f, double t0, double t1, VectorXd x, const VectorXd& u,
                  double dt) {
  if (!(dt > 0.0) || !(t1 > t0)) throw ContractError("rk4_span requires dt > 0 and t1 > t0");
  double t = t0;
  while (t < t1 - 1e-12 * std::max(1.0, std::abs(t1))) {
    double h = std::min(dt, t1 - t);
    x = rk4_step(f, t, x, u, h);
    t += h;
  }
  return x;
}

namespace {

TimedSample make_sample(double t, const VectorXd& x, const VectorXd& u) {
  TimedSample s;
  s.t = t;
  s.state.r = x.head<3>();
  s.state.v = x.segment<3>(3);
  if (x.size() >= 7) s.state.z = x(6);
  s.control.u = u.head<3>();
  if (u.size() >= 4) s.control.xi = u(3);
  return s;
}

}  // namespace

Trajectory rk4_propagate(const DerivFn& f, const VectorXd& x0, double t0, double t1,
                         double dt, const ControlFn& control_fn) {
  if (!(dt > 0.0) || !(t1 > t0)) throw ContractError("rk4_propagate requires dt > 0, t1 > t0");
  Trajectory traj;
  VectorXd x = x0;
  double t = t0;
  VectorXd u = control_fn(t, x);
  traj.samples.push_back(make_sample(t, x, u));
  while (t < t1 - 1e-12 * std::max(1.0, std::abs(t1))) {
    double h = std::min(dt, t1 - t);
    try {
      x = rk4_step(f, t, x, u, h);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at t=" + std::to_string(t));
    }
    t += h;
    if (t < t1 - 1e-12 * std::max(1.0, std::abs(t1))) u = control_fn(t, x);
    traj.samples.push_back(make_sample(t, x, u));
  }
  return traj;
}

double swept_angle(const std::vector<Vector3d>& positions) {
  double total = 0.0;
  for (size_t i = 0; i + 1 < positions.size(); ++i) {
    const Vector3d& a = positions[i];
    const Vector3d& b = positions[i + 1];
    double cross = a.cross(b).norm();
    double dot = a.dot(b);
    if (cross < 1e-14 * a.norm() * b.norm() && dot <= 0.0)
      throw NumericalError("revolution count undefined for radial motion");
    total += std::atan2(cross, dot);
  }
  return total;
}

int count_revolutions(const std::vector<Vector3d>& positions) {
  if (positions.size() < 2) throw ContractError("revolution count needs at least two samples");
  // 1e-9 guard keeps an exact full period from flipping to 0 on accumulated
  // atan2 roundoff; far below any physically meaningful margin.
  return (int)std::floor(swept_angle(positions) / (2.0 * M_PI) + 1e-9);
}

int count_revolutions(const Trajectory& traj) {
  std::vector<Vector3d> pos;
  pos.reserve(traj.samples.size());
  for (const auto& s : traj.samples) {
    if (s.state.r.cross(s.state.v).norm() < 1e-12)
      throw NumericalError("revolution count undefined: vanishing angular momentum");
    pos.push_back(s.state.r);
  }
  return count_revolutions(pos);
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  if (traj.samples.empty()) throw ContractError("cannot export an empty trajectory");
  FILE* out = std::fopen(path.c_str(), "wb");
  if (!out) throw ConfigError("cannot open trajectory file for writing: " + path);
  bool has_z = traj.samples.front().state.z.has_value();
  bool has_xi = traj.samples.front().control.xi.has_value();
  std::fprintf(out, "t,rx,ry,rz,vx,vy,vz%s,ux,uy,uz%s\n", has_z ? ",z" : "",
               has_xi ? ",xi" : "");
  for (const auto& s : traj.samples) {
    std::fprintf(out, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", s.t, s.state.r(0),
                 s.state.r(1), s.state.r(2), s.state.v(0), s.state.v(1), s.state.v(2));
    if (has_z) std::fprintf(out, ",%.17g", s.state.z.value_or(0.0));
    std::fprintf(out, ",%.17g,%.17g,%.17g", s.control.u(0), s.control.u(1), s.control.u(2));
    if (has_xi) std::fprintf(out, ",%.17g", s.control.xi.value_or(0.0));
    std::fputc('\n', out);
  }
  std::fclose(out);
}

}  // namespace textnav
