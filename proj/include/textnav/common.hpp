#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace textnav {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix63d = Eigen::Matrix<double, 6, 3>;

struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what, std::string raw = {})
      : std::runtime_error(what), raw_text(std::move(raw)) {}
  std::string raw_text;
};
struct PolicyError : std::runtime_error {
  explicit PolicyError(const std::string& what, std::string transcript = {})
      : std::runtime_error(what), transcript(std::move(transcript)) {}
  std::string transcript;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Problem { Spring, Transfer, Cr3bp, Landing };

inline const char* problem_id(Problem p) {
  switch (p) {
    case Problem::Spring: return "spring";
    case Problem::Transfer: return "transfer";
    case Problem::Cr3bp: return "cr3bp";
    case Problem::Landing: return "landing";
  }
  return "?";
}

inline Problem problem_from_id(const std::string& s) {
  if (s == "spring") return Problem::Spring;
  if (s == "transfer") return Problem::Transfer;
  if (s == "cr3bp") return Problem::Cr3bp;
  if (s == "landing") return Problem::Landing;
  throw ConfigError("unknown problem id: " + s);
}

struct StateVec {
  Vector3d r = Vector3d::Zero();
  Vector3d v = Vector3d::Zero();
  std::optional<double> z;  // ln(mass), landing only

  Vector6d rv() const {
    Vector6d x;
    x << r, v;
    return x;
  }
  static StateVec from_rv(const Vector6d& x) {
    StateVec s;
    s.r = x.head<3>();
    s.v = x.tail<3>();
    return s;
  }
  int dim() const { return z ? 7 : 6; }
};

struct ControlVec {
  Vector3d u = Vector3d::Zero();
  std::optional<double> xi;  // slack, landing only
};

struct TimedSample {
  double t = 0.0;
  StateVec state;
  ControlVec control;
};

struct Trajectory {
  Problem problem = Problem::Spring;
  std::vector<TimedSample> samples;
  double cost = 0.0;
  bool converged = true;
  int revolutions = -1;  // transfer only

  const TimedSample& back() const { return samples.back(); }
};

}  // namespace textnav
