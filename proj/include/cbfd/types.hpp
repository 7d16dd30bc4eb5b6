#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace cbfd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error hierarchy. Everything thrown by the library derives from Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidArgument : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct SeparabilityViolation : Error {
  using Error::Error;
};
struct Infeasible : Error {
  using Error::Error;
};
struct DimMismatch : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};
struct ExpertFailure : Error {
  using Error::Error;
};

// Axis-aligned box [lo, hi]. Used for disturbances, initial states and inputs.
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_);

  static Box zero(int dim) { return Box(Vec::Zero(dim), Vec::Zero(dim)); }
  static Box symmetric(int dim, double half_width);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vec& v, double tol = 0.0) const;
  bool contains(const Box& inner) const;
  Vec clamp(const Vec& v) const;
  void validate() const;
};

using DisturbanceBox = Box;

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

}  // namespace cbfd
