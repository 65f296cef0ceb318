#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <vector>

namespace tactile {

using Scalar = double;

template <int Rows = Eigen::Dynamic, int Cols = Rows>
using Matrix = Eigen::Matrix<Scalar, Rows, Cols>;

template <int Rows = Eigen::Dynamic>
using Vector = Matrix<Rows, 1>;

using Vec2 = Vector<2>;
using Vec3 = Vector<3>;
using Vec6 = Vector<6>;
using Mat3 = Matrix<3, 3>;
using Mat6 = Matrix<6, 6>;
using Quaternion = Eigen::Quaternion<Scalar>;

// Point lists are kept as std::vector of fixed-size Eigen vectors.
using Points2 = std::vector<Vec2>;
using Points3 = std::vector<Vec3>;

inline constexpr Scalar kPi = 3.14159265358979323846;

inline constexpr Scalar deg2rad(Scalar deg) { return deg * kPi / 180.0; }
inline constexpr Scalar rad2deg(Scalar rad) { return rad * 180.0 / kPi; }

// Error hierarchy. The CLI maps these onto exit codes:
// ConfigError -> 1, DataError and subclasses -> 2, ConvergenceError -> 3.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class DataError : public Error {
  public:
    using Error::Error;
};

class DomainError : public DataError {
  public:
    using DataError::DataError;
};

class DegenerateError : public DataError {
  public:
    using DataError::DataError;
};

class ConvergenceError : public Error {
  public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const { return residual_; }

  private:
    double residual_;
};

}  // namespace tactile
