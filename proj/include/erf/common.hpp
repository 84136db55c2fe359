#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xrf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rgb = Eigen::Array3d;

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (dataset files, model containers).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace xrf
