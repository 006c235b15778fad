#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace trn {

using Vec3  = Eigen::Vector3d;
using Mat3  = Eigen::Matrix3d;
using Vec9  = Eigen::Matrix<double, 9, 1>;
using Mat9  = Eigen::Matrix<double, 9, 9>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MeshError : Error { using Error::Error; };
struct ScenarioError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
struct AssemblyError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

struct NotPositiveDefiniteError : Error {
  NotPositiveDefiniteError() : Error("matrix is not positive definite") {}
  using Error::Error;
};

}  // namespace trn
