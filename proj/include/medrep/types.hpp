#ifndef MEDREP_TYPES_HPP_
#define MEDREP_TYPES_HPP_

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace medrep {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using PointCloud = std::vector<Vec3>;

// Bad files, bad configs, missing paths. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures: empty masks, singular systems, divergence. Exit code 1.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace medrep

#endif  // MEDREP_TYPES_HPP_
