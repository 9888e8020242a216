#pragma once

#include <Eigen/Core>

namespace negguide {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr const char* kEngineVersion = "0.3.0";

}  // namespace negguide
