#pragma once

#include <Eigen/Core>

namespace epimatch {

// Row-major intensity grid; image(r, c) is the pixel covering [c, c+1) x [r, r+1).
using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Mean magnitude of central-difference gradients over interior pixels.
double mean_gradient_magnitude(const Image& image);

}  // namespace epimatch
