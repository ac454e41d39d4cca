#include "epimatch/image.hpp"

#include <cmath>

namespace epimatch {

double mean_gradient_magnitude(const Image& image) {
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index r = 1; r + 1 < image.rows(); ++r) {
    for (Eigen::Index c = 1; c + 1 < image.cols(); ++c) {
      const double gx = 0.5 * (image(r, c + 1) - image(r, c - 1));
      const double gy = 0.5 * (image(r + 1, c) - image(r - 1, c));
      sum += std::hypot(gx, gy);
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace epimatch
