#pragma once

#include <span>
#include <string>
#include <vector>

namespace dustnet {

struct ClusterResult {
  std::vector<double> centroids;   // ascending
  std::vector<double> thresholds;  // midpoints between adjacent centroids
  std::vector<std::size_t> counts; // members per centroid
  int iterations = 0;
  bool converged = false;
  bool fallback = false;           // an empty cluster forced equally spaced thresholds
  std::string diagnostic;
};

inline constexpr int kKmeansMaxIterations = 100;
inline constexpr double kKmeansTolerance = 1e-9;

/// 1-D k-means (Lloyd) with centroids initialized equally spaced between the
/// smallest and largest sample. A cluster that empties during iteration is
/// reseeded at the worst-fitting sample; afterwards merge/split moves are
/// applied while they lower the squared error. Throws DomainError with fewer than
/// 4 * n_levels samples or n_levels < 2.
ClusterResult cluster_thresholds(std::span<const double> samples, int n_levels);

/// Number of thresholds strictly below v; a value equal to a threshold maps
/// to the lower level.
int demap_level(double v, std::span<const double> thresholds) noexcept;

}  // namespace dustnet
