#include "dustnet/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dustnet/errors.hpp"

namespace dustnet {
namespace {

std::vector<double> midpoints(const std::vector<double>& c) {
  std::vector<double> t(c.size() - 1);
  for (std::size_t k = 0; k + 1 < c.size(); ++k) t[k] = 0.5 * (c[k] + c[k + 1]);
  return t;
}

// In 1-D every cluster is a contiguous run of the sorted samples, so
// assignment is a binary search per threshold and cluster moments come from
// prefix sums.
class SortedSamples {
 public:
  explicit SortedSamples(std::span<const double> samples) : x_(samples.begin(), samples.end()) {
    std::sort(x_.begin(), x_.end());
    s1_.resize(x_.size() + 1, 0.0);
    s2_.resize(x_.size() + 1, 0.0);
    for (std::size_t i = 0; i < x_.size(); ++i) {
      s1_[i + 1] = s1_[i] + x_[i];
      s2_[i + 1] = s2_[i] + x_[i] * x_[i];
    }
  }

  double min() const { return x_.front(); }
  double max() const { return x_.back(); }

  // Run boundaries for sorted centroids; a value on a midpoint goes low.
  std::vector<std::size_t> bounds(const std::vector<double>& c) const {
    std::vector<std::size_t> b(c.size() + 1, 0);
    b.back() = x_.size();
    for (std::size_t k = 0; k + 1 < c.size(); ++k) {
      const double t = 0.5 * (c[k] + c[k + 1]);
      b[k + 1] = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
    }
    return b;
  }

  double sum(std::size_t a, std::size_t b) const { return s1_[b] - s1_[a]; }
  double sse(std::size_t a, std::size_t b) const {
    if (b <= a) return 0.0;
    const double n = static_cast<double>(b - a), s = sum(a, b);
    return std::max(0.0, (s2_[b] - s2_[a]) - s * s / n);
  }
  double total_sse(const std::vector<double>& c) const {
    const auto b = bounds(c);
    double e = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) e += sse(b[k], b[k + 1]);
    return e;
  }
  double at(std::size_t i) const { return x_[i]; }

 private:
  std::vector<double> x_, s1_, s2_;
};

struct LloydRun {
  int iterations = 0;
  bool converged = false;
};

LloydRun lloyd(const SortedSamples& xs, std::vector<double>& c, double span) {
  LloydRun run;
  const std::size_t k = c.size();
  for (run.iterations = 1; run.iterations <= kKmeansMaxIterations; ++run.iterations) {
    std::sort(c.begin(), c.end());
    const auto b = xs.bounds(c);
    double moved = 0.0;
    std::vector<double> next = c;
    for (std::size_t j = 0; j < k; ++j) {
      if (b[j + 1] > b[j]) next[j] = xs.sum(b[j], b[j + 1]) / static_cast<double>(b[j + 1] - b[j]);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (b[j + 1] > b[j]) continue;
      // Reseed an empty cluster at the sample farthest from its centroid,
      // which is always the end of some run.
      double worst = -1.0, at = next[j];
      for (std::size_t m = 0; m < k; ++m) {
        if (b[m + 1] <= b[m]) continue;
        for (double v : {xs.at(b[m]), xs.at(b[m + 1] - 1)}) {
          const double d = std::abs(v - next[m]);
          if (d > worst) {
            worst = d;
            at = v;
          }
        }
      }
      next[j] = at;
    }
    for (std::size_t j = 0; j < k; ++j) moved = std::max(moved, std::abs(next[j] - c[j]));
    c = next;
    if (moved <= kKmeansTolerance * std::max(span, 1e-300)) {
      run.converged = true;
      break;
    }
  }
  run.iterations = std::min(run.iterations, kKmeansMaxIterations);
  std::sort(c.begin(), c.end());
  return run;
}

}  // namespace

ClusterResult cluster_thresholds(std::span<const double> samples, int n_levels) {
  if (n_levels < 2) throw DomainError("k-means needs at least 2 levels");
  const auto k = static_cast<std::size_t>(n_levels);
  if (samples.size() < 4 * k) throw DomainError("k-means needs at least 4 samples per level");

  const SortedSamples xs(samples);
  const double lo = xs.min(), hi = xs.max();
  const double span = hi - lo;
  std::vector<double> init(k);
  for (std::size_t j = 0; j < k; ++j) init[j] = lo + span * static_cast<double>(j) / static_cast<double>(k - 1);

  ClusterResult r;
  std::vector<double> c = init;
  auto run = lloyd(xs, c, span);
  double best = xs.total_sse(c);

  // Lloyd stalls when neighbouring levels share a centroid. Try every
  // merge of two adjacent clusters paired with a split of another and keep
  // the move while the total squared error drops.
  for (std::size_t round = 0; round < 4 * k && best > 0.0; ++round) {
    const auto b = xs.bounds(c);
    std::vector<double> best_c;
    LloydRun best_run;
    double best_e = best * (1.0 - 1e-9);
    for (std::size_t a = 0; a + 1 < k; ++a) {
      const std::size_t na = b[a + 1] - b[a], nb = b[a + 2] - b[a + 1];
      if (na + nb == 0) continue;
      const double merged = xs.sum(b[a], b[a + 2]) / static_cast<double>(na + nb);
      for (std::size_t s = 0; s < k; ++s) {
        if (s == a || s == a + 1 || b[s + 1] - b[s] < 2) continue;
        const double n = static_cast<double>(b[s + 1] - b[s]);
        const double mean = xs.sum(b[s], b[s + 1]) / n;
        const double sd = std::sqrt(xs.sse(b[s], b[s + 1]) / n);
        std::vector<double> cand;
        for (std::size_t j = 0; j < k; ++j) {
          if (j == a) {
            cand.push_back(merged);
          } else if (j == s) {
            cand.push_back(mean - 0.5 * sd);
            cand.push_back(mean + 0.5 * sd);
          } else if (j != a + 1) {
            cand.push_back(c[j]);
          }
        }
        const auto cand_run = lloyd(xs, cand, span);
        const double e = xs.total_sse(cand);
        if (e < best_e) {
          best_e = e;
          best_c = std::move(cand);
          best_run = cand_run;
        }
      }
    }
    if (best_c.empty()) break;
    c = std::move(best_c);
    run = best_run;
    best = best_e;
  }
  r.iterations = run.iterations;
  r.converged = run.converged;

  const auto b = xs.bounds(c);
  r.counts.resize(k);
  for (std::size_t j = 0; j < k; ++j) r.counts[j] = b[j + 1] - b[j];
  if (std::any_of(r.counts.begin(), r.counts.end(), [](std::size_t n) { return n == 0; })) {
    r.fallback = true;
    r.diagnostic = "empty cluster; using equally spaced thresholds";
    r.centroids = init;
  } else {
    r.centroids = c;
  }
  r.thresholds = midpoints(r.centroids);
  return r;
}

int demap_level(double v, std::span<const double> thresholds) noexcept {
  int level = 0;
  for (double t : thresholds) {
    if (v > t) ++level;
  }
  return level;
}

}  // namespace dustnet
