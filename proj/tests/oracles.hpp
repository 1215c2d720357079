#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

// Test-only reference implementations, kept deliberately independent of the
// library code paths they are used to check.

namespace oracles {

// Average precision by repeated selection of the highest-scored unused item
// (earliest input index wins ties), no sorting machinery shared with the
// implementation under test.
inline double brute_average_precision(const std::vector<double>& scores,
                                      const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::size_t npos = 0;
  for (int y : labels) npos += y > 0 ? 1 : 0;
  std::vector<bool> used(n, false);
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 1; rank <= n; ++rank) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!used[i] && (best == n || scores[i] > scores[best])) best = i;
    }
    used[best] = true;
    if (labels[best] > 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(npos);
}

// Full-batch projected subgradient descent on
//   0.5 * (||w||^2 + b^2) + C * sum_i max(0, 1 - y_i (w.x_i + b)),
// step 1/t (the objective is 1-strongly convex). Slow but dependable; keeps
// the best iterate seen.
struct SubgradientResult {
  std::vector<double> w;
  double b = 0.0;
  double objective = std::numeric_limits<double>::infinity();
};

inline SubgradientResult subgradient_svm(const std::vector<std::vector<double>>& xs,
                                         const std::vector<int>& ys, double c, int iterations) {
  const std::size_t n = xs.size();
  const std::size_t dim = xs[0].size();
  std::vector<double> w(dim, 0.0);
  double b = 0.0;

  auto objective = [&](const std::vector<double>& ww, double bb) {
    double reg = bb * bb;
    for (double v : ww) reg += v * v;
    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double m = bb;
      for (std::size_t d = 0; d < dim; ++d) m += ww[d] * xs[i][d];
      hinge += std::max(0.0, 1.0 - ys[i] * m);
    }
    return 0.5 * reg + c * hinge;
  };

  SubgradientResult best;
  std::vector<double> gw(dim);
  for (int t = 1; t <= iterations; ++t) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double m = b;
      for (std::size_t d = 0; d < dim; ++d) m += w[d] * xs[i][d];
      if (ys[i] * m < 1.0) {
        for (std::size_t d = 0; d < dim; ++d) gw[d] -= c * ys[i] * xs[i][d];
        gb -= c * ys[i];
      }
    }
    const double step = 1.0 / static_cast<double>(t);
    for (std::size_t d = 0; d < dim; ++d) w[d] -= step * (w[d] + gw[d]);
    b -= step * (b + gb);

    const double obj = objective(w, b);
    if (obj < best.objective) {
      best.objective = obj;
      best.w = w;
      best.b = b;
    }
  }
  return best;
}

// Exact additive chi-squared kernel with the same rectification rule as the
// feature map (negative components treated as zero).
inline double exact_chi2_kernel(const std::vector<float>& x, const std::vector<float>& y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x[i] > 0 ? x[i] : 0.0;
    const double b = y[i] > 0 ? y[i] : 0.0;
    if (a + b > 0.0) sum += 2.0 * a * b / (a + b);
  }
  return sum;
}

// Classical Jacobi eigensolver for symmetric matrices: rotate away the
// largest off-diagonal element until all are below tolerance. Returns
// eigenvalues ascending with matching eigenvector columns (row-major n x n).
inline void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& values,
                         std::vector<double>& vectors) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  const int max_rotations = static_cast<int>(100 * n * n);
  for (int rot = 0; rot < max_rotations; ++rot) {
    std::size_t p = 0, q = 1;
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (std::fabs(a[i * n + j]) > off) {
          off = std::fabs(a[i * n + j]);
          p = i;
          q = j;
        }
      }
    }
    if (off < 1e-13) break;

    const double app = a[p * n + p], aqq = a[q * n + q], apq = a[p * n + q];
    const double theta = (aqq - app) / (2.0 * apq);
    const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
    const double cos_r = 1.0 / std::sqrt(t * t + 1.0);
    const double sin_r = t * cos_r;

    for (std::size_t k = 0; k < n; ++k) {
      const double akp = a[k * n + p], akq = a[k * n + q];
      a[k * n + p] = cos_r * akp - sin_r * akq;
      a[k * n + q] = sin_r * akp + cos_r * akq;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double apk = a[p * n + k], aqk = a[q * n + k];
      a[p * n + k] = cos_r * apk - sin_r * aqk;
      a[q * n + k] = sin_r * apk + cos_r * aqk;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double vkp = v[k * n + p], vkq = v[k * n + q];
      v[k * n + p] = cos_r * vkp - sin_r * vkq;
      v[k * n + q] = sin_r * vkp + cos_r * vkq;
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x * n + x] < a[y * n + y]; });
  values.resize(n);
  vectors.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    values[j] = a[order[j] * n + order[j]];
    for (std::size_t i = 0; i < n; ++i) vectors[i * n + j] = v[i * n + order[j]];
  }
}

// Exhaustive best 2-partition by within-cluster sum of squares over <= 20
// points (points row-major n x d). Labels are canonicalized so point 0 is in
// cluster 0.
inline std::vector<int> best_two_partition(const std::vector<double>& points, std::size_t n,
                                           std::size_t d) {
  double best_wcss = std::numeric_limits<double>::infinity();
  std::vector<int> best_labels(n, 0);
  for (std::size_t mask = 1; mask + 1 < (1ull << (n - 1)) + 1; ++mask) {
    // point 0 always in cluster 0; mask assigns points 1..n-1
    std::vector<int> labels(n, 0);
    for (std::size_t i = 1; i < n; ++i) labels[i] = (mask >> (i - 1)) & 1;
    std::vector<double> centroid(2 * d, 0.0);
    std::size_t counts[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t k = 0; k < d; ++k) centroid[labels[i] * d + k] += points[i * d + k];
    }
    if (counts[0] == 0 || counts[1] == 0) continue;
    for (int cl = 0; cl < 2; ++cl) {
      for (std::size_t k = 0; k < d; ++k) centroid[cl * d + k] /= static_cast<double>(counts[cl]);
    }
    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = points[i * d + k] - centroid[labels[i] * d + k];
        wcss += diff * diff;
      }
    }
    if (wcss < best_wcss) {
      best_wcss = wcss;
      best_labels = labels;
    }
  }
  return best_labels;
}

}  // namespace oracles
