#include "vocabforge/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "vocabforge/kernels.hpp"
#include "vocabforge/parallel.hpp"
#include "vocabforge/rng.hpp"

namespace vocabforge {

namespace {

constexpr std::size_t kDenseEigenLimit = 512;
constexpr double kResidualTolerance = 1e-6;
constexpr int kQlMaxIterations = 50;
constexpr int kKmeansMaxIterations = 300;

double sign_like(double magnitude, double sign_of) {
  return sign_of >= 0.0 ? std::fabs(magnitude) : -std::fabs(magnitude);
}

// Householder reduction of a symmetric matrix to tridiagonal form with
// accumulated transforms; on return `a` holds the orthogonal matrix Q,
// d the diagonal and e the subdiagonal (e[i] couples i-1 and i, e[0] = 0).
void tridiagonalize(std::vector<double>& a, std::size_t n, std::vector<double>& d,
                    std::vector<double>& e) {
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };
  d.assign(n, 0.0);
  e.assign(n, 0.0);

  for (std::size_t i = n - 1; i >= 1; --i) {
    const std::size_t l = i - 1;
    double h = 0.0;
    double scale = 0.0;
    if (l > 0) {
      for (std::size_t k = 0; k <= l; ++k) scale += std::fabs(at(i, k));
      if (scale == 0.0) {
        e[i] = at(i, l);
      } else {
        for (std::size_t k = 0; k <= l; ++k) {
          at(i, k) /= scale;
          h += at(i, k) * at(i, k);
        }
        double f = at(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        at(i, l) = f - g;
        f = 0.0;
        for (std::size_t j = 0; j <= l; ++j) {
          at(j, i) = at(i, j) / h;
          g = 0.0;
          for (std::size_t k = 0; k <= j; ++k) g += at(j, k) * at(i, k);
          for (std::size_t k = j + 1; k <= l; ++k) g += at(k, j) * at(i, k);
          e[j] = g / h;
          f += e[j] * at(i, j);
        }
        const double hh = f / (h + h);
        for (std::size_t j = 0; j <= l; ++j) {
          f = at(i, j);
          e[j] = g = e[j] - hh * f;
          for (std::size_t k = 0; k <= j; ++k) at(j, k) -= f * e[k] + g * at(i, k);
        }
      }
    } else {
      e[i] = at(i, l);
    }
    d[i] = h;
  }
  d[0] = 0.0;
  e[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] != 0.0) {
      for (std::size_t j = 0; j < i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k < i; ++k) g += at(i, k) * at(k, j);
        for (std::size_t k = 0; k < i; ++k) at(k, j) -= g * at(k, i);
      }
    }
    d[i] = at(i, i);
    at(i, i) = 1.0;
    for (std::size_t j = 0; j < i; ++j) at(j, i) = at(i, j) = 0.0;
  }
}

// Implicit-shift QL on a tridiagonal matrix; d holds the diagonal, e the
// subdiagonal as e[i] coupling i and i+1 (e[n-1] unused). Columns of z
// accumulate the eigenvectors. Returns false if an eigenvalue fails to
// converge within the iteration cap.
bool ql_implicit(std::vector<double>& d, std::vector<double>& e, std::size_t n,
                 std::vector<double>& z) {
  auto zat = [&](std::size_t r, std::size_t c) -> double& { return z[r * n + c]; };
  if (n == 1) return true;
  e[n - 1] = 0.0;

  for (std::size_t l = 0; l < n; ++l) {
    int iterations = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
        if (std::fabs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (iterations++ == kQlMaxIterations) return false;
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + sign_like(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        std::ptrdiff_t i;
        for (i = static_cast<std::ptrdiff_t>(m) - 1; i >= static_cast<std::ptrdiff_t>(l); --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (std::size_t k = 0; k < n; ++k) {
            f = zat(k, i + 1);
            zat(k, i + 1) = s * zat(k, i) + c * f;
            zat(k, i) = c * zat(k, i) - s * f;
          }
        }
        if (r == 0.0 && i >= static_cast<std::ptrdiff_t>(l)) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  return true;
}

void check_symmetric(const std::vector<double>& mat, std::size_t n, double tol) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::fabs(mat[i * n + j] - mat[j * n + i]) > tol)
        throw Error("eigen_smallest: matrix is not symmetric");
    }
  }
}

// largest-|component| entry made positive, for reproducible eigenvector signs
void fix_column_signs(std::vector<double>& vectors, std::size_t n, std::size_t k) {
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::fabs(vectors[i * k + j]);
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    if (vectors[arg * k + j] < 0.0) {
      for (std::size_t i = 0; i < n; ++i) vectors[i * k + j] = -vectors[i * k + j];
    }
  }
}

void check_residuals(const std::vector<double>& mat, std::size_t n, const EigenResult& result,
                     std::size_t k) {
  std::vector<double> av(n);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += mat[i * n + c] * result.vectors[c * k + j];
      av[i] = acc;
    }
    double resid2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = av[i] - result.values[j] * result.vectors[i * k + j];
      resid2 += r * r;
    }
    if (std::sqrt(resid2) > kResidualTolerance)
      throw Error("eigen_smallest: residual above tolerance (no convergence)");
  }
}

EigenResult dense_smallest(const std::vector<double>& mat, std::size_t n, std::size_t k) {
  std::vector<double> work = mat;
  std::vector<double> d, e;
  tridiagonalize(work, n, d, e);
  // shift subdiagonal so e[i] couples i and i+1
  for (std::size_t i = 0; i + 1 < n; ++i) e[i] = e[i + 1];
  e[n - 1] = 0.0;
  if (!ql_implicit(d, e, n, work))
    throw Error("eigen_smallest: QL iteration cap exceeded (no convergence)");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

  EigenResult result;
  result.values.resize(k);
  result.vectors.assign(n * k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    result.values[j] = d[order[j]];
    for (std::size_t i = 0; i < n; ++i) result.vectors[i * k + j] = work[i * n + order[j]];
  }
  fix_column_signs(result.vectors, n, k);
  return result;
}

EigenResult lanczos_smallest(const std::vector<double>& mat, std::size_t n, std::size_t k) {
  std::size_t m = std::min(n, std::max<std::size_t>(2 * k + 40, 80));
  for (;;) {
    std::vector<std::vector<double>> basis;
    basis.reserve(m + 1);
    std::vector<double> alpha, beta;

    // deterministic start vector
    Rng rng(0x1a2c205);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.next_gaussian();
    double norm = std::sqrt(kernels::sumsq(std::span<const double>(v)));
    for (auto& x : v) x /= norm;
    basis.push_back(v);

    std::vector<double> w(n);
    std::size_t steps = m;
    for (std::size_t j = 0; j < m; ++j) {
      const auto& vj = basis[j];
      for (std::size_t i = 0; i < n; ++i)
        w[i] = kernels::dot(std::span<const double>(mat.data() + i * n, n),
                            std::span<const double>(vj));
      const double a = kernels::dot(std::span<const double>(w), std::span<const double>(vj));
      alpha.push_back(a);
      for (std::size_t i = 0; i < n; ++i) w[i] -= a * vj[i];
      if (j > 0) {
        const auto& vp = basis[j - 1];
        for (std::size_t i = 0; i < n; ++i) w[i] -= beta[j - 1] * vp[i];
      }
      // full reorthogonalization, twice for numerical safety
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& u : basis) {
          const double proj = kernels::dot(std::span<const double>(w), std::span<const double>(u));
          for (std::size_t i = 0; i < n; ++i) w[i] -= proj * u[i];
        }
      }
      const double b = std::sqrt(kernels::sumsq(std::span<const double>(w)));
      if (b < 1e-12) {
        steps = j + 1;  // invariant subspace reached
        break;
      }
      beta.push_back(b);
      auto next = w;
      for (auto& x : next) x /= b;
      basis.push_back(std::move(next));
    }

    // eigen decomposition of the tridiagonal Ritz matrix
    std::vector<double> d(alpha.begin(), alpha.begin() + steps);
    std::vector<double> e(steps, 0.0);
    for (std::size_t i = 0; i + 1 < steps; ++i) e[i] = beta[i];
    std::vector<double> z(steps * steps, 0.0);
    for (std::size_t i = 0; i < steps; ++i) z[i * steps + i] = 1.0;
    if (!ql_implicit(d, e, steps, z))
      throw Error("eigen_smallest: QL iteration cap exceeded (no convergence)");

    if (steps >= k) {
      std::vector<std::size_t> order(steps);
      for (std::size_t i = 0; i < steps; ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

      EigenResult result;
      result.values.resize(k);
      result.vectors.assign(n * k, 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        result.values[j] = d[order[j]];
        for (std::size_t i = 0; i < n; ++i) {
          double acc = 0.0;
          for (std::size_t s = 0; s < steps; ++s) acc += basis[s][i] * z[s * steps + order[j]];
          result.vectors[i * k + j] = acc;
        }
      }
      fix_column_signs(result.vectors, n, k);

      bool converged = true;
      try {
        check_residuals(mat, n, result, k);
      } catch (const Error&) {
        converged = false;
      }
      if (converged) return result;
    }

    if (m >= n) throw Error("eigen_smallest: residual above tolerance (no convergence)");
    m = std::min(n, 2 * m);
  }
}

struct KmeansRun {
  std::vector<int> labels;
  double wcss = std::numeric_limits<double>::infinity();
};

std::vector<double> kmeanspp_init(const std::vector<double>& points, std::size_t n, std::size_t d,
                                  std::size_t k, Rng& rng) {
  std::vector<double> centers(k * d);
  std::vector<std::size_t> chosen;
  const std::size_t first = rng.next_below(n);
  chosen.push_back(first);
  std::copy_n(points.begin() + first * d, d, centers.begin());

  std::vector<double> mindist2(n);
  for (std::size_t i = 0; i < n; ++i)
    mindist2[i] = kernels::sqdist(std::span<const double>(points.data() + i * d, d),
                                  std::span<const double>(centers.data(), d));

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double w : mindist2) total += w;
    std::size_t idx;
    if (total > 0.0) {
      idx = rng.next_discrete(mindist2);
    } else {
      // duplicate points: take the lowest index not yet chosen
      idx = 0;
      while (std::find(chosen.begin(), chosen.end(), idx) != chosen.end()) ++idx;
    }
    chosen.push_back(idx);
    std::copy_n(points.begin() + idx * d, d, centers.begin() + c * d);
    for (std::size_t i = 0; i < n; ++i) {
      const double dist = kernels::sqdist(std::span<const double>(points.data() + i * d, d),
                                          std::span<const double>(centers.data() + c * d, d));
      mindist2[i] = std::min(mindist2[i], dist);
    }
  }
  return centers;
}

KmeansRun kmeans_single(const std::vector<double>& points, std::size_t n, std::size_t d,
                        std::size_t k, Rng rng) {
  std::vector<double> centers = kmeanspp_init(points, n, d, k, rng);
  std::vector<int> labels(n, -1);
  std::vector<std::size_t> sizes(k, 0);

  for (int iter = 0; iter < kKmeansMaxIterations; ++iter) {
    bool changed = false;
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = kernels::sqdist(std::span<const double>(points.data() + i * d, d),
                                            std::span<const double>(centers.data() + c * d, d));
        if (dist < best_dist) {  // ties keep the lower cluster index
          best_dist = dist;
          best = static_cast<int>(c);
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
      ++sizes[static_cast<std::size_t>(best)];
    }

    // empty clusters reseed at the point farthest from its centroid
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t farthest = n;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[static_cast<std::size_t>(labels[i])] <= 1) continue;
        const double dist = kernels::sqdist(
            std::span<const double>(points.data() + i * d, d),
            std::span<const double>(centers.data() + labels[i] * static_cast<int>(d), d));
        if (dist > far_dist) {
          far_dist = dist;
          farthest = i;
        }
      }
      if (farthest == n) continue;  // nothing movable
      --sizes[static_cast<std::size_t>(labels[farthest])];
      labels[farthest] = static_cast<int>(c);
      sizes[c] = 1;
      std::copy_n(points.begin() + farthest * d, d, centers.begin() + c * d);
      changed = true;
    }

    if (!changed) break;

    // recompute centroids in fixed point order
    std::fill(centers.begin(), centers.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(labels[i]);
      for (std::size_t x = 0; x < d; ++x) centers[c * d + x] += points[i * d + x];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      for (std::size_t x = 0; x < d; ++x) centers[c * d + x] /= static_cast<double>(sizes[c]);
    }
  }

  KmeansRun run;
  run.labels = std::move(labels);
  run.wcss = kmeans_wcss(points, n, d, run.labels, k);
  return run;
}

}  // namespace

double kmeans_wcss(const std::vector<double>& points, std::size_t n, std::size_t d,
                   const std::vector<int>& labels, std::size_t k) {
  std::vector<double> centers(k * d, 0.0);
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    ++sizes[c];
    for (std::size_t x = 0; x < d; ++x) centers[c * d + x] += points[i * d + x];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] == 0) continue;
    for (std::size_t x = 0; x < d; ++x) centers[c * d + x] /= static_cast<double>(sizes[c]);
  }
  double wcss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    wcss += kernels::sqdist(std::span<const double>(points.data() + i * d, d),
                            std::span<const double>(centers.data() + labels[i] * static_cast<int>(d), d));
  }
  return wcss;
}

EigenResult eigen_smallest(const std::vector<double>& mat, std::size_t n, std::size_t k) {
  if (n == 0) throw Error("eigen_smallest: empty matrix");
  if (mat.size() != n * n) throw Error("eigen_smallest: shape mismatch");
  if (k == 0 || k > n) throw Error("eigen_smallest: k out of range");
  check_symmetric(mat, n, 1e-8);

  EigenResult result = n <= kDenseEigenLimit ? dense_smallest(mat, n, k) : lanczos_smallest(mat, n, k);
  check_residuals(mat, n, result, k);
  return result;
}

std::vector<int> kmeans(const std::vector<double>& points, std::size_t n, std::size_t d,
                        std::size_t k, std::uint64_t seed, std::uint32_t restarts,
                        unsigned workers) {
  if (k == 0) throw Error("kmeans: k must be positive");
  if (n < k) throw Error("kmeans: fewer points than clusters");
  if (points.size() != n * d) throw Error("kmeans: shape mismatch");
  restarts = std::max<std::uint32_t>(restarts, 1);

  std::vector<KmeansRun> runs(restarts);
  parallel_for(restarts, workers, [&](std::size_t r) {
    runs[r] = kmeans_single(points, n, d, k, Rng::stream(seed, r));
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r) {
    if (runs[r].wcss < runs[best].wcss) best = r;  // ties keep the lower restart index
  }
  return std::move(runs[best].labels);
}

std::vector<Concept> spectral_cluster(const SimilarityMatrix& sim, const ClusterConfig& cfg,
                                      const TermVocabulary& vocab,
                                      std::vector<std::string>* warnings) {
  const std::size_t n = sim.size();
  if (n == 0) throw Error("spectral_cluster: empty similarity matrix");
  if (vocab.terms.size() != n) throw Error("spectral_cluster: vocabulary size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (vocab.terms[i].text != sim.terms[i])
      throw Error("spectral_cluster: term ordering mismatch at index " + std::to_string(i));
  }
  if (cfg.k == 0) throw Error("spectral_cluster: k must be positive");
  if (cfg.k > n) throw Error("spectral_cluster: k exceeds term count");
  for (double v : sim.values) {
    if (v < 0.0) throw Error("spectral_cluster: similarity entries must be non-negative");
  }

  auto warn = [&](const std::string& msg) {
    if (warnings != nullptr) warnings->push_back(msg);
  };

  // terms with no off-diagonal similarity become singletons
  std::vector<std::size_t> active;
  std::vector<bool> isolated(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) off = std::max(off, sim.at(i, j));
    }
    if (off == 0.0) {
      isolated[i] = true;
      warn("term \"" + sim.terms[i] + "\" has no similarity links; kept as a singleton concept");
    } else {
      active.push_back(i);
    }
  }

  const std::size_t isolated_count = n - active.size();
  std::vector<int> labels(n, -1);
  int next_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (isolated[i]) labels[i] = next_label++;
  }

  if (!active.empty()) {
    std::size_t ki = cfg.k > isolated_count ? cfg.k - isolated_count : 1;
    if (cfg.k <= isolated_count)
      warn("singleton concepts exceed the requested budget; remaining terms form one concept");
    ki = std::min(ki, active.size());

    std::vector<int> sub_labels(active.size(), 0);
    if (ki == active.size()) {
      for (std::size_t i = 0; i < active.size(); ++i) sub_labels[i] = static_cast<int>(i);
    } else if (ki > 1) {
      const std::size_t an = active.size();
      // degrees over the active submatrix, diagonal included
      std::vector<double> sub(an * an);
      for (std::size_t i = 0; i < an; ++i) {
        for (std::size_t j = 0; j < an; ++j) sub[i * an + j] = sim.at(active[i], active[j]);
      }
      std::vector<double> inv_sqrt_degree(an);
      for (std::size_t i = 0; i < an; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < an; ++j) degree += sub[i * an + j];
        if (degree <= 0.0) degree = 1.0;  // unreachable after isolation, kept as a guard
        inv_sqrt_degree[i] = 1.0 / std::sqrt(degree);
      }
      std::vector<double> laplacian(an * an);
      for (std::size_t i = 0; i < an; ++i) {
        for (std::size_t j = 0; j < an; ++j) {
          const double normalized = inv_sqrt_degree[i] * sub[i * an + j] * inv_sqrt_degree[j];
          laplacian[i * an + j] = (i == j ? 1.0 : 0.0) - normalized;
        }
      }
      // exact symmetry for the eigensolver
      for (std::size_t i = 0; i < an; ++i) {
        for (std::size_t j = i + 1; j < an; ++j) {
          const double v = 0.5 * (laplacian[i * an + j] + laplacian[j * an + i]);
          laplacian[i * an + j] = v;
          laplacian[j * an + i] = v;
        }
      }

      const EigenResult eig = eigen_smallest(laplacian, an, ki);
      std::vector<double> embedding = eig.vectors;  // an x ki, rows L2-normalized
      for (std::size_t i = 0; i < an; ++i) {
        const double norm =
            std::sqrt(kernels::sumsq(std::span<const double>(embedding.data() + i * ki, ki)));
        if (norm > 0.0) {
          for (std::size_t j = 0; j < ki; ++j) embedding[i * ki + j] /= norm;
        }
      }
      sub_labels =
          kmeans(embedding, an, ki, ki, cfg.seed, cfg.kmeans_restarts, cfg.workers);
    }
    for (std::size_t i = 0; i < active.size(); ++i)
      labels[active[i]] = next_label + sub_labels[i];
  }

  // relabel by first occurrence so concept ids are 0..K-1 in term order
  std::vector<int> remap;
  std::vector<int> final_labels(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    int found = -1;
    for (std::size_t r = 0; r < remap.size(); ++r) {
      if (remap[r] == labels[i]) {
        found = static_cast<int>(r);
        break;
      }
    }
    if (found == -1) {
      found = static_cast<int>(remap.size());
      remap.push_back(labels[i]);
    }
    final_labels[i] = found;
  }

  const int concept_count = static_cast<int>(remap.size());
  std::vector<Concept> concepts(static_cast<std::size_t>(concept_count));
  for (int c = 0; c < concept_count; ++c) concepts[static_cast<std::size_t>(c)].id = c;
  for (std::size_t i = 0; i < n; ++i) {
    auto& concept_entry = concepts[static_cast<std::size_t>(final_labels[i])];
    concept_entry.terms.push_back(vocab.terms[i].text);
    concept_entry.images.insert(concept_entry.images.end(), vocab.terms[i].images.begin(),
                                vocab.terms[i].images.end());
  }
  for (auto& concept_entry : concepts) {
    std::sort(concept_entry.images.begin(), concept_entry.images.end());
    concept_entry.images.erase(
        std::unique(concept_entry.images.begin(), concept_entry.images.end()),
        concept_entry.images.end());
  }
  return concepts;
}

}  // namespace vocabforge
