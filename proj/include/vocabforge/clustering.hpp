#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vocabforge/classifiers.hpp"
#include "vocabforge/mining.hpp"
#include "vocabforge/similarity.hpp"

// Spectral clustering of terms into K concepts: normalized symmetric
// Laplacian, bottom-k eigenvectors, row-normalized embedding, seeded k-means
// with restarts.

namespace vocabforge {

struct Concept {
  int id = 0;
  std::vector<std::string> terms;
  std::vector<ImageId> images;  // union of member-term image sets
  std::optional<LinearModel> model;
};

struct ClusterConfig {
  std::uint32_t k = 1200;
  std::uint64_t seed = 0;
  std::uint32_t kmeans_restarts = 10;
  unsigned workers = 1;
};

struct EigenResult {
  std::vector<double> values;   // k smallest, ascending
  std::vector<double> vectors;  // row-major n x k, column j pairs with values[j]
};

// k smallest eigenpairs of a symmetric matrix (row-major n x n). Dense
// Householder tridiagonalization + implicit-shift QL up to 512 rows, Lanczos
// with full reorthogonalization above. Residual ||Av - lambda v|| <= 1e-6
// per returned pair or an error is raised.
EigenResult eigen_smallest(const std::vector<double>& mat, std::size_t n, std::size_t k);

// Lloyd iterations with k-means++ seeding; best of `restarts` runs by
// within-cluster sum of squares (ties by restart index). Empty clusters are
// reseeded at the point farthest from its assigned centroid. Deterministic
// given the seed, for any worker count.
std::vector<int> kmeans(const std::vector<double>& points, std::size_t n, std::size_t d,
                        std::size_t k, std::uint64_t seed, std::uint32_t restarts,
                        unsigned workers = 1);

double kmeans_wcss(const std::vector<double>& points, std::size_t n, std::size_t d,
                   const std::vector<int>& labels, std::size_t k);

// Terms with no off-diagonal similarity become singleton concepts (with a
// warning); the rest go through the spectral embedding. Concept ids follow
// first occurrence in term order, 0..K-1.
std::vector<Concept> spectral_cluster(const SimilarityMatrix& sim, const ClusterConfig& cfg,
                                      const TermVocabulary& vocab,
                                      std::vector<std::string>* warnings = nullptr);

}  // namespace vocabforge
