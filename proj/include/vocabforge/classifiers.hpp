#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vocabforge/corpus.hpp"
#include "vocabforge/mining.hpp"
#include "vocabforge/rng.hpp"

// Per-term and per-concept linear classifiers: an L2-regularized hinge-loss
// SVM solved by dual coordinate descent, sigmoid (Platt) calibration fitted
// on 2-fold held-out scores, the cross-validated average-precision filter,
// and an explicit additive-chi-squared feature map for histogram features.

namespace vocabforge {

struct LinearModel {
  std::vector<float> weights;
  float bias = 0.0f;
  // calibrated probability = 1 / (1 + exp(sigmoid_a * raw + sigmoid_b))
  float sigmoid_a = -1.0f;
  float sigmoid_b = 0.0f;
  bool degenerate = false;  // all training rows identical

  double raw_score(std::span<const float> x) const;
  double calibrate(double raw) const;
  double calibrated_score(std::span<const float> x) const { return calibrate(raw_score(x)); }
};

enum class KernelKind { linear, chi2_map };

struct TrainConfig {
  std::uint32_t negative_count = 1000;
  double regularization_c = 1.0;
  std::uint64_t seed = 0;
  double ap_threshold = 0.15;
  KernelKind kernel = KernelKind::linear;
  std::uint32_t chi2_bins = 2;
};

// Hinge-loss SVM trained to duality gap <= 1e-4 (capped at 1000 epochs).
// The bias is handled by constant-feature augmentation, so the objective is
//   0.5 * (||w||^2 + b^2) + C * sum_i max(0, 1 - y_i * (w.x_i + b)).
// Sigmoid calibration is fitted on pooled 2-fold held-out scores; folds with
// fewer than 3 points (or a missing class) fall back to 1/(1+exp(-s)).
LinearModel train_linear(const std::vector<ImageId>& pos, const std::vector<ImageId>& neg,
                         const FeatureMatrix& features, const TrainConfig& cfg);

double svm_objective(const LinearModel& model, const std::vector<ImageId>& pos,
                     const std::vector<ImageId>& neg, const FeatureMatrix& features, double c);

// Mean of precision@rank over positives, ranks by descending score with ties
// kept in input order. Throws when labels contain no positive.
double average_precision(std::span<const double> scores, std::span<const int> labels);

struct TermFilterOutcome {
  std::string text;
  double ap = 0.0;
  bool kept = false;
  std::string note;  // non-empty for skipped terms
};

struct CvFilterResult {
  TermVocabulary vocabulary;
  std::vector<TermFilterOutcome> outcomes;
};

// 2-fold cross-validated AP filter. Positives and the per-term negative
// sample are each split in half; each half-model scores the held-out half
// and the pooled scores give one AP per term. Terms keep their vocabulary
// order; each term's RNG stream is derived from (seed, term index) so results
// do not depend on the worker count.
CvFilterResult cv_filter(const TermVocabulary& vocab, const FeatureMatrix& features,
                         const TrainConfig& cfg, unsigned workers = 1);

// Explicit approximate feature map for the additive chi-squared kernel
// k(x, y) = sum_i 2 x_i y_i / (x_i + y_i). Output length is
// dim * (2*bins + 1); inner products of mapped vectors approximate k.
// Negative components are rectified to zero before mapping.
std::vector<float> chi2_feature_map(std::span<const float> x, std::uint32_t bins);
FeatureMatrix chi2_map_matrix(const FeatureMatrix& m, std::uint32_t bins);

// Raw decision values w.x + b, one per row.
std::vector<double> score(const LinearModel& model, const FeatureMatrix& features);

// Uniform sample without replacement from ids not in `exclude`; returns
// min(count, available) ids.
std::vector<ImageId> sample_negatives(const FeatureMatrix& features,
                                      const std::vector<ImageId>& exclude, std::uint32_t count,
                                      Rng& rng);

// Model file: magic "VCDM", dim u32, weights f32 x dim, bias f32,
// calibration f32 x 2.
void write_model(const std::string& path, const LinearModel& model);
LinearModel read_model(const std::string& path);

}  // namespace vocabforge
