#include "vocabforge/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "binio.hpp"
#include "vocabforge/kernels.hpp"
#include "vocabforge/parallel.hpp"

namespace vocabforge {

namespace {

constexpr double kGapTolerance = 1e-4;
constexpr std::uint32_t kMaxEpochs = 1000;

struct TrainSet {
  const FeatureMatrix* features = nullptr;
  std::vector<std::size_t> rows;
  std::vector<int> labels;  // +1 / -1
};

TrainSet build_train_set(const std::vector<ImageId>& pos, const std::vector<ImageId>& neg,
                         const FeatureMatrix& features) {
  const auto idx = id_index(features);
  TrainSet set;
  set.features = &features;
  set.rows.reserve(pos.size() + neg.size());
  set.labels.reserve(pos.size() + neg.size());
  auto add = [&](const ImageId& id, int label) {
    auto it = idx.find(id);
    if (it == idx.end()) throw Error("train_linear: unknown image id \"" + id + "\"");
    set.rows.push_back(it->second);
    set.labels.push_back(label);
  };
  for (const auto& id : pos) add(id, +1);
  for (const auto& id : neg) add(id, -1);
  return set;
}

// Dual coordinate descent for the L1-loss (hinge) L2-regularized SVM. The
// bias is a regularized constant feature, so q_ii = x_i.x_i + 1 and every
// alpha update shifts both w and b.
struct SvmSolution {
  std::vector<double> w;
  double b = 0.0;
};

SvmSolution solve_hinge_svm(const TrainSet& set, double c, Rng rng) {
  const FeatureMatrix& X = *set.features;
  const std::size_t n = set.rows.size();
  const std::size_t dim = X.dim;

  std::vector<double> qii(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = X.row(set.rows[i]);
    qii[i] = kernels::sumsq(std::span<const float>(row)) + 1.0;
  }

  SvmSolution sol;
  sol.w.assign(dim, 0.0);
  std::vector<double> alpha(n, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  auto duality_gap = [&] {
    double wnorm2 = kernels::sumsq(std::span<const double>(sol.w)) + sol.b * sol.b;
    double hinge = 0.0;
    double alpha_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = X.row(set.rows[i]);
      const double margin =
          set.labels[i] * (kernels::dot(std::span<const double>(sol.w), std::span<const float>(row)) + sol.b);
      hinge += std::max(0.0, 1.0 - margin);
      alpha_sum += alpha[i];
    }
    const double primal = 0.5 * wnorm2 + c * hinge;
    const double dual = alpha_sum - 0.5 * wnorm2;
    return primal - dual;
  };

  for (std::uint32_t epoch = 0; epoch < kMaxEpochs; ++epoch) {
    rng.shuffle(order);
    for (const std::size_t i : order) {
      const auto row = X.row(set.rows[i]);
      const int y = set.labels[i];
      const double g =
          y * (kernels::dot(std::span<const double>(sol.w), std::span<const float>(row)) + sol.b) - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] >= c) {
        pg = std::max(g, 0.0);
      }
      if (std::fabs(pg) < 1e-12) continue;
      const double prev = alpha[i];
      alpha[i] = std::min(std::max(prev - g / qii[i], 0.0), c);
      const double delta = (alpha[i] - prev) * y;
      if (delta != 0.0) {
        kernels::axpy(sol.w, delta, row);
        sol.b += delta;
      }
    }
    if (epoch % 4 == 3 && duality_gap() <= kGapTolerance) break;
  }
  return sol;
}

bool all_rows_identical(const TrainSet& set) {
  if (set.rows.size() < 2) return false;
  const auto first = set.features->row(set.rows[0]);
  for (std::size_t i = 1; i < set.rows.size(); ++i) {
    const auto row = set.features->row(set.rows[i]);
    if (!std::equal(first.begin(), first.end(), row.begin())) return false;
  }
  return true;
}

// Probabilistic output fit (Platt scaling, Newton iterations as in Lin,
// Lin & Weng). Labels are +1/-1; returns (a, b) for 1/(1+exp(a*s+b)).
std::pair<double, double> fit_platt(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  double prior1 = 0.0;
  for (int y : labels) prior1 += y > 0 ? 1.0 : 0.0;
  const double prior0 = static_cast<double>(n) - prior1;

  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = labels[i] > 0 ? hi : lo;

  double a = 0.0;
  double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;

  auto objective = [&](double pa, double pb) {
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = pa * scores[i] + pb;
      // stable log(1+exp(.)) split by sign
      if (f >= 0) {
        obj += target[i] * f + std::log1p(std::exp(-f));
      } else {
        obj += (target[i] - 1.0) * f + std::log1p(std::exp(f));
      }
    }
    return obj;
  };

  double fval = objective(a, b);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = a * scores[i] + b;
      double p, q;
      if (f >= 0) {
        p = std::exp(-f) / (1.0 + std::exp(-f));
        q = 1.0 / (1.0 + std::exp(-f));
      } else {
        p = 1.0 / (1.0 + std::exp(f));
        q = std::exp(f) / (1.0 + std::exp(f));
      }
      const double d2 = p * q;
      h11 += scores[i] * scores[i] * d2;
      h22 += d2;
      h21 += scores[i] * d2;
      const double d1 = target[i] - p;
      g1 += scores[i] * d1;
      g2 += d1;
    }
    if (std::fabs(g1) < 1e-5 && std::fabs(g2) < 1e-5) break;

    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;

    double step = 1.0;
    bool stepped = false;
    while (step >= kMinStep) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        stepped = true;
        break;
      }
      step /= 2.0;
    }
    if (!stepped) break;
  }
  return {a, b};
}

struct Fold {
  std::vector<ImageId> pos;
  std::vector<ImageId> neg;
  std::size_t size() const { return pos.size() + neg.size(); }
};

// Seeded shuffle then halve; an odd count gives the extra item to fold A.
std::pair<Fold, Fold> split_two_folds(std::vector<ImageId> pos, std::vector<ImageId> neg,
                                      Rng& rng) {
  rng.shuffle(pos);
  rng.shuffle(neg);
  Fold a, b;
  const std::size_t pa = (pos.size() + 1) / 2;
  const std::size_t na = (neg.size() + 1) / 2;
  a.pos.assign(pos.begin(), pos.begin() + pa);
  b.pos.assign(pos.begin() + pa, pos.end());
  a.neg.assign(neg.begin(), neg.begin() + na);
  b.neg.assign(neg.begin() + na, neg.end());
  return {std::move(a), std::move(b)};
}

std::vector<double> raw_scores(const SvmSolution& sol, const FeatureMatrix& features,
                               const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto row = features.row(r);
    out.push_back(kernels::dot(std::span<const double>(sol.w), std::span<const float>(row)) + sol.b);
  }
  return out;
}

std::vector<std::size_t> rows_of(const FeatureMatrix& features, const std::vector<ImageId>& ids) {
  const auto idx = id_index(features);
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = idx.find(id);
    if (it == idx.end()) throw Error("unknown image id \"" + id + "\"");
    rows.push_back(it->second);
  }
  return rows;
}

// Cross-fold scores: train on one fold, score the other, pooled. Also used
// to fit calibration. Returns {scores, labels} in fold-B-then-fold-A order.
struct PooledScores {
  std::vector<double> scores;
  std::vector<int> labels;
};

PooledScores cross_fold_scores(const Fold& a, const Fold& b, const FeatureMatrix& features,
                               double c, Rng& rng) {
  PooledScores pooled;
  auto run = [&](const Fold& train, const Fold& heldout) {
    TrainSet set = build_train_set(train.pos, train.neg, features);
    const SvmSolution sol = solve_hinge_svm(set, c, Rng::stream(rng.next_u64(), 0));
    std::vector<ImageId> ids = heldout.pos;
    ids.insert(ids.end(), heldout.neg.begin(), heldout.neg.end());
    const auto scores = raw_scores(sol, features, rows_of(features, ids));
    pooled.scores.insert(pooled.scores.end(), scores.begin(), scores.end());
    for (std::size_t i = 0; i < heldout.pos.size(); ++i) pooled.labels.push_back(+1);
    for (std::size_t i = 0; i < heldout.neg.size(); ++i) pooled.labels.push_back(-1);
  };
  run(a, b);
  run(b, a);
  return pooled;
}

bool folds_usable(const Fold& a, const Fold& b) {
  return a.size() >= 3 && b.size() >= 3 && !a.pos.empty() && !b.pos.empty() && !a.neg.empty() &&
         !b.neg.empty();
}

}  // namespace

double LinearModel::raw_score(std::span<const float> x) const {
  if (x.size() != weights.size()) throw Error("score: dimension mismatch");
  return kernels::dot(std::span<const float>(weights.data(), weights.size()), x) + bias;
}

double LinearModel::calibrate(double raw) const {
  const double f = sigmoid_a * raw + sigmoid_b;
  if (f >= 0) {
    const double e = std::exp(-f);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(f));
}

LinearModel train_linear(const std::vector<ImageId>& pos, const std::vector<ImageId>& neg,
                         const FeatureMatrix& features, const TrainConfig& cfg) {
  if (pos.empty() || neg.empty()) throw Error("train_linear: positive and negative sets must be non-empty");
  for (const auto& id : pos) {
    if (std::find(neg.begin(), neg.end(), id) != neg.end())
      throw Error("train_linear: positive and negative sets overlap on \"" + id + "\"");
  }

  const TrainSet set = build_train_set(pos, neg, features);

  LinearModel model;
  model.degenerate = all_rows_identical(set);

  // calibration from pooled 2-fold held-out scores
  Rng fold_rng = Rng::stream(cfg.seed, 0xCA11);
  auto [fold_a, fold_b] = split_two_folds(pos, neg, fold_rng);
  if (folds_usable(fold_a, fold_b)) {
    Rng cv_rng = Rng::stream(cfg.seed, 0xCF01);
    const PooledScores pooled =
        cross_fold_scores(fold_a, fold_b, features, cfg.regularization_c, cv_rng);
    const auto [a, b] = fit_platt(pooled.scores, pooled.labels);
    model.sigmoid_a = static_cast<float>(a);
    model.sigmoid_b = static_cast<float>(b);
  }  // otherwise keep the fixed 1/(1+exp(-s)) fallback

  const SvmSolution sol = solve_hinge_svm(set, cfg.regularization_c, Rng::stream(cfg.seed, 0xF17));
  model.weights.resize(features.dim);
  for (std::size_t d = 0; d < features.dim; ++d) model.weights[d] = static_cast<float>(sol.w[d]);
  model.bias = static_cast<float>(sol.b);
  return model;
}

double svm_objective(const LinearModel& model, const std::vector<ImageId>& pos,
                     const std::vector<ImageId>& neg, const FeatureMatrix& features, double c) {
  const TrainSet set = build_train_set(pos, neg, features);
  double wnorm2 = 0.0;
  for (float w : model.weights) wnorm2 += static_cast<double>(w) * w;
  wnorm2 += static_cast<double>(model.bias) * model.bias;
  double hinge = 0.0;
  for (std::size_t i = 0; i < set.rows.size(); ++i) {
    const double margin = set.labels[i] * model.raw_score(features.row(set.rows[i]));
    hinge += std::max(0.0, 1.0 - margin);
  }
  return 0.5 * wnorm2 + c * hinge;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("average_precision: size mismatch");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int y : labels) positives += y > 0 ? 1 : 0;
  if (positives == 0) throw Error("average_precision: no positive labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 1; rank <= n; ++rank) {
    if (labels[order[rank - 1]] > 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(positives);
}

CvFilterResult cv_filter(const TermVocabulary& vocab, const FeatureMatrix& features,
                         const TrainConfig& cfg, unsigned workers) {
  CvFilterResult result;
  result.outcomes.resize(vocab.terms.size());

  parallel_for(vocab.terms.size(), workers, [&](std::size_t i) {
    const Term& term = vocab.terms[i];
    TermFilterOutcome& out = result.outcomes[i];
    out.text = term.text;

    if (term.images.size() < 2) {
      out.note = "fewer than 2 positive images";
      return;
    }
    Rng rng = Rng::stream(cfg.seed, i);
    const auto neg = sample_negatives(features, term.images, cfg.negative_count, rng);
    if (neg.size() < 2) {
      out.note = "fewer than 2 negatives available";
      return;
    }
    auto [fold_a, fold_b] = split_two_folds(term.images, neg, rng);
    const PooledScores pooled =
        cross_fold_scores(fold_a, fold_b, features, cfg.regularization_c, rng);
    out.ap = average_precision(pooled.scores, pooled.labels);
    out.kept = out.ap >= cfg.ap_threshold;
  });

  result.vocabulary.min_occurrence = vocab.min_occurrence;
  result.vocabulary.dependency_types = vocab.dependency_types;
  for (std::size_t i = 0; i < vocab.terms.size(); ++i) {
    if (result.outcomes[i].kept) result.vocabulary.terms.push_back(vocab.terms[i]);
  }
  return result;
}

std::vector<float> chi2_feature_map(std::span<const float> x, std::uint32_t bins) {
  const std::size_t out_per_dim = 2 * static_cast<std::size_t>(bins) + 1;
  std::vector<float> out(x.size() * out_per_dim, 0.0f);
  // sampling period shrinks with the order so that both the spectrum
  // truncation and the periodization error decrease as bins grows
  const double L = 0.75 / std::sqrt(static_cast<double>(std::max<std::uint32_t>(bins, 1)));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] > 0.0f ? static_cast<double>(x[i]) : 0.0;  // rectify
    if (v <= 0.0) continue;  // map of zero is zero
    float* dst = out.data() + i * out_per_dim;
    dst[0] = static_cast<float>(std::sqrt(v * L));  // sech(0) = 1
    const double logv = std::log(v);
    for (std::uint32_t r = 1; r <= bins; ++r) {
      const double lambda = r * L;
      const double kappa = 1.0 / std::cosh(3.14159265358979323846 * lambda);
      const double mag = std::sqrt(2.0 * v * L * kappa);
      dst[2 * r - 1] = static_cast<float>(mag * std::cos(lambda * logv));
      dst[2 * r] = static_cast<float>(mag * std::sin(lambda * logv));
    }
  }
  return out;
}

FeatureMatrix chi2_map_matrix(const FeatureMatrix& m, std::uint32_t bins) {
  FeatureMatrix out;
  out.ids = m.ids;
  out.dim = m.dim * (2 * static_cast<std::size_t>(bins) + 1);
  out.data.reserve(out.dim * m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto mapped = chi2_feature_map(m.row(r), bins);
    out.data.insert(out.data.end(), mapped.begin(), mapped.end());
  }
  return out;
}

std::vector<double> score(const LinearModel& model, const FeatureMatrix& features) {
  if (model.weights.size() != features.dim) throw Error("score: dimension mismatch");
  std::vector<double> out;
  out.reserve(features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) out.push_back(model.raw_score(features.row(r)));
  return out;
}

std::vector<ImageId> sample_negatives(const FeatureMatrix& features,
                                      const std::vector<ImageId>& exclude, std::uint32_t count,
                                      Rng& rng) {
  std::set<ImageId> excluded(exclude.begin(), exclude.end());
  std::vector<ImageId> pool;
  pool.reserve(features.rows());
  for (const auto& id : features.ids) {
    if (!excluded.count(id)) pool.push_back(id);
  }
  rng.shuffle(pool);
  if (pool.size() > count) pool.resize(count);
  return pool;
}

void write_model(const std::string& path, const LinearModel& model) {
  std::string out;
  out.append("VCDM", 4);
  binio::put_u32(out, static_cast<std::uint32_t>(model.weights.size()));
  for (float w : model.weights) binio::put_f32(out, w);
  binio::put_f32(out, model.bias);
  binio::put_f32(out, model.sigmoid_a);
  binio::put_f32(out, model.sigmoid_b);
  binio::write_file(path, out);
}

LinearModel read_model(const std::string& path) {
  const std::string bytes = binio::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "VCDM", 4) != 0)
    throw Error(path + ": malformed header (bad magic, expected VCDM)");
  binio::ByteReader r(bytes, path);
  r.str(4);
  const std::uint32_t dim = r.u32();
  LinearModel model;
  model.weights.resize(dim);
  for (std::uint32_t d = 0; d < dim; ++d) model.weights[d] = r.f32();
  model.bias = r.f32();
  model.sigmoid_a = r.f32();
  model.sigmoid_b = r.f32();
  if (!r.exhausted()) throw Error(path + ": trailing bytes after model payload");
  return model;
}

}  // namespace vocabforge
