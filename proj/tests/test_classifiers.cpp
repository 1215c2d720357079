#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "vocabforge/classifiers.hpp"
#include "vocabforge/rng.hpp"

using namespace vocabforge;

namespace {

// two clusters around (+1, 0) and (-1, 0) with mild scatter
FeatureMatrix separable_toy(std::size_t per_class, double spread, std::uint64_t seed) {
  FeatureMatrix m;
  m.dim = 2;
  Rng rng(seed);
  for (std::size_t i = 0; i < per_class; ++i) {
    m.ids.push_back("p" + std::to_string(i));
    m.data.push_back(static_cast<float>(1.0 + spread * rng.next_gaussian()));
    m.data.push_back(static_cast<float>(spread * rng.next_gaussian()));
  }
  for (std::size_t i = 0; i < per_class; ++i) {
    m.ids.push_back("n" + std::to_string(i));
    m.data.push_back(static_cast<float>(-1.0 + spread * rng.next_gaussian()));
    m.data.push_back(static_cast<float>(spread * rng.next_gaussian()));
  }
  return m;
}

std::vector<ImageId> prefixed(const FeatureMatrix& m, char prefix) {
  std::vector<ImageId> out;
  for (const auto& id : m.ids) {
    if (id[0] == prefix) out.push_back(id);
  }
  return out;
}

}  // namespace

TEST_CASE("average_precision on the documented examples") {
  // (1/1 + 2/3) / 2
  CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.7}, std::vector<int>{1, 0, 1}) ==
        doctest::Approx(5.0 / 6.0));
  // all positives
  CHECK(average_precision(std::vector<double>{0.3, 0.2, 0.9}, std::vector<int>{1, 1, 1}) ==
        doctest::Approx(1.0));
  // single positive ranked last of 4
  CHECK(average_precision(std::vector<double>{4, 3, 2, 1}, std::vector<int>{0, 0, 0, 1}) ==
        doctest::Approx(0.25));
  CHECK_THROWS_AS(average_precision(std::vector<double>{1.0}, std::vector<int>{0}), Error);
}

TEST_CASE("average_precision matches the brute-force oracle exactly") {
  Rng rng(123);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.next_below(50);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool any_pos = false;
    for (std::size_t i = 0; i < n; ++i) {
      // coarse scores so ties actually happen
      scores[i] = static_cast<double>(rng.next_below(8)) / 4.0;
      labels[i] = rng.next_double() < 0.4 ? 1 : 0;
      any_pos |= labels[i] == 1;
    }
    if (!any_pos) labels[rng.next_below(n)] = 1;
    const double got = average_precision(scores, labels);
    const double want = oracles::brute_average_precision(scores, labels);
    CHECK(got == want);  // bit-exact: same summation order
  }
}

TEST_CASE("average_precision is invariant under monotone score transforms") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.next_below(30);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.next_gaussian();
      labels[i] = rng.next_double() < 0.5 ? 1 : 0;
    }
    labels[0] = 1;
    auto transformed = scores;
    for (auto& s : transformed) s = std::exp(0.5 * s) + 3.0;  // strictly monotone
    CHECK(average_precision(scores, labels) == average_precision(transformed, labels));
  }
}

TEST_CASE("random-label AP concentrates near prevalence") {
  Rng rng(2024);
  const std::size_t n = 200;
  std::vector<double> scores(n);
  for (auto& s : scores) s = rng.next_gaussian();
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n / 4; ++i) labels[i] = 1;  // prevalence 0.25

  double mean_ap = 0.0;
  const int shuffles = 1000;
  for (int t = 0; t < shuffles; ++t) {
    rng.shuffle(labels);
    bool has_pos = std::any_of(labels.begin(), labels.end(), [](int y) { return y == 1; });
    REQUIRE(has_pos);
    mean_ap += average_precision(scores, labels);
  }
  mean_ap /= shuffles;
  CHECK(std::fabs(mean_ap - 0.25) < 0.05);
}

TEST_CASE("train_linear separates a separable toy set") {
  const auto features = separable_toy(10, 0.05, 42);
  const auto pos = prefixed(features, 'p');
  const auto neg = prefixed(features, 'n');
  TrainConfig cfg;
  cfg.seed = 1;

  const auto model = train_linear(pos, neg, features, cfg);
  const auto scores = score(model, features);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(scores[i] > 0.0);
    CHECK(scores[i + 10] < 0.0);
  }
  CHECK_FALSE(model.degenerate);

  SUBCASE("flipping labels negates the weights") {
    const auto flipped = train_linear(neg, pos, features, cfg);
    CHECK(flipped.weights[0] == doctest::Approx(-model.weights[0]).epsilon(1e-3));
    CHECK(flipped.weights[1] == doctest::Approx(-model.weights[1]).epsilon(0.05).scale(1.0));
    CHECK(flipped.bias == doctest::Approx(-model.bias).epsilon(0.05).scale(1.0));
  }

  SUBCASE("training is deterministic given the seed") {
    const auto again = train_linear(pos, neg, features, cfg);
    CHECK(again.weights == model.weights);
    CHECK(again.bias == model.bias);
    CHECK(again.sigmoid_a == model.sigmoid_a);
  }

  SUBCASE("calibrated scores are higher for positives") {
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(model.calibrated_score(features.row(i)) >
            model.calibrated_score(features.row(i + 10)));
    }
  }
}

TEST_CASE("train_linear objective matches the subgradient oracle") {
  // 50 random 5-D points
  FeatureMatrix features;
  features.dim = 5;
  Rng rng(31);
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  std::vector<ImageId> pos, neg;
  for (int i = 0; i < 50; ++i) {
    const ImageId id = "r" + std::to_string(i);
    features.ids.push_back(id);
    std::vector<double> x(5);
    for (auto& v : x) v = rng.next_gaussian();
    for (double v : x) features.data.push_back(static_cast<float>(v));
    const int y = rng.next_double() < 0.5 ? 1 : -1;
    (y > 0 ? pos : neg).push_back(id);
    xs.push_back(x);
    ys.push_back(y);
  }
  TrainConfig cfg;
  cfg.seed = 9;
  cfg.regularization_c = 1.0;

  const auto model = train_linear(pos, neg, features, cfg);
  const double got = svm_objective(model, pos, neg, features, cfg.regularization_c);

  // rebuild in pos-then-neg order to match svm_objective's evaluation set
  std::vector<std::vector<double>> oxs;
  std::vector<int> oys;
  for (const auto& id : pos) {
    oxs.push_back(xs[std::stoul(id.substr(1))]);
    oys.push_back(1);
  }
  for (const auto& id : neg) {
    oxs.push_back(xs[std::stoul(id.substr(1))]);
    oys.push_back(-1);
  }
  const auto oracle = oracles::subgradient_svm(oxs, oys, cfg.regularization_c, 200000);
  CHECK(got == doctest::Approx(oracle.objective).epsilon(1e-3));
  CHECK(got <= oracle.objective + 1e-3);  // solver should not be worse
}

TEST_CASE("train_linear flags degenerate all-identical input") {
  FeatureMatrix features;
  features.dim = 3;
  for (int i = 0; i < 6; ++i) {
    features.ids.push_back("x" + std::to_string(i));
    features.data.insert(features.data.end(), {1.0f, 2.0f, 3.0f});
  }
  TrainConfig cfg;
  const auto model = train_linear({"x0", "x1", "x2"}, {"x3", "x4", "x5"}, features, cfg);
  CHECK(model.degenerate);
}

TEST_CASE("train_linear rejects empty or overlapping sets") {
  const auto features = separable_toy(3, 0.0, 1);
  TrainConfig cfg;
  CHECK_THROWS_AS(train_linear({}, {"n0"}, features, cfg), Error);
  CHECK_THROWS_AS(train_linear({"p0"}, {}, features, cfg), Error);
  CHECK_THROWS_AS(train_linear({"p0"}, {"p0"}, features, cfg), Error);
}

TEST_CASE("score") {
  FeatureMatrix features;
  features.dim = 2;
  features.ids = {"a", "b"};
  features.data = {1, 7, 2, 7};

  LinearModel zero;
  zero.weights = {0, 0};
  zero.bias = 0.5f;
  const auto s0 = score(zero, features);
  CHECK(s0[0] == doctest::Approx(0.5));
  CHECK(s0[1] == doctest::Approx(0.5));

  LinearModel unit;
  unit.weights = {1, 0};
  unit.bias = 0.25f;
  const auto s1 = score(unit, features);
  CHECK(s1[0] == doctest::Approx(1.25));
  CHECK(s1[1] == doctest::Approx(2.25));

  LinearModel wrong;
  wrong.weights = {1, 2, 3};
  CHECK_THROWS_WITH_AS(score(wrong, features), doctest::Contains("dimension mismatch"), Error);
}

TEST_CASE("cv_filter keeps planted terms and drops uninformative ones") {
  // feature direction 0 carries term X's signal; the noise term points anywhere
  Rng rng(77);
  FeatureMatrix features;
  features.dim = 8;
  const std::size_t n = 60;
  for (std::size_t i = 0; i < n; ++i) {
    features.ids.push_back("i" + std::to_string(i));
    for (std::size_t d = 0; d < 8; ++d) features.data.push_back(static_cast<float>(0.1 * rng.next_gaussian()));
  }
  // images 0..19 get a strong dim-0 component
  for (std::size_t i = 0; i < 20; ++i) features.data[i * 8] += 2.0f;

  TermVocabulary vocab;
  Term planted;
  planted.kind = TermKind::unigram;
  planted.text = "planted";
  for (std::size_t i = 0; i < 20; ++i) planted.images.push_back("i" + std::to_string(i));
  planted.frequency = 20;
  vocab.terms.push_back(planted);

  Term noise;
  noise.kind = TermKind::unigram;
  noise.text = "scattered";
  for (std::size_t i = 0; i < 20; ++i) noise.images.push_back("i" + std::to_string(3 * i % n));
  std::sort(noise.images.begin(), noise.images.end());
  noise.images.erase(std::unique(noise.images.begin(), noise.images.end()), noise.images.end());
  noise.frequency = 20;
  vocab.terms.push_back(noise);

  Term tiny;
  tiny.kind = TermKind::unigram;
  tiny.text = "tiny";
  tiny.images = {"i0"};
  tiny.frequency = 1;
  vocab.terms.push_back(tiny);

  TrainConfig cfg;
  cfg.seed = 5;
  cfg.negative_count = 40;
  cfg.ap_threshold = 0.15;

  const auto result = cv_filter(vocab, features, cfg);
  REQUIRE(result.outcomes.size() == 3);
  CHECK(result.outcomes[0].kept);
  CHECK(result.outcomes[0].ap > 0.9);
  CHECK(result.outcomes[2].note == "fewer than 2 positive images");

  // vacuous threshold keeps everything except the <2-positive drop
  TrainConfig vacuous = cfg;
  vacuous.ap_threshold = 0.0;
  const auto all = cv_filter(vocab, features, vacuous);
  CHECK(all.vocabulary.terms.size() == 2);

  // monotone in the threshold
  TrainConfig strict = cfg;
  strict.ap_threshold = 0.99;
  const auto fewer = cv_filter(vocab, features, strict);
  for (const auto& t : fewer.vocabulary.terms) {
    bool present = false;
    for (const auto& u : all.vocabulary.terms) present |= u.text == t.text;
    CHECK(present);
  }
}

TEST_CASE("cv_filter results do not depend on the worker count") {
  const auto features = separable_toy(30, 0.4, 11);
  TermVocabulary vocab;
  for (int t = 0; t < 4; ++t) {
    Term term;
    term.text = "t" + std::to_string(t);
    for (int i = t; i < 30; i += 2) term.images.push_back("p" + std::to_string(i));
    term.frequency = static_cast<std::uint32_t>(term.images.size());
    vocab.terms.push_back(term);
  }
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.negative_count = 20;
  const auto serial = cv_filter(vocab, features, cfg, 1);
  const auto parallel = cv_filter(vocab, features, cfg, 8);
  REQUIRE(serial.outcomes.size() == parallel.outcomes.size());
  for (std::size_t i = 0; i < serial.outcomes.size(); ++i) {
    CHECK(serial.outcomes[i].ap == parallel.outcomes[i].ap);
    CHECK(serial.outcomes[i].kept == parallel.outcomes[i].kept);
  }
}

TEST_CASE("chi2_feature_map approximates the exact kernel") {
  Rng rng(55);
  const std::uint32_t bins = 2;

  SUBCASE("identical inputs give k(x,x) = sum(x) within 2%") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<float> x(16);
      double sum = 0.0;
      for (auto& v : x) {
        v = static_cast<float>(rng.next_double() + 0.05);
        sum += v;
      }
      const auto mapped = chi2_feature_map(x, bins);
      double ip = 0.0;
      for (float m : mapped) ip += static_cast<double>(m) * m;
      CHECK(std::fabs(ip - sum) / sum < 0.02);
    }
  }

  SUBCASE("disjoint support gives zero") {
    std::vector<float> x(8, 0.0f), y(8, 0.0f);
    for (int i = 0; i < 4; ++i) x[i] = 1.0f;
    for (int i = 4; i < 8; ++i) y[i] = 1.0f;
    const auto mx = chi2_feature_map(x, bins);
    const auto my = chi2_feature_map(y, bins);
    double ip = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) ip += static_cast<double>(mx[i]) * my[i];
    CHECK(std::fabs(ip) < 0.02 * 4.0);
  }

  SUBCASE("median relative error over random pairs is small and shrinks with bins") {
    auto median_error = [&](std::uint32_t b) {
      Rng local(99);
      std::vector<double> errors;
      for (int trial = 0; trial < 100; ++trial) {
        std::vector<float> x(16), y(16);
        for (auto& v : x) v = static_cast<float>(local.next_double());
        for (auto& v : y) v = static_cast<float>(local.next_double());
        const double exact = oracles::exact_chi2_kernel(x, y);
        const auto mx = chi2_feature_map(x, b);
        const auto my = chi2_feature_map(y, b);
        double approx = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) approx += static_cast<double>(mx[i]) * my[i];
        errors.push_back(std::fabs(approx - exact) / exact);
      }
      std::sort(errors.begin(), errors.end());
      return errors[errors.size() / 2];
    };
    const double e2 = median_error(2);
    CHECK(e2 < 0.03);
    const double e4 = median_error(4);
    CHECK(e4 <= e2);
  }

  SUBCASE("output length and rectification") {
    std::vector<float> x{1.0f, -2.0f, 0.0f};
    const auto mapped = chi2_feature_map(x, 3);
    CHECK(mapped.size() == 3 * 7);
    for (std::size_t i = 7; i < 21; ++i) CHECK(mapped[i] == 0.0f);  // negative and zero inputs
  }
}

TEST_CASE("model files round-trip") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "vf_model_test.vcdm";
  LinearModel m;
  m.weights = {0.25f, -1.5f, 3.0f};
  m.bias = 0.125f;
  m.sigmoid_a = -2.0f;
  m.sigmoid_b = 0.75f;
  write_model(path.string(), m);
  const auto r = read_model(path.string());
  CHECK(r.weights == m.weights);
  CHECK(r.bias == m.bias);
  CHECK(r.sigmoid_a == m.sigmoid_a);
  CHECK(r.sigmoid_b == m.sigmoid_b);
  fs::remove(path);
}

TEST_CASE("sample_negatives excludes positives and respects the budget") {
  const auto features = separable_toy(20, 0.1, 4);
  const auto pos = prefixed(features, 'p');
  Rng rng(8);
  const auto neg = sample_negatives(features, pos, 12, rng);
  CHECK(neg.size() == 12);
  for (const auto& id : neg) CHECK(id[0] == 'n');

  Rng rng2(8);
  const auto all = sample_negatives(features, pos, 1000, rng2);
  CHECK(all.size() == 20);  // min(count, available)
}
