#include "vocabforge/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "binio.hpp"
#include "vocabforge/kernels.hpp"
#include "vocabforge/parallel.hpp"

namespace vocabforge {

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::optional<std::vector<float>> term_embedding(const std::string& term_text,
                                                 const EmbeddingTable& emb) {
  std::vector<float> sum;
  std::size_t found = 0;
  for (const auto& word : term_words(term_text)) {
    const std::vector<float>* vec = emb.find(word);
    if (vec == nullptr) continue;
    if (sum.empty()) sum.assign(vec->size(), 0.0f);
    for (std::size_t d = 0; d < vec->size(); ++d) sum[d] += (*vec)[d];
    ++found;
  }
  if (found == 0) return std::nullopt;
  for (auto& v : sum) v /= static_cast<float>(found);
  const double norm = std::sqrt(kernels::sumsq(std::span<const float>(sum)));
  if (norm > 0.0) kernels::scale(sum, static_cast<float>(1.0 / norm));
  return sum;
}

SimilarityMatrix visual_similarity(const TermVocabulary& vocab, const FeatureMatrix& features,
                                   const TrainConfig& cfg, unsigned workers) {
  const std::size_t n = vocab.terms.size();
  for (const auto& term : vocab.terms) {
    if (term.images.empty())
      throw Error("visual_similarity: term \"" + term.text + "\" has no trainable images");
  }

  // calibrated response of every term's classifier on every gallery image
  std::vector<std::vector<double>> responses(n);
  parallel_for(n, workers, [&](std::size_t i) {
    TrainConfig term_cfg = cfg;
    term_cfg.seed = Rng::stream(cfg.seed, i).next_u64();
    Rng neg_rng = Rng::stream(cfg.seed, i ^ 0x5eed0000ull);
    const auto neg = sample_negatives(features, vocab.terms[i].images, cfg.negative_count, neg_rng);
    if (neg.empty())
      throw Error("visual_similarity: no negatives available for term \"" + vocab.terms[i].text +
                  "\"");
    const LinearModel model = train_linear(vocab.terms[i].images, neg, features, term_cfg);
    auto& row = responses[i];
    row.reserve(features.rows());
    for (std::size_t r = 0; r < features.rows(); ++r)
      row.push_back(model.calibrate(model.raw_score(features.row(r))));
  });

  const auto idx = id_index(features);
  std::vector<std::vector<std::size_t>> term_rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& id : vocab.terms[i].images) {
      auto it = idx.find(id);
      if (it == idx.end())
        throw Error("visual_similarity: image \"" + id + "\" missing from feature matrix");
      term_rows[i].push_back(it->second);
    }
  }

  // median response of classifier i on the positives of j
  std::vector<double> cross(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> scores;
      scores.reserve(term_rows[j].size());
      for (std::size_t r : term_rows[j]) scores.push_back(responses[i][r]);
      cross[i * n + j] = median(std::move(scores));
    }
  }

  SimilarityMatrix m;
  m.terms.reserve(n);
  for (const auto& term : vocab.terms) m.terms.push_back(term.text);
  m.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      m.set(i, j, std::min(cross[i * n + j], cross[j * n + i]));
    }
  }
  return m;
}

SimilarityMatrix semantic_similarity(const TermVocabulary& vocab, const EmbeddingTable& emb) {
  const std::size_t n = vocab.terms.size();
  std::vector<std::vector<float>> vectors(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto vec = term_embedding(vocab.terms[i].text, emb);
    if (!vec)
      throw Error("semantic_similarity: term \"" + vocab.terms[i].text +
                  "\" has no embedded component word");
    vectors[i] = std::move(*vec);
  }

  SimilarityMatrix m;
  m.terms.reserve(n);
  for (const auto& term : vocab.terms) m.terms.push_back(term.text);
  m.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    m.values[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double cos = kernels::dot(std::span<const float>(vectors[i]),
                                      std::span<const float>(vectors[j]));
      m.set(i, j, std::clamp(cos, 0.0, 1.0));
    }
  }
  return m;
}

SimilarityMatrix fuse(const SimilarityMatrix& sv, const SimilarityMatrix& sw,
                      const FusionConfig& cfg) {
  if (sv.terms != sw.terms) throw Error("fuse: term orderings differ");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw Error("fuse: lambda must be in [0, 1]");
  const double lambda = cfg.lambda;

  auto pow_or_one = [](double base, double exp) {
    if (exp == 0.0) return 1.0;  // includes 0^0 = 1
    return std::pow(base, exp);
  };

  SimilarityMatrix out;
  out.terms = sv.terms;
  const std::size_t n = out.terms.size();
  out.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = pow_or_one(sv.at(i, j), lambda) * pow_or_one(sw.at(i, j), 1.0 - lambda);
      out.set(i, j, v);
    }
  }
  return out;
}

void write_similarity(const std::string& path, const SimilarityMatrix& m) {
  const std::size_t n = m.size();
  std::string out;
  out.append("VCDS", 4);
  binio::put_u32(out, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) binio::put_f32(out, static_cast<float>(m.at(i, j)));
  }
  binio::write_file(path, out);

  nlohmann::json terms = m.terms;
  binio::write_file(path + ".terms.json", terms.dump() + "\n");
}

SimilarityMatrix read_similarity(const std::string& path) {
  const std::string bytes = binio::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "VCDS", 4) != 0)
    throw Error(path + ": malformed header (bad magic, expected VCDS)");
  binio::ByteReader r(bytes, path);
  r.str(4);
  const std::uint32_t n = r.u32();

  SimilarityMatrix m;
  m.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  m.terms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = r.f32();
      m.values[i * n + j] = v;
      m.values[j * n + i] = v;
    }
  }
  if (!r.exhausted()) throw Error(path + ": trailing bytes after payload");

  nlohmann::json terms;
  try {
    terms = nlohmann::json::parse(binio::read_file(path + ".terms.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ".terms.json: invalid sidecar: " + e.what());
  }
  if (terms.size() != n) throw Error(path + ".terms.json: term count mismatch");
  for (std::size_t i = 0; i < n; ++i) m.terms[i] = terms[i].get<std::string>();
  return m;
}

}  // namespace vocabforge
