#include "vocabforge/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "binio.hpp"
#include "vocabforge/kernels.hpp"
#include "vocabforge/rng.hpp"

namespace vocabforge {

namespace {

constexpr double kSecondaryStrength = 0.55;
constexpr double kSynonymSpread = 0.12;
constexpr double kVisualConfusableCos = 0.93;

enum StreamId : std::uint64_t {
  kStreamCenters = 1,
  kStreamSynonyms = 2,
  kStreamImages = 3,
  kStreamSecondary = 4,
  kStreamSentence = 5,
  kStreamNoiseEmbedding = 6,
  kStreamNoiseImages = 7,
};

std::string format_id(const char* prefix, std::size_t value) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, value);
  return buf;
}

void normalize(std::vector<float>& v) {
  const double norm = std::sqrt(kernels::sumsq(std::span<const float>(v)));
  if (norm > 0.0) kernels::scale(v, static_cast<float>(1.0 / norm));
}

std::vector<float> random_unit(Rng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.next_gaussian());
  normalize(v);
  return v;
}

// v_b' = cos * v_a + sin * v_b for unit orthogonal-ish inputs
std::vector<float> lean_toward(const std::vector<float>& a, const std::vector<float>& b,
                               double cos_target) {
  const double sin_target = std::sqrt(std::max(0.0, 1.0 - cos_target * cos_target));
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = static_cast<float>(cos_target * a[i] + sin_target * b[i]);
  normalize(out);
  return out;
}

}  // namespace

SynthCorpus generate(const SynthConfig& cfg) {
  if (cfg.concept_count == 0 || cfg.terms_per_concept == 0 || cfg.images_per_concept == 0 ||
      cfg.feature_dim == 0 || cfg.embedding_dim == 0)
    throw Error("synthgen: all counts must be positive");
  if (cfg.noise_sigma < 0.0) throw Error("synthgen: noise_sigma must be non-negative");
  if (cfg.feature_dim < cfg.concept_count)
    throw Error("synthgen: feature_dim must be at least concept_count (orthonormal prototypes)");
  const std::uint32_t held_out = cfg.test_images_per_concept + cfg.validation_images_per_concept;
  if (held_out >= cfg.images_per_concept)
    throw Error("synthgen: split sizes leave no training images");
  if (2 * (cfg.visual_confusable_pairs + cfg.semantic_confusable_pairs) > cfg.concept_count)
    throw Error("synthgen: confusable pairs exceed concept count");
  if (cfg.secondary_concepts_per_image >= cfg.concept_count)
    throw Error("synthgen: secondary concepts per image must be below concept_count");

  const std::size_t G = cfg.concept_count;
  const std::size_t T = cfg.terms_per_concept;
  const std::size_t D = cfg.feature_dim;

  SynthCorpus corpus;

  // feature prototypes: standard basis vectors, then visual pairs leaned in
  std::vector<std::vector<float>> prototypes(G, std::vector<float>(D, 0.0f));
  for (std::size_t g = 0; g < G; ++g) prototypes[g][g] = 1.0f;
  for (std::uint32_t p = 0; p < cfg.visual_confusable_pairs; ++p) {
    const std::size_t a = 2 * p, b = 2 * p + 1;
    prototypes[b] = lean_toward(prototypes[a], prototypes[b], kVisualConfusableCos);
  }

  // embedding centers: orthonormalized random directions when there is room
  Rng center_rng = Rng::stream(cfg.seed, kStreamCenters);
  std::vector<std::vector<float>> centers;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<float> c = random_unit(center_rng, cfg.embedding_dim);
    if (cfg.embedding_dim >= G) {
      for (const auto& prev : centers) {
        const double proj =
            kernels::dot(std::span<const float>(c), std::span<const float>(prev));
        for (std::size_t i = 0; i < c.size(); ++i)
          c[i] -= static_cast<float>(proj * prev[i]);
      }
      normalize(c);
    }
    centers.push_back(std::move(c));
  }
  // semantically confusable concepts share one embedding center outright;
  // only their visual prototypes can tell them apart
  for (std::uint32_t q = 0; q < cfg.semantic_confusable_pairs; ++q) {
    const std::size_t a = 2 * cfg.visual_confusable_pairs + 2 * q;
    centers[a + 1] = centers[a];
  }

  // synonym terms and their embeddings
  corpus.embeddings.dim = cfg.embedding_dim;
  corpus.concept_terms.resize(G);
  Rng syn_rng = Rng::stream(cfg.seed, kStreamSynonyms);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t j = 0; j < T; ++j) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "c%02zut%02zu", g, j);
      std::vector<float> v = centers[g];
      for (auto& x : v) x += static_cast<float>(kSynonymSpread * syn_rng.next_gaussian());
      normalize(v);
      corpus.embeddings.entries.emplace(buf, std::move(v));
      corpus.concept_terms[g].emplace_back(buf);
    }
  }

  // images: concept-major blocks, primary prototype plus optional secondary
  // concepts, Gaussian noise, unit-normalized
  const std::size_t total_images = G * cfg.images_per_concept;
  corpus.features.dim = D;
  corpus.features.data.reserve(total_images * D);
  corpus.concept_images.resize(G);
  Rng img_rng = Rng::stream(cfg.seed, kStreamImages);
  Rng sec_rng = Rng::stream(cfg.seed, kStreamSecondary);
  std::vector<std::vector<std::size_t>> secondary_of(total_images);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t i = 0; i < cfg.images_per_concept; ++i) {
      const std::size_t index = g * cfg.images_per_concept + i;
      const ImageId id = format_id("img", index);
      corpus.features.ids.push_back(id);
      corpus.concept_images[g].push_back(id);

      auto& secondaries = secondary_of[index];
      // visually confusable partners always co-occur, the way co-photographed
      // entities do; their terms then share image support
      if (g < 2 * cfg.visual_confusable_pairs && cfg.secondary_concepts_per_image > 0)
        secondaries.push_back(g % 2 == 0 ? g + 1 : g - 1);
      while (secondaries.size() < cfg.secondary_concepts_per_image) {
        const std::size_t h = sec_rng.next_below(G);
        if (h == g) continue;
        if (std::find(secondaries.begin(), secondaries.end(), h) != secondaries.end()) continue;
        secondaries.push_back(h);
      }

      std::vector<float> row(D, 0.0f);
      for (std::size_t d = 0; d < D; ++d) row[d] = prototypes[g][d];
      for (const std::size_t h : secondaries) {
        for (std::size_t d = 0; d < D; ++d)
          row[d] += static_cast<float>(kSecondaryStrength * prototypes[h][d]);
      }
      for (std::size_t d = 0; d < D; ++d)
        row[d] += static_cast<float>(cfg.noise_sigma * img_rng.next_gaussian());
      normalize(row);
      corpus.features.data.insert(corpus.features.data.end(), row.begin(), row.end());
    }
  }

  // split: per concept block, train then validation then test
  for (std::size_t g = 0; g < G; ++g) {
    const std::uint32_t train_count = cfg.images_per_concept - held_out;
    for (std::size_t i = 0; i < cfg.images_per_concept; ++i) {
      const ImageId& id = corpus.concept_images[g][i];
      if (i < train_count) {
        corpus.split.train.insert(id);
      } else if (i < train_count + cfg.validation_images_per_concept) {
        corpus.split.validation.insert(id);
      } else {
        corpus.split.test.insert(id);
      }
    }
  }

  // one sentence per image: a sample of the primary concept's terms plus two
  // terms per secondary concept; identity lemmas, no dependencies
  Rng sent_rng = Rng::stream(cfg.seed, kStreamSentence);
  corpus.sentences.resize(total_images);
  auto add_word = [](ParsedSentence& s, const std::string& w) {
    s.tokens.push_back({w, w, "noun"});
  };
  for (std::size_t index = 0; index < total_images; ++index) {
    const std::size_t g = index / cfg.images_per_concept;
    ParsedSentence& s = corpus.sentences[index];
    s.image = corpus.features.ids[index];

    std::vector<std::size_t> picks(T);
    std::iota(picks.begin(), picks.end(), 0);
    sent_rng.shuffle(picks);
    const std::size_t mention = std::min<std::size_t>(T, 3);
    std::vector<std::size_t> chosen(picks.begin(), picks.begin() + mention);
    std::sort(chosen.begin(), chosen.end());
    for (const std::size_t j : chosen) add_word(s, corpus.concept_terms[g][j]);

    for (const std::size_t h : secondary_of[index]) {
      std::vector<std::size_t> hp(T);
      std::iota(hp.begin(), hp.end(), 0);
      sent_rng.shuffle(hp);
      const std::size_t mention_h = std::min<std::size_t>(T, 2);
      std::vector<std::size_t> hc(hp.begin(), hp.begin() + mention_h);
      std::sort(hc.begin(), hc.end());
      for (const std::size_t j : hc) add_word(s, corpus.concept_terms[h][j]);
    }
  }

  // noise terms: random embedding, attached to a uniform sample of images
  Rng noise_emb_rng = Rng::stream(cfg.seed, kStreamNoiseEmbedding);
  Rng noise_img_rng = Rng::stream(cfg.seed, kStreamNoiseImages);
  const std::size_t noise_images =
      std::max<std::size_t>(5, cfg.images_per_concept / 2);
  for (std::uint32_t j = 0; j < cfg.noise_terms; ++j) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "noise%02u", j);
    corpus.noise_term_texts.emplace_back(buf);
    corpus.embeddings.entries.emplace(buf, random_unit(noise_emb_rng, cfg.embedding_dim));

    std::vector<std::size_t> all(total_images);
    std::iota(all.begin(), all.end(), 0);
    noise_img_rng.shuffle(all);
    std::vector<std::size_t> attached(all.begin(),
                                      all.begin() + std::min(noise_images, total_images));
    std::sort(attached.begin(), attached.end());
    for (const std::size_t index : attached) add_word(corpus.sentences[index], buf);
  }

  return corpus;
}

void write_corpus(const std::string& dir, const SynthCorpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_features((fs::path(dir) / "features.vcdf").string(), corpus.features);
  write_sentences((fs::path(dir) / "parses.jsonl").string(), corpus.sentences);
  write_embeddings((fs::path(dir) / "embeddings.txt").string(), corpus.embeddings);
  write_manifest((fs::path(dir) / "manifest.json").string(), corpus.split);

  nlohmann::json truth;
  truth["concepts"] = nlohmann::json::array();
  for (std::size_t g = 0; g < corpus.concept_terms.size(); ++g) {
    nlohmann::json entry;
    entry["id"] = g;
    entry["terms"] = corpus.concept_terms[g];
    entry["images"] = corpus.concept_images[g];
    truth["concepts"].push_back(entry);
  }
  truth["noise_terms"] = corpus.noise_term_texts;
  binio::write_file((fs::path(dir) / "truth.json").string(), truth.dump(2) + "\n");
}

}  // namespace vocabforge
