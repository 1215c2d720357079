#include "vocabforge/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "vocabforge/kernels.hpp"
#include "vocabforge/similarity.hpp"

namespace vocabforge {

namespace {

double percentile(std::vector<double> sorted, double p) {
  // linear interpolation between closest ranks; `sorted` must be ascending
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double median_of_ranks(std::vector<std::size_t> ranks) {
  std::sort(ranks.begin(), ranks.end());
  const std::size_t n = ranks.size();
  if (n % 2 == 1) return static_cast<double>(ranks[n / 2]);
  return 0.5 * (static_cast<double>(ranks[n / 2 - 1]) + static_cast<double>(ranks[n / 2]));
}

}  // namespace

SentenceMapper::SentenceMapper(const std::vector<Concept>& concepts, const EmbeddingTable& emb,
                               MappingConfig cfg, const TfIdfWeights* weights)
    : emb_(&emb), cfg_(std::move(cfg)) {
  concept_terms_.resize(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i].id != static_cast<int>(i))
      throw Error("SentenceMapper: concept ids must be 0..K-1 in order");
    for (const auto& text : concepts[i].terms) {
      concept_terms_[i].push_back({text, term_embedding(text, emb)});
    }
  }
  if (weights != nullptr) {
    if (weights->idf.size() != concepts.size())
      throw Error("SentenceMapper: idf length does not match concept count");
    idf_ = weights->idf;
  } else {
    idf_.assign(concepts.size(), 1.0);
  }
}

ConceptVector SentenceMapper::map(const ParsedSentence& sentence, bool* any_term) const {
  const std::vector<ParsedSentence> one{sentence};
  const TermVocabulary terms =
      extract_terms(one, cfg_.dep_types, cfg_.pos_whitelist, /*min_occurrence=*/1);
  if (any_term != nullptr) *any_term = !terms.terms.empty();

  struct SentenceTerm {
    std::string text;
    std::optional<std::vector<float>> embedding;
  };
  std::vector<SentenceTerm> sentence_terms;
  sentence_terms.reserve(terms.terms.size());
  for (const auto& t : terms.terms)
    sentence_terms.push_back({t.text, term_embedding(t.text, *emb_)});

  ConceptVector out;
  out.values.assign(concept_terms_.size(), 0.0);
  for (std::size_t i = 0; i < concept_terms_.size(); ++i) {
    double best = 0.0;
    for (const auto& concept_term : concept_terms_[i]) {
      for (const auto& sent_term : sentence_terms) {
        // delta(t, c): exact text match, or embedding cosine >= threshold
        if (sent_term.text == concept_term.text) {
          best = 1.0;
          break;
        }
        if (sent_term.embedding && concept_term.embedding) {
          const double cos = kernels::dot(std::span<const float>(*sent_term.embedding),
                                          std::span<const float>(*concept_term.embedding));
          if (cos >= cfg_.delta_threshold) {
            best = 1.0;
            break;
          }
        }
      }
      if (best == 1.0) break;
    }
    out.values[i] = best * idf_[i];
  }
  return out;
}

ConceptVector map_sentence(const ParsedSentence& sentence, const std::vector<Concept>& concepts,
                           const EmbeddingTable& emb, double delta_threshold,
                           const TfIdfWeights& weights) {
  MappingConfig cfg;
  cfg.delta_threshold = delta_threshold;
  return SentenceMapper(concepts, emb, cfg, &weights).map(sentence);
}

TfIdfWeights train_idf(std::span<const ParsedSentence> sentences,
                       const std::vector<Concept>& concepts, const EmbeddingTable& emb,
                       const MappingConfig& cfg) {
  const SentenceMapper unweighted(concepts, emb, cfg, nullptr);
  std::vector<std::size_t> df(concepts.size(), 0);
  for (const auto& sentence : sentences) {
    const ConceptVector v = unweighted.map(sentence);
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      if (v.values[i] > 0.0) ++df[i];
    }
  }
  TfIdfWeights weights;
  weights.idf.resize(concepts.size());
  const double n = static_cast<double>(sentences.size());
  for (std::size_t i = 0; i < concepts.size(); ++i)
    weights.idf[i] = std::log(1.0 + n / (1.0 + static_cast<double>(df[i])));
  return weights;
}

ScoreAnchors compute_anchors(const std::vector<Concept>& concepts,
                             const FeatureMatrix& train_features) {
  ScoreAnchors anchors;
  anchors.lo.resize(concepts.size());
  anchors.hi.resize(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (!concepts[i].model)
      throw Error("compute_anchors: concept " + std::to_string(concepts[i].id) +
                  " has no trained model");
    std::vector<double> scores = score(*concepts[i].model, train_features);
    std::sort(scores.begin(), scores.end());
    anchors.lo[i] = percentile(scores, 0.05);
    anchors.hi[i] = percentile(scores, 0.95);
  }
  return anchors;
}

namespace {

ConceptVector map_image_row(std::span<const float> row, const std::vector<Concept>& concepts,
                            const ScoreAnchors& anchors) {
  ConceptVector out;
  out.values.resize(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (!concepts[i].model)
      throw Error("map_image: concept " + std::to_string(concepts[i].id) +
                  " has no trained model");
    const double raw = concepts[i].model->raw_score(row);
    const double lo = anchors.lo[i];
    const double hi = anchors.hi[i];
    double v = 0.0;
    if (hi > lo) v = 2.0 * (raw - lo) / (hi - lo) - 1.0;
    out.values[i] = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

}  // namespace

ConceptVector map_image(const ImageId& img, const std::vector<Concept>& concepts,
                        const FeatureMatrix& features, const ScoreAnchors& anchors) {
  const auto idx = id_index(features);
  const auto it = idx.find(img);
  if (it == idx.end()) throw Error("map_image: unknown image id \"" + img + "\"");
  return map_image_row(features.row(it->second), concepts, anchors);
}

std::map<std::string, ConceptVector> map_images(const std::vector<Concept>& concepts,
                                                const FeatureMatrix& features,
                                                const ScoreAnchors& anchors) {
  std::map<std::string, ConceptVector> out;
  for (std::size_t r = 0; r < features.rows(); ++r)
    out.emplace(features.ids[r], map_image_row(features.row(r), concepts, anchors));
  return out;
}

std::vector<std::pair<std::string, double>> rank(
    const ConceptVector& query, const std::map<std::string, ConceptVector>& gallery) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(gallery.size());
  for (const auto& [id, vec] : gallery) {
    if (vec.values.size() != query.values.size()) throw Error("rank: concept count mismatch");
    out.emplace_back(id, kernels::dot(std::span<const double>(query.values),
                                      std::span<const double>(vec.values)));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

RetrievalReport evaluate(const RetrievalIndex& index, const std::vector<int>& ks) {
  if (index.image_vectors.empty() || index.sentence_vectors.empty())
    throw Error("evaluate: empty retrieval index");
  for (const auto& [sid, img] : index.ground_truth) {
    if (!index.image_vectors.count(img))
      throw Error("evaluate: ground-truth image \"" + img + "\" for sentence \"" + sid +
                  "\" is not in the gallery");
  }

  RetrievalReport report;
  report.ks = ks;

  auto finish = [&](DirectionReport& dir, std::vector<std::size_t>& first_hits) {
    dir.queries = first_hits.size();
    for (int k : ks) {
      std::size_t hits = 0;
      for (std::size_t r : first_hits) {
        if (r <= static_cast<std::size_t>(k)) ++hits;
      }
      dir.recall_at[k] =
          100.0 * static_cast<double>(hits) / static_cast<double>(first_hits.size());
    }
    dir.median_rank = median_of_ranks(std::move(first_hits));
  };

  // sentence -> image
  {
    std::vector<std::size_t> first_hits;
    for (const auto& [sid, query] : index.sentence_vectors) {
      const auto gt = index.ground_truth.find(sid);
      if (gt == index.ground_truth.end()) continue;
      const auto ranked = rank(query, index.image_vectors);
      for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
        if (ranked[pos].first == gt->second) {
          first_hits.push_back(pos + 1);
          break;
        }
      }
    }
    if (first_hits.empty()) throw Error("evaluate: no sentence queries with ground truth");
    finish(report.sentence_to_image, first_hits);
  }

  // image -> sentence
  {
    std::map<ImageId, std::set<std::string>> sentences_of;
    for (const auto& [sid, img] : index.ground_truth) sentences_of[img].insert(sid);

    std::vector<std::size_t> first_hits;
    for (const auto& [img, query] : index.image_vectors) {
      const auto gt = sentences_of.find(img);
      if (gt == sentences_of.end()) continue;
      const auto ranked = rank(query, index.sentence_vectors);
      for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
        if (gt->second.count(ranked[pos].first)) {
          first_hits.push_back(pos + 1);
          break;
        }
      }
    }
    if (first_hits.empty()) throw Error("evaluate: no image queries with ground truth");
    finish(report.image_to_sentence, first_hits);
  }

  return report;
}

}  // namespace vocabforge
