#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vocabforge/clustering.hpp"
#include "vocabforge/corpus.hpp"
#include "vocabforge/mining.hpp"

// The shared concept space: sentences map to idf-weighted binary concept
// activations (max over term matches), images map to classifier scores
// rescaled to [-1, 1], and both directions rank by inner product.

namespace vocabforge {

struct ConceptVector {
  std::vector<double> values;
};

struct TfIdfWeights {
  std::vector<double> idf;  // one per concept
};

struct RetrievalIndex {
  std::map<std::string, ConceptVector> image_vectors;
  std::map<std::string, ConceptVector> sentence_vectors;
  std::map<std::string, ImageId> ground_truth;  // sentence id -> image id
};

struct MappingConfig {
  double delta_threshold = 0.95;
  std::set<std::string> dep_types = default_dependency_types();
  std::set<std::string> pos_whitelist = default_pos_whitelist();
};

// Sentence terms are extracted exactly as in mining (no frequency cutoff);
// a term matches a concept term when the texts are equal or the cosine of
// their embeddings reaches the delta threshold. Coordinate i is the max
// match times idf_i.
class SentenceMapper {
 public:
  SentenceMapper(const std::vector<Concept>& concepts, const EmbeddingTable& emb,
                 MappingConfig cfg, const TfIdfWeights* weights = nullptr);

  // any_term reports whether the sentence produced any candidate term;
  // sentences with none map to the zero vector.
  ConceptVector map(const ParsedSentence& sentence, bool* any_term = nullptr) const;

  std::size_t concept_count() const { return concept_terms_.size(); }

 private:
  struct TermEntry {
    std::string text;
    std::optional<std::vector<float>> embedding;
  };
  std::vector<std::vector<TermEntry>> concept_terms_;
  const EmbeddingTable* emb_;
  MappingConfig cfg_;
  std::vector<double> idf_;
};

ConceptVector map_sentence(const ParsedSentence& sentence, const std::vector<Concept>& concepts,
                           const EmbeddingTable& emb, double delta_threshold,
                           const TfIdfWeights& weights);

// idf_i = ln(1 + N / (1 + df_i)) over the training sentences, where df_i
// counts sentences whose unweighted activation of concept i is positive.
// Concepts activated nowhere get the maximum weight ln(1 + N).
TfIdfWeights train_idf(std::span<const ParsedSentence> sentences,
                       const std::vector<Concept>& concepts, const EmbeddingTable& emb,
                       const MappingConfig& cfg);

// Per-concept affine anchors: the 5th and 95th percentile (linear
// interpolation) of each concept classifier's raw scores over the train
// gallery. Computed once from the train split, never from a query gallery.
struct ScoreAnchors {
  std::vector<double> lo;
  std::vector<double> hi;
};

ScoreAnchors compute_anchors(const std::vector<Concept>& concepts,
                             const FeatureMatrix& train_features);

// Raw concept scores affinely rescaled so the anchors land on -1 and +1,
// then clipped to [-1, 1]. `features` must be in the same space the concept
// models were trained in.
ConceptVector map_image(const ImageId& img, const std::vector<Concept>& concepts,
                        const FeatureMatrix& features, const ScoreAnchors& anchors);
std::map<std::string, ConceptVector> map_images(const std::vector<Concept>& concepts,
                                                const FeatureMatrix& features,
                                                const ScoreAnchors& anchors);

// Descending inner product; exact ties order by id.
std::vector<std::pair<std::string, double>> rank(const ConceptVector& query,
                                                 const std::map<std::string, ConceptVector>& gallery);

struct DirectionReport {
  std::map<int, double> recall_at;  // percent of queries with a hit in the top k
  double median_rank = 0.0;         // of the first ground-truth entry, 1-based
  std::size_t queries = 0;
};

struct RetrievalReport {
  std::vector<int> ks;
  DirectionReport sentence_to_image;
  DirectionReport image_to_sentence;
};

// Image->sentence ground truth is every sentence of the image; a query hits
// at k when any of them ranks in the top k.
RetrievalReport evaluate(const RetrievalIndex& index, const std::vector<int>& ks);

}  // namespace vocabforge
