#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vocabforge/classifiers.hpp"
#include "vocabforge/corpus.hpp"
#include "vocabforge/mining.hpp"

// Term-by-term similarity matrices: the min-symmetrized median classifier
// response (visual), cosine similarity of averaged word embeddings
// (semantic), and their element-wise power-weighted fusion.

namespace vocabforge {

struct SimilarityMatrix {
  std::vector<std::string> terms;
  std::vector<double> values;  // n x n, symmetric, entries in [0, 1]

  std::size_t size() const { return terms.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    values[i * size() + j] = v;
    values[j * size() + i] = v;
  }
};

struct FusionConfig {
  double lambda = 0.6;
};

// One calibrated classifier per term (trained on the term's image set with
// sampled negatives excluding it); entry (t1,t2) is the min of the two
// median cross-responses. Per-term RNG streams derive from (cfg.seed, term
// index), so the result is worker-count independent.
SimilarityMatrix visual_similarity(const TermVocabulary& vocab, const FeatureMatrix& features,
                                   const TrainConfig& cfg, unsigned workers = 1);

// Term vector = L2-normalized mean of its embedded component words; entries
// are cosines clamped to [0, 1] (fusion exponentiates entries, so negative
// cosines clamp to zero). Diagonal is exactly 1.
SimilarityMatrix semantic_similarity(const TermVocabulary& vocab, const EmbeddingTable& emb);

// fused[i,j] = sv[i,j]^lambda * sw[i,j]^(1-lambda), with 0^0 defined as 1.
SimilarityMatrix fuse(const SimilarityMatrix& sv, const SimilarityMatrix& sw,
                      const FusionConfig& cfg);

// Normalized mean embedding of the term's component words; nullopt when no
// component word is embedded.
std::optional<std::vector<float>> term_embedding(const std::string& term_text,
                                                 const EmbeddingTable& emb);

// Similarity file: magic "VCDS", count u32, upper triangle (diagonal
// included) as f32, with a JSON sidecar "<path>.terms.json" for the ordering.
void write_similarity(const std::string& path, const SimilarityMatrix& m);
SimilarityMatrix read_similarity(const std::string& path);

double median(std::vector<double> values);  // mean-of-central-pair for even counts

}  // namespace vocabforge
