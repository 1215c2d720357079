#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vocabforge/corpus.hpp"

// Planted-concept parallel corpora with controllable separability. Every
// concept gets an orthonormal feature prototype and a cluster of synonym
// terms in embedding space; images draw a primary concept (plus optional
// secondary concepts, which make per-image sentences distinguishable) and
// noise terms attach to images uniformly at random so the AP filter has
// something to remove.

namespace vocabforge {

struct SynthConfig {
  std::uint32_t concept_count = 10;
  std::uint32_t terms_per_concept = 4;
  std::uint32_t images_per_concept = 40;
  std::uint32_t feature_dim = 64;
  double noise_sigma = 0.05;
  std::uint32_t noise_terms = 20;
  std::uint32_t embedding_dim = 16;
  std::uint64_t seed = 0;

  // split sizes carved from each concept's image block
  std::uint32_t test_images_per_concept = 0;
  std::uint32_t validation_images_per_concept = 0;

  // 0 keeps the plain one-concept-per-image corpus
  std::uint32_t secondary_concepts_per_image = 0;

  // concept pairs made hard for one similarity only: visually confusable
  // pairs share correlated prototypes (distinct embeddings), semantically
  // confusable pairs share correlated embedding centers (distinct
  // prototypes). Pairs claim disjoint concept indices from the front.
  std::uint32_t visual_confusable_pairs = 0;
  std::uint32_t semantic_confusable_pairs = 0;
};

struct SynthCorpus {
  FeatureMatrix features;  // rows unit-normalized
  std::vector<ParsedSentence> sentences;
  EmbeddingTable embeddings;
  CorpusSplit split;

  // ground-truth partition
  std::vector<std::vector<std::string>> concept_terms;
  std::vector<std::vector<ImageId>> concept_images;  // primary membership
  std::vector<std::string> noise_term_texts;
};

// Fully deterministic for a given config (independent derived RNG streams
// per stage). feature_dim < concept_count is an error: prototypes must be
// orthonormal.
SynthCorpus generate(const SynthConfig& cfg);

// Writes features.vcdf, parses.jsonl, embeddings.txt, manifest.json and
// truth.json under dir.
void write_corpus(const std::string& dir, const SynthCorpus& corpus);

}  // namespace vocabforge
