#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vocabforge/clustering.hpp"
#include "vocabforge/corpus.hpp"
#include "vocabforge/retrieval.hpp"

// Free-form image tags: the top-3 concepts by normalized score, showing up
// to two randomly sampled terms per concept.

namespace vocabforge {

struct Tag {
  int concept_id = 0;
  std::vector<std::string> terms;  // 1 or 2 sampled member terms, sampled order
  double score = 0.0;              // normalized concept score in [-1, 1]
};

struct TagSet {
  ImageId image;
  std::vector<Tag> tags;  // min(3, K) entries, scores descending
};

// Scores come from the same normalized path as map_image. The per-image RNG
// stream derives from (seed, hash(image id)), so tag sets are reproducible
// and independent of call order.
TagSet tag_image(const ImageId& img, const std::vector<Concept>& concepts,
                 const FeatureMatrix& features, const ScoreAnchors& anchors, std::uint64_t seed);

}  // namespace vocabforge
