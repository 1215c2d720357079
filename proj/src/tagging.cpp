#include "vocabforge/tagging.hpp"

#include <algorithm>
#include <numeric>

#include "vocabforge/rng.hpp"

namespace vocabforge {

TagSet tag_image(const ImageId& img, const std::vector<Concept>& concepts,
                 const FeatureMatrix& features, const ScoreAnchors& anchors, std::uint64_t seed) {
  const ConceptVector scores = map_image(img, concepts, features, anchors);

  std::vector<std::size_t> order(concepts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores.values[a] != scores.values[b]) return scores.values[a] > scores.values[b];
    return a < b;  // deterministic tie on concept id
  });

  Rng rng = Rng::stream(seed, Rng::hash_string(img));
  TagSet out;
  out.image = img;
  const std::size_t count = std::min<std::size_t>(3, concepts.size());
  for (std::size_t t = 0; t < count; ++t) {
    const auto& concept_entry = concepts[order[t]];
    Tag tag;
    tag.concept_id = concept_entry.id;
    tag.score = scores.values[order[t]];
    // up to two member terms, sampled without replacement; display order is
    // the sampled order
    std::vector<std::size_t> picks(concept_entry.terms.size());
    std::iota(picks.begin(), picks.end(), 0);
    rng.shuffle(picks);
    const std::size_t take = std::min<std::size_t>(2, picks.size());
    for (std::size_t i = 0; i < take; ++i) tag.terms.push_back(concept_entry.terms[picks[i]]);
    out.tags.push_back(std::move(tag));
  }
  return out;
}

}  // namespace vocabforge
