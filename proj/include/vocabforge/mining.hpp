#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vocabforge/corpus.hpp"

// Candidate concept terms: unigrams over whitelisted part-of-speech tags and
// dependency bigrams over a selected set of relation types, grouped by lemma
// and cut at a minimum sentence-occurrence count.

namespace vocabforge {

enum class TermKind { unigram, dependency };

struct Term {
  TermKind kind = TermKind::unigram;
  std::string text;             // canonical lemmatized form, e.g. "dog" or "ride horse"
  std::vector<ImageId> images;  // sorted, unique
  std::uint32_t frequency = 0;  // sentences containing the term (counted once per sentence)
};

struct TermVocabulary {
  std::vector<Term> terms;  // sorted by text, unique texts
  std::uint32_t min_occurrence = 5;
  std::set<std::string> dependency_types;
};

// The 9 relation types used for bigram mining.
const std::set<std::string>& default_dependency_types();
// noun, verb, adjective, adverb
const std::set<std::string>& default_pos_whitelist();

// Dependency terms render as "governor dependent" except amod, which renders
// "dependent governor" ("white horse"). When an embedding table is given,
// terms with no embedded component word are dropped (their semantic
// similarity would be undefined downstream).
TermVocabulary extract_terms(std::span<const ParsedSentence> sentences,
                             const std::set<std::string>& dep_types = default_dependency_types(),
                             const std::set<std::string>& pos_whitelist = default_pos_whitelist(),
                             std::uint32_t min_occurrence = 5,
                             const EmbeddingTable* embeddings = nullptr);

// Image sets restricted to the train split; terms left with no train image
// come back with an empty entry so callers can drop them.
std::map<std::string, std::vector<ImageId>> term_image_matrix(const TermVocabulary& vocab,
                                                              const CorpusSplit& split);

// Applies term_image_matrix and removes terms with no train image.
TermVocabulary restrict_to_split(const TermVocabulary& vocab, const CorpusSplit& split);

// Component words of a term ("ride horse" -> {"ride", "horse"}).
std::vector<std::string> term_words(const std::string& text);

}  // namespace vocabforge
