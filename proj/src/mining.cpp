#include "vocabforge/mining.hpp"

#include <algorithm>
#include <map>

namespace vocabforge {

const std::set<std::string>& default_dependency_types() {
  static const std::set<std::string> kTypes = {"acomp", "agent",     "amod", "dobj", "iobj",
                                               "nsubj", "nsubjpass", "prt",  "vmod"};
  return kTypes;
}

const std::set<std::string>& default_pos_whitelist() {
  static const std::set<std::string> kPos = {"noun", "verb", "adjective", "adverb"};
  return kPos;
}

std::vector<std::string> term_words(const std::string& text) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t sp = text.find(' ', start);
    if (sp == std::string::npos) {
      words.push_back(text.substr(start));
      break;
    }
    words.push_back(text.substr(start, sp - start));
    start = sp + 1;
  }
  return words;
}

TermVocabulary extract_terms(std::span<const ParsedSentence> sentences,
                             const std::set<std::string>& dep_types,
                             const std::set<std::string>& pos_whitelist,
                             std::uint32_t min_occurrence, const EmbeddingTable* embeddings) {
  struct Acc {
    TermKind kind;
    std::set<ImageId> images;
    std::uint32_t frequency = 0;
  };
  // std::map keeps the canonical text order, making the result independent
  // of sentence order for everything except image/frequency accumulation.
  std::map<std::string, Acc> acc;

  for (const auto& sent : sentences) {
    std::set<std::pair<std::string, TermKind>> in_sentence;
    for (const auto& tok : sent.tokens) {
      if (pos_whitelist.count(tok.pos)) in_sentence.insert({tok.lemma, TermKind::unigram});
    }
    for (const auto& dep : sent.deps) {
      if (!dep_types.count(dep.label)) continue;
      const std::string text = dep.label == "amod" ? dep.dependent + " " + dep.governor
                                                   : dep.governor + " " + dep.dependent;
      in_sentence.insert({text, TermKind::dependency});
    }
    // one count per sentence regardless of repetitions
    for (const auto& [text, kind] : in_sentence) {
      auto& a = acc[text];
      a.kind = kind;
      a.frequency += 1;
      a.images.insert(sent.image);
    }
  }

  TermVocabulary vocab;
  vocab.min_occurrence = min_occurrence;
  vocab.dependency_types = dep_types;
  for (auto& [text, a] : acc) {
    if (a.frequency < min_occurrence) continue;
    if (embeddings != nullptr) {
      bool any_embedded = false;
      for (const auto& w : term_words(text)) {
        if (embeddings->find(w) != nullptr) {
          any_embedded = true;
          break;
        }
      }
      if (!any_embedded) continue;
    }
    Term t;
    t.kind = a.kind;
    t.text = text;
    t.images.assign(a.images.begin(), a.images.end());
    t.frequency = a.frequency;
    vocab.terms.push_back(std::move(t));
  }
  return vocab;
}

std::map<std::string, std::vector<ImageId>> term_image_matrix(const TermVocabulary& vocab,
                                                              const CorpusSplit& split) {
  std::map<std::string, std::vector<ImageId>> out;
  for (const auto& term : vocab.terms) {
    std::vector<ImageId> kept;
    for (const auto& id : term.images) {
      if (split.train.count(id)) kept.push_back(id);
    }
    out.emplace(term.text, std::move(kept));
  }
  return out;
}

TermVocabulary restrict_to_split(const TermVocabulary& vocab, const CorpusSplit& split) {
  const auto matrix = term_image_matrix(vocab, split);
  TermVocabulary out;
  out.min_occurrence = vocab.min_occurrence;
  out.dependency_types = vocab.dependency_types;
  for (const auto& term : vocab.terms) {
    const auto& images = matrix.at(term.text);
    if (images.empty()) continue;
    Term t = term;
    t.images = images;
    out.terms.push_back(std::move(t));
  }
  return out;
}

}  // namespace vocabforge
