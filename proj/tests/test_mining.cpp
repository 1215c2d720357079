#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "vocabforge/mining.hpp"
#include "vocabforge/rng.hpp"

using namespace vocabforge;

namespace {

ParsedSentence sentence(ImageId image, std::vector<Token> tokens,
                        std::vector<SentenceDependency> deps = {}) {
  return ParsedSentence{std::move(image), std::move(tokens), std::move(deps)};
}

Token noun(const std::string& lemma) { return {lemma, lemma, "noun"}; }

ParsedSentence riding_sentence(const ImageId& image) {
  return sentence(image,
                  {{"a", "a", "det"},
                   {"little", "little", "adjective"},
                   {"boy", "boy", "noun"},
                   {"is", "be", "verb"},
                   {"riding", "ride", "verb"},
                   {"a", "a", "det"},
                   {"white", "white", "adjective"},
                   {"horse", "horse", "noun"}},
                  {{"amod", "horse", "white"},
                   {"amod", "boy", "little"},
                   {"dobj", "ride", "horse"},
                   {"nsubj", "ride", "boy"}});
}

const Term* find_term(const TermVocabulary& v, const std::string& text) {
  for (const auto& t : v.terms) {
    if (t.text == text) return &t;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("riding sentence yields the documented unigrams and dependencies") {
  const std::vector<ParsedSentence> sents{riding_sentence("img1")};
  const auto vocab = extract_terms(sents, default_dependency_types(), default_pos_whitelist(), 1);

  for (const auto* text : {"boy", "ride", "horse", "little", "white"}) {
    const Term* t = find_term(vocab, text);
    REQUIRE_MESSAGE(t != nullptr, text);
    CHECK(t->kind == TermKind::unigram);
  }
  // amod renders dependent-first, dobj governor-first
  for (const auto* text : {"little boy", "white horse", "ride horse", "ride boy"}) {
    const Term* t = find_term(vocab, text);
    REQUIRE_MESSAGE(t != nullptr, text);
    CHECK(t->kind == TermKind::dependency);
  }
  // "be" is a verb unigram; "a"/"det" is not whitelisted
  CHECK(find_term(vocab, "a") == nullptr);
  CHECK(find_term(vocab, "be") != nullptr);
}

TEST_CASE("frequency counts once per sentence and cutoff is inclusive") {
  std::vector<ParsedSentence> sents;
  for (int i = 0; i < 5; ++i)
    sents.push_back(sentence("img" + std::to_string(i), {noun("dog"), noun("dog")}));
  for (int i = 0; i < 4; ++i)
    sents.push_back(sentence("img" + std::to_string(i), {noun("cat")}));

  const auto vocab = extract_terms(sents, default_dependency_types(), default_pos_whitelist(), 5);
  const Term* dog = find_term(vocab, "dog");
  REQUIRE(dog != nullptr);
  CHECK(dog->frequency == 5);  // duplicated token still counts once
  CHECK(dog->images.size() == 5);
  CHECK(find_term(vocab, "cat") == nullptr);  // 4 < 5

  const auto vocab4 = extract_terms(sents, default_dependency_types(), default_pos_whitelist(), 4);
  CHECK(find_term(vocab4, "cat") != nullptr);
}

TEST_CASE("lemma grouping merges inflected forms") {
  std::vector<ParsedSentence> sents{
      sentence("a", {{"dogs", "dog", "noun"}}),
      sentence("b", {{"dog", "dog", "noun"}}),
      sentence("c", {{"running", "run", "verb"}}),
      sentence("d", {{"ran", "run", "verb"}}),
  };
  const auto vocab = extract_terms(sents, default_dependency_types(), default_pos_whitelist(), 1);
  CHECK(vocab.terms.size() == 2);
  CHECK(find_term(vocab, "dog")->frequency == 2);
  CHECK(find_term(vocab, "run")->frequency == 2);
}

TEST_CASE("vocabulary is independent of sentence order") {
  std::vector<ParsedSentence> sents;
  for (int i = 0; i < 20; ++i) {
    sents.push_back(riding_sentence("img" + std::to_string(i % 7)));
    sents.push_back(sentence("img" + std::to_string(i % 5), {noun("dog"), noun("ball")}));
  }
  auto shuffled = sents;
  Rng rng(99);
  rng.shuffle(shuffled);

  const auto a = extract_terms(sents, default_dependency_types(), default_pos_whitelist(), 2);
  const auto b = extract_terms(shuffled, default_dependency_types(), default_pos_whitelist(), 2);
  REQUIRE(a.terms.size() == b.terms.size());
  for (std::size_t i = 0; i < a.terms.size(); ++i) {
    CHECK(a.terms[i].text == b.terms[i].text);
    CHECK(a.terms[i].frequency == b.terms[i].frequency);
    CHECK(a.terms[i].images == b.terms[i].images);
  }
  // canonical sort by text
  CHECK(std::is_sorted(a.terms.begin(), a.terms.end(),
                       [](const Term& x, const Term& y) { return x.text < y.text; }));
}

TEST_CASE("raising min_occurrence never adds terms") {
  std::vector<ParsedSentence> sents;
  Rng rng(3);
  const std::vector<std::string> words{"dog", "cat", "horse", "ball", "run", "hat"};
  for (int i = 0; i < 60; ++i) {
    std::vector<Token> toks;
    for (const auto& w : words) {
      if (rng.next_double() < 0.4) toks.push_back(noun(w));
    }
    sents.push_back(sentence("img" + std::to_string(i), toks));
  }
  std::set<std::string> prev;
  bool first = true;
  for (std::uint32_t k = 1; k <= 40; k += 3) {
    const auto vocab = extract_terms(sents, default_dependency_types(), default_pos_whitelist(), k);
    std::set<std::string> cur;
    for (const auto& t : vocab.terms) cur.insert(t.text);
    if (!first) {
      for (const auto& text : cur) CHECK(prev.count(text) == 1);
    }
    prev = cur;
    first = false;
  }
}

TEST_CASE("terms with no embedded component word are dropped") {
  EmbeddingTable emb;
  emb.dim = 2;
  emb.entries["horse"] = {1.0f, 0.0f};

  std::vector<ParsedSentence> sents{
      sentence("a", {noun("horse"), noun("zebra")}, {{"amod", "horse", "zebra"}})};
  const auto vocab =
      extract_terms(sents, default_dependency_types(), default_pos_whitelist(), 1, &emb);
  CHECK(find_term(vocab, "horse") != nullptr);
  CHECK(find_term(vocab, "zebra") == nullptr);        // no embedding at all
  CHECK(find_term(vocab, "zebra horse") != nullptr);  // one embedded word suffices
}

TEST_CASE("term_image_matrix restricts to the train split") {
  std::vector<ParsedSentence> sents{
      sentence("a", {noun("dog")}),
      sentence("b", {noun("dog")}),
      sentence("c", {noun("dog"), noun("cat")}),
  };
  const auto vocab = extract_terms(sents, default_dependency_types(), default_pos_whitelist(), 1);
  CorpusSplit split;
  split.train = {"a", "b"};
  split.test = {"c"};

  const auto matrix = term_image_matrix(vocab, split);
  CHECK(matrix.at("dog") == std::vector<ImageId>{"a", "b"});
  CHECK(matrix.at("cat").empty());  // flagged for removal

  const auto restricted = restrict_to_split(vocab, split);
  CHECK(find_term(restricted, "cat") == nullptr);
  CHECK(find_term(restricted, "dog")->images == std::vector<ImageId>{"a", "b"});

  CorpusSplit disjoint;
  disjoint.train = {"z"};
  const auto empty = restrict_to_split(vocab, disjoint);
  CHECK(empty.terms.empty());
}
