#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// Corpus ingestion: image features, parsed sentences, word embeddings and
// the train/validation/test manifest, plus the on-disk formats for each.
//
// Feature file ("VCDF"): magic, version u32, image count u32, dim u32, then
// per image: id length u16, UTF-8 id, dim little-endian f32 values.
// Parse file: one JSON object per line,
//   {"image": str, "tokens": [[surface, lemma, pos], ...],
//    "deps": [[label, governor_lemma, dependent_lemma], ...]}
// Embedding file: plain text, "word v1 v2 ... vD" per line.
// Manifest: JSON object with "train"/"validation"/"test" id arrays.

namespace vocabforge {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

using ImageId = std::string;

struct FeatureMatrix {
  std::vector<ImageId> ids;
  std::size_t dim = 0;
  std::vector<float> data;  // row-major, ids.size() x dim

  std::size_t rows() const { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

// id -> row index lookup; ids are unique by the FeatureMatrix invariant.
std::unordered_map<ImageId, std::size_t> id_index(const FeatureMatrix& m);

// Rows for the given ids, in the given order. Unknown id -> Error.
FeatureMatrix subset(const FeatureMatrix& m, const std::vector<ImageId>& ids);

struct Token {
  std::string surface;
  std::string lemma;  // lowercased on load
  std::string pos;    // lowercased on load
};

struct SentenceDependency {
  std::string label;  // lowercase ASCII relation, e.g. "amod"
  std::string governor;
  std::string dependent;
};

struct ParsedSentence {
  ImageId image;
  std::vector<Token> tokens;
  std::vector<SentenceDependency> deps;
};

struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<float>> entries;  // lowercase keys
  std::size_t duplicates_ignored = 0;

  // Case-insensitive lookup; nullptr when the word is unknown.
  const std::vector<float>* find(const std::string& word) const;
};

struct CorpusSplit {
  std::set<ImageId> train;
  std::set<ImageId> validation;
  std::set<ImageId> test;
};

FeatureMatrix load_features(const std::string& path);
void write_features(const std::string& path, const FeatureMatrix& m);
// Convenience importer: "id,v1,...,vD" per line, dim taken from the first row.
FeatureMatrix import_features_csv(const std::string& path);

// Returns a copy with every row scaled to unit L2 norm. Zero row -> Error
// naming the offending image.
FeatureMatrix l2_normalize(FeatureMatrix m);

std::vector<ParsedSentence> load_sentences(const std::string& path,
                                           const std::set<ImageId>* known_ids = nullptr);
void write_sentences(const std::string& path, std::span<const ParsedSentence> sentences);

EmbeddingTable load_embeddings(const std::string& path);
void write_embeddings(const std::string& path, const EmbeddingTable& table);

// Split load validates pairwise disjointness and aborts on any overlap.
CorpusSplit load_manifest(const std::string& path);
void write_manifest(const std::string& path, const CorpusSplit& split);

std::string lowercase(std::string s);

}  // namespace vocabforge
