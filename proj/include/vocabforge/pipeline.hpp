#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "vocabforge/classifiers.hpp"
#include "vocabforge/clustering.hpp"
#include "vocabforge/corpus.hpp"
#include "vocabforge/mining.hpp"
#include "vocabforge/retrieval.hpp"
#include "vocabforge/synthgen.hpp"
#include "vocabforge/tagging.hpp"

// Pipeline orchestration: discover (mine -> filter -> similarities -> fuse ->
// cluster), train, eval and tag as cached stages. Stage artifacts are keyed
// by a content hash of their inputs and parameters, so a rerun that only
// changes lambda or K reuses the trained term classifiers.

namespace vocabforge {

struct PipelineConfig {
  std::string features_path;
  std::string parses_path;
  std::string embeddings_path;
  std::string manifest_path;
  std::string output_dir = "out";
  std::string cache_dir;  // empty: $VOCABFORGE_CACHE_DIR or output_dir/cache

  std::uint32_t min_occurrence = 5;
  std::set<std::string> dependency_types = default_dependency_types();
  std::set<std::string> pos_whitelist = default_pos_whitelist();

  double ap_threshold = 0.15;
  std::uint32_t negative_count = 1000;
  double regularization_c = 1.0;
  std::uint64_t seed = 0;
  std::string kernel = "linear";  // or "chi2_map" for the concept classifiers
  std::uint32_t chi2_bins = 2;

  double lambda = 0.6;
  std::uint32_t concept_count = 1200;
  std::uint32_t kmeans_restarts = 10;

  double delta_threshold = 0.95;
  std::vector<int> recall_ks = {1, 5, 10};
  std::string eval_split = "test";  // or "validation"

  unsigned workers = 0;  // 0 = all available
};

// JSON object with the field names above; unknown keys are an error.
PipelineConfig load_config(const std::string& path);
// Ranges and referenced paths; throws before any data is read.
void validate_config(const PipelineConfig& cfg);

// vocabulary/concepts artifact serialization (the `mine` and `discover`
// output formats)
std::string vocabulary_to_json(const TermVocabulary& vocab);
TermVocabulary vocabulary_from_json(const std::string& json_text);
std::string concepts_to_json(const std::vector<Concept>& concepts);
std::vector<Concept> concepts_from_json(const std::string& json_text);

std::string report_to_json(const RetrievalReport& report);
std::string format_report_table(const RetrievalReport& report);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, std::ostream* log = nullptr);

  struct StageResult {
    std::string key;       // 16-hex content key
    bool cache_hit = false;
  };

  StageResult run_mine();      // vocab_mined.json
  StageResult run_discover();  // ... concepts.json
  StageResult run_train();     // models/ directory with index + anchors
  StageResult run_eval();      // report.json
  StageResult run_tag();       // tags.jsonl over the eval split

  // parameter sweeps (the lambda / concept-count experiments); each entry
  // reruns the affected stages through the cache
  struct SweepPoint {
    double value = 0.0;
    RetrievalReport report;
  };
  std::vector<SweepPoint> sweep_lambda(const std::vector<double>& lambdas);
  std::vector<SweepPoint> sweep_concept_count(const std::vector<std::uint32_t>& ks);

  RetrievalReport last_report() const { return last_report_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  struct Inputs;

  StageResult run_filter();
  StageResult run_similarity_visual();
  StageResult run_similarity_semantic();
  StageResult run_cluster();

  StageResult stage(const std::string& name, const std::string& key_material,
                    const std::vector<std::string>& artifacts,
                    const std::function<void(const std::string& dir)>& compute);
  void log(const std::string& line);
  Inputs& inputs();
  std::string input_fingerprint();  // content hashes of the four input files
  std::string cache_dir_resolved() const;
  TrainConfig train_config() const;

  PipelineConfig cfg_;
  std::ostream* log_ = nullptr;
  std::shared_ptr<Inputs> inputs_;
  RetrievalReport last_report_;
};

}  // namespace vocabforge
