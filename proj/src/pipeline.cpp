#include "vocabforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "binio.hpp"
#include "vocabforge/kernels.hpp"
#include "vocabforge/parallel.hpp"
#include "vocabforge/similarity.hpp"

namespace vocabforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fnv_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Rng::hash_string(s)));
  return buf;
}

std::string file_hash(const std::string& path) { return fnv_hex(binio::read_file(path)); }

template <typename Container>
std::string join(const Container& values) {
  std::string out;
  for (const auto& v : values) {
    out += v;
    out += ',';
  }
  return out;
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (int v : values) out += std::to_string(v) + ",";
  return out;
}

void require_exists(const std::string& what, const std::string& path) {
  if (path.empty()) throw Error("config: " + what + " path is not set");
  if (!fs::exists(path)) throw Error("config: " + what + " path does not exist: " + path);
}

void require_range(bool ok, const std::string& msg) {
  if (!ok) throw Error("config: " + msg);
}

std::string model_file_name(int concept_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%04d.vcdm", concept_id);
  return buf;
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
  json doc;
  try {
    doc = json::parse(binio::read_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": invalid config JSON: " + e.what());
  }
  PipelineConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "features") {
      cfg.features_path = value.get<std::string>();
    } else if (key == "parses") {
      cfg.parses_path = value.get<std::string>();
    } else if (key == "embeddings") {
      cfg.embeddings_path = value.get<std::string>();
    } else if (key == "manifest") {
      cfg.manifest_path = value.get<std::string>();
    } else if (key == "output_dir") {
      cfg.output_dir = value.get<std::string>();
    } else if (key == "cache_dir") {
      cfg.cache_dir = value.get<std::string>();
    } else if (key == "min_occurrence") {
      cfg.min_occurrence = value.get<std::uint32_t>();
    } else if (key == "dependency_types") {
      cfg.dependency_types.clear();
      for (const auto& d : value) cfg.dependency_types.insert(d.get<std::string>());
    } else if (key == "pos_whitelist") {
      cfg.pos_whitelist.clear();
      for (const auto& p : value) cfg.pos_whitelist.insert(p.get<std::string>());
    } else if (key == "ap_threshold") {
      cfg.ap_threshold = value.get<double>();
    } else if (key == "negative_count") {
      cfg.negative_count = value.get<std::uint32_t>();
    } else if (key == "regularization_c") {
      cfg.regularization_c = value.get<double>();
    } else if (key == "seed") {
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "kernel") {
      cfg.kernel = value.get<std::string>();
    } else if (key == "chi2_bins") {
      cfg.chi2_bins = value.get<std::uint32_t>();
    } else if (key == "lambda") {
      cfg.lambda = value.get<double>();
    } else if (key == "concept_count") {
      cfg.concept_count = value.get<std::uint32_t>();
    } else if (key == "kmeans_restarts") {
      cfg.kmeans_restarts = value.get<std::uint32_t>();
    } else if (key == "delta_threshold") {
      cfg.delta_threshold = value.get<double>();
    } else if (key == "recall_ks") {
      cfg.recall_ks.clear();
      for (const auto& k : value) cfg.recall_ks.push_back(k.get<int>());
    } else if (key == "eval_split") {
      cfg.eval_split = value.get<std::string>();
    } else if (key == "workers") {
      cfg.workers = value.get<unsigned>();
    } else {
      throw Error(path + ": unknown config key \"" + key + "\"");
    }
  }
  return cfg;
}

void validate_config(const PipelineConfig& cfg) {
  require_exists("features", cfg.features_path);
  require_exists("parses", cfg.parses_path);
  require_exists("embeddings", cfg.embeddings_path);
  require_exists("manifest", cfg.manifest_path);
  require_range(!cfg.output_dir.empty(), "output_dir is not set");
  require_range(cfg.min_occurrence >= 1, "min_occurrence must be at least 1");
  require_range(cfg.negative_count >= 1, "negative_count must be at least 1");
  require_range(cfg.ap_threshold >= 0.0 && cfg.ap_threshold <= 1.0,
                "ap_threshold must be in [0, 1]");
  require_range(cfg.regularization_c > 0.0, "regularization_c must be positive");
  require_range(cfg.kernel == "linear" || cfg.kernel == "chi2_map",
                "kernel must be \"linear\" or \"chi2_map\"");
  require_range(cfg.chi2_bins >= 1, "chi2_bins must be at least 1");
  require_range(cfg.lambda >= 0.0 && cfg.lambda <= 1.0, "lambda must be in [0, 1]");
  require_range(cfg.concept_count >= 1, "concept_count must be at least 1");
  require_range(cfg.kmeans_restarts >= 1, "kmeans_restarts must be at least 1");
  require_range(cfg.delta_threshold >= 0.0 && cfg.delta_threshold <= 1.0,
                "delta_threshold must be in [0, 1]");
  require_range(!cfg.recall_ks.empty(), "recall_ks must not be empty");
  for (int k : cfg.recall_ks) require_range(k >= 1, "recall_ks entries must be at least 1");
  require_range(cfg.eval_split == "test" || cfg.eval_split == "validation",
                "eval_split must be \"test\" or \"validation\"");
}

std::string vocabulary_to_json(const TermVocabulary& vocab) {
  json arr = json::array();
  for (const auto& term : vocab.terms) {
    json entry;
    entry["kind"] = term.kind == TermKind::unigram ? "unigram" : "dependency";
    entry["text"] = term.text;
    entry["frequency"] = term.frequency;
    entry["images"] = term.images;
    arr.push_back(entry);
  }
  return arr.dump(2) + "\n";
}

TermVocabulary vocabulary_from_json(const std::string& json_text) {
  json arr;
  try {
    arr = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("vocabulary JSON: ") + e.what());
  }
  TermVocabulary vocab;
  for (const auto& entry : arr) {
    Term term;
    term.kind =
        entry.at("kind").get<std::string>() == "dependency" ? TermKind::dependency : TermKind::unigram;
    term.text = entry.at("text").get<std::string>();
    term.frequency = entry.at("frequency").get<std::uint32_t>();
    for (const auto& id : entry.at("images")) term.images.push_back(id.get<std::string>());
    vocab.terms.push_back(std::move(term));
  }
  return vocab;
}

std::string concepts_to_json(const std::vector<Concept>& concepts) {
  json arr = json::array();
  for (const auto& concept_entry : concepts) {
    json entry;
    entry["id"] = concept_entry.id;
    entry["terms"] = concept_entry.terms;
    entry["images"] = concept_entry.images;
    arr.push_back(entry);
  }
  return arr.dump(2) + "\n";
}

std::vector<Concept> concepts_from_json(const std::string& json_text) {
  json arr;
  try {
    arr = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("concepts JSON: ") + e.what());
  }
  std::vector<Concept> concepts;
  for (const auto& entry : arr) {
    Concept concept_entry;
    concept_entry.id = entry.at("id").get<int>();
    for (const auto& t : entry.at("terms")) concept_entry.terms.push_back(t.get<std::string>());
    for (const auto& i : entry.at("images")) concept_entry.images.push_back(i.get<std::string>());
    concepts.push_back(std::move(concept_entry));
  }
  return concepts;
}

namespace {

json direction_to_json(const DirectionReport& dir) {
  json out;
  json recall;
  for (const auto& [k, value] : dir.recall_at) recall[std::to_string(k)] = value;
  out["recall_at"] = recall;
  out["median_rank"] = dir.median_rank;
  out["queries"] = dir.queries;
  return out;
}

}  // namespace

std::string report_to_json(const RetrievalReport& report) {
  json doc;
  doc["ks"] = report.ks;
  doc["image_to_sentence"] = direction_to_json(report.image_to_sentence);
  doc["sentence_to_image"] = direction_to_json(report.sentence_to_image);
  return doc.dump(2) + "\n";
}

std::string format_report_table(const RetrievalReport& report) {
  std::ostringstream out;
  out << "direction        ";
  for (int k : report.ks) out << "   R@" << k;
  out << "   med-rank\n";
  auto row = [&](const char* name, const DirectionReport& dir) {
    out << name;
    char buf[32];
    for (int k : report.ks) {
      std::snprintf(buf, sizeof(buf), " %5.1f", dir.recall_at.at(k));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), " %10.1f", dir.median_rank);
    out << buf << "\n";
  };
  row("image->sentence  ", report.image_to_sentence);
  row("sentence->image  ", report.sentence_to_image);
  return out.str();
}

struct Pipeline::Inputs {
  FeatureMatrix features;  // L2-normalized at ingestion
  std::vector<ParsedSentence> sentences;
  EmbeddingTable embeddings;
  CorpusSplit split;

  std::vector<ImageId> train_ids;
  std::vector<ImageId> eval_ids;
  FeatureMatrix train_features;
  std::vector<ParsedSentence> train_sentences;
  std::vector<ParsedSentence> eval_sentences;

  std::string fingerprint;
};

Pipeline::Pipeline(PipelineConfig cfg, std::ostream* log) : cfg_(std::move(cfg)), log_(log) {}

void Pipeline::log(const std::string& line) {
  if (log_ != nullptr) (*log_) << line << "\n";
}

std::string Pipeline::cache_dir_resolved() const {
  if (!cfg_.cache_dir.empty()) return cfg_.cache_dir;
  const char* env = std::getenv("VOCABFORGE_CACHE_DIR");
  if (env != nullptr && env[0] != '\0') return env;
  return (fs::path(cfg_.output_dir) / "cache").string();
}

TrainConfig Pipeline::train_config() const {
  TrainConfig tc;
  tc.negative_count = cfg_.negative_count;
  tc.regularization_c = cfg_.regularization_c;
  tc.seed = cfg_.seed;
  tc.ap_threshold = cfg_.ap_threshold;
  tc.kernel = cfg_.kernel == "chi2_map" ? KernelKind::chi2_map : KernelKind::linear;
  tc.chi2_bins = cfg_.chi2_bins;
  return tc;
}

std::string Pipeline::input_fingerprint() {
  return file_hash(cfg_.features_path) + "|" + file_hash(cfg_.parses_path) + "|" +
         file_hash(cfg_.embeddings_path) + "|" + file_hash(cfg_.manifest_path) + "|simd=" +
         kernels::active().name;
}

Pipeline::Inputs& Pipeline::inputs() {
  if (inputs_) return *inputs_;
  validate_config(cfg_);
  auto in = std::make_shared<Inputs>();
  in->fingerprint = input_fingerprint();
  in->features = l2_normalize(load_features(cfg_.features_path));
  in->split = load_manifest(cfg_.manifest_path);
  std::set<ImageId> known(in->features.ids.begin(), in->features.ids.end());
  for (const auto& sets : {&in->split.train, &in->split.validation, &in->split.test}) {
    for (const auto& id : *sets) {
      if (!known.count(id))
        throw Error("manifest id \"" + id + "\" has no feature row");
    }
  }
  in->sentences = load_sentences(cfg_.parses_path, &known);
  in->embeddings = load_embeddings(cfg_.embeddings_path);
  if (in->embeddings.duplicates_ignored > 0)
    log("[corpus] ignored " + std::to_string(in->embeddings.duplicates_ignored) +
        " duplicate embedding words");

  in->train_ids.assign(in->split.train.begin(), in->split.train.end());
  const auto& eval_set = cfg_.eval_split == "test" ? in->split.test : in->split.validation;
  in->eval_ids.assign(eval_set.begin(), eval_set.end());
  in->train_features = subset(in->features, in->train_ids);
  for (const auto& sentence : in->sentences) {
    if (in->split.train.count(sentence.image)) in->train_sentences.push_back(sentence);
    if (eval_set.count(sentence.image)) in->eval_sentences.push_back(sentence);
  }
  inputs_ = std::move(in);
  return *inputs_;
}

Pipeline::StageResult Pipeline::stage(const std::string& name, const std::string& key_material,
                                      const std::vector<std::string>& artifacts,
                                      const std::function<void(const std::string& dir)>& compute) {
  const std::string key = fnv_hex(name + "|" + key_material);
  const fs::path cache_root = cache_dir_resolved();
  const fs::path stage_dir = cache_root / (name + "-" + key);

  bool hit = fs::exists(stage_dir);
  if (hit) {
    for (const auto& a : artifacts) hit = hit && fs::exists(stage_dir / a);
  }
  if (!hit) {
    fs::path tmp = stage_dir;
    tmp += ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    const auto start = std::chrono::steady_clock::now();
    compute(tmp.string());
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    fs::remove_all(stage_dir);
    fs::rename(tmp, stage_dir);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2fs", elapsed.count());
    log("[" + name + "] computed " + key + " (" + buf + ")");
  } else {
    log("[" + name + "] cache hit " + key);
  }

  fs::create_directories(cfg_.output_dir);
  for (const auto& a : artifacts) {
    const fs::path src = stage_dir / a;
    const fs::path dst = fs::path(cfg_.output_dir) / a;
    fs::create_directories(dst.parent_path().empty() ? fs::path(cfg_.output_dir)
                                                     : dst.parent_path());
    if (fs::is_directory(src)) {
      fs::remove_all(dst);
      fs::copy(src, dst, fs::copy_options::recursive);
    } else {
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
    }
  }
  return {key, hit};
}

Pipeline::StageResult Pipeline::run_mine() {
  Inputs& in = inputs();
  const std::string material = in.fingerprint + "|minocc=" + std::to_string(cfg_.min_occurrence) +
                               "|deps=" + join(cfg_.dependency_types) +
                               "|pos=" + join(cfg_.pos_whitelist);
  return stage("mine", material, {"vocab_mined.json"}, [&](const std::string& dir) {
    const TermVocabulary vocab =
        extract_terms(in.train_sentences, cfg_.dependency_types, cfg_.pos_whitelist,
                      cfg_.min_occurrence, &in.embeddings);
    log("[mine] " + std::to_string(vocab.terms.size()) + " candidate terms");
    binio::write_file((fs::path(dir) / "vocab_mined.json").string(), vocabulary_to_json(vocab));
  });
}

Pipeline::StageResult Pipeline::run_filter() {
  Inputs& in = inputs();
  const StageResult mine = run_mine();
  const std::string material = mine.key + "|ap=" + std::to_string(cfg_.ap_threshold) +
                               "|neg=" + std::to_string(cfg_.negative_count) +
                               "|c=" + std::to_string(cfg_.regularization_c) +
                               "|seed=" + std::to_string(cfg_.seed);
  return stage(
      "filter", material, {"vocab_filtered.json", "filter_stats.json"},
      [&](const std::string& dir) {
        const TermVocabulary vocab = vocabulary_from_json(
            binio::read_file((fs::path(cfg_.output_dir) / "vocab_mined.json").string()));
        const CvFilterResult result = cv_filter(vocab, in.train_features, train_config(),
                                                effective_workers(cfg_.workers));
        std::size_t dropped = 0;
        for (const auto& outcome : result.outcomes) {
          if (!outcome.kept) ++dropped;
          if (!outcome.note.empty()) log("[filter] " + outcome.text + ": " + outcome.note);
        }
        log("[filter] kept " + std::to_string(result.vocabulary.terms.size()) + " of " +
            std::to_string(vocab.terms.size()) + " terms");
        binio::write_file((fs::path(dir) / "vocab_filtered.json").string(),
                          vocabulary_to_json(result.vocabulary));
        json stats = json::array();
        for (const auto& outcome : result.outcomes) {
          json entry;
          entry["text"] = outcome.text;
          entry["ap"] = outcome.ap;
          entry["kept"] = outcome.kept;
          entry["note"] = outcome.note;
          stats.push_back(entry);
        }
        binio::write_file((fs::path(dir) / "filter_stats.json").string(), stats.dump(2) + "\n");
      });
}

Pipeline::StageResult Pipeline::run_similarity_visual() {
  Inputs& in = inputs();
  const StageResult filter = run_filter();
  return stage("simvis", filter.key, {"sim_visual.vcds", "sim_visual.vcds.terms.json"},
               [&](const std::string& dir) {
                 const TermVocabulary vocab = vocabulary_from_json(binio::read_file(
                     (fs::path(cfg_.output_dir) / "vocab_filtered.json").string()));
                 const SimilarityMatrix sv = visual_similarity(
                     vocab, in.train_features, train_config(), effective_workers(cfg_.workers));
                 write_similarity((fs::path(dir) / "sim_visual.vcds").string(), sv);
               });
}

Pipeline::StageResult Pipeline::run_similarity_semantic() {
  Inputs& in = inputs();
  const StageResult filter = run_filter();
  return stage("simsem", filter.key, {"sim_semantic.vcds", "sim_semantic.vcds.terms.json"},
               [&](const std::string& dir) {
                 const TermVocabulary vocab = vocabulary_from_json(binio::read_file(
                     (fs::path(cfg_.output_dir) / "vocab_filtered.json").string()));
                 const SimilarityMatrix sw = semantic_similarity(vocab, in.embeddings);
                 write_similarity((fs::path(dir) / "sim_semantic.vcds").string(), sw);
               });
}

Pipeline::StageResult Pipeline::run_cluster() {
  const StageResult simvis = run_similarity_visual();
  const StageResult simsem = run_similarity_semantic();
  const std::string material = simvis.key + "|" + simsem.key +
                               "|lambda=" + std::to_string(cfg_.lambda) +
                               "|k=" + std::to_string(cfg_.concept_count) +
                               "|restarts=" + std::to_string(cfg_.kmeans_restarts) +
                               "|seed=" + std::to_string(cfg_.seed);
  return stage("cluster", material, {"concepts.json"}, [&](const std::string& dir) {
    const TermVocabulary vocab = vocabulary_from_json(
        binio::read_file((fs::path(cfg_.output_dir) / "vocab_filtered.json").string()));
    std::vector<Concept> concepts;
    if (!vocab.terms.empty()) {
      const SimilarityMatrix sv =
          read_similarity((fs::path(cfg_.output_dir) / "sim_visual.vcds").string());
      const SimilarityMatrix sw =
          read_similarity((fs::path(cfg_.output_dir) / "sim_semantic.vcds").string());
      const SimilarityMatrix fused = fuse(sv, sw, FusionConfig{cfg_.lambda});

      ClusterConfig cc;
      cc.k = std::min<std::uint32_t>(cfg_.concept_count,
                                     static_cast<std::uint32_t>(vocab.terms.size()));
      if (cc.k != cfg_.concept_count)
        log("[cluster] concept budget clamped to " + std::to_string(cc.k) +
            " (vocabulary size)");
      cc.seed = cfg_.seed;
      cc.kmeans_restarts = cfg_.kmeans_restarts;
      cc.workers = effective_workers(cfg_.workers);
      std::vector<std::string> warnings;
      concepts = spectral_cluster(fused, cc, vocab, &warnings);
      for (const auto& w : warnings) log("[cluster] " + w);
    } else {
      log("[cluster] empty vocabulary, no concepts");
    }
    log("[cluster] " + std::to_string(concepts.size()) + " concepts");
    binio::write_file((fs::path(dir) / "concepts.json").string(), concepts_to_json(concepts));
  });
}

Pipeline::StageResult Pipeline::run_discover() { return run_cluster(); }

Pipeline::StageResult Pipeline::run_train() {
  Inputs& in = inputs();
  const StageResult cluster = run_discover();
  const std::string material = cluster.key + "|kernel=" + cfg_.kernel +
                               "|bins=" + std::to_string(cfg_.chi2_bins) +
                               "|neg=" + std::to_string(cfg_.negative_count) +
                               "|c=" + std::to_string(cfg_.regularization_c) +
                               "|seed=" + std::to_string(cfg_.seed);
  return stage("train", material, {"models"}, [&](const std::string& dir) {
    std::vector<Concept> concepts = concepts_from_json(
        binio::read_file((fs::path(cfg_.output_dir) / "concepts.json").string()));
    const FeatureMatrix& train_gallery = in.train_features;
    const FeatureMatrix model_space = cfg_.kernel == "chi2_map"
                                          ? chi2_map_matrix(train_gallery, cfg_.chi2_bins)
                                          : train_gallery;

    const TrainConfig base = train_config();
    parallel_for(concepts.size(), effective_workers(cfg_.workers), [&](std::size_t i) {
      Concept& concept_entry = concepts[i];
      Rng neg_rng = Rng::stream(cfg_.seed, 0xC0DE00ull + static_cast<std::uint64_t>(i));
      const auto neg =
          sample_negatives(model_space, concept_entry.images, cfg_.negative_count, neg_rng);
      if (neg.empty())
        throw Error("train: no negatives available for concept " +
                    std::to_string(concept_entry.id));
      TrainConfig tc = base;
      tc.seed = Rng::stream(cfg_.seed, 0x7A0000ull + static_cast<std::uint64_t>(i)).next_u64();
      concept_entry.model = train_linear(concept_entry.images, neg, model_space, tc);
    });

    const ScoreAnchors anchors = compute_anchors(concepts, model_space);

    const fs::path models_dir = fs::path(dir) / "models";
    fs::create_directories(models_dir);
    json index;
    index["kernel"] = cfg_.kernel;
    index["chi2_bins"] = cfg_.chi2_bins;
    json files;
    for (const auto& concept_entry : concepts) {
      const std::string name = model_file_name(concept_entry.id);
      write_model((models_dir / name).string(), *concept_entry.model);
      files[std::to_string(concept_entry.id)] = name;
    }
    index["models"] = files;
    binio::write_file((models_dir / "index.json").string(), index.dump(2) + "\n");
    json anchors_doc;
    anchors_doc["lo"] = anchors.lo;
    anchors_doc["hi"] = anchors.hi;
    binio::write_file((models_dir / "anchors.json").string(), anchors_doc.dump(2) + "\n");
    log("[train] " + std::to_string(concepts.size()) + " concept models (" + cfg_.kernel + ")");
  });
}

namespace {

struct LoadedModels {
  std::vector<Concept> concepts;  // with models attached
  ScoreAnchors anchors;
  std::string kernel;
  std::uint32_t chi2_bins = 2;
};

LoadedModels load_models(const std::string& output_dir) {
  LoadedModels out;
  out.concepts =
      concepts_from_json(binio::read_file((fs::path(output_dir) / "concepts.json").string()));
  const fs::path models_dir = fs::path(output_dir) / "models";
  json index;
  try {
    index = json::parse(binio::read_file((models_dir / "index.json").string()));
  } catch (const json::exception& e) {
    throw Error("models/index.json: " + std::string(e.what()));
  }
  out.kernel = index.value("kernel", "linear");
  out.chi2_bins = index.value("chi2_bins", 2u);
  for (auto& concept_entry : out.concepts) {
    const std::string file = index.at("models").at(std::to_string(concept_entry.id));
    concept_entry.model = read_model((models_dir / file).string());
  }
  json anchors_doc;
  try {
    anchors_doc = json::parse(binio::read_file((models_dir / "anchors.json").string()));
  } catch (const json::exception& e) {
    throw Error("models/anchors.json: " + std::string(e.what()));
  }
  for (const auto& v : anchors_doc.at("lo")) out.anchors.lo.push_back(v.get<double>());
  for (const auto& v : anchors_doc.at("hi")) out.anchors.hi.push_back(v.get<double>());
  return out;
}

}  // namespace

Pipeline::StageResult Pipeline::run_eval() {
  Inputs& in = inputs();
  const StageResult train = run_train();
  const std::string material = train.key + "|delta=" + std::to_string(cfg_.delta_threshold) +
                               "|ks=" + join_ints(cfg_.recall_ks) + "|split=" + cfg_.eval_split;
  const StageResult result =
      stage("eval", material, {"report.json"}, [&](const std::string& dir) {
        if (in.eval_ids.empty()) throw Error("eval: split \"" + cfg_.eval_split + "\" is empty");
        if (in.eval_sentences.empty())
          throw Error("eval: no sentences for split \"" + cfg_.eval_split + "\"");
        const LoadedModels models = load_models(cfg_.output_dir);

        MappingConfig mapping;
        mapping.delta_threshold = cfg_.delta_threshold;
        mapping.dep_types = cfg_.dependency_types;
        mapping.pos_whitelist = cfg_.pos_whitelist;

        const TfIdfWeights idf =
            train_idf(in.train_sentences, models.concepts, in.embeddings, mapping);
        const SentenceMapper mapper(models.concepts, in.embeddings, mapping, &idf);

        FeatureMatrix gallery = subset(in.features, in.eval_ids);
        if (models.kernel == "chi2_map") gallery = chi2_map_matrix(gallery, models.chi2_bins);

        RetrievalIndex index;
        index.image_vectors = map_images(models.concepts, gallery, models.anchors);
        std::map<ImageId, int> ordinal;
        std::size_t empty_sentences = 0;
        for (const auto& sentence : in.eval_sentences) {
          const std::string sid =
              sentence.image + "#" + std::to_string(ordinal[sentence.image]++);
          bool any_term = false;
          index.sentence_vectors[sid] = mapper.map(sentence, &any_term);
          if (!any_term) ++empty_sentences;
          index.ground_truth[sid] = sentence.image;
        }
        if (empty_sentences > 0)
          log("[eval] " + std::to_string(empty_sentences) +
              " sentences mapped to the zero vector");

        last_report_ = evaluate(index, cfg_.recall_ks);
        binio::write_file((fs::path(dir) / "report.json").string(),
                          report_to_json(last_report_));
      });
  // cache hits still need the report available to callers
  last_report_ = RetrievalReport{};
  {
    json doc = json::parse(
        binio::read_file((fs::path(cfg_.output_dir) / "report.json").string()));
    last_report_.ks = doc.at("ks").get<std::vector<int>>();
    auto read_direction = [](const json& d) {
      DirectionReport dir;
      for (const auto& [k, v] : d.at("recall_at").items())
        dir.recall_at[std::stoi(k)] = v.get<double>();
      dir.median_rank = d.at("median_rank").get<double>();
      dir.queries = d.at("queries").get<std::size_t>();
      return dir;
    };
    last_report_.image_to_sentence = read_direction(doc.at("image_to_sentence"));
    last_report_.sentence_to_image = read_direction(doc.at("sentence_to_image"));
  }
  log(format_report_table(last_report_));
  return result;
}

Pipeline::StageResult Pipeline::run_tag() {
  Inputs& in = inputs();
  const StageResult train = run_train();
  const std::string material = train.key + "|seed=" + std::to_string(cfg_.seed) +
                               "|split=" + cfg_.eval_split;
  return stage("tag", material, {"tags.jsonl"}, [&](const std::string& dir) {
    if (in.eval_ids.empty()) throw Error("tag: split \"" + cfg_.eval_split + "\" is empty");
    const LoadedModels models = load_models(cfg_.output_dir);
    FeatureMatrix gallery = subset(in.features, in.eval_ids);
    if (models.kernel == "chi2_map") gallery = chi2_map_matrix(gallery, models.chi2_bins);

    std::string out;
    for (const auto& id : in.eval_ids) {
      const TagSet tags = tag_image(id, models.concepts, gallery, models.anchors, cfg_.seed);
      json entry;
      entry["image"] = tags.image;
      json list = json::array();
      for (const auto& tag : tags.tags) {
        json t;
        t["concept"] = tag.concept_id;
        t["terms"] = tag.terms;
        t["score"] = tag.score;
        list.push_back(t);
      }
      entry["tags"] = list;
      out += entry.dump();
      out += '\n';
    }
    binio::write_file((fs::path(dir) / "tags.jsonl").string(), out);
    log("[tag] tagged " + std::to_string(in.eval_ids.size()) + " images");
  });
}

std::vector<Pipeline::SweepPoint> Pipeline::sweep_lambda(const std::vector<double>& lambdas) {
  std::vector<SweepPoint> points;
  const double original = cfg_.lambda;
  for (const double lambda : lambdas) {
    cfg_.lambda = lambda;
    run_eval();
    points.push_back({lambda, last_report_});
  }
  cfg_.lambda = original;
  return points;
}

std::vector<Pipeline::SweepPoint> Pipeline::sweep_concept_count(
    const std::vector<std::uint32_t>& ks) {
  std::vector<SweepPoint> points;
  const std::uint32_t original = cfg_.concept_count;
  for (const std::uint32_t k : ks) {
    cfg_.concept_count = k;
    run_eval();
    points.push_back({static_cast<double>(k), last_report_});
  }
  cfg_.concept_count = original;
  return points;
}

}  // namespace vocabforge
