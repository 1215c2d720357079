#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "vocabforge/pipeline.hpp"
#include "vocabforge/synthgen.hpp"

using namespace vocabforge;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() /
           ("vf_pipeline_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(root);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string path(const std::string& name) const { return (root / name).string(); }
};

SynthConfig small_corpus_config() {
  SynthConfig cfg;
  cfg.concept_count = 8;
  cfg.terms_per_concept = 3;
  cfg.images_per_concept = 12;
  cfg.feature_dim = 16;
  cfg.noise_sigma = 0.05;
  cfg.noise_terms = 6;
  cfg.embedding_dim = 16;
  cfg.seed = 21;
  cfg.test_images_per_concept = 3;
  cfg.secondary_concepts_per_image = 2;
  return cfg;
}

PipelineConfig pipeline_config(const Workspace& ws, const std::string& corpus_dir) {
  PipelineConfig cfg;
  cfg.features_path = corpus_dir + "/features.vcdf";
  cfg.parses_path = corpus_dir + "/parses.jsonl";
  cfg.embeddings_path = corpus_dir + "/embeddings.txt";
  cfg.manifest_path = corpus_dir + "/manifest.json";
  cfg.output_dir = ws.path("out");
  cfg.cache_dir = ws.path("cache");
  cfg.min_occurrence = 5;
  cfg.negative_count = 60;
  cfg.seed = 5;
  cfg.lambda = 0.5;
  cfg.concept_count = 8;
  cfg.kmeans_restarts = 6;
  cfg.workers = 2;
  return cfg;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config loading, overrides and validation") {
  Workspace ws;

  SUBCASE("unknown keys are rejected") {
    std::ofstream(ws.path("bad.json")) << R"({"featuers": "x"})";
    CHECK_THROWS_WITH_AS(load_config(ws.path("bad.json")), doctest::Contains("unknown config key"),
                         Error);
  }
  SUBCASE("missing input paths fail before any compute") {
    std::ofstream(ws.path("cfg.json")) << R"({"features": "nope.vcdf"})";
    const PipelineConfig cfg = load_config(ws.path("cfg.json"));
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("features"), Error);

    Pipeline pipeline(cfg);
    CHECK_THROWS_WITH_AS(pipeline.run_mine(), doctest::Contains("does not exist"), Error);
  }
  SUBCASE("missing embeddings path is a config error") {
    const auto corpus = generate(small_corpus_config());
    write_corpus(ws.path("corpus"), corpus);
    PipelineConfig cfg = pipeline_config(ws, ws.path("corpus"));
    cfg.embeddings_path = ws.path("corpus") + "/absent.txt";
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("embeddings"), Error);
  }
  SUBCASE("range validation") {
    const auto corpus = generate(small_corpus_config());
    write_corpus(ws.path("corpus"), corpus);
    PipelineConfig cfg = pipeline_config(ws, ws.path("corpus"));
    cfg.lambda = 1.5;
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("lambda"), Error);
    cfg.lambda = 0.5;
    cfg.kernel = "rbf";
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("kernel"), Error);
  }
  SUBCASE("config JSON round-trips through load_config") {
    std::ofstream(ws.path("cfg.json")) << R"({
      "features": "f", "parses": "p", "embeddings": "e", "manifest": "m",
      "lambda": 0.25, "concept_count": 42, "recall_ks": [1, 2, 3],
      "dependency_types": ["amod"], "kernel": "chi2_map", "workers": 3
    })";
    const PipelineConfig cfg = load_config(ws.path("cfg.json"));
    CHECK(cfg.lambda == doctest::Approx(0.25));
    CHECK(cfg.concept_count == 42);
    CHECK(cfg.recall_ks == std::vector<int>{1, 2, 3});
    CHECK(cfg.dependency_types == std::set<std::string>{"amod"});
    CHECK(cfg.kernel == "chi2_map");
    CHECK(cfg.workers == 3);
  }
}

TEST_CASE("vocabulary and concepts JSON round-trips") {
  TermVocabulary vocab;
  Term a;
  a.kind = TermKind::dependency;
  a.text = "white horse";
  a.images = {"i1", "i2"};
  a.frequency = 7;
  vocab.terms.push_back(a);
  const auto text = vocabulary_to_json(vocab);
  const auto back = vocabulary_from_json(text);
  REQUIRE(back.terms.size() == 1);
  CHECK(back.terms[0].kind == TermKind::dependency);
  CHECK(back.terms[0].text == "white horse");
  CHECK(back.terms[0].images == a.images);
  CHECK(back.terms[0].frequency == 7);

  std::vector<Concept> concepts(1);
  concepts[0].id = 0;
  concepts[0].terms = {"dog", "puppy"};
  concepts[0].images = {"x"};
  const auto ctext = concepts_to_json(concepts);
  const auto cback = concepts_from_json(ctext);
  REQUIRE(cback.size() == 1);
  CHECK(cback[0].terms == concepts[0].terms);
}

TEST_CASE("discover recovers the planted vocabulary and is idempotent") {
  Workspace ws;
  const auto synth_cfg = small_corpus_config();
  const auto corpus = generate(synth_cfg);
  write_corpus(ws.path("corpus"), corpus);
  PipelineConfig cfg = pipeline_config(ws, ws.path("corpus"));

  std::ostringstream log;
  Pipeline pipeline(cfg, &log);
  const auto first = pipeline.run_discover();
  CHECK_FALSE(first.cache_hit);

  const auto concepts = concepts_from_json(read_bytes(ws.path("out") + "/concepts.json"));
  CHECK(concepts.size() == 8);  // K = 8 on a G = 8 corpus

  // planted partition: clusters restricted to planted terms match the truth
  std::set<std::set<std::string>> truth;
  for (const auto& terms : corpus.concept_terms) truth.insert({terms.begin(), terms.end()});
  std::set<std::set<std::string>> got;
  for (const auto& concept_entry : concepts) {
    std::set<std::string> planted;
    for (const auto& t : concept_entry.terms) {
      if (t.rfind("noise", 0) != 0) planted.insert(t);
    }
    if (!planted.empty()) got.insert(planted);
  }
  CHECK(got == truth);

  SUBCASE("rerunning reproduces byte-identical artifacts") {
    const auto before = read_bytes(ws.path("out") + "/concepts.json");
    std::ostringstream log2;
    Pipeline again(cfg, &log2);
    const auto second = again.run_discover();
    CHECK(second.cache_hit);
    CHECK(read_bytes(ws.path("out") + "/concepts.json") == before);
    CHECK(log2.str().find("cache hit") != std::string::npos);
  }

  SUBCASE("changing only lambda reuses the classifier stage") {
    PipelineConfig tweaked = cfg;
    tweaked.lambda = 0.9;
    std::ostringstream log2;
    Pipeline again(tweaked, &log2);
    again.run_discover();
    const std::string lines = log2.str();
    CHECK(lines.find("[filter] cache hit") != std::string::npos);
    CHECK(lines.find("[simvis] cache hit") != std::string::npos);
    CHECK(lines.find("[cluster] computed") != std::string::npos);
  }

  SUBCASE("changing the seed recomputes the classifier stage") {
    PipelineConfig tweaked = cfg;
    tweaked.seed = 6;
    std::ostringstream log2;
    Pipeline again(tweaked, &log2);
    again.run_discover();
    CHECK(log2.str().find("[filter] computed") != std::string::npos);
  }
}

TEST_CASE("eval produces a report with the configured cutoffs") {
  Workspace ws;
  const auto corpus = generate(small_corpus_config());
  write_corpus(ws.path("corpus"), corpus);
  PipelineConfig cfg = pipeline_config(ws, ws.path("corpus"));
  cfg.recall_ks = {1, 3, 9};

  std::ostringstream log;
  Pipeline pipeline(cfg, &log);
  pipeline.run_eval();
  const auto report = pipeline.last_report();
  CHECK(report.ks == std::vector<int>{1, 3, 9});
  CHECK(report.sentence_to_image.queries == 24);  // 8 concepts x 3 test images
  CHECK(report.image_to_sentence.queries == 24);
  CHECK(report.sentence_to_image.recall_at.count(3) == 1);
  CHECK(report.sentence_to_image.recall_at.at(9) >= report.sentence_to_image.recall_at.at(1));

  // the JSON artifact parses and matches the in-memory report
  const auto text = read_bytes(ws.path("out") + "/report.json");
  CHECK(text.find("\"image_to_sentence\"") != std::string::npos);
  CHECK(report_to_json(report) == text);

  SUBCASE("tag artifact covers the eval split") {
    pipeline.run_tag();
    const auto tags = read_bytes(ws.path("out") + "/tags.jsonl");
    std::size_t lines = 0;
    for (char c : tags) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 24);
    CHECK(tags.find("\"concept\"") != std::string::npos);
    CHECK(tags.find("\"terms\"") != std::string::npos);
  }
}

TEST_CASE("chi2_map kernel runs through train and eval") {
  Workspace ws;
  auto synth_cfg = small_corpus_config();
  synth_cfg.concept_count = 4;
  synth_cfg.images_per_concept = 10;
  synth_cfg.test_images_per_concept = 2;
  const auto corpus = generate(synth_cfg);
  write_corpus(ws.path("corpus"), corpus);
  PipelineConfig cfg = pipeline_config(ws, ws.path("corpus"));
  cfg.concept_count = 4;
  cfg.kernel = "chi2_map";
  cfg.chi2_bins = 2;

  std::ostringstream log;
  Pipeline pipeline(cfg, &log);
  pipeline.run_eval();
  const auto report = pipeline.last_report();
  CHECK(report.sentence_to_image.queries == 8);
  const auto index = read_bytes(ws.path("out") + "/models/index.json");
  CHECK(index.find("chi2_map") != std::string::npos);
}

#ifdef VF_TOOL_PATH
TEST_CASE("command line smoke test") {
  Workspace ws;
  const std::string tool = VF_TOOL_PATH;
  const std::string corpus_dir = ws.path("corpus");
  std::string cmd = tool + " synth --out " + corpus_dir +
                    " --concepts 6 --terms-per-concept 2 --images-per-concept 10 --dim 8"
                    " --sigma 0.05 --noise-terms 2 --embedding-dim 8 --seed 3"
                    " --test-per-concept 2 --secondary 1 2>/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);

  std::ofstream(ws.path("cfg.json")) << "{\n"
                                     << "  \"features\": \"" << corpus_dir << "/features.vcdf\",\n"
                                     << "  \"parses\": \"" << corpus_dir << "/parses.jsonl\",\n"
                                     << "  \"embeddings\": \"" << corpus_dir
                                     << "/embeddings.txt\",\n"
                                     << "  \"manifest\": \"" << corpus_dir << "/manifest.json\",\n"
                                     << "  \"output_dir\": \"" << ws.path("out") << "\",\n"
                                     << "  \"min_occurrence\": 2,\n"
                                     << "  \"negative_count\": 20,\n"
                                     << "  \"concept_count\": 6,\n"
                                     << "  \"workers\": 2\n"
                                     << "}\n";

  const std::string mine_out = ws.path("mine.json");
  cmd = tool + " mine -c " + ws.path("cfg.json") + " > " + mine_out + " 2>/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const std::string vocab_json = read_bytes(mine_out);
  CHECK(vocab_json.find("\"kind\"") != std::string::npos);
  CHECK(vocab_json.find("\"frequency\"") != std::string::npos);
  // stdout is the vocabulary artifact itself
  CHECK(vocab_json == read_bytes(ws.path("out") + "/vocab_mined.json"));

  cmd = tool + " eval -c " + ws.path("cfg.json") + " > " + ws.path("eval.txt") + " 2>/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const std::string table = read_bytes(ws.path("eval.txt"));
  CHECK(table.find("image->sentence") != std::string::npos);
  CHECK(table.find("med-rank") != std::string::npos);

  // sweep prints a per-value table and writes sweep.json
  cmd = tool + " sweep -c " + ws.path("cfg.json") + " --param k --values 3 6 > " +
        ws.path("sweep.txt") + " 2>/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const std::string sweep_table = read_bytes(ws.path("sweep.txt"));
  CHECK(sweep_table.find("i2s-R@5") != std::string::npos);
  CHECK(read_bytes(ws.path("out") + "/sweep.json").find("\"points\"") != std::string::npos);

  // bad config exits nonzero with a diagnostic
  cmd = tool + " eval -c /nonexistent.json 2> " + ws.path("err.txt");
  CHECK(std::system(cmd.c_str()) != 0);
  CHECK(read_bytes(ws.path("err.txt")).find("error:") != std::string::npos);
}
#endif

TEST_CASE("cache directory resolves from the environment when unset") {
  Workspace ws;
  const auto corpus = generate(small_corpus_config());
  write_corpus(ws.path("corpus"), corpus);
  PipelineConfig cfg = pipeline_config(ws, ws.path("corpus"));
  cfg.cache_dir.clear();
  ::setenv("VOCABFORGE_CACHE_DIR", ws.path("envcache").c_str(), 1);
  std::ostringstream log;
  Pipeline pipeline(cfg, &log);
  pipeline.run_mine();
  ::unsetenv("VOCABFORGE_CACHE_DIR");
  CHECK(fs::exists(ws.path("envcache")));
  bool has_mine_stage = false;
  for (const auto& entry : fs::directory_iterator(ws.path("envcache"))) {
    has_mine_stage |= entry.path().filename().string().rfind("mine-", 0) == 0;
  }
  CHECK(has_mine_stage);
}
