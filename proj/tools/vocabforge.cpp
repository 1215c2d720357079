#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vocabforge/pipeline.hpp"
#include "vocabforge/synthgen.hpp"

using namespace vocabforge;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// config file plus flag overrides; flags win
struct PipelineCli {
  std::string config_path;
  std::string output_dir, cache_dir, kernel, eval_split;
  double lambda = 0, ap_threshold = 0, delta = 0, reg_c = 0;
  std::uint64_t seed = 0;
  std::uint32_t concepts = 0, min_occurrence = 0, negatives = 0, bins = 0, restarts = 0;
  unsigned workers = 0;
  std::vector<int> ks;

  CLI::Option *o_output = nullptr, *o_cache = nullptr, *o_kernel = nullptr, *o_split = nullptr;
  CLI::Option *o_lambda = nullptr, *o_ap = nullptr, *o_delta = nullptr, *o_c = nullptr;
  CLI::Option *o_seed = nullptr, *o_k = nullptr, *o_minocc = nullptr, *o_neg = nullptr;
  CLI::Option *o_bins = nullptr, *o_restarts = nullptr, *o_workers = nullptr, *o_ks = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "pipeline config JSON")->required();
    o_output = cmd->add_option("--output-dir", output_dir, "artifact directory");
    o_cache = cmd->add_option("--cache-dir", cache_dir, "stage cache directory");
    o_seed = cmd->add_option("--seed", seed, "RNG seed");
    o_lambda = cmd->add_option("--lambda", lambda, "visual similarity weight in [0,1]");
    o_k = cmd->add_option("-k,--concept-count", concepts, "number of concepts");
    o_minocc = cmd->add_option("--min-occurrence", min_occurrence, "term frequency cutoff");
    o_ap = cmd->add_option("--ap-threshold", ap_threshold, "AP filter threshold");
    o_neg = cmd->add_option("--negative-count", negatives, "sampled negatives per classifier");
    o_c = cmd->add_option("--regularization-c", reg_c, "SVM C");
    o_kernel = cmd->add_option("--kernel", kernel, "concept classifier kernel: linear|chi2_map");
    o_bins = cmd->add_option("--chi2-bins", bins, "chi-squared map order");
    o_restarts = cmd->add_option("--kmeans-restarts", restarts, "k-means restarts");
    o_delta = cmd->add_option("--delta", delta, "term match cosine threshold");
    o_ks = cmd->add_option("--ks", ks, "recall cutoffs");
    o_split = cmd->add_option("--eval-split", eval_split, "test|validation");
    o_workers = cmd->add_option("--workers", workers, "worker threads (0 = all)");
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = load_config(config_path);
    if (o_output->count()) cfg.output_dir = output_dir;
    if (o_cache->count()) cfg.cache_dir = cache_dir;
    if (o_seed->count()) cfg.seed = seed;
    if (o_lambda->count()) cfg.lambda = lambda;
    if (o_k->count()) cfg.concept_count = concepts;
    if (o_minocc->count()) cfg.min_occurrence = min_occurrence;
    if (o_ap->count()) cfg.ap_threshold = ap_threshold;
    if (o_neg->count()) cfg.negative_count = negatives;
    if (o_c->count()) cfg.regularization_c = reg_c;
    if (o_kernel->count()) cfg.kernel = kernel;
    if (o_bins->count()) cfg.chi2_bins = bins;
    if (o_restarts->count()) cfg.kmeans_restarts = restarts;
    if (o_delta->count()) cfg.delta_threshold = delta;
    if (o_ks->count()) cfg.recall_ks = ks;
    if (o_split->count()) cfg.eval_split = eval_split;
    if (o_workers->count()) cfg.workers = workers;
    return cfg;
  }
};

void print_sweep_table(const char* param, const std::vector<Pipeline::SweepPoint>& points,
                       const std::vector<int>& ks) {
  std::printf("%-8s", param);
  for (int k : ks) std::printf("  i2s-R@%-3d", k);
  std::printf("  i2s-medr");
  for (int k : ks) std::printf("  s2i-R@%-3d", k);
  std::printf("  s2i-medr\n");
  for (const auto& point : points) {
    std::printf("%-8.3g", point.value);
    for (int k : ks) std::printf("  %9.1f", point.report.image_to_sentence.recall_at.at(k));
    std::printf("  %8.1f", point.report.image_to_sentence.median_rank);
    for (int k : ks) std::printf("  %9.1f", point.report.sentence_to_image.recall_at.at(k));
    std::printf("  %8.1f\n", point.report.sentence_to_image.median_rank);
  }
}

std::string sweep_json(const char* param, const std::vector<Pipeline::SweepPoint>& points) {
  std::string out = "{\n  \"param\": \"" + std::string(param) + "\",\n  \"points\": [\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out += "    {\"value\": " + std::to_string(points[i].value) + ", \"report\": ";
    std::string rep = report_to_json(points[i].report);
    while (!rep.empty() && (rep.back() == '\n' || rep.back() == ' ')) rep.pop_back();
    out += rep + "}";
    out += i + 1 < points.size() ? ",\n" : "\n";
  }
  out += "  ]\n}\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vocabforge: discovers a visual concept vocabulary from a parallel image-text "
               "corpus and evaluates it on bidirectional retrieval and tagging"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a planted-concept corpus");
  SynthConfig synth_cfg;
  std::string synth_out = "corpus";
  synth->add_option("--out", synth_out, "corpus directory");
  synth->add_option("--concepts", synth_cfg.concept_count, "planted concept count");
  synth->add_option("--terms-per-concept", synth_cfg.terms_per_concept);
  synth->add_option("--images-per-concept", synth_cfg.images_per_concept);
  synth->add_option("--dim", synth_cfg.feature_dim, "feature dimension");
  synth->add_option("--sigma", synth_cfg.noise_sigma, "feature noise");
  synth->add_option("--noise-terms", synth_cfg.noise_terms);
  synth->add_option("--embedding-dim", synth_cfg.embedding_dim);
  synth->add_option("--seed", synth_cfg.seed);
  synth->add_option("--test-per-concept", synth_cfg.test_images_per_concept);
  synth->add_option("--validation-per-concept", synth_cfg.validation_images_per_concept);
  synth->add_option("--secondary", synth_cfg.secondary_concepts_per_image,
                    "secondary concepts per image");
  synth->add_option("--visual-confusable", synth_cfg.visual_confusable_pairs);
  synth->add_option("--semantic-confusable", synth_cfg.semantic_confusable_pairs);

  auto* mine = app.add_subcommand("mine", "extract candidate terms, print the vocabulary JSON");
  auto* discover = app.add_subcommand("discover", "mine, filter, fuse and cluster into concepts");
  auto* train = app.add_subcommand("train", "train concept classifiers");
  auto* eval = app.add_subcommand("eval", "bidirectional retrieval evaluation");
  auto* tag = app.add_subcommand("tag", "tag the eval split images");
  auto* sweep = app.add_subcommand("sweep", "rerun eval over a lambda or concept-count grid");

  PipelineCli mine_cli, discover_cli, train_cli, eval_cli, tag_cli, sweep_cli;
  mine_cli.attach(mine);
  discover_cli.attach(discover);
  train_cli.attach(train);
  eval_cli.attach(eval);
  tag_cli.attach(tag);
  sweep_cli.attach(sweep);

  std::string sweep_param;
  std::vector<double> sweep_values;
  sweep->add_option("--param", sweep_param, "lambda or k")->required();
  sweep->add_option("--values", sweep_values, "grid values")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const SynthCorpus corpus = generate(synth_cfg);
      write_corpus(synth_out, corpus);
      std::fprintf(stderr, "wrote corpus (%zu images, %zu concepts) to %s\n",
                   corpus.features.rows(), corpus.concept_terms.size(), synth_out.c_str());
      return 0;
    }

    if (mine->parsed()) {
      Pipeline pipeline(mine_cli.resolve(), &std::cerr);
      pipeline.run_mine();
      std::cout << read_text(pipeline.config().output_dir + "/vocab_mined.json");
      return 0;
    }
    if (discover->parsed()) {
      Pipeline pipeline(discover_cli.resolve(), &std::cerr);
      pipeline.run_discover();
      std::fprintf(stderr, "concepts written to %s/concepts.json\n",
                   pipeline.config().output_dir.c_str());
      return 0;
    }
    if (train->parsed()) {
      Pipeline pipeline(train_cli.resolve(), &std::cerr);
      pipeline.run_train();
      return 0;
    }
    if (eval->parsed()) {
      Pipeline pipeline(eval_cli.resolve(), &std::cerr);
      pipeline.run_eval();
      std::cout << format_report_table(pipeline.last_report());
      return 0;
    }
    if (tag->parsed()) {
      Pipeline pipeline(tag_cli.resolve(), &std::cerr);
      pipeline.run_tag();
      std::cout << read_text(pipeline.config().output_dir + "/tags.jsonl");
      return 0;
    }
    if (sweep->parsed()) {
      Pipeline pipeline(sweep_cli.resolve(), &std::cerr);
      std::vector<Pipeline::SweepPoint> points;
      if (sweep_param == "lambda") {
        points = pipeline.sweep_lambda(sweep_values);
      } else if (sweep_param == "k") {
        std::vector<std::uint32_t> ks;
        for (double v : sweep_values) ks.push_back(static_cast<std::uint32_t>(v));
        points = pipeline.sweep_concept_count(ks);
      } else {
        throw Error("sweep: --param must be \"lambda\" or \"k\"");
      }
      print_sweep_table(sweep_param.c_str(), points, pipeline.config().recall_ks);
      std::ofstream out(pipeline.config().output_dir + "/sweep.json", std::ios::trunc);
      out << sweep_json(sweep_param.c_str(), points);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
