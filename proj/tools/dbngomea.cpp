// Command-line front end: generate, learn, postopt, evaluate, pipeline.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dbngomea/experiment.hpp"

namespace fs = std::filesystem;
using namespace dbngomea;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDegraded = 2;

struct Flags {
  ExperimentConfig cfg;
  std::string mode = "so";
  std::string discretization = "ew";
  std::string distribution = "random";
  double max_seconds = -1.0;
  long long max_evaluations = -1;
  int bin_max = 0;
  std::string output = "out";
  std::string timing = "on";
  // file inputs
  std::string data, expert, solution, network;
  long long network_id = -1;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--seed", f.cfg.seed, "Root seed");
  app->add_option("--output,-o", f.output, "Output directory (relative to DBNGOMEA_OUTPUT_ROOT if set)");
  app->add_option("--timing", f.timing, "on|off; off zeroes wall-clock fields")->check(CLI::IsMember({"on", "off"}));
}

void add_budget(CLI::App* app, Flags& f) {
  app->add_option("--max-seconds", f.max_seconds, "Wall-clock budget per run");
  app->add_option("--max-evaluations", f.max_evaluations, "Evaluation budget per run");
  app->add_option("--bin-min", f.cfg.bin_min, "Smallest bin count");
  app->add_option("--bin-max", f.bin_max, "Largest bin count (default 15, 9 in mo mode)");
  app->add_option("--discretization,-d", f.discretization, "ew|ef|bd")->check(CLI::IsMember({"ew", "ef", "bd"}));
  app->add_option("--mc-kl", f.cfg.mc_kl, "Monte-Carlo samples for the expert KL objective");
}

void add_generation(CLI::App* app, Flags& f) {
  app->add_option("--n-vars", f.cfg.n_vars, "Variables per network");
  app->add_option("--n-samples", f.cfg.n_samples, "Training samples per network");
  app->add_option("--n-networks", f.cfg.n_networks, "Number of networks");
  app->add_option("--distribution", f.distribution, "ew|ef|random")
      ->check(CLI::IsMember({"ew", "ef", "random"}));
}

void finalize(Flags& f) {
  auto& c = f.cfg;
  c.mode = parse_mode(f.mode);
  c.discretization = parse_discretization(f.discretization);
  c.distribution = parse_distribution(f.distribution);
  if (f.max_seconds >= 0.0) c.max_seconds = f.max_seconds;
  if (f.max_evaluations >= 0) c.max_evaluations = static_cast<std::uint64_t>(f.max_evaluations);
  if (f.bin_max > 0) c.bin_max = f.bin_max;
  c.timing = f.timing == "on";
  fs::path out = f.output;
  if (const char* root = std::getenv("DBNGOMEA_OUTPUT_ROOT"); root && *root && out.is_relative()) out = fs::path(root) / out;
  c.output = out;
  if (const char* w = std::getenv("DBNGOMEA_WORKERS"); w && *w) {
    try {
      const long v = std::stol(w);
      if (v < 1) throw std::invalid_argument("");
      c.workers = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw config_error("DBNGOMEA_WORKERS must be a positive integer");
    }
  }
  c.validate();
}

std::string provenance_line(const ExperimentConfig& c) {
  return "seed=" + std::to_string(c.seed) + " config_hash=" + c.hash();
}

int cmd_learn(const Flags& f) {
  const auto& c = f.cfg;
  if (c.mode != Mode::so && c.mode != Mode::mo) throw config_error("learn supports --mode so|mo");
  const auto raw = read_dataset(f.data);
  const auto data = normalize(raw);
  auto rng = make_rng(c.seed, "learn");
  LearnOutcome lo;
  if (c.mode == Mode::so) {
    LearnerConfig lc;
    lc.budget = c.budget();
    lo = learn_so(data, c.discretization, lc, c.bin_min, c.effective_bin_max(), rng);
  } else {
    if (f.expert.empty()) throw config_error("mo mode needs --expert");
    auto ej = read_json(f.expert);
    const auto expert = model_from_json(ej.contains("model") ? ej.at("model") : ej);
    MoConfig mc;
    mc.budget = c.budget();
    lo = learn_mo(data, c.discretization, mc, expert, c.mc_kl, derive_seed(c.seed, "mc"), c.bin_min,
                  c.effective_bin_max(), rng);
    write_text(c.output / "archive.csv", archive_to_csv(*lo.archive, provenance_line(c)));
  }
  json sol = provenance(c);
  sol["algorithm"] = to_string(c.mode) + "-" + to_string(c.discretization);
  sol["n_samples"] = data.n;
  sol["fitness"] = lo.fitness;
  sol["evaluations"] = lo.evaluations;
  sol["normalization"] = data.normalization;
  sol["model"] = model_to_json(lo.model, data.meta);
  write_json(c.output / "solution.json", sol);
  write_text(c.output / "log.jsonl", log_to_jsonl(lo.log, c));
  std::cout << "fitness " << format_double(lo.fitness) << " evaluations " << lo.evaluations << "\n";
  return lo.budget_degraded ? kExitDegraded : kExitOk;
}

int cmd_postopt(const Flags& f) {
  const auto& c = f.cfg;
  const auto data = normalize(read_dataset(f.data));
  const auto sj = read_json(f.solution);
  const auto model = model_from_json(sj.contains("model") ? sj.at("model") : sj);
  PostOptConfig pc;
  pc.max_evaluations = c.postopt_evaluations;
  auto rng = make_rng(c.seed, "postopt");
  const auto po = optimize_boundaries(model, data, pc, rng);
  json out = provenance(c);
  out["algorithm"] = "postopt";
  out["fitness_before"] = po.fitness_before;
  out["fitness"] = po.fitness_after;
  out["evaluations"] = po.evaluations;
  out["clamped_parameters"] = po.clamped_parameters;
  out["normalization"] = data.normalization;
  out["model"] = model_to_json(po.model, data.meta);
  write_json(c.output / "solution.json", out);
  std::cout << "fitness " << format_double(po.fitness_before) << " -> " << format_double(po.fitness_after) << "\n";
  return kExitOk;
}

int cmd_evaluate(const Flags& f) {
  const auto& c = f.cfg;
  const auto nj = read_json(f.network);
  const auto net = network_from_json(nj);
  const auto train = normalize(read_dataset(f.data));
  const auto sj = read_json(f.solution);
  const auto model = model_from_json(sj.contains("model") ? sj.at("model") : sj);
  const std::uint64_t root = nj.value("seed", c.seed);
  const auto id = f.network_id >= 0 ? static_cast<std::size_t>(f.network_id) : nj.value("id", std::size_t{0});
  auto test_rng = Streams{root}.test(id);
  const auto test = sample(net, c.test_samples, test_rng);
  const auto e = evaluate_against_truth(model, train, net, test);
  MetricsRow r = make_row(id, sj.value("algorithm", std::string("unknown")), train.n, e, 0.0,
                          sj.value("evaluations", std::uint64_t{0}), c);
  r.seed = root;
  write_text(c.output / "metrics.csv", metrics_header() + metrics_line(r));
  std::cout << metrics_header() << metrics_line(r);
  return kExitOk;
}

int cmd_pipeline(const ExperimentConfig& c) {
  const auto summary = run_experiment(c);
  std::cout << "wrote " << summary.files_written << " files to " << c.output.string() << "\n";
  if (!summary.rows.empty()) {
    std::cout << metrics_header();
    for (const auto& r : summary.rows) std::cout << metrics_line(r);
  }
  return summary.budget_degraded ? kExitDegraded : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian network structure and discretization learning with GOMEA"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("generate", "Generate ground-truth networks, experts and training data");
  add_common(gen, f);
  add_generation(gen, f);

  auto* learn = app.add_subcommand("learn", "Learn a network from a data set");
  add_common(learn, f);
  add_budget(learn, f);
  learn->add_option("--mode,-m", f.mode, "so|mo")->check(CLI::IsMember({"so", "mo"}));
  learn->add_option("--data", f.data, "Training data set (CSV)")->required();
  learn->add_option("--expert", f.expert, "Expert network (JSON), mo mode only");

  auto* post = app.add_subcommand("postopt", "Optimize the boundaries of a learned solution");
  add_common(post, f);
  post->add_option("--data", f.data, "Training data set (CSV)")->required();
  post->add_option("--solution", f.solution, "Solution file (JSON)")->required();
  post->add_option("--evaluations", f.cfg.postopt_evaluations, "Boundary evaluations");

  auto* eval = app.add_subcommand("evaluate", "Score a solution against its ground-truth network");
  add_common(eval, f);
  eval->add_option("--network", f.network, "Ground-truth network (JSON)")->required();
  eval->add_option("--data", f.data, "Training data set used for learning (CSV)")->required();
  eval->add_option("--solution", f.solution, "Solution file (JSON)")->required();
  eval->add_option("--test-samples", f.cfg.test_samples, "Held-out samples for KL");
  eval->add_option("--network-id", f.network_id, "Network id for the test stream (default from file)");

  auto* pipe = app.add_subcommand("pipeline", "Generate, learn, post-optimize and evaluate");
  add_common(pipe, f);
  add_generation(pipe, f);
  add_budget(pipe, f);
  pipe->add_option("--mode,-m", f.mode, "so|mo|postopt|generate")
      ->check(CLI::IsMember({"so", "mo", "postopt", "generate"}));
  pipe->add_option("--test-samples", f.cfg.test_samples, "Held-out samples for KL");
  pipe->add_option("--postopt-evaluations", f.cfg.postopt_evaluations, "Boundary evaluations in postopt mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      f.mode = "generate";
      finalize(f);
      return cmd_pipeline(f.cfg);
    }
    if (post->parsed()) f.mode = "postopt";
    if (eval->parsed()) f.mode = "evaluate";
    finalize(f);
    if (learn->parsed()) return cmd_learn(f);
    if (post->parsed()) return cmd_postopt(f);
    if (eval->parsed()) return cmd_evaluate(f);
    return cmd_pipeline(f.cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
