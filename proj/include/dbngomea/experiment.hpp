#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dbngomea/archive.hpp"
#include "dbngomea/datagen.hpp"
#include "dbngomea/metrics.hpp"
#include "dbngomea/mogomea.hpp"
#include "dbngomea/postopt.hpp"
#include "dbngomea/sogomea.hpp"

namespace dbngomea {

using json = nlohmann::json;

/// Invalid experiment configuration (exit code 1).
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode : std::uint8_t { so, mo, postopt, generate, evaluate };
enum class DiscretizationPolicy : std::uint8_t { ew, ef, bd };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::so: return "so";
    case Mode::mo: return "mo";
    case Mode::postopt: return "postopt";
    case Mode::generate: return "generate";
    case Mode::evaluate: return "evaluate";
  }
  return "?";
}
inline std::string to_string(DiscretizationPolicy d) {
  switch (d) {
    case DiscretizationPolicy::ew: return "ew";
    case DiscretizationPolicy::ef: return "ef";
    case DiscretizationPolicy::bd: return "bd";
  }
  return "?";
}
inline std::string to_string(DistributionKind k) {
  switch (k) {
    case DistributionKind::equal_width: return "ew";
    case DistributionKind::equal_frequency: return "ef";
    case DistributionKind::random: return "random";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (auto m : {Mode::so, Mode::mo, Mode::postopt, Mode::generate, Mode::evaluate}) {
    if (to_string(m) == s) return m;
  }
  throw config_error("unknown mode '" + s + "'");
}
inline DiscretizationPolicy parse_discretization(const std::string& s) {
  for (auto d : {DiscretizationPolicy::ew, DiscretizationPolicy::ef, DiscretizationPolicy::bd}) {
    if (to_string(d) == s) return d;
  }
  throw config_error("unknown discretization '" + s + "'");
}
inline DistributionKind parse_distribution(const std::string& s) {
  for (auto k : {DistributionKind::equal_width, DistributionKind::equal_frequency, DistributionKind::random}) {
    if (to_string(k) == s) return k;
  }
  throw config_error("unknown distribution '" + s + "'");
}

struct ExperimentConfig {
  std::uint64_t seed = 1;
  Mode mode = Mode::so;
  DiscretizationPolicy discretization = DiscretizationPolicy::ew;
  DistributionKind distribution = DistributionKind::random;
  std::size_t n_vars = 8;
  std::size_t n_samples = 400;
  std::size_t n_networks = 1;
  std::optional<double> max_seconds;
  std::optional<std::uint64_t> max_evaluations;
  int bin_min = kDefaultBinMin;
  std::optional<int> bin_max;  // default 15, or 9 in mo mode
  std::size_t mc_kl = 1000;       // Monte-Carlo samples for the expert KL objective
  std::size_t test_samples = 50000;
  std::uint64_t postopt_evaluations = 2000;
  std::filesystem::path output = "out";
  std::size_t workers = 1;
  bool timing = true;  // false zeroes every wall-clock field in outputs

  int effective_bin_max() const {
    if (bin_max) return *bin_max;
    return mode == Mode::mo ? kMultiObjectiveBinMax : kDefaultBinMax;
  }

  Budget budget() const { return Budget{max_evaluations, max_seconds}; }

  void validate() const {
    if (bin_min < 2) throw config_error("bin_min must be at least 2");
    if (effective_bin_max() < bin_min) throw config_error("bin_max must be at least bin_min");
    if (effective_bin_max() > 255) throw config_error("bin_max must be at most 255");
    if (n_vars < 2) throw config_error("n_vars must be at least 2");
    if (n_samples < 1) throw config_error("n_samples must be positive");
    if (n_networks < 1) throw config_error("n_networks must be positive");
    if (mc_kl < 1) throw config_error("mc_kl must be positive");
    if (test_samples < 1) throw config_error("test_samples must be positive");
    if (workers < 1) throw config_error("workers must be positive");
    if (max_seconds && !(*max_seconds >= 0.0)) throw config_error("max_seconds must be non-negative");
  }

  /// Fields that determine results; output location, workers and timing excluded.
  json canonical() const {
    json j;
    j["seed"] = seed;
    j["mode"] = to_string(mode);
    j["discretization"] = to_string(discretization);
    j["distribution"] = to_string(distribution);
    j["n_vars"] = n_vars;
    j["n_samples"] = n_samples;
    j["n_networks"] = n_networks;
    j["max_seconds"] = max_seconds ? json(*max_seconds) : json(nullptr);
    j["max_evaluations"] = max_evaluations ? json(*max_evaluations) : json(nullptr);
    j["bin_min"] = bin_min;
    j["bin_max"] = effective_bin_max();
    j["mc_kl"] = mc_kl;
    j["test_samples"] = test_samples;
    j["postopt_evaluations"] = postopt_evaluations;
    return j;
  }

  std::string hash() const { return hex64(fnv1a(canonical().dump())); }
};

// ---------------------------------------------------------------------------
// Serialization

inline json meta_to_json(const std::vector<VariableMeta>& meta) {
  json vars = json::array();
  for (const auto& m : meta) {
    json v;
    v["name"] = m.name;
    v["kind"] = m.is_discrete() ? "discrete" : "continuous";
    if (m.is_discrete()) v["cardinality"] = m.cardinality;
    vars.push_back(v);
  }
  return vars;
}

inline std::vector<VariableMeta> meta_from_json(const json& vars) {
  std::vector<VariableMeta> meta;
  for (const auto& v : vars) {
    VariableMeta m;
    m.name = v.at("name").get<std::string>();
    const auto kind = v.at("kind").get<std::string>();
    if (kind == "discrete") {
      m.kind = VariableKind::discrete;
      m.cardinality = v.at("cardinality").get<int>();
    } else if (kind == "continuous") {
      m.kind = VariableKind::continuous;
      m.raw_range = {0.0, 1.0};
    } else {
      throw config_error("unknown variable kind '" + kind + "'");
    }
    validate(m);
    meta.push_back(std::move(m));
  }
  return meta;
}

inline json edges_to_json(const Dag& dag) {
  json e = json::array();
  for (const auto& [a, b] : dag.edges()) e.push_back({a, b});
  return e;
}

inline Dag dag_from_json(std::size_t n, const json& edges) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (const auto& x : edges) e.emplace_back(x.at(0).get<std::size_t>(), x.at(1).get<std::size_t>());
  return Dag::from_edges(n, e);
}

inline json provenance(const ExperimentConfig& cfg) {
  return json{{"seed", cfg.seed}, {"config_hash", cfg.hash()}};
}

inline json network_to_json(const GroundTruthNetwork& net, std::size_t id, const ExperimentConfig& cfg) {
  json j = provenance(cfg);
  j["id"] = id;
  j["distribution"] = to_string(cfg.distribution);
  j["variables"] = meta_to_json(net.meta);
  j["levels"] = net.levels;
  j["edges"] = edges_to_json(net.dag);
  j["cpts"] = net.cpts;
  j["ranges"] = net.cuts;
  return j;
}

inline GroundTruthNetwork network_from_json(const json& j) {
  GroundTruthNetwork net;
  net.meta = meta_from_json(j.at("variables"));
  net.levels = j.at("levels").get<std::vector<int>>();
  net.dag = dag_from_json(net.meta.size(), j.at("edges"));
  net.cpts = j.at("cpts").get<std::vector<std::vector<std::vector<double>>>>();
  net.cuts = j.at("ranges").get<std::vector<std::vector<double>>>();
  net.validate();
  return net;
}

inline json model_to_json(const SolutionModel& m, const std::vector<VariableMeta>& meta) {
  json j;
  j["variables"] = meta_to_json(meta);
  j["edges"] = edges_to_json(m.dag);
  j["bins"] = m.bins;
  j["boundaries"] = m.boundaries;
  return j;
}

inline SolutionModel model_from_json(const json& j) {
  const auto meta = meta_from_json(j.at("variables"));
  SolutionModel m;
  m.dag = dag_from_json(meta.size(), j.at("edges"));
  m.bins = j.at("bins").get<std::vector<int>>();
  m.boundaries = j.at("boundaries").get<std::vector<std::vector<double>>>();
  m.validate(meta);
  return m;
}

inline json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw config_error("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw config_error("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw config_error("cannot write " + p.string());
  out << text;
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

/// Delimited dataset: a provenance comment, a kinds comment, a header of
/// variable names, one sample per row.
inline std::string dataset_to_csv(const RawDataset& d, const std::string& provenance_line) {
  std::ostringstream out;
  out << "# " << provenance_line << "\n# kinds=";
  for (std::size_t v = 0; v < d.n_vars(); ++v) {
    if (v) out << ',';
    if (d.meta[v].is_discrete()) {
      out << 'd' << d.meta[v].cardinality;
    } else {
      out << 'c';
    }
  }
  out << "\n";
  for (std::size_t v = 0; v < d.n_vars(); ++v) out << (v ? "," : "") << d.meta[v].name;
  out << "\n";
  for (std::size_t s = 0; s < d.n_samples(); ++s) {
    for (std::size_t v = 0; v < d.n_vars(); ++v) {
      if (v) out << ',';
      out << format_double(d.columns[v][s]);
    }
    out << "\n";
  }
  return out.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

/// Reads a delimited dataset. Without a kinds comment every column is
/// continuous.
inline RawDataset read_dataset(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw config_error("cannot open " + p.string());
  std::string line;
  std::vector<std::string> kinds;
  RawDataset d;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("kinds=");
      if (pos != std::string::npos) kinds = split(line.substr(pos + 6), ',');
      continue;
    }
    const auto fields = split(line, ',');
    if (!header) {
      header = true;
      if (!kinds.empty() && kinds.size() != fields.size()) throw config_error(p.string() + ": kinds/header mismatch");
      for (std::size_t v = 0; v < fields.size(); ++v) {
        VariableMeta m;
        m.name = fields[v];
        const std::string k = kinds.empty() ? "c" : kinds[v];
        if (k == "c") {
          m.kind = VariableKind::continuous;
          m.raw_range = {0.0, 1.0};
        } else if (k.size() > 1 && k[0] == 'd') {
          m.kind = VariableKind::discrete;
          m.cardinality = std::stoi(k.substr(1));
        } else {
          throw config_error(p.string() + ": bad kind '" + k + "'");
        }
        d.meta.push_back(m);
      }
      d.columns.resize(d.meta.size());
      continue;
    }
    if (fields.size() != d.meta.size()) {
      throw config_error(p.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(d.meta.size()) +
                         " fields");
    }
    for (std::size_t v = 0; v < fields.size(); ++v) {
      double x = 0.0;
      const auto& f = fields[v];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), x);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw config_error(p.string() + ":" + std::to_string(line_no) + ": bad number '" + f + "'");
      }
      d.columns[v].push_back(x);
    }
  }
  if (!header) throw config_error(p.string() + ": missing header");
  return d;
}

inline std::string genotype_string(const Genotype& g) {
  std::string s;
  for (auto e : g.edges) s.push_back(static_cast<char>('0' + e));
  s.push_back('|');
  for (std::size_t i = 0; i < g.bins.size(); ++i) {
    if (i) s.push_back('.');
    s += std::to_string(g.bins[i]);
  }
  return s;
}

inline std::string archive_to_csv(const ElitistArchive& archive, const std::string& provenance_line) {
  std::ostringstream out;
  out << "# " << provenance_line << "\n";
  out << "genotype,ll,complexity,kl_expert,constraint\n";
  for (const auto& e : archive.entries()) {
    out << genotype_string(e.genotype) << ',' << format_double(e.objectives.ll) << ','
        << format_double(e.objectives.complexity) << ',' << format_double(e.objectives.kl_expert) << ','
        << format_double(e.objectives.constraint) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Learning

struct LearnOutcome {
  SolutionModel model;
  double fitness = 0.0;
  std::uint64_t evaluations = 0;
  double elapsed_s = 0.0;
  bool budget_degraded = false;
  std::vector<json> log;
  std::optional<ElitistArchive> archive;
  std::vector<SolutionModel> archive_models;  // decoded archive entries, same order
  MoAcceptanceStats acceptance;
};

inline Discretization evaluator_policy(DiscretizationPolicy d) {
  return d == DiscretizationPolicy::ew ? Discretization::equal_width : Discretization::equal_frequency;
}

/// Single-objective learning. With the Bayesian policy the structure is
/// learned under equal-frequency bins and the boundaries are then replaced by
/// the Bayesian discretizer given each variable's Markov blanket.
inline LearnOutcome learn_so(const NormalizedDataset& data, DiscretizationPolicy policy, const LearnerConfig& config,
                             int bin_min, int bin_max, Rng& rng) {
  GenomeLayout layout(data.meta, bin_min, bin_max);
  EvaluatorOptions opts;
  opts.policy = evaluator_policy(policy);
  DensityEvaluator eval(data, layout, opts);
  auto run_result = run(config, eval, rng);
  LearnOutcome out;
  out.evaluations = run_result.evaluations;
  out.elapsed_s = run_result.elapsed_s;
  out.budget_degraded = run_result.budget_degraded;
  for (const auto& r : run_result.log) {
    out.log.push_back(json{{"elapsed_s", r.elapsed_s},
                           {"evaluations", r.evaluations},
                           {"population", r.population},
                           {"population_sizes", r.population_sizes},
                           {"best_fitness", r.best_fitness},
                           {"partial", r.partial}});
  }
  out.model = eval.model_of(run_result.best.genotype);
  if (policy == DiscretizationPolicy::bd) {
    BayesianDiscretizationOptions bd;
    bd.bin_max = bin_max;
    out.model = refine_bayesian(out.model, data, bd);
  }
  out.fitness = evaluate_model(out.model, data).total();
  return out;
}

/// Tri-objective learning against an expert; the reported model is the
/// feasible archive member with the best fitness (ll - complexity).
inline LearnOutcome learn_mo(const NormalizedDataset& data, DiscretizationPolicy policy, const MoConfig& config,
                             const SolutionModel& expert, std::size_t mc, std::uint64_t mc_seed, int bin_min,
                             int bin_max, Rng& rng) {
  if (policy == DiscretizationPolicy::bd) throw config_error("mo mode supports ew and ef discretization only");
  GenomeLayout layout(data.meta, bin_min, bin_max);
  EvaluatorOptions opts;
  opts.policy = evaluator_policy(policy);
  MoProblem problem(data, layout, opts, expert, mc, mc_seed);
  auto res = run_mo(config, problem, rng);
  LearnOutcome out;
  out.evaluations = res.evaluations;
  out.elapsed_s = res.elapsed_s;
  out.budget_degraded = res.budget_degraded;
  out.acceptance = res.acceptance;
  for (const auto& r : res.log) {
    out.log.push_back(json{{"elapsed_s", r.elapsed_s},
                           {"evaluations", r.evaluations},
                           {"population", r.population},
                           {"population_size", r.population_size},
                           {"clusters", r.clusters},
                           {"archive_size", r.archive_size},
                           {"partial", r.partial}});
  }
  double best = -std::numeric_limits<double>::infinity();
  std::optional<std::size_t> best_index;
  for (std::size_t i = 0; i < res.archive.entries().size(); ++i) {
    const auto& e = res.archive.entries()[i];
    out.archive_models.push_back(problem.evaluator().model_of(e.genotype));
    const double f = e.objectives.ll - e.objectives.complexity;
    const bool better = !best_index || (e.objectives.feasible() && !res.archive.entries()[*best_index].objectives.feasible()) ||
                        (e.objectives.feasible() == res.archive.entries()[*best_index].objectives.feasible() && f > best);
    if (better) {
      best = f;
      best_index = i;
    }
  }
  out.model = out.archive_models.at(*best_index);
  out.fitness = evaluate_model(out.model, data).total();
  out.archive = std::move(res.archive);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct MetricsRow {
  std::size_t network_id = 0;
  std::string algorithm;
  std::size_t n_samples = 0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double kl = 0.0;
  double fitness = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t evaluations = 0;
  std::uint64_t seed = 0;
};

inline std::string metrics_header() {
  return "network_id,algorithm,n_samples,accuracy,sensitivity,kl,fitness,wall_time_s,evaluations,seed\n";
}

inline std::string metrics_line(const MetricsRow& r) {
  std::ostringstream out;
  out << r.network_id << ',' << r.algorithm << ',' << r.n_samples << ',' << format_double(r.accuracy) << ','
      << format_double(r.sensitivity) << ',' << format_double(r.kl) << ',' << format_double(r.fitness) << ','
      << format_double(r.wall_time_s) << ',' << r.evaluations << ',' << r.seed << "\n";
  return out.str();
}

/// Named sub-streams of the root seed.
struct Streams {
  std::uint64_t root;
  Rng network(std::size_t id) const { return make_rng(root, "network", id); }
  Rng expert(std::size_t id) const { return make_rng(root, "expert", id); }
  Rng train(std::size_t id, std::size_t n) const { return make_rng(root, "train/" + std::to_string(n), id); }
  Rng test(std::size_t id) const { return make_rng(root, "test", id); }
  Rng learn(std::size_t id, std::size_t n, const std::string& algo) const {
    return make_rng(root, "learn/" + algo + "/" + std::to_string(n), id);
  }
  std::uint64_t mc(std::size_t id, std::size_t n) const { return derive_seed(root, "mc/" + std::to_string(n), id); }
  Rng postopt(std::size_t id, std::size_t n) const { return make_rng(root, "postopt/" + std::to_string(n), id); }
};

struct EvaluatedModel {
  StructureScore structure;
  KlEstimate kl;
  double fitness = 0.0;
};

inline EvaluatedModel evaluate_against_truth(const SolutionModel& model, const NormalizedDataset& train,
                                             const GroundTruthNetwork& truth, const RawDataset& test) {
  EvaluatedModel e;
  e.structure = structure_score(model.dag, truth.dag);
  const FittedModel fitted(model, train);
  e.kl = kl_to_truth(fitted, truth, test, train);
  e.fitness = evaluate_model(model, train).total();
  return e;
}

inline MetricsRow make_row(std::size_t id, const std::string& algo, std::size_t n, const EvaluatedModel& e,
                           double wall, std::uint64_t evals, const ExperimentConfig& cfg) {
  MetricsRow r;
  r.network_id = id;
  r.algorithm = algo;
  r.n_samples = n;
  r.accuracy = e.structure.accuracy();
  r.sensitivity = e.structure.sensitivity();
  r.kl = e.kl.value;
  r.fitness = e.fitness;
  r.wall_time_s = cfg.timing ? wall : 0.0;
  r.evaluations = evals;
  r.seed = cfg.seed;
  return r;
}

inline std::string log_to_jsonl(const std::vector<json>& log, const ExperimentConfig& cfg) {
  std::string out;
  for (auto rec : log) {
    if (!cfg.timing) rec["elapsed_s"] = 0.0;
    rec["seed"] = cfg.seed;
    rec["config_hash"] = cfg.hash();
    out += rec.dump() + "\n";
  }
  return out;
}

struct PipelineSummary {
  std::vector<MetricsRow> rows;
  bool budget_degraded = false;
  std::size_t files_written = 0;
};

inline std::string cell_tag(std::size_t id, std::size_t n) {
  return std::to_string(id) + "_n" + std::to_string(n);
}

/// One network: generate, sample, learn, optionally post-optimize, evaluate.
/// Writes all artifacts of the cell and returns its metrics rows.
inline PipelineSummary run_cell(const ExperimentConfig& cfg, std::size_t id) {
  const Streams streams{cfg.seed};
  const auto& dir = cfg.output;
  const std::string prov = "seed=" + std::to_string(cfg.seed) + " config_hash=" + cfg.hash();
  PipelineSummary out;

  auto net_rng = streams.network(id);
  const auto net = random_network(cfg.n_vars, cfg.distribution, net_rng);
  write_json(dir / "networks" / ("net_" + std::to_string(id) + ".json"), network_to_json(net, id, cfg));
  ++out.files_written;

  std::optional<ExpertNetwork> expert;
  if (net.dag.edge_count() >= 2) {
    auto ex_rng = streams.expert(id);
    expert = make_expert(net, ex_rng);
    json j = provenance(cfg);
    j["id"] = id;
    j["model"] = model_to_json(expert->model(), net.meta);
    write_json(dir / "experts" / ("expert_" + std::to_string(id) + ".json"), j);
    ++out.files_written;
  }

  const std::size_t n = cfg.n_samples;
  auto train_rng = streams.train(id, n);
  const auto raw = sample(net, n, train_rng);
  write_text(dir / "data" / ("train_" + cell_tag(id, n) + ".csv"), dataset_to_csv(raw, prov));
  ++out.files_written;
  if (cfg.mode == Mode::generate) return out;

  const auto data = normalize(raw);
  auto test_rng = streams.test(id);
  const auto test = sample(net, cfg.test_samples, test_rng);
  const std::string disc = to_string(cfg.discretization);

  auto emit = [&](const std::string& algo, const LearnOutcome& lo) {
    const auto tag = algo + "_" + cell_tag(id, n);
    json sol = provenance(cfg);
    sol["id"] = id;
    sol["algorithm"] = algo;
    sol["n_samples"] = n;
    sol["fitness"] = lo.fitness;
    sol["evaluations"] = lo.evaluations;
    sol["normalization"] = data.normalization;
    sol["model"] = model_to_json(lo.model, data.meta);
    write_json(dir / "solutions" / (tag + ".json"), sol);
    write_text(dir / "logs" / (tag + ".jsonl"), log_to_jsonl(lo.log, cfg));
    out.files_written += 2;
    out.budget_degraded = out.budget_degraded || lo.budget_degraded;
    const auto e = evaluate_against_truth(lo.model, data, net, test);
    out.rows.push_back(make_row(id, algo, n, e, lo.elapsed_s, lo.evaluations, cfg));
  };

  if (cfg.mode == Mode::so || cfg.mode == Mode::postopt) {
    LearnerConfig lc;
    lc.budget = cfg.budget();
    auto rng = streams.learn(id, n, "so-" + disc);
    const auto lo = learn_so(data, cfg.discretization, lc, cfg.bin_min, cfg.effective_bin_max(), rng);
    emit("so-" + disc, lo);
    if (cfg.mode == Mode::postopt) {
      auto prng = streams.postopt(id, n);
      PostOptConfig pc;
      pc.max_evaluations = cfg.postopt_evaluations;
      const auto po = optimize_boundaries(lo.model, data, pc, prng);
      LearnOutcome plo;
      plo.model = po.model;
      plo.fitness = po.fitness_after;
      plo.evaluations = lo.evaluations + po.evaluations;
      plo.elapsed_s = lo.elapsed_s;
      for (std::size_t i = 0; i < po.trajectory.size(); ++i) {
        plo.log.push_back(json{{"elapsed_s", 0.0}, {"step", i}, {"best_fitness", po.trajectory[i]}});
      }
      emit("so-" + disc + "-postopt", plo);
    }
  } else if (cfg.mode == Mode::mo) {
    if (!expert) throw config_error("network " + std::to_string(id) + " has fewer than 2 edges; no expert possible");
    MoConfig mc;
    mc.budget = cfg.budget();
    auto rng = streams.learn(id, n, "mo-" + disc);
    auto lo = learn_mo(data, cfg.discretization, mc, expert->model(), cfg.mc_kl, streams.mc(id, n), cfg.bin_min,
                       cfg.effective_bin_max(), rng);
    const auto tag = "mo-" + disc + "_" + cell_tag(id, n);
    write_text(dir / "archives" / (tag + ".csv"), archive_to_csv(*lo.archive, prov));
    ++out.files_written;
    emit("mo-" + disc, lo);
    // archive member closest to the truth, for oracle comparisons
    std::optional<StructureScore> best;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < lo.archive_models.size(); ++i) {
      const auto s = structure_score(lo.archive_models[i].dag, net.dag);
      if (!best || s.accuracy() > best->accuracy()) {
        best = s;
        best_i = i;
      }
    }
    const auto e = evaluate_against_truth(lo.archive_models[best_i], data, net, test);
    out.rows.push_back(make_row(id, "mo-" + disc + "-best-accuracy", n, e, lo.elapsed_s, lo.evaluations, cfg));
  } else {
    throw config_error("pipeline does not support mode '" + to_string(cfg.mode) + "'");
  }
  return out;
}

/// Runs every network cell on `cfg.workers` threads and writes metrics.csv
/// ordered by network id.
inline PipelineSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output);
  write_json(cfg.output / "config.json", json{{"config", cfg.canonical()}, {"config_hash", cfg.hash()}});

  std::vector<PipelineSummary> cells(cfg.n_networks);
  std::vector<std::exception_ptr> errors(cfg.n_networks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t id; (id = next.fetch_add(1)) < cfg.n_networks;) {
      try {
        cells[id] = run_cell(cfg, id);
      } catch (...) {
        errors[id] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(cfg.workers, cfg.n_networks);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PipelineSummary summary;
  for (auto& c : cells) {
    summary.rows.insert(summary.rows.end(), c.rows.begin(), c.rows.end());
    summary.budget_degraded = summary.budget_degraded || c.budget_degraded;
    summary.files_written += c.files_written;
  }
  if (cfg.mode != Mode::generate) {
    std::string text = metrics_header();
    for (const auto& r : summary.rows) text += metrics_line(r);
    write_text(cfg.output / "metrics.csv", text);
    ++summary.files_written;
  }
  return summary;
}

}  // namespace dbngomea
