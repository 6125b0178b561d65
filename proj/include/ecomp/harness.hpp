#pragma once

#include "ecomp/checkpoint.hpp"
#include "ecomp/dataio.hpp"
#include "ecomp/queens.hpp"
#include "ecomp/sampler.hpp"
#include "ecomp/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <numeric>

namespace ecomp {

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"weight_decay", c.weight_decay},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"w_cl", c.w_cl},
                     {"use_diffusion", c.use_diffusion},
                     {"negatives_per_positive", c.negatives_per_positive},
                     {"clip_norm", c.clip_norm},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.w_cl = j.value("w_cl", c.w_cl);
  c.use_diffusion = j.value("use_diffusion", c.use_diffusion);
  c.negatives_per_positive = j.value("negatives_per_positive", c.negatives_per_positive);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = nlohmann::json{{"method", method_name(c.method)},
                     {"particles", c.particles},
                     {"lambda", c.lambda},
                     {"hmc_step", c.hmc_step},
                     {"leapfrog", c.leapfrog},
                     {"tau", c.tau},
                     {"inner_steps", c.inner_steps},
                     {"resample", c.resample},
                     {"systematic", c.systematic},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SamplerConfig& c) {
  if (j.contains("method")) {
    auto m = parse_method(j.at("method").get<std::string>());
    if (!m) throw ConfigError("unknown sampler method");
    c.method = *m;
  }
  c.particles = j.value("particles", c.particles);
  c.lambda = j.value("lambda", c.lambda);
  c.hmc_step = j.value("hmc_step", c.hmc_step);
  c.leapfrog = j.value("leapfrog", c.leapfrog);
  c.tau = j.value("tau", c.tau);
  c.inner_steps = j.value("inner_steps", c.inner_steps);
  c.resample = j.value("resample", c.resample);
  c.systematic = j.value("systematic", c.systematic);
  c.seed = j.value("seed", c.seed);
}

}  // namespace ecomp

namespace ecomp::harness {

// Where evaluation / fine-tuning instances come from: explicit files or a
// seeded generator.
struct InstanceSpec {
  std::vector<std::string> files;
  std::string generator;  // "planted" (3-SAT), a graph family, or "benchmark"
  std::string name;       // benchmark graph name
  int n = 20;
  int count = 1;
  int m_override = 0;     // planted 3-SAT clause-count override
  double p = 0.2;
  int hk_m = 2;
  int degree = 3;
  uint64_t seed = 1;
  int chi_override = 0;   // coloring budget when the oracle should be skipped
};

inline void to_json(nlohmann::json& j, const InstanceSpec& s) {
  j = nlohmann::json{{"files", s.files}, {"generator", s.generator}, {"name", s.name},
                     {"n", s.n},         {"count", s.count},         {"m_override", s.m_override},
                     {"p", s.p},         {"hk_m", s.hk_m},           {"degree", s.degree},
                     {"seed", s.seed},   {"chi_override", s.chi_override}};
}

inline void from_json(const nlohmann::json& j, InstanceSpec& s) {
  s.files = j.value("files", s.files);
  s.generator = j.value("generator", s.generator);
  s.name = j.value("name", s.name);
  s.n = j.value("n", s.n);
  s.count = j.value("count", s.count);
  s.m_override = j.value("m_override", s.m_override);
  s.p = j.value("p", s.p);
  s.hk_m = j.value("hk_m", s.hk_m);
  s.degree = j.value("degree", s.degree);
  s.seed = j.value("seed", s.seed);
  s.chi_override = j.value("chi_override", s.chi_override);
}

struct ExperimentConfig {
  std::string task;  // nqueens | sat3 | coloring
  std::string mode;  // train | finetune | sample | eval | gen | sweep
  MlpConfig arch;
  TrainConfig train;
  SamplerConfig sampler;
  int schedule_T = 100;
  int n_samples = 100;  // samples per instance
  InstanceSpec instance;
  queens::DiagPolicy diag;
  int palette = 14;
  std::string checkpoint;
  std::string checkpoint_out;
  std::string eval_file;  // decoded solutions for eval mode
  uint64_t seed = 42;
  std::string out_dir = "runs/out";
  std::vector<int> sweep_P;
  std::vector<std::string> ablate_methods;
  bool trace = false;

  void validate() const {
    if (task != "nqueens" && task != "sat3" && task != "coloring")
      throw ConfigError("unknown task: " + task);
    static const std::vector<std::string> modes = {"train", "finetune", "sample",
                                                   "eval",  "gen",      "sweep"};
    if (std::find(modes.begin(), modes.end(), mode) == modes.end())
      throw ConfigError("unknown mode: " + mode);
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (schedule_T < 1) throw ConfigError("schedule_T must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"task", c.task},
                     {"mode", c.mode},
                     {"arch", c.arch},
                     {"train", c.train},
                     {"sampler", c.sampler},
                     {"schedule_T", c.schedule_T},
                     {"n_samples", c.n_samples},
                     {"instance", c.instance},
                     {"diag_min_len", c.diag.min_len},
                     {"diag_weight", c.diag.weight},
                     {"palette", c.palette},
                     {"checkpoint", c.checkpoint},
                     {"checkpoint_out", c.checkpoint_out},
                     {"eval_file", c.eval_file},
                     {"seed", c.seed},
                     {"out_dir", c.out_dir},
                     {"sweep_P", c.sweep_P},
                     {"ablate_methods", c.ablate_methods},
                     {"trace", c.trace}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.task = j.value("task", c.task);
  c.mode = j.value("mode", c.mode);
  if (j.contains("arch")) c.arch = j.at("arch").get<MlpConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("sampler")) c.sampler = j.at("sampler").get<SamplerConfig>();
  c.schedule_T = j.value("schedule_T", c.schedule_T);
  c.n_samples = j.value("n_samples", c.n_samples);
  if (j.contains("instance")) c.instance = j.at("instance").get<InstanceSpec>();
  c.diag.min_len = j.value("diag_min_len", c.diag.min_len);
  c.diag.weight = j.value("diag_weight", c.diag.weight);
  c.palette = j.value("palette", c.palette);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  c.checkpoint_out = j.value("checkpoint_out", c.checkpoint_out);
  c.eval_file = j.value("eval_file", c.eval_file);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.sweep_P = j.value("sweep_P", c.sweep_P);
  c.ablate_methods = j.value("ablate_methods", c.ablate_methods);
  c.trace = j.value("trace", c.trace);
}

// One problem instance ready for sampling: composed views, pinned-coordinate
// mask, and the task-specific decode/metric hooks' inputs.
struct PreparedInstance {
  std::string label;
  ViewMap vm;
  std::vector<uint8_t> mask;
  int n = 0;               // board size (nqueens)
  sat::Cnf cnf;            // sat3
  coloring::Graph graph;   // coloring
  int chi = 0;             // coloring budget
  Vec ground_truth;        // planted assignment when available
};

struct SampleRecord {
  int instance = 0;
  int sample = 0;
  bool correct = false;
  double metric = 0.0;  // queens placed | satisfied fraction | conflicting edges
  double energy = 0.0;
  long grad_evals = 0;
  double wall_ms = 0.0;
  nlohmann::json decoded;
};

struct RunResult {
  std::vector<SampleRecord> records;
  int correct_instances = 0;
  double metric_mean = 0.0;
  double metric_std = 0.0;
  nlohmann::json config_snapshot;
  uint64_t checkpoint_checksum = 0;

  void aggregate() {
    correct_instances = 0;
    double sum = 0.0, sum2 = 0.0;
    for (const auto& r : records) {
      correct_instances += r.correct ? 1 : 0;
      sum += r.metric;
      sum2 += r.metric * r.metric;
    }
    const double n = std::max<size_t>(records.size(), 1);
    metric_mean = sum / n;
    metric_std = std::sqrt(std::max(0.0, sum2 / n - metric_mean * metric_mean));
  }
};

inline void to_json(nlohmann::json& j, const SampleRecord& r) {
  j = nlohmann::json{{"instance", r.instance}, {"sample", r.sample},
                     {"correct", r.correct},   {"metric", r.metric},
                     {"energy", r.energy},     {"grad_evals", r.grad_evals},
                     {"wall_ms", r.wall_ms},   {"decoded", r.decoded}};
}

inline void from_json(const nlohmann::json& j, SampleRecord& r) {
  r.instance = j.at("instance").get<int>();
  r.sample = j.at("sample").get<int>();
  r.correct = j.at("correct").get<bool>();
  r.metric = j.at("metric").get<double>();
  r.energy = j.at("energy").get<double>();
  r.grad_evals = j.value("grad_evals", 0L);
  r.wall_ms = j.value("wall_ms", 0.0);
  r.decoded = j.value("decoded", nlohmann::json());
}

inline void to_json(nlohmann::json& j, const RunResult& r) {
  j = nlohmann::json{{"records", r.records},
                     {"aggregates",
                      {{"correct_instances", r.correct_instances},
                       {"metric_mean", r.metric_mean},
                       {"metric_std", r.metric_std}}},
                     {"config", r.config_snapshot},
                     {"checkpoint_checksum", r.checkpoint_checksum}};
}

inline void from_json(const nlohmann::json& j, RunResult& r) {
  r.records = j.at("records").get<std::vector<SampleRecord>>();
  r.correct_instances = j.at("aggregates").at("correct_instances").get<int>();
  r.metric_mean = j.at("aggregates").at("metric_mean").get<double>();
  r.metric_std = j.at("aggregates").at("metric_std").get<double>();
  r.config_snapshot = j.value("config", nlohmann::json());
  r.checkpoint_checksum = j.value("checkpoint_checksum", uint64_t{0});
}

// Aggregates must always be recomputable from the per-sample records.
inline bool verify_aggregates(const RunResult& r) {
  RunResult copy = r;
  copy.aggregate();
  return copy.correct_instances == r.correct_instances &&
         std::abs(copy.metric_mean - r.metric_mean) < 1e-12 &&
         std::abs(copy.metric_std - r.metric_std) < 1e-12;
}

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace detail

inline std::vector<PreparedInstance> prepare_instances(const ExperimentConfig& cfg) {
  std::vector<PreparedInstance> out;
  if (cfg.task == "nqueens") {
    PreparedInstance pi;
    pi.n = cfg.instance.n;
    pi.label = "queens" + std::to_string(pi.n);
    pi.vm = queens::build_views(pi.n, cfg.diag);
    pi.mask = queens::sentinel_mask(pi.n, pi.vm);
    out.push_back(std::move(pi));
    return out;
  }
  if (cfg.task == "sat3") {
    std::vector<std::pair<std::string, io::PlantedCnf>> cnfs;
    if (!cfg.instance.files.empty()) {
      for (const auto& f : cfg.instance.files) {
        io::PlantedCnf pc;
        pc.cnf = io::parse_cnf(detail::read_file(f));
        cnfs.emplace_back(std::filesystem::path(f).filename().string(), std::move(pc));
      }
    } else {
      for (int i = 0; i < cfg.instance.count; ++i) {
        auto pc = io::gen_sat(cfg.instance.n, derive_seed(cfg.instance.seed, static_cast<uint64_t>(i)),
                              cfg.instance.m_override);
        cnfs.emplace_back("planted" + std::to_string(i), std::move(pc));
      }
    }
    for (auto& [label, pc] : cnfs) {
      PreparedInstance pi;
      pi.label = label;
      pi.cnf = std::move(pc.cnf);
      pi.vm = sat::clause_views(pi.cnf);
      if (pc.plant.values.size() > 0) pi.ground_truth = pc.plant.values;
      out.push_back(std::move(pi));
    }
    return out;
  }
  // coloring
  std::vector<std::pair<std::string, coloring::Graph>> graphs;
  if (!cfg.instance.files.empty()) {
    for (const auto& f : cfg.instance.files)
      graphs.emplace_back(std::filesystem::path(f).filename().string(),
                          io::parse_col(detail::read_file(f)));
  } else if (cfg.instance.generator == "benchmark") {
    graphs.emplace_back(cfg.instance.name, io::benchmark_graph(cfg.instance.name));
  } else if (cfg.instance.generator == "complete_range") {
    for (int n = 8; n <= 12; ++n)
      graphs.emplace_back("K" + std::to_string(n), io::gen_complete(n));
  } else {
    auto fam = io::parse_family(cfg.instance.generator);
    if (!fam) throw ConfigError("unknown graph generator: " + cfg.instance.generator);
    for (int i = 0; i < cfg.instance.count; ++i) {
      io::GenSpec spec;
      spec.family = *fam;
      spec.n = cfg.instance.n;
      spec.p = cfg.instance.p;
      spec.m = cfg.instance.hk_m;
      spec.degree = cfg.instance.degree;
      spec.seed = derive_seed(cfg.instance.seed, static_cast<uint64_t>(i));
      graphs.emplace_back(std::string(io::family_name(*fam)) + std::to_string(i),
                          io::gen_graph(spec));
    }
  }
  for (auto& [label, g] : graphs) {
    PreparedInstance pi;
    pi.label = label;
    pi.graph = std::move(g);
    if (cfg.instance.chi_override > 0) {
      pi.chi = cfg.instance.chi_override;
    } else if (pi.graph.chi.has_value()) {
      pi.chi = *pi.graph.chi;
    } else {
      auto chi = coloring::chromatic_number(pi.graph, 60.0);
      if (!chi) throw ConfigError("chromatic number timed out; pass chi_override");
      pi.chi = *chi;
    }
    if (pi.chi > cfg.palette) throw ConfigError("budget exceeds training palette");
    pi.vm = coloring::edge_views(pi.graph, cfg.palette);
    pi.mask = coloring::budget_mask(pi.graph.n_nodes, cfg.palette, pi.chi);
    out.push_back(std::move(pi));
  }
  return out;
}

// Decodes a final particle and scores it against the instance.
inline SampleRecord score_sample(const ExperimentConfig& cfg, const PreparedInstance& pi,
                                 const SampleResult& s) {
  SampleRecord rec;
  rec.energy = s.best_energy;
  rec.grad_evals = s.grad_evals;
  if (cfg.task == "nqueens") {
    auto board = queens::decode_greedy(queens::heatmap_from_global(pi.n, s.best));
    rec.correct = queens::is_valid_solution(board);
    rec.metric = static_cast<double>(board.queen_cells().size());
    std::vector<int> cells;
    for (auto [r, c] : board.queen_cells()) cells.push_back(r * pi.n + c);
    rec.decoded = nlohmann::json{{"queens", cells}};
  } else if (cfg.task == "sat3") {
    auto a = sat::decode_assignment(s.best);
    rec.metric = sat::satisfied_fraction(pi.cnf, a);
    rec.correct = rec.metric == 1.0;
    std::vector<int> bits;
    for (Eigen::Index i = 0; i < a.values.size(); ++i) bits.push_back(a.truth(static_cast<int>(i)));
    rec.decoded = nlohmann::json{{"assignment", bits}};
  } else {
    auto col = coloring::decode_colors(s.best, pi.chi, cfg.palette);
    const int conflicts = coloring::conflict_count(pi.graph, col);
    rec.metric = conflicts;
    rec.correct = conflicts == 0;
    rec.decoded = nlohmann::json{{"colors", col.color}, {"chi", pi.chi}};
  }
  return rec;
}

inline void write_results(const ExperimentConfig& cfg, const RunResult& rr,
                          const std::string& stem = "results") {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  nlohmann::json j = rr;
  detail::write_file(fs::path(cfg.out_dir) / (stem + ".json"), j.dump(2) + "\n");
  std::ostringstream csv;
  csv << "instance,sample,correct,metric,energy,grad_evals,wall_ms\n";
  for (const auto& r : rr.records)
    csv << r.instance << "," << r.sample << "," << (r.correct ? 1 : 0) << "," << r.metric
        << "," << r.energy << "," << r.grad_evals << "," << r.wall_ms << "\n";
  csv << "# correct_instances=" << rr.correct_instances << " metric_mean=" << rr.metric_mean
      << " metric_std=" << rr.metric_std << "\n";
  detail::write_file(fs::path(cfg.out_dir) / (stem + ".csv"), csv.str());
}

// Draws `cfg.n_samples` per instance with sample seeds derived from the master
// seed; samples run on a worker pool and are merged in sample order.
inline RunResult run_sampling(const ExperimentConfig& cfg, const EnergyNet& net,
                              const std::vector<PreparedInstance>& instances,
                              uint64_t checkpoint_checksum) {
  RunResult rr;
  rr.config_snapshot = cfg;
  rr.checkpoint_checksum = checkpoint_checksum;
  struct Job {
    int instance, sample;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < static_cast<int>(instances.size()); ++i)
    for (int s = 0; s < cfg.n_samples; ++s) jobs.push_back({i, s});
  rr.records.resize(jobs.size());

  std::vector<std::unique_ptr<ComposedModel>> models;
  models.reserve(instances.size());
  for (const auto& pi : instances)
    models.push_back(std::make_unique<ComposedModel>(net, pi.vm));

  std::mutex trace_mu;
  std::ofstream trace_out;
  if (cfg.trace) {
    std::filesystem::create_directories(cfg.out_dir);
    trace_out.open(std::filesystem::path(cfg.out_dir) / "particle_trace.jsonl");
  }

  parallel_shards(static_cast<int>(jobs.size()), thread_count(), [&](int, int lo, int hi) {
    for (int k = lo; k < hi; ++k) {
      const Job job = jobs[static_cast<size_t>(k)];
      const PreparedInstance& pi = instances[static_cast<size_t>(job.instance)];
      EnergyLandscape land = models[static_cast<size_t>(job.instance)]->landscape(pi.mask);
      SamplerConfig sc = cfg.sampler;
      sc.seed = derive_seed(cfg.seed, static_cast<uint64_t>(k));
      std::function<void(int, const Vec&)> trace;
      if (cfg.trace && k == 0) {
        trace = [&](int t, const Vec& e) {
          std::lock_guard<std::mutex> lock(trace_mu);
          nlohmann::json line{{"t", t},
                              {"energies", std::vector<double>(e.data(), e.data() + e.size())}};
          trace_out << line.dump() << "\n";
        };
      }
      const auto start = std::chrono::steady_clock::now();
      SampleResult s = draw_sample(land, net.sched, sc, trace);
      SampleRecord rec = score_sample(cfg, pi, s);
      rec.instance = job.instance;
      rec.sample = job.sample;
      rec.wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
              .count();
      rr.records[static_cast<size_t>(k)] = std::move(rec);
    }
  });
  rr.aggregate();
  return rr;
}

inline ParamSet train_for_task(const ExperimentConfig& cfg, const NoiseSchedule& sched,
                               TrainReport* report) {
  if (cfg.task == "nqueens") {
    auto solutions = queens::enumerate_solutions(cfg.instance.n);
    const size_t pick = cfg.instance.seed % solutions.size();
    queens::RowDataset data(cfg.instance.n, solutions[pick]);
    return train(cfg.train, data, cfg.arch, sched, report);
  }
  if (cfg.task == "sat3") {
    std::vector<sat::Cnf> cnfs;
    if (!cfg.instance.files.empty()) {
      for (const auto& f : cfg.instance.files)
        cnfs.push_back(io::parse_cnf(detail::read_file(f)));
    } else {
      for (int i = 0; i < cfg.instance.count; ++i)
        cnfs.push_back(io::gen_sat(cfg.instance.n,
                                   derive_seed(cfg.instance.seed, static_cast<uint64_t>(i)))
                           .cnf);
    }
    sat::ClauseDataset data(cnfs);
    return train(cfg.train, data, cfg.arch, sched, report);
  }
  coloring::EdgeDataset data(cfg.palette);
  return train(cfg.train, data, cfg.arch, sched, report);
}

inline void write_loss_curve(const std::string& out_dir, const TrainReport& report) {
  std::ostringstream csv;
  csv << "epoch,mse_loss,cl_loss,total\n";
  for (const auto& row : report.curve)
    csv << row.epoch << "," << row.mse << "," << row.cl << "," << row.total << "\n";
  detail::write_file(std::filesystem::path(out_dir) / "loss_curves.csv", csv.str());
}

inline RunResult run(const ExperimentConfig& cfg);

// One full sampling run per particle count; rows mirror the particle-sweep
// tables.
inline std::vector<RunResult> sweep_particles(const ExperimentConfig& cfg,
                                              const std::vector<int>& p_list) {
  if (p_list.empty()) throw ConfigError("sweep needs particle counts");
  std::vector<RunResult> out;
  std::ostringstream csv;
  csv << "particles,correct_instances,metric_mean,metric_std\n";
  for (int p : p_list) {
    ExperimentConfig c = cfg;
    c.mode = "sample";
    c.sampler.particles = p;
    c.out_dir = cfg.out_dir + "/P" + std::to_string(p);
    out.push_back(run(c));
    const RunResult& rr = out.back();
    csv << p << "," << rr.correct_instances << "," << rr.metric_mean << "," << rr.metric_std
        << "\n";
  }
  detail::write_file(std::filesystem::path(cfg.out_dir) / "sweep.csv", csv.str());
  return out;
}

// Matched-budget sampler comparison: chain methods receive P inner steps per
// level (T*P gradient evaluations, like PEM); HMC variants split the budget
// across leapfrog steps. ReverseDiffusion is structurally one pass.
inline std::vector<std::pair<std::string, RunResult>> ablate_samplers(
    const ExperimentConfig& cfg, const std::vector<std::string>& methods) {
  std::vector<std::pair<std::string, RunResult>> out;
  std::ostringstream csv;
  csv << "sampler,correct_instances,metric_mean,metric_std,grad_evals_per_sample\n";
  for (const auto& name : methods) {
    auto m = parse_method(name);
    if (!m) throw ConfigError("unknown sampler method: " + name);
    ExperimentConfig c = cfg;
    c.mode = "sample";
    c.sampler.method = *m;
    if (*m != Method::PEM) {
      c.sampler.inner_steps =
          (*m == Method::HMC || *m == Method::UHMC)
              ? std::max(1, cfg.sampler.particles / cfg.sampler.leapfrog)
              : cfg.sampler.particles;
      if (*m == Method::ReverseDiffusion) c.sampler.particles = 1;
    }
    c.out_dir = cfg.out_dir + "/" + name;
    out.emplace_back(name, run(c));
    const RunResult& rr = out.back().second;
    const double per_sample =
        rr.records.empty() ? 0.0
                           : static_cast<double>(std::accumulate(
                                 rr.records.begin(), rr.records.end(), 0L,
                                 [](long acc, const SampleRecord& r) { return acc + r.grad_evals; })) /
                                 rr.records.size();
    csv << name << "," << rr.correct_instances << "," << rr.metric_mean << ","
        << rr.metric_std << "," << per_sample << "\n";
  }
  detail::write_file(std::filesystem::path(cfg.out_dir) / "ablation.csv", csv.str());
  return out;
}

inline RunResult run_eval_mode(const ExperimentConfig& cfg) {
  if (cfg.eval_file.empty()) throw ConfigError("eval mode needs eval_file");
  auto instances = prepare_instances(cfg);
  nlohmann::json j = nlohmann::json::parse(detail::read_file(cfg.eval_file));
  RunResult rr;
  rr.config_snapshot = cfg;
  int k = 0;
  for (const auto& item : j.at("solutions")) {
    SampleRecord rec;
    rec.instance = item.value("instance", 0);
    rec.sample = k++;
    const PreparedInstance& pi = instances.at(static_cast<size_t>(rec.instance));
    if (cfg.task == "nqueens") {
      queens::Board b = queens::Board::zero(pi.n);
      for (int cell : item.at("queens").get<std::vector<int>>())
        b.cells[cell] = 1.0;
      rec.correct = queens::is_valid_solution(b);
      rec.metric = static_cast<double>(b.queen_cells().size());
    } else if (cfg.task == "sat3") {
      sat::Assignment a;
      auto bits = item.at("assignment").get<std::vector<int>>();
      a.values = Vec(static_cast<Eigen::Index>(bits.size()));
      for (size_t i = 0; i < bits.size(); ++i) a.values[static_cast<Eigen::Index>(i)] = bits[i];
      rec.metric = sat::satisfied_fraction(pi.cnf, a);
      rec.correct = rec.metric == 1.0;
    } else {
      coloring::Coloring col;
      col.color = item.at("colors").get<std::vector<int>>();
      col.palette = pi.chi;
      rec.metric = coloring::conflict_count(pi.graph, col);
      rec.correct = rec.metric == 0;
    }
    rr.records.push_back(std::move(rec));
  }
  rr.aggregate();
  write_results(cfg, rr);
  return rr;
}

inline void run_gen_mode(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  auto instances = prepare_instances(cfg);
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& pi = instances[i];
    fs::path base = fs::path(cfg.out_dir) / pi.label;
    nlohmann::json side{{"spec", cfg.instance}, {"seed", cfg.instance.seed}, {"index", i}};
    if (cfg.task == "sat3") {
      detail::write_file(base.string() + ".cnf", io::serialize_cnf(pi.cnf));
      if (pi.ground_truth.size() > 0) {
        std::vector<int> plant;
        for (Eigen::Index v = 0; v < pi.ground_truth.size(); ++v)
          plant.push_back(pi.ground_truth[v] >= 0.5);
        side["plant"] = plant;
      }
    } else if (cfg.task == "coloring") {
      detail::write_file(base.string() + ".col", io::serialize_col(pi.graph));
      side["chi"] = pi.chi;
    } else {
      throw ConfigError("gen mode supports sat3 and coloring");
    }
    detail::write_file(base.string() + ".provenance.json", side.dump(2) + "\n");
  }
}

inline RunResult run(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult rr;
  rr.config_snapshot = cfg;

  if (cfg.mode == "train") {
    NoiseSchedule sched = linear_schedule(cfg.schedule_T);
    TrainReport report;
    ParamSet params = train_for_task(cfg, sched, &report);
    const std::string out = cfg.checkpoint_out.empty()
                                ? (std::filesystem::path(cfg.out_dir) / "model.json").string()
                                : cfg.checkpoint_out;
    save_checkpoint(out, params, sched, cfg.task);
    write_loss_curve(cfg.out_dir, report);
    if (report.aborted) throw NumericFault("training aborted; last-good checkpoint saved");
    return rr;
  }

  if (cfg.mode == "gen") {
    run_gen_mode(cfg);
    return rr;
  }

  if (cfg.mode == "eval") return run_eval_mode(cfg);

  Checkpoint ck = load_checkpoint(cfg.checkpoint);
  if (ck.task != cfg.task)
    throw ConfigError("checkpoint task '" + ck.task + "' does not match config task");
  EnergyNet net{std::move(ck.params), std::move(ck.sched)};

  if (cfg.mode == "finetune") {
    if (cfg.task != "sat3") throw ConfigError("finetune supports sat3");
    auto instances = prepare_instances(cfg);
    std::vector<ComposedInstance> comp;
    for (auto& pi : instances) {
      if (pi.ground_truth.size() == 0) throw ConfigError("finetune needs planted instances");
      comp.push_back({pi.vm, pi.ground_truth});
    }
    TrainReport report;
    ParamSet tuned = finetune_composed(net.params, comp, net.sched, cfg.train, &report);
    const std::string out = cfg.checkpoint_out.empty()
                                ? (std::filesystem::path(cfg.out_dir) / "model_ft.json").string()
                                : cfg.checkpoint_out;
    save_checkpoint(out, tuned, net.sched, cfg.task);
    write_loss_curve(cfg.out_dir, report);
    if (report.aborted) throw NumericFault("finetuning aborted; last-good checkpoint saved");
    return rr;
  }

  if (cfg.mode == "sample") {
    auto instances = prepare_instances(cfg);
    rr = run_sampling(cfg, net, instances, ck.checksum);
    write_results(cfg, rr);
    return rr;
  }
  // sweep: particle sweep by default, sampler ablation when methods are named
  if (!cfg.ablate_methods.empty()) {
    auto ab = ablate_samplers(cfg, cfg.ablate_methods);
    return ab.empty() ? rr : ab.back().second;
  }
  auto sweep = sweep_particles(cfg, cfg.sweep_P);
  return sweep.empty() ? rr : sweep.back();
}

}  // namespace ecomp::harness
