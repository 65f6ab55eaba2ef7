#include "relex/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relex/svg.hpp"

namespace relex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content, bool append = false) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

}  // namespace

MdpSpec make_m1() {
  MdpSpec spec;
  spec.num_states = 2;
  spec.num_actions = 2;
  spec.horizon = 2;
  spec.rewards.assign(8, 0.0);
  spec.transitions.assign(16, 0.0);
  spec.init_dist = {1.0, 0.0};
  for (int h = 0; h < 2; ++h) {
    spec.rewards[spec.reward_index(h, 0, 0)] = 1.0;
    spec.transitions[spec.transition_index(h, 0, 0, 0)] = 1.0;  // stay
    spec.transitions[spec.transition_index(h, 0, 1, 1)] = 1.0;  // leave
    spec.transitions[spec.transition_index(h, 1, 0, 1)] = 1.0;  // absorbing
    spec.transitions[spec.transition_index(h, 1, 1, 1)] = 1.0;
  }
  return spec;
}

std::string config_to_json_string(const ExperimentConfig& config) {
  json j{{"instance", config.instance_path},
         {"class", config.class_path},
         {"algorithms", config.algorithms},
         {"episodes", config.episodes},
         {"seeds", config.seeds},
         {"c", config.c},
         {"delta", config.delta},
         {"rank_tol", config.rank_tol},
         {"audits", config.audits},
         {"audit_stride", config.audit_stride},
         {"checkpoint_episode", config.checkpoint_episode},
         {"emit_rho_regret", config.emit_rho_regret},
         {"out_dir", config.out_dir}};
  if (config.generator) {
    const GeneratorSpec& gen = *config.generator;
    j["generator"] = json{{"kind", gen.kind},
                          {"states", gen.states},
                          {"actions", gen.actions},
                          {"horizon", gen.horizon},
                          {"clusters", gen.clusters},
                          {"reward_margin", gen.reward_margin},
                          {"rotated_copies", gen.rotated_copies},
                          {"seed", gen.seed}};
  }
  return j.dump(2);
}

ExperimentConfig config_from_json_string(const std::string& text) {
  ExperimentConfig config;
  try {
    json j = json::parse(text);
    config.instance_path = j.value("instance", std::string());
    config.class_path = j.value("class", std::string());
    if (j.contains("generator")) {
      const auto& gen_json = j.at("generator");
      GeneratorSpec gen;
      gen.kind = gen_json.value("kind", std::string("cluster"));
      gen.states = gen_json.value("states", 6);
      gen.actions = gen_json.value("actions", 2);
      gen.horizon = gen_json.value("horizon", 3);
      gen.clusters = gen_json.value("clusters", 3);
      gen.reward_margin = gen_json.value("reward_margin", 0.3);
      gen.rotated_copies = gen_json.value("rotated_copies", 0);
      gen.seed = gen_json.value("seed", std::uint64_t{1});
      config.generator = gen;
    }
    config.algorithms = j.at("algorithms").get<std::vector<std::string>>();
    config.episodes = j.at("episodes").get<long>();
    config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    config.c = j.value("c", 0.5);
    config.delta = j.value("delta", 0.1);
    config.rank_tol = j.value("rank_tol", 1e-7);
    config.audits = j.value("audits", true);
    config.audit_stride = j.value("audit_stride", 50L);
    config.checkpoint_episode = j.value("checkpoint_episode", 0L);
    config.emit_rho_regret = j.value("emit_rho_regret", true);
    config.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config JSON: ") + e.what());
  }
  return config;
}

namespace {

void check_config(const ExperimentConfig& config) {
  if (config.episodes < 1) throw ConfigError("config: episodes must be >= 1");
  if (config.delta <= 0.0 || config.delta >= 1.0) throw ConfigError("config: delta must be in (0, 1)");
  if (config.c <= 0.0) throw ConfigError("config: c must be positive");
  if (config.seeds.empty()) throw ConfigError("config: seeds must be nonempty");
  std::set<std::uint64_t> unique(config.seeds.begin(), config.seeds.end());
  if (unique.size() != config.seeds.size()) throw ConfigError("config: seeds must be distinct");
  if (config.algorithms.empty()) throw ConfigError("config: algorithms must be nonempty");
  for (const auto& name : config.algorithms) {
    try {
      parse_algorithm(name);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  if (config.generator) {
    const GeneratorSpec& gen = *config.generator;
    if (gen.kind != "cluster" && gen.kind != "m1")
      throw ConfigError("config: generator kind must be cluster or m1");
  } else {
    if (config.instance_path.empty() || config.class_path.empty())
      throw ConfigError("config: needs instance and class paths, or a generator block");
    if (!fs::exists(config.instance_path))
      throw ConfigError("config: instance file does not exist: " + config.instance_path);
    if (!fs::exists(config.class_path))
      throw ConfigError("config: class file does not exist: " + config.class_path);
  }
}

std::pair<MdpSpec, RepresentationClass> materialize_pair(const ExperimentConfig& config) {
  if (config.generator) {
    const GeneratorSpec& gen = *config.generator;
    if (gen.kind == "m1") {
      const MdpSpec spec = make_m1();
      return {spec, make_tabular_class(spec)};
    }
    ClusterParams params;
    params.num_states = gen.states;
    params.num_actions = gen.actions;
    params.horizon = gen.horizon;
    params.num_clusters = gen.clusters;
    params.reward_margin = gen.reward_margin;
    params.rotated_coarse_copies = gen.rotated_copies;
    return make_cluster_instance(params, gen.seed);
  }
  return {load_mdp(config.instance_path), load_class(config.class_path)};
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  ExperimentConfig config = config_from_json_string(text);
  check_config(config);
  return config;
}

void save_config(const ExperimentConfig& config, const std::string& path) {
  write_text_file(path, config_to_json_string(config) + "\n");
}

std::string resolve_out_path(const std::string& path) {
  const char* root = std::getenv("RELEX_OUT_ROOT");
  if (root == nullptr || *root == '\0' || path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(root) / path).string();
}

int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const std::string out_dir = resolve_out_path(options.out_dir);
    MdpSpec spec;
    RepresentationClass cls;
    std::string class_file = "class.json";
    bool write_instance = true;

    if (options.kind == "tabular") {
      if (options.preset == "m1")
        spec = make_m1();
      else if (!options.instance_path.empty())
        spec = load_mdp(options.instance_path);
      else
        throw ConfigError("generate tabular: need --preset m1 or --instance FILE");
      cls = make_tabular_class(spec);
    } else if (options.kind == "cluster") {
      ClusterParams params;
      params.num_states = options.states;
      params.num_actions = options.actions;
      params.horizon = options.horizon;
      params.num_clusters = options.clusters;
      params.reward_margin = options.reward_margin;
      params.rotated_coarse_copies = options.rotated_copies;
      std::tie(spec, cls) = make_cluster_instance(params, options.seed);
    } else if (options.kind == "rotated") {
      if (options.class_path.empty() || options.instance_path.empty())
        throw ConfigError("generate rotated: need --class FILE and --instance FILE");
      spec = load_mdp(options.instance_path);
      const RepresentationClass source = load_class(options.class_path);
      if (!options.rotation_path.empty()) {
        json j = json::parse(read_text_file(options.rotation_path));
        std::vector<Eigen::MatrixXd> rotations;
        for (const auto& rj : j.at("rotations")) {
          const Eigen::Index rows = static_cast<Eigen::Index>(rj.size());
          Eigen::MatrixXd r(rows, rows > 0 ? static_cast<Eigen::Index>(rj.at(0).size()) : 0);
          for (Eigen::Index i = 0; i < r.rows(); ++i)
            for (Eigen::Index k = 0; k < r.cols(); ++k) r(i, k) = rj.at(i).at(k).get<double>();
          rotations.push_back(std::move(r));
        }
        cls = rotate_class(source, rotations);
      } else {
        cls = rotate_class(source, options.seed);
      }
      class_file = "class_rotated.json";
      write_instance = false;
    } else {
      throw ConfigError("generate: unknown kind '" + options.kind + "' (tabular|cluster|rotated)");
    }

    // re-validate before any file is written
    const auto report = validate_mdp(spec);
    if (!report.ok()) {
      err << "generate: instance failed validation: " << report.summary() << "\n";
      return kExitValidation;
    }
    const double residual = bilinear_residual(spec, cls);
    if (residual > 1e-9) {
      err << "generate: bilinear residual " << residual << " exceeds 1e-9, nothing written\n";
      return kExitValidation;
    }

    if (!out_dir.empty()) fs::create_directories(out_dir);
    if (write_instance) save_mdp(spec, (fs::path(out_dir) / "instance.json").string());
    save_class(cls, (fs::path(out_dir) / class_file).string());
    out << "wrote " << (fs::path(out_dir) / class_file).string()
        << (write_instance ? " and instance.json" : "") << " (residual " << format_double(residual)
        << ")\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "generate: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "generate: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "generate: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_validate(const std::string& instance_path, const std::string& class_path,
                 const std::string& out_dir, double rank_tol, std::ostream& out,
                 std::ostream& err) {
  MdpSpec spec;
  RepresentationClass cls;
  try {
    spec = load_mdp(instance_path);
    cls = load_class(class_path);
  } catch (const std::exception& e) {
    err << "validate: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    json result;
    std::vector<std::string> warnings;
    const auto report = validate_mdp(spec);
    result["mdp_valid"] = report.ok();
    json violations = json::array();
    for (const auto& violation : report.violations) violations.push_back(violation.describe());
    result["violations"] = violations;

    bool definition1_ok = report.ok();
    if (report.ok()) {
      json per_map = json::array();
      double worst = 0.0;
      for (std::size_t m = 0; m < cls.maps.size(); ++m) {
        double map_residual = 0.0;
        std::string fit_error;
        try {
          const BilinearModel refit = fit_true_model(spec, cls.maps[m], cls.psi);
          map_residual = refit.residual;
        } catch (const FactorizationError& e) {
          fit_error = e.what();
          map_residual = e.residual;
          definition1_ok = false;
        }
        const RepresentationClass one = subset_class(cls, {static_cast<int>(m)});
        const double stored_residual = bilinear_residual(spec, one);
        if (stored_residual > 1e-9) definition1_ok = false;
        worst = std::max(worst, stored_residual);
        json entry{{"name", cls.maps[m].name},
                   {"stored_residual", stored_residual},
                   {"refit_residual", map_residual}};
        if (!fit_error.empty()) entry["error"] = fit_error;
        per_map.push_back(std::move(entry));
      }
      result["definition1"] = json{{"ok", definition1_ok}, {"max_residual", worst}, {"per_map", per_map}};

      if (definition1_ok) {
        const ConstantsReport constants = compute_constants(cls);
        json cmap = json::array();
        for (std::size_t m = 0; m < cls.maps.size(); ++m)
          cmap.push_back(json{{"name", cls.maps[m].name},
                              {"c_phi", constants.per_map[m].c_phi},
                              {"c_m", constants.per_map[m].c_m}});
        result["constants"] = json{{"per_map", cmap},
                                   {"c_psi", constants.c_psi},
                                   {"c_psi_exact", constants.c_psi_exact},
                                   {"c_psi_prime", constants.c_psi_prime}};

        const OptimalSolution solution = solve_optimal(spec);
        const CoverageReport coverage = coverage_check(cls, spec, solution, rank_tol);
        result["coverage"] = json::parse(coverage_to_json_string(coverage, cls));
        if (!coverage.assumption3_holds)
          warnings.push_back("coverage: " + std::to_string(coverage.uncovered.size()) +
                             " uncovered (h,s,a) pairs; the learner still runs but constant "
                             "regret is not expected");
        for (int m = 0; m < coverage.num_maps; ++m)
          if (coverage.has_degenerate_step[m])
            warnings.push_back("coverage: map '" + cls.maps[m].name +
                               "' has steps with no mass under the optimal policy");
        if (!out_dir.empty()) {
          const std::string dir = resolve_out_path(out_dir);
          write_text_file((fs::path(dir) / "coverage.json").string(),
                          coverage_to_json_string(coverage, cls) + "\n");
          write_text_file((fs::path(dir) / "uncovered.csv").string(), uncovered_to_csv(coverage));
        }
      }
    }
    result["warnings"] = warnings;
    out << result.dump(2) << "\n";
    return (report.ok() && definition1_ok) ? kExitOk : kExitValidation;
  } catch (const std::exception& e) {
    err << "validate: " << e.what() << "\n";
    return kExitRuntime;
  }
}

namespace {

struct JobSpec {
  Algorithm algorithm;
  int single_index = 0;
  std::uint64_t seed = 0;
  std::string label;
  std::string dir;
};

std::string rho_csv(const RegretRecord& record) {
  std::string text = "episode,ep_regret_rho,cum_regret_rho\n";
  for (const auto& row : record.rows) {
    text += std::to_string(row.episode);
    text += ',';
    text += format_double(row.ep_regret_rho);
    text += ',';
    text += format_double(row.cum_regret_rho);
    text += '\n';
  }
  return text;
}

}  // namespace

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_config(options.config_path);
    if (!options.out_dir_override.empty()) config.out_dir = options.out_dir_override;
    if (options.seed_override) config.seeds = {*options.seed_override};
    check_config(config);
  } catch (const ConfigError& e) {
    err << "run: " << e.what() << "\n";
    return kExitUsage;
  }

  MdpSpec spec;
  RepresentationClass cls;
  try {
    std::tie(spec, cls) = materialize_pair(config);
    const auto report = validate_mdp(spec);
    if (!report.ok()) {
      err << "run: instance failed validation: " << report.summary() << "\n";
      return kExitValidation;
    }
  } catch (const std::invalid_argument& e) {
    err << "run: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "run: " << e.what() << "\n";
    return kExitRuntime;
  }

  const std::string out_root = resolve_out_path(config.out_dir);
  if (config.generator) {
    try {
      fs::create_directories(out_root);
      save_mdp(spec, (fs::path(out_root) / "instance.json").string());
      save_class(cls, (fs::path(out_root) / "class.json").string());
    } catch (const std::exception& e) {
      err << "run: " << e.what() << "\n";
      return kExitRuntime;
    }
  }

  std::vector<JobSpec> jobs;
  for (const auto& name : config.algorithms) {
    const auto [algorithm, single_index] = parse_algorithm(name);
    for (std::uint64_t seed : config.seeds) {
      JobSpec job;
      job.algorithm = algorithm;
      job.single_index = single_index;
      job.seed = seed;
      job.label = algorithm_label(algorithm, single_index);
      job.dir = (fs::path(out_root) / (job.label + "_s" + std::to_string(seed))).string();
      jobs.push_back(std::move(job));
    }
  }

  // resuming targets the single job recorded in the snapshot
  if (!options.resume_path.empty()) {
    try {
      json snap = json::parse(read_text_file(options.resume_path));
      const std::string label = snap.at("algorithm").get<std::string>();
      const std::uint64_t seed = snap.at("seed").get<std::uint64_t>();
      std::vector<JobSpec> matched;
      for (const auto& job : jobs)
        if (job.label == label && job.seed == seed) matched.push_back(job);
      if (matched.empty()) {
        err << "run: snapshot (" << label << ", seed " << seed << ") matches no configured job\n";
        return kExitUsage;
      }
      jobs = matched;
    } catch (const std::exception& e) {
      err << "run: " << e.what() << "\n";
      return kExitUsage;
    }
  }

  std::vector<std::string> summaries(jobs.size());
  try {
    parallel_for(static_cast<int>(jobs.size()), options.jobs, [&](int idx) {
      const JobSpec& job = jobs[idx];
      RunConfig run;
      run.algorithm = job.algorithm;
      run.single_map_index = job.single_index;
      run.episodes = config.episodes;
      run.seed = job.seed;
      run.c = config.c;
      run.delta = config.delta;
      run.rank_tol = config.rank_tol;
      run.audits_enabled = config.audits;
      run.audit_stride = config.audit_stride;
      if (config.checkpoint_episode > 0) {
        run.checkpoint_episode = config.checkpoint_episode;
        run.checkpoint_path = (fs::path(job.dir) / "checkpoint.json").string();
        fs::create_directories(job.dir);
      }
      if (!options.resume_path.empty()) run.resume_path = options.resume_path;

      const RunResult result = run_experiment(spec, cls, run);

      const std::string csv_path = (fs::path(job.dir) / "episodes.csv").string();
      const bool append = result.first_episode > 1 && fs::exists(csv_path);
      std::string csv;
      if (!append) csv = episodes_csv_header(result.records);
      for (const auto& row : result.records.rows) csv += episode_row_csv(row);
      write_text_file(csv_path, csv, append);

      if (config.emit_rho_regret) {
        const std::string rho_path = (fs::path(job.dir) / "rho_regret.csv").string();
        std::string text = rho_csv(result.records);
        if (append && fs::exists(rho_path)) {
          text = text.substr(text.find('\n') + 1);  // drop header when appending
          write_text_file(rho_path, text, true);
        } else {
          write_text_file(rho_path, text);
        }
      }

      write_text_file((fs::path(job.dir) / "audit.json").string(),
                      audit_to_json_string(result.audit) + "\n");
      write_text_file((fs::path(job.dir) / "phase.json").string(),
                      phase_to_json_string(result.phase) + "\n");

      std::ostringstream line;
      const double final_regret =
          result.records.rows.empty() ? 0.0 : result.records.rows.back().cum_regret;
      line << "[" << job.label << " seed=" << job.seed << "] episodes=" << config.episodes
           << " final_regret=" << format_double(final_regret) << " k_star=";
      if (result.phase.has_k_star)
        line << result.phase.k_star_hat;
      else
        line << "none";
      if (job.algorithm == Algorithm::kRelex || job.algorithm == Algorithm::kSingle)
        line << " optimism_violations=" << result.audit.optimism_violations;
      if (result.audit.gap_audits_skipped)
        line << " [warning: all gaps zero, gap-dependent audits skipped]";
      summaries[idx] = line.str();
    });
  } catch (const std::invalid_argument& e) {
    err << "run: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "run: " << e.what() << "\n";
    return kExitRuntime;
  }

  for (const auto& line : summaries) out << line << "\n";
  return kExitOk;
}

namespace {

struct ParsedRun {
  std::string label;
  std::vector<double> ep_regret;
  std::vector<double> cumulative;
};

ParsedRun parse_episodes_csv(const std::string& dir) {
  ParsedRun run;
  run.label = fs::path(dir).filename().string();
  std::ifstream in(fs::path(dir) / "episodes.csv");
  if (!in) throw ConfigError("report: no episodes.csv in " + dir);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("report: empty episodes.csv in " + dir);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    std::vector<double> fields;
    for (int field = 0; field < 4; ++field) {
      const std::size_t comma = line.find(',', pos);
      fields.push_back(std::stod(line.substr(pos, comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (fields.size() < 4) throw ConfigError("report: malformed row in " + dir);
    run.ep_regret.push_back(fields[2]);
    run.cumulative.push_back(fields[3]);
  }
  return run;
}

}  // namespace

int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err) {
  std::vector<ParsedRun> runs;
  try {
    if (options.run_dirs.empty()) throw ConfigError("report: no run directories given");
    for (const auto& dir : options.run_dirs) runs.push_back(parse_episodes_csv(dir));
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "report: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    std::vector<RegretSeries> series;
    json summary_runs = json::array();
    double relex_final = -1.0;
    double min_single_final = -1.0;
    for (const auto& run : runs) {
      series.push_back({run.label, run.cumulative});
      RegretRecord record;
      for (std::size_t i = 0; i < run.ep_regret.size(); ++i) {
        EpisodeRow row;
        row.episode = static_cast<long>(i) + 1;
        row.ep_regret = run.ep_regret[i];
        row.cum_regret = run.cumulative[i];
        record.rows.push_back(row);
      }
      const PhaseReport phase = detect_phase(record);
      const double final_regret = run.cumulative.empty() ? 0.0 : run.cumulative.back();
      json entry{{"label", run.label},
                 {"episodes", run.cumulative.size()},
                 {"final_cum_regret", final_regret},
                 {"flatness_ratio",
                  phase.flatness_finite ? json(phase.flatness_ratio) : json("inf")}};
      entry["k_star_hat"] = phase.has_k_star ? json(phase.k_star_hat) : json("none");
      summary_runs.push_back(std::move(entry));
      if (run.label.rfind("relex", 0) == 0 && (relex_final < 0 || final_regret < relex_final))
        relex_final = final_regret;
      if (run.label.rfind("single", 0) == 0 &&
          (min_single_final < 0 || final_regret < min_single_final))
        min_single_final = final_regret;
    }

    json summary{{"runs", std::move(summary_runs)}};
    if (relex_final >= 0 && min_single_final >= 0) {
      if (min_single_final > 0)
        summary["relex_over_min_single"] = relex_final / min_single_final;
      else if (relex_final == 0)
        summary["relex_over_min_single"] = 1.0;
      else
        summary["relex_over_min_single"] = "inf";
    }

    const std::string svg_path = resolve_out_path(options.out_svg);
    write_text_file(svg_path, render_regret_svg(series, options.log_x));
    fs::path summary_path(svg_path);
    summary_path.replace_extension(".summary.json");
    write_text_file(summary_path.string(), summary.dump(2) + "\n");
    out << "wrote " << svg_path << " and " << summary_path.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "report: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace relex
