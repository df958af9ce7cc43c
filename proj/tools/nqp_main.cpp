// nqp command-line driver: dataset generation, training, prediction,
// validation against RK4, and the t_max ablation study.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nqp/csv.hpp"
#include "nqp/experiment.hpp"
#include "nqp/log.hpp"
#include "nqp/validate.hpp"

namespace {

using namespace nqp;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
}

ExperimentConfig load_config(const std::string& path) { return ExperimentConfig::from_json(read_file(path)); }

// "0.2,0.4" -> one parameter set per channel; several sets split by ';'
std::vector<std::vector<double>> parse_field_values(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::istringstream sets(text);
  std::string set_str;
  while (std::getline(sets, set_str, ';')) {
    if (set_str.empty()) continue;
    std::vector<double> values;
    std::istringstream vs(set_str);
    std::string v;
    while (std::getline(vs, v, ',')) values.push_back(std::stod(v));
    out.push_back(std::move(values));
  }
  if (out.empty()) throw ConfigError("no field values given");
  return out;
}

long horizon_to_steps(double horizon, double dt) {
  const double steps = horizon / dt;
  const long n = static_cast<long>(std::llround(steps));
  if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-9)
    throw ConfigError("horizon " + std::to_string(horizon) + " is not an integer multiple of dt " +
                      std::to_string(dt));
  return n;
}

DensityMatrix parse_rho0(const std::string& text, const ExperimentConfig& cfg) {
  if (text.empty()) return cfg.rho0;
  if (text.rfind("basis:", 0) == 0) {
    const int index = std::stoi(text.substr(6));
    if (index < 0 || index >= cfg.system.spec.dim) throw ConfigError("rho0 basis index out of range");
    DensityMatrix m = DensityMatrix::Zero(cfg.system.spec.dim, cfg.system.spec.dim);
    m(index, index) = Complex(1.0, 0.0);
    return m;
  }
  throw ConfigError("unsupported rho0 spec '" + text + "' (use basis:<index>)");
}

int cmd_preset(const std::string& name, bool paper_scale, double t_max, std::uint64_t seed, bool has_seed) {
  ExperimentConfig cfg = preset_by_name(name, paper_scale);
  if (t_max > 0.0) cfg.set_t_max(t_max);
  if (has_seed) cfg.train.seed = seed;
  std::cout << cfg.to_json();
  return kExitOk;
}

int cmd_generate(const std::string& config_path, long n, const std::string& kind_str, const std::string& out_path,
                 std::uint64_t seed, bool has_seed) {
  ExperimentConfig cfg = load_config(config_path);
  const std::uint64_t use_seed = has_seed ? seed : cfg.train.seed;
  const DatasetKind kind = dataset_kind_from_string(kind_str);
  const Dataset ds = generate_dataset(cfg.system, use_seed, n, kind);
  const std::filesystem::path p(out_path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  save_dataset(ds, out_path);
  std::printf("wrote %s: %ld %s samples, %ju bytes, seed %ju\n", out_path.c_str(), n, kind_str.c_str(),
              static_cast<uintmax_t>(std::filesystem::file_size(out_path)), static_cast<uintmax_t>(use_seed));
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out_dir,
              std::uint64_t seed, bool has_seed, int threads, bool has_threads) {
  ExperimentConfig cfg = load_config(config_path);
  if (has_seed) cfg.train.seed = seed;
  if (has_threads) cfg.train.threads = threads;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.train.out_dir = cfg.out_dir;
  cfg.train.experiment_json = cfg.to_json();

  const Dataset data = load_dataset(data_path);
  const TrainResult result = train(cfg.system, cfg.model, cfg.train, data);
  const double first = result.report.rows.empty() ? 0.0 : result.report.rows.front().l;
  const double last = result.report.rows.empty() ? 0.0 : result.report.rows.back().l;
  std::printf("trained %ld epochs: loss %s -> %s; artifacts in %s\n", cfg.train.epochs, fmt_f64(first).c_str(),
              fmt_f64(last).c_str(), cfg.out_dir.c_str());
  return kExitOk;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& field_str, double horizon,
                const std::string& rho0_str, const std::string& out_path, bool hermitize) {
  CheckpointMeta meta;
  const ModelParams params = load_checkpoint(checkpoint_path, &meta);
  if (meta.config_json.empty()) throw ConfigError("checkpoint carries no experiment config; cannot rebuild fields");
  const ExperimentConfig cfg = ExperimentConfig::from_json(meta.config_json);

  const auto value_sets = parse_field_values(field_str);
  if (value_sets.size() != 1) throw ConfigError("predict expects exactly one field parameter set");
  const auto channels = cfg.system.channels_with_params(value_sets[0]);
  const DensityMatrix rho0 = parse_rho0(rho0_str, cfg);
  const long steps = horizon_to_steps(horizon, cfg.system.grid.dt);

  const Trajectory traj = rollout(params, rho0, channels, steps, cfg.system.grid.dt, hermitize);
  const std::string csv = trajectory_csv(traj, cfg.system.spec.dim);
  if (out_path.empty())
    std::cout << csv;
  else {
    write_file(out_path, csv);
    std::printf("wrote %s: %ld rows\n", out_path.c_str(), steps + 1);
  }
  return kExitOk;
}

int cmd_validate(const std::string& checkpoint_path, const std::string& config_path, const std::string& field_str,
                 double horizon, const std::string& out_dir, bool self_check) {
  CheckpointMeta meta;
  const ModelParams params = load_checkpoint(checkpoint_path, &meta);
  ExperimentConfig cfg;
  if (!config_path.empty())
    cfg = load_config(config_path);
  else if (!meta.config_json.empty())
    cfg = ExperimentConfig::from_json(meta.config_json);
  else
    throw ConfigError("no config given and the checkpoint carries none");

  if (params.config.dim != cfg.system.spec.dim)
    throw ConfigError("checkpoint dim " + std::to_string(params.config.dim) + " does not match config dim " +
                      std::to_string(cfg.system.spec.dim));

  ValidateOptions options;
  options.horizon_steps = horizon > 0.0 ? horizon_to_steps(horizon, cfg.system.grid.dt) : params.config.n_steps;
  options.self_check_rk4 = self_check;
  const ValidationReport report =
      validate_model(params, cfg.system, cfg.rho0, parse_field_values(field_str), options);

  if (out_dir.empty()) {
    std::cout << report.csv();
  } else {
    write_file(out_dir + "/validation.csv", report.csv());
    write_file(out_dir + "/validation.json", report.to_json());
    std::printf("wrote %s/validation.{csv,json}\n", out_dir.c_str());
  }
  for (const FieldValidation& e : report.entries)
    if (e.diverged) log_error("field entry diverged: " + e.error);
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& tmax_str, const std::string& field_str,
               double horizon, const std::string& out_dir, std::uint64_t seed, bool has_seed, int threads,
               bool has_threads) {
  const ExperimentConfig base = load_config(config_path);
  std::vector<double> tmax_list;
  for (const auto& set : parse_field_values(tmax_str))
    for (double v : set) tmax_list.push_back(v);
  const auto field_sets = parse_field_values(field_str);

  int failures = 0;
  std::vector<std::string> model_tags;
  std::vector<ModelParams> models;
  for (double t_max : tmax_list) {
    ExperimentConfig cfg = base;
    if (has_seed) cfg.train.seed = seed;
    if (has_threads) cfg.train.threads = threads;
    cfg.set_t_max(t_max);
    const std::string tag = "tmax_" + fmt_f64(t_max);
    cfg.train.out_dir = out_dir.empty() ? std::string() : out_dir + "/" + tag;
    cfg.train.experiment_json = cfg.to_json();
    try {
      const Dataset data = generate_dataset(cfg.system, cfg.train.seed, cfg.train.n_data, DatasetKind::data);
      const TrainResult result = train(cfg.system, cfg.model, cfg.train, data);
      models.push_back(result.params);
      model_tags.push_back(tag);
      log_info(tag + ": final loss " + fmt_f64(result.report.rows.empty() ? 0.0 : result.report.rows.back().l));
    } catch (const std::exception& e) {
      log_error(tag + " failed: " + e.what());
      ++failures;
    }
  }

  const long steps = horizon_to_steps(horizon, base.system.grid.dt);
  for (const auto& values : field_sets) {
    std::string label = "field";
    for (double v : values) label += "_" + fmt_f64(v);

    // p_g(t) comparison table: rk4 reference plus one column per model
    const auto channels = base.system.channels_with_params(values);
    const Trajectory ref =
        propagate(base.system.spec, base.system.baths, channels, TimeGrid{base.system.grid.dt, steps}, base.rho0);
    std::string csv = "t,rk4_p0";
    for (const std::string& tag : model_tags) csv += "," + tag + "_p0";
    csv += '\n';
    std::vector<Trajectory> rollouts;
    for (const ModelParams& m : models)
      rollouts.push_back(rollout(m, base.rho0, channels, steps, base.system.grid.dt));
    for (long n = 0; n <= steps; ++n) {
      std::vector<double> row{base.system.grid.dt * static_cast<double>(n),
                              ref.states[static_cast<size_t>(n)](0).real()};
      for (const Trajectory& r : rollouts) row.push_back(r.states[static_cast<size_t>(n)](0).real());
      csv += csv_row(row);
    }
    if (out_dir.empty())
      std::cout << csv;
    else
      write_file(out_dir + "/ablation_" + label + ".csv", csv);
  }
  if (!out_dir.empty()) std::printf("wrote ablation tables to %s\n", out_dir.c_str());
  return failures == 0 ? kExitOk : kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural quantum propagator toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = 0;
  bool paper_scale = false;
  std::string config_path, out_path, kind = "data", field_values, rho0_spec, checkpoint, data_path, tmax_list;
  double t_max = 0.0, horizon = 0.0;
  long n_samples = 0;
  bool self_check = false, hermitize = false;

  auto* preset = app.add_subcommand("preset", "print a preset experiment config as JSON");
  std::string preset_name;
  preset->add_option("name", preset_name, "spin_boson | three_state_gamma")->required();
  preset->add_flag("--paper-scale", paper_scale, "paper-scale model and training budgets");
  preset->add_option("--tmax", t_max, "override the training window length");
  auto* preset_seed = preset->add_option("--seed", seed, "training seed");

  auto* generate = app.add_subcommand("generate", "sample a dataset and write it to disk");
  generate->add_option("--config", config_path, "experiment config JSON")->required();
  generate->add_option("--n", n_samples, "number of samples")->required();
  generate->add_option("--kind", kind, "data | physics");
  generate->add_option("--out", out_path, "output file")->required();
  auto* generate_seed = generate->add_option("--seed", seed, "sampling seed (default: config seed)");

  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset file");
  train_cmd->add_option("--config", config_path, "experiment config JSON")->required();
  train_cmd->add_option("--data", data_path, "dataset file from 'generate'")->required();
  train_cmd->add_option("--out", out_path, "output directory");
  auto* train_seed = train_cmd->add_option("--seed", seed, "training seed (default: config seed)");
  auto* train_threads = train_cmd->add_option("--threads", threads, "worker cap; results are thread-invariant");

  auto* predict = app.add_subcommand("predict", "roll a trained model forward and emit a trajectory CSV");
  predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict->add_option("--field", field_values, "field parameters, comma-separated per channel")->required();
  predict->add_option("--horizon", horizon, "prediction horizon in time units")->required();
  predict->add_option("--rho0", rho0_spec, "initial state override (basis:<index>)");
  predict->add_option("--out", out_path, "output CSV (default: stdout)");
  predict->add_flag("--project", hermitize, "hermitize+renormalize between rollout windows");

  auto* validate = app.add_subcommand("validate", "compare model predictions against RK4");
  validate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  validate->add_option("--config", config_path, "experiment config (default: embedded in checkpoint)");
  validate->add_option("--fields", field_values, "field parameter sets, ';'-separated")->required();
  validate->add_option("--horizon", horizon, "horizon in time units (default: one window)");
  validate->add_option("--out", out_path, "output directory (default: CSV to stdout)");
  validate->add_flag("--self-check", self_check, "substitute RK4 for the model (pipeline check)");

  auto* ablate = app.add_subcommand("ablate-tmax", "train one model per t_max and compare beyond-window dynamics");
  ablate->add_option("--config", config_path, "base experiment config")->required();
  ablate->add_option("--tmax-list", tmax_list, "comma-separated training windows")->required();
  ablate->add_option("--fields", field_values, "field parameter sets, ';'-separated")->required();
  ablate->add_option("--horizon", horizon, "shared validation horizon in time units")->required();
  ablate->add_option("--out", out_path, "output directory");
  auto* ablate_seed = ablate->add_option("--seed", seed, "training seed");
  auto* ablate_threads = ablate->add_option("--threads", threads, "worker cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (preset->parsed()) return cmd_preset(preset_name, paper_scale, t_max, seed, preset_seed->count() > 0);
    if (generate->parsed())
      return cmd_generate(config_path, n_samples, kind, out_path, seed, generate_seed->count() > 0);
    if (train_cmd->parsed())
      return cmd_train(config_path, data_path, out_path, seed, train_seed->count() > 0, threads,
                       train_threads->count() > 0);
    if (predict->parsed()) return cmd_predict(checkpoint, field_values, horizon, rho0_spec, out_path, hermitize);
    if (validate->parsed()) return cmd_validate(checkpoint, config_path, field_values, horizon, out_path, self_check);
    if (ablate->parsed())
      return cmd_ablate(config_path, tmax_list, field_values, horizon, out_path, seed, ablate_seed->count() > 0,
                        threads, ablate_threads->count() > 0);
  } catch (const DivergenceError& e) {
    log_error(e.what());
    return kExitDiverged;
  } catch (const TrainAbort& e) {
    log_error(e.what());
    return kExitDiverged;
  } catch (const std::exception& e) {
    log_error(e.what());
    return kExitConfig;
  }
  return kExitUsage;
}
