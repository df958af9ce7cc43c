#include "nqp/training.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

#include "nqp/csv.hpp"
#include "nqp/log.hpp"

namespace nqp {

namespace {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

// Work-shared loop; exceptions from workers are rethrown on the caller.
// Results must be written per-index so scheduling cannot affect them.
void parallel_for(long n, int threads, const std::function<void(long)>& fn) {
  threads = static_cast<int>(std::min<long>(threads, n));
  if (threads <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const long i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Constant tensors of one sample's graph; data samples carry the RK4
// reference, physics samples the per-time Liouvillian (transposed for the
// row-vector convention of complex_pointwise_mul).
struct SampleConstants {
  Tensor input;
  Tensor field_modes;
  Tensor reference;
  Tensor l_transpose;
};

Tensor liouvillian_tensor(const SystemContext& ctx, const FieldGrid& field) {
  const long d = ctx.spec.dim;
  const long d2 = d * d;
  std::vector<FieldChannel> channels;
  channels.reserve(ctx.field_specs.size());
  for (const FieldChannelSpec& s : ctx.field_specs) channels.push_back(s.with_param(0.0));

  Tensor w({field.rows(), d2, d2, 2});
  Complex* wp = reinterpret_cast<Complex*>(w.data.data());
  for (long n = 0; n < field.rows(); ++n) {
    const ComplexMatrix h = hamiltonian_with_values(ctx.spec, channels, field.row(n));
    const ComplexMatrix l = liouvillian_from_hamiltonian(h, ctx.baths);
    for (long i = 0; i < d2; ++i)
      for (long j = 0; j < d2; ++j) wp[(n * d2 + i) * d2 + j] = l(j, i);
  }
  return w;
}

SampleConstants data_constants(const DataSample& s, const ModelConfig& config) {
  if (!s.trajectory) throw ConfigError("data sample is missing its trajectory");
  SampleConstants c;
  c.input = build_input(s.rho0, config);
  c.field_modes = field_modes_tensor(s.field);
  c.reference = trajectory_tensor(*s.trajectory);
  return c;
}

SampleConstants physics_constants(const DataSample& s, const ModelConfig& config, const SystemContext& ctx) {
  SampleConstants c;
  c.input = build_input(s.rho0, config);
  c.field_modes = field_modes_tensor(s.field);
  c.l_transpose = liouvillian_tensor(ctx, s.field);
  return c;
}

Var loss_from_rows(Tape& tape, Var rows, double divisor, bool squared) {
  if (squared) return tape.scale(tape.sum_squares(rows), 1.0 / divisor);
  return tape.frobenius_rows_mean(rows, divisor);
}

// One optimizer step's combined loss and gradient. The whole step lives
// on a single tape with the parameters registered once, which keeps the
// big W_l tensors from being copied per sample; sample sub-graphs are
// built in index order, so the result is independent of thread count by
// construction.
struct StepEval {
  double l_data = 0.0;
  double l_phys = 0.0;
  std::vector<double> grad;  // combined-loss gradient, flat order
};

StepEval eval_step(const ModelParams& params, const std::vector<const SampleConstants*>& data,
                   const std::vector<const SampleConstants*>& phys, double alpha, double dt, bool squared,
                   bool with_grad) {
  const ModelConfig& config = params.config;
  const double divisor = static_cast<double>(config.n_steps);
  Tape tape;
  ModelVars vars = register_params(tape, params, with_grad);

  auto sample_loss = [&](const SampleConstants& sc, bool is_physics) {
    Var input = tape.constant(sc.input);
    Var field_modes = tape.constant(sc.field_modes);
    Var out = forward_graph(tape, vars, input, field_modes, config);
    if (is_physics) {
      Var deriv = tape.time_fd(out, dt);
      Var lmu = tape.complex_pointwise_mul(out, tape.constant(sc.l_transpose));
      return loss_from_rows(tape, tape.sub(deriv, lmu), divisor, squared);
    }
    Var diff = tape.sub(out, tape.constant(sc.reference));
    return loss_from_rows(tape, diff, divisor, squared);
  };

  auto mean_loss = [&](const std::vector<const SampleConstants*>& batch, bool is_physics) {
    Var sum;
    for (const SampleConstants* sc : batch) {
      Var l = sample_loss(*sc, is_physics);
      sum = sum.valid() ? tape.add(sum, l) : l;
    }
    if (sum.valid() && batch.size() > 1) sum = tape.scale(sum, 1.0 / static_cast<double>(batch.size()));
    return sum;
  };

  Var l_data = mean_loss(data, false);
  Var l_phys = mean_loss(phys, true);

  StepEval result;
  result.l_data = l_data.valid() ? tape.value(l_data).data[0] : 0.0;
  result.l_phys = l_phys.valid() ? tape.value(l_phys).data[0] : 0.0;
  if (!with_grad) return result;

  Var combined;
  if (l_data.valid()) combined = tape.scale(l_data, alpha);
  if (l_phys.valid()) {
    Var weighted = tape.scale(l_phys, 1.0 - alpha);
    combined = combined.valid() ? tape.add(combined, weighted) : weighted;
  }
  if (!combined.valid()) {
    result.grad.assign(static_cast<size_t>(params.total_size()), 0.0);
    return result;
  }
  tape.backward(combined);
  result.grad.reserve(static_cast<size_t>(params.total_size()));
  for (Var v : vars.flat()) {
    const Tensor& g = tape.grad(v);
    result.grad.insert(result.grad.end(), g.data.begin(), g.data.end());
  }
  return result;
}

void check_compatible(const ModelConfig& config, const Dataset& data) {
  if (data.kind != DatasetKind::data) throw ConfigError("training requires a kind=data dataset");
  if (data.dim != config.dim)
    throw ConfigError("dataset dim " + std::to_string(data.dim) + " does not match model dim " +
                      std::to_string(config.dim));
  if (data.grid.n_steps != config.n_steps)
    throw ConfigError("dataset N_t " + std::to_string(data.grid.n_steps) + " does not match model N_t " +
                      std::to_string(config.n_steps));
  if (data.channels != config.k_channels)
    throw ConfigError("dataset has " + std::to_string(data.channels) + " field channels, model expects " +
                      std::to_string(config.k_channels));
}

}  // namespace

void TrainConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (alpha_schedule) {
    const auto& [s, e] = *alpha_schedule;
    if (s < 0.0 || s > 1.0 || e < 0.0 || e > 1.0) throw ConfigError("alpha schedule endpoints must lie in [0, 1]");
  }
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (n_data < 0 || n_phys < 0) throw ConfigError("n_data and n_phys must be nonnegative");
}

double combined_loss(double l_data, double l_phys, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  return alpha * l_data + (1.0 - alpha) * l_phys;
}

double data_loss(const ModelParams& params, std::span<const DataSample> batch, bool squared) {
  if (batch.empty()) return 0.0;
  std::vector<SampleConstants> constants;
  constants.reserve(batch.size());
  for (const DataSample& s : batch) constants.push_back(data_constants(s, params.config));
  std::vector<const SampleConstants*> ptrs;
  for (const SampleConstants& c : constants) ptrs.push_back(&c);
  return eval_step(params, ptrs, {}, 1.0, 0.0, squared, false).l_data;
}

double physics_residual(const ModelParams& params, std::span<const DataSample> batch, const SystemContext& ctx,
                        bool squared) {
  if (batch.empty()) return 0.0;
  std::vector<SampleConstants> constants;
  constants.reserve(batch.size());
  for (const DataSample& s : batch) {
    if (s.field.rows() != params.config.rows())
      throw ConfigError("physics sample grid does not match model config");
    constants.push_back(physics_constants(s, params.config, ctx));
  }
  std::vector<const SampleConstants*> ptrs;
  for (const SampleConstants& c : constants) ptrs.push_back(&c);
  return eval_step(params, {}, ptrs, 0.0, ctx.grid.dt, squared, false).l_phys;
}

double physics_residual_of_trajectory(const Tensor& trajectory, const FieldGrid& field, const SystemContext& ctx,
                                      bool squared) {
  Tape tape;
  Var traj = tape.constant(trajectory);
  Var deriv = tape.time_fd(traj, field.grid.dt);
  Var lmu = tape.complex_pointwise_mul(traj, tape.constant(liouvillian_tensor(ctx, field)));
  Var loss = loss_from_rows(tape, tape.sub(deriv, lmu), static_cast<double>(field.grid.n_steps), squared);
  return tape.value(loss).data[0];
}

double combined_batch_loss(const ModelParams& params, std::span<const DataSample> data,
                           std::span<const DataSample> phys, const SystemContext& ctx, double alpha, bool squared) {
  const double ld = data_loss(params, data, squared);
  const double lp = physics_residual(params, phys, ctx, squared);
  return combined_loss(ld, lp, alpha);
}

std::pair<double, std::vector<double>> combined_batch_loss_grad(const ModelParams& params,
                                                                std::span<const DataSample> data,
                                                                std::span<const DataSample> phys,
                                                                const SystemContext& ctx, double alpha,
                                                                bool squared) {
  std::vector<SampleConstants> dc, pc;
  dc.reserve(data.size());
  pc.reserve(phys.size());
  for (const DataSample& s : data) dc.push_back(data_constants(s, params.config));
  for (const DataSample& s : phys) pc.push_back(physics_constants(s, params.config, ctx));
  std::vector<const SampleConstants*> dptr, pptr;
  for (const SampleConstants& c : dc) dptr.push_back(&c);
  for (const SampleConstants& c : pc) pptr.push_back(&c);

  StepEval step = eval_step(params, dptr, pptr, alpha, ctx.grid.dt, squared, true);
  return {combined_loss(step.l_data, step.l_phys, alpha), std::move(step.grad)};
}

TrainResult train(const SystemContext& ctx, const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& data) {
  model_config.validate();
  train_config.validate();
  check_compatible(model_config, data);

  const long n_data = train_config.n_data > 0 ? train_config.n_data : static_cast<long>(data.samples.size());
  if (n_data > static_cast<long>(data.samples.size()))
    throw ConfigError("n_data = " + std::to_string(n_data) + " exceeds dataset size " +
                      std::to_string(data.samples.size()));
  const long n_phys = train_config.n_phys;
  const int threads = resolve_threads(train_config.threads);
  const bool squared = train_config.squared_loss;
  const double dt = ctx.grid.dt;

  log_info("train: " + std::to_string(n_data) + " data + " + std::to_string(n_phys) + " physics samples, " +
           std::to_string(train_config.epochs) + " epochs, " + std::to_string(threads) + " threads");

  TrainResult result;
  result.params = init_params(model_config, train_config.seed);

  // Data-sample constants are reused across every epoch.
  std::vector<SampleConstants> data_const(static_cast<size_t>(n_data));
  parallel_for(n_data, threads, [&](long i) {
    data_const[static_cast<size_t>(i)] = data_constants(data.samples[static_cast<size_t>(i)], model_config);
  });

  const size_t flat_size = static_cast<size_t>(result.params.total_size());
  AdamState adam(static_cast<long>(flat_size), train_config.lr);
  std::vector<double> flat(flat_size);

  const bool write_files = !train_config.out_dir.empty();
  if (write_files) std::filesystem::create_directories(train_config.out_dir);
  auto checkpoint_path = [&](long epoch) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%06ld.nqpm", epoch);
    return train_config.out_dir + "/" + name;
  };
  auto make_meta = [&](long epoch, double loss) {
    CheckpointMeta meta;
    meta.seed = train_config.seed;
    meta.epoch = epoch;
    meta.loss = loss;
    meta.config_json = train_config.experiment_json;
    return meta;
  };

  const long steps_per_epoch = n_data > 0 ? (n_data + train_config.batch_size - 1) / train_config.batch_size : 0;

  for (long epoch = 1; epoch <= train_config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();

    double alpha = train_config.alpha;
    if (train_config.alpha_schedule) {
      const auto& [a0, a1] = *train_config.alpha_schedule;
      alpha = train_config.epochs > 1
                  ? a0 + (a1 - a0) * static_cast<double>(epoch - 1) / static_cast<double>(train_config.epochs - 1)
                  : a0;
    }

    const Dataset phys = generate_physics_epoch(ctx, train_config.seed, n_phys, epoch);
    std::vector<SampleConstants> phys_const(static_cast<size_t>(n_phys));
    parallel_for(n_phys, threads, [&](long i) {
      phys_const[static_cast<size_t>(i)] = physics_constants(phys.samples[static_cast<size_t>(i)], model_config, ctx);
    });

    std::vector<long> order(static_cast<size_t>(n_data));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = Rng::stream(train_config.seed, {0x04, static_cast<std::uint64_t>(epoch)});
    for (long i = n_data - 1; i > 0; --i) {
      const long j = static_cast<long>(shuffle_rng.next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    double sum_data = 0.0, sum_phys = 0.0, sum_gnorm = 0.0;
    for (long step = 0; step < steps_per_epoch; ++step) {
      std::vector<const SampleConstants*> dbatch;
      const long lo = step * train_config.batch_size;
      const long hi = std::min<long>(lo + train_config.batch_size, n_data);
      for (long i = lo; i < hi; ++i) dbatch.push_back(&data_const[static_cast<size_t>(order[static_cast<size_t>(i)])]);

      std::vector<const SampleConstants*> pbatch;
      const long plo = step * n_phys / steps_per_epoch;
      const long phi = (step + 1) * n_phys / steps_per_epoch;
      for (long i = plo; i < phi; ++i) pbatch.push_back(&phys_const[static_cast<size_t>(i)]);

      const StepEval ev = eval_step(result.params, dbatch, pbatch, alpha, dt, squared, true);

      if (!std::isfinite(ev.l_data) || !std::isfinite(ev.l_phys))
        throw TrainAbort("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(step),
                         epoch, step);

      double gnorm_sq = 0.0;
      for (double g : ev.grad) gnorm_sq += g * g;

      flat = result.params.to_flat_vector();
      adam_step(flat, ev.grad, adam);
      result.params.from_flat_vector(flat);

      sum_data += ev.l_data;
      sum_phys += ev.l_phys;
      sum_gnorm += std::sqrt(gnorm_sq);
    }

    LossRow row;
    row.epoch = epoch;
    row.l_data = steps_per_epoch > 0 ? sum_data / static_cast<double>(steps_per_epoch) : 0.0;
    row.l_phys = steps_per_epoch > 0 ? sum_phys / static_cast<double>(steps_per_epoch) : 0.0;
    row.l = combined_loss(row.l_data, row.l_phys, alpha);
    row.grad_norm = steps_per_epoch > 0 ? sum_gnorm / static_cast<double>(steps_per_epoch) : 0.0;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.report.rows.push_back(row);

    if (write_files && train_config.checkpoint_every > 0 && epoch % train_config.checkpoint_every == 0)
      save_checkpoint(result.params, make_meta(epoch, row.l), checkpoint_path(epoch));

    if (epoch == 1 || epoch == train_config.epochs || (epoch % 100 == 0))
      log_debug("epoch " + std::to_string(epoch) + ": L=" + fmt_f64(row.l) + " (data " + fmt_f64(row.l_data) +
                ", phys " + fmt_f64(row.l_phys) + ")");
  }

  if (write_files) {
    const double final_loss = result.report.rows.empty() ? 0.0 : result.report.rows.back().l;
    save_checkpoint(result.params, make_meta(train_config.epochs, final_loss), train_config.out_dir + "/model.nqpm");
    std::ofstream csv(train_config.out_dir + "/loss.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write loss report to '" + train_config.out_dir + "'");
    csv << result.report.csv();
  }
  return result;
}

std::string LossReport::csv() const {
  std::string out = "epoch,l_data,l_phys,l,grad_norm,seconds\n";
  for (const LossRow& r : rows) {
    out += std::to_string(r.epoch);
    out += ',';
    out += fmt_f64(r.l_data);
    out += ',';
    out += fmt_f64(r.l_phys);
    out += ',';
    out += fmt_f64(r.l);
    out += ',';
    out += fmt_f64(r.grad_norm);
    out += ',';
    out += fmt_f64(r.seconds);
    out += '\n';
  }
  return out;
}

std::string LossReport::canonical_csv() const {
  std::string out = "epoch,l_data,l_phys,l,grad_norm\n";
  for (const LossRow& r : rows) {
    out += std::to_string(r.epoch);
    out += ',';
    out += fmt_f64(r.l_data);
    out += ',';
    out += fmt_f64(r.l_phys);
    out += ',';
    out += fmt_f64(r.l);
    out += ',';
    out += fmt_f64(r.grad_norm);
    out += '\n';
  }
  return out;
}

}  // namespace nqp
