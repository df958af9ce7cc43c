#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nqp/model.hpp"

namespace nqp {

struct TrainConfig {
  double alpha = 0.5;
  // Optional linear alpha schedule (start, end) over epochs; when unset
  // alpha stays constant.
  std::optional<std::pair<double, double>> alpha_schedule;
  double lr = 1e-4;
  long epochs = 0;
  int batch_size = 32;
  long n_data = 0;  // 0 = use every sample in the dataset
  long n_phys = 0;
  std::uint64_t seed = 0;
  bool squared_loss = false;  // Frobenius norm squared instead of plain
  int threads = 0;            // 0 = hardware concurrency (capped)
  long checkpoint_every = 0;  // 0 = only the final checkpoint
  std::string out_dir;        // empty = keep everything in memory
  std::string experiment_json;  // embedded in checkpoint headers

  void validate() const;
};

struct LossRow {
  long epoch = 0;
  double l_data = 0.0;
  double l_phys = 0.0;
  double l = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

struct LossReport {
  std::vector<LossRow> rows;

  std::string csv() const;
  // Same table without the wall-clock column; this is what determinism
  // checks hash, since timing is never reproducible.
  std::string canonical_csv() const;
};

// Training failed with a non-finite loss; previously written checkpoints
// are left on disk.
class TrainAbort : public std::runtime_error {
 public:
  TrainAbort(const std::string& what, long epoch, long batch) : std::runtime_error(what), epoch(epoch), batch(batch) {}
  long epoch = 0;
  long batch = 0;
};

double combined_loss(double l_data, double l_phys, double alpha);

// Mean trajectory loss over the given samples (each must carry its RK4
// trajectory).
double data_loss(const ModelParams& params, std::span<const DataSample> batch, bool squared = false);

// Mean qme residual of the model prediction over the given samples; only
// initial states and field grids are consumed.
double physics_residual(const ModelParams& params, std::span<const DataSample> batch, const SystemContext& ctx,
                        bool squared = false);

// Residual of an arbitrary trajectory tensor [T, 2 d^2] against the
// sample's time-dependent Liouvillian; used to pin the finite-difference
// convergence order with exact trajectories injected in place of model
// output.
double physics_residual_of_trajectory(const Tensor& trajectory, const FieldGrid& field, const SystemContext& ctx,
                                      bool squared = false);

// Combined loss and its gradient in flat parameter order, evaluated the
// same way one optimizer step sees it.
double combined_batch_loss(const ModelParams& params, std::span<const DataSample> data,
                           std::span<const DataSample> phys, const SystemContext& ctx, double alpha,
                           bool squared = false);
std::pair<double, std::vector<double>> combined_batch_loss_grad(const ModelParams& params,
                                                                std::span<const DataSample> data,
                                                                std::span<const DataSample> phys,
                                                                const SystemContext& ctx, double alpha,
                                                                bool squared = false);

struct TrainResult {
  ModelParams params;
  LossReport report;
};

// Minibatch Adam on the combined objective. The physics set is
// regenerated every epoch from the (seed, epoch) stream and interleaved
// chunk-wise with the data batches. Each step's graph is built on one
// tape in sample index order (threads only parallelize constant
// precomputation), so any worker count produces bit-identical results.
TrainResult train(const SystemContext& ctx, const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& data);

}  // namespace nqp
