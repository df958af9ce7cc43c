#include "doctest.h"

#include <cmath>

#include "nqp/experiment.hpp"
#include "nqp/training.hpp"

using namespace nqp;

namespace {

// Spin-boson system on a tiny 8-step grid with a matching tiny model.
ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg = preset_spin_boson();
  cfg.system.grid = TimeGrid{0.05, 8};
  cfg.model.latent_channels = 4;
  cfg.model.proj_hidden = 8;
  cfg.model.n_layers = 1;
  cfg.train.seed = 424242;
  cfg.train.batch_size = 4;
  cfg.train.lr = 1e-3;
  cfg.train.n_data = 0;  // use every sample handed to train()
  cfg.train.n_phys = 0;
  cfg.sync_model();
  return cfg;
}

double max_rel_grad_error_full(const ExperimentConfig& cfg, const std::vector<DataSample>& data,
                               const std::vector<DataSample>& phys, double h) {
  ModelParams params = init_params(cfg.model, 99);
  const auto [loss, grad] = combined_batch_loss_grad(params, data, phys, cfg.system, 0.5);
  (void)loss;

  std::vector<double> flat = params.to_flat_vector();
  double worst = 0.0;
  for (size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + h;
    params.from_flat_vector(flat);
    const double fp = combined_batch_loss(params, data, phys, cfg.system, 0.5);
    flat[i] = keep - h;
    params.from_flat_vector(flat);
    const double fm = combined_batch_loss(params, data, phys, cfg.system, 0.5);
    flat[i] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-4});
    worst = std::max(worst, std::abs(fd - grad[i]) / denom);
  }
  params.from_flat_vector(flat);
  return worst;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("data_loss vanishes when references equal the model output") {
  const ExperimentConfig cfg = tiny_experiment();
  const ModelParams params = init_params(cfg.model, 1);
  Dataset ds = generate_dataset(cfg.system, 5, 2, DatasetKind::data);
  for (DataSample& s : ds.samples) s.trajectory = forward(params, s.rho0, s.field);
  CHECK(data_loss(params, ds.samples) == 0.0);
}

TEST_CASE("data_loss per-slice contribution matches the Frobenius structure") {
  const ExperimentConfig cfg = tiny_experiment();
  const ModelParams params = init_params(cfg.model, 2);
  Dataset ds = generate_dataset(cfg.system, 6, 1, DatasetKind::data);
  DataSample& s = ds.samples[0];
  s.trajectory = forward(params, s.rho0, s.field);
  // shift one time slice by the all-ones complex matrix: ||ones||_F = 2
  for (long x = 0; x < 4; ++x) s.trajectory->states[3](x) += Complex(1.0, 0.0);
  const double expect = 2.0 / static_cast<double>(cfg.system.grid.n_steps);
  CHECK(data_loss(params, ds.samples) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("one Adam step descends on a one-sample overfit problem") {
  const ExperimentConfig cfg = tiny_experiment();
  ModelParams params = init_params(cfg.model, 3);
  const Dataset ds = generate_dataset(cfg.system, 7, 1, DatasetKind::data);

  const auto [loss0, grad] = combined_batch_loss_grad(params, ds.samples, {}, cfg.system, 1.0);
  std::vector<double> flat = params.to_flat_vector();
  AdamState adam(static_cast<long>(flat.size()), 1e-3);
  adam_step(flat, grad, adam);
  params.from_flat_vector(flat);
  const double loss1 = data_loss(params, ds.samples);
  CHECK(loss1 < loss0);
}

TEST_CASE("physics residual of an exact trajectory shrinks fourfold when dt halves") {
  auto residual_at = [](bool real_mode, const TimeGrid& grid) {
    ExperimentConfig cfg = preset_spin_boson();
    cfg.system.field_specs[0].use_real_part = real_mode;
    cfg.system.grid = grid;
    const auto channels = cfg.system.channels_with_params({0.6});
    const Trajectory t = propagate(cfg.system.spec, cfg.system.baths, channels, cfg.system.grid, cfg.rho0);
    return physics_residual_of_trajectory(trajectory_tensor(t), embed_field(channels, cfg.system.grid), cfg.system);
  };
  const TimeGrid coarse{0.05, 400};
  const TimeGrid fine{0.025, 800};

  for (bool real_mode : {false, true}) {
    const double ratio = residual_at(real_mode, coarse) / residual_at(real_mode, fine);
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
  }
  // absolute scale of the second-order stencil error on the Hermitian
  // (cosine-drive) dynamics
  CHECK(residual_at(true, coarse) < 1e-3);
}

TEST_CASE("time-constant trajectory with a zero Liouvillian has zero residual") {
  SystemContext ctx;
  ctx.spec.dim = 2;
  ctx.spec.energies = {0.0, 0.0};
  ctx.grid = TimeGrid{0.1, 6};
  FieldChannelSpec spec;
  spec.f_op = ComplexMatrix::Zero(2, 2);
  spec.form = FieldForm::constant;
  spec.param_min = 0.0;
  spec.param_max = 1.0;
  ctx.field_specs = {spec};

  const auto channels = ctx.channels_with_params({0.5});
  const FieldGrid field = embed_field(channels, ctx.grid);
  Tensor traj({ctx.grid.rows(), 8});
  for (long n = 0; n < traj.rows(); ++n) {
    traj.at2(n, 0) = 0.75;
    traj.at2(n, 6) = 0.25;  // Re rho_11
  }
  CHECK(physics_residual_of_trajectory(traj, field, ctx) == 0.0);
}

TEST_CASE("time-constant trajectory against a nonzero Liouvillian leaves exactly the mean of ||L mu||") {
  const ExperimentConfig cfg = preset_three_state();
  SystemContext ctx = cfg.system;
  ctx.grid = TimeGrid{0.05, 5};
  const auto channels = ctx.channels_with_params({0.3, 0.6});
  const FieldGrid field = embed_field(channels, ctx.grid);

  LiouvilleVector mu(9);
  Rng rng(55);
  for (long x = 0; x < 9; ++x) mu(x) = rng.complex_normal();
  Tensor traj({ctx.grid.rows(), 18});
  for (long n = 0; n < traj.rows(); ++n)
    for (long x = 0; x < 9; ++x) {
      traj.at2(n, 2 * x) = mu(x).real();
      traj.at2(n, 2 * x + 1) = mu(x).imag();
    }

  double expect = 0.0;
  for (long n = 0; n < ctx.grid.rows(); ++n) {
    const ComplexMatrix l = liouvillian_matrix(ctx.spec, ctx.baths, channels, ctx.grid.t(n));
    expect += (l * mu).norm();
  }
  expect /= static_cast<double>(ctx.grid.n_steps);
  CHECK(physics_residual_of_trajectory(traj, field, ctx) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("combined_loss arithmetic and validation") {
  CHECK(combined_loss(0.2, 0.4, 0.5) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(combined_loss(0.2, 0.4, 1.0) == 0.2);
  CHECK(combined_loss(0.2, 0.4, 0.0) == 0.4);
  CHECK_THROWS_AS(combined_loss(0.2, 0.4, 1.5), ConfigError);
  CHECK_THROWS_AS(combined_loss(0.2, 0.4, -0.1), ConfigError);
}

TEST_CASE("whole-model gradient matches central finite differences") {
  const ExperimentConfig cfg = tiny_experiment();
  const Dataset data = generate_dataset(cfg.system, 11, 2, DatasetKind::data);
  const Dataset phys = generate_dataset(cfg.system, 12, 2, DatasetKind::physics);
  const double worst = max_rel_grad_error_full(cfg, data.samples, phys.samples, 1e-6);
  CHECK(worst < 1e-5);
}

TEST_CASE("training runs keep the loss-report identity and improve the loss") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.train.epochs = 5;
  cfg.train.n_phys = 3;
  const Dataset data = generate_dataset(cfg.system, 13, 6, DatasetKind::data);
  const TrainResult result = train(cfg.system, cfg.model, cfg.train, data);
  REQUIRE(result.report.rows.size() == 5);
  for (const LossRow& row : result.report.rows) {
    CHECK(row.l == combined_loss(row.l_data, row.l_phys, cfg.train.alpha));
    CHECK(row.grad_norm > 0.0);
  }
  CHECK(result.report.rows.back().l < result.report.rows.front().l);
}

TEST_CASE("epochs=0 returns the initialization untouched") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.train.epochs = 0;
  const Dataset data = generate_dataset(cfg.system, 17, 2, DatasetKind::data);
  const TrainResult result = train(cfg.system, cfg.model, cfg.train, data);
  CHECK(result.report.rows.empty());
  CHECK(result.params.to_flat_vector() == init_params(cfg.model, cfg.train.seed).to_flat_vector());
}

TEST_CASE("training is bit-deterministic across thread counts") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.train.epochs = 3;
  cfg.train.n_phys = 2;
  const Dataset data = generate_dataset(cfg.system, 19, 5, DatasetKind::data);

  cfg.train.threads = 1;
  const TrainResult serial = train(cfg.system, cfg.model, cfg.train, data);
  cfg.train.threads = 4;
  const TrainResult parallel = train(cfg.system, cfg.model, cfg.train, data);

  CHECK(serial.params.to_flat_vector() == parallel.params.to_flat_vector());
  CHECK(serial.report.canonical_csv() == parallel.report.canonical_csv());
}

TEST_CASE("non-finite loss aborts with epoch and batch index") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.train.epochs = 2;
  cfg.train.n_phys = 0;
  Dataset data = generate_dataset(cfg.system, 23, 2, DatasetKind::data);
  data.samples[0].trajectory->states[2](1) = Complex(std::nan(""), 0.0);
  try {
    train(cfg.system, cfg.model, cfg.train, data);
    FAIL("expected TrainAbort");
  } catch (const TrainAbort& e) {
    CHECK(e.epoch == 1);
    CHECK(e.batch >= 0);
  }
}

TEST_CASE("training rejects a mismatched dataset") {
  ExperimentConfig cfg = tiny_experiment();
  ExperimentConfig other = tiny_experiment();
  other.system.grid = TimeGrid{0.05, 12};
  other.sync_model();
  const Dataset data = generate_dataset(other.system, 29, 2, DatasetKind::data);
  CHECK_THROWS_WITH_AS(train(cfg.system, cfg.model, cfg.train, data),
                       doctest::Contains("does not match model N_t"), ConfigError);
}

TEST_CASE("alpha schedule interpolates linearly across epochs") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.train.epochs = 3;
  cfg.train.n_phys = 2;
  cfg.train.alpha_schedule = {{1.0, 0.0}};
  const Dataset data = generate_dataset(cfg.system, 31, 4, DatasetKind::data);
  const TrainResult result = train(cfg.system, cfg.model, cfg.train, data);
  REQUIRE(result.report.rows.size() == 3);
  CHECK(result.report.rows[0].l == result.report.rows[0].l_data);
  CHECK(result.report.rows[1].l ==
        doctest::Approx(0.5 * result.report.rows[1].l_data + 0.5 * result.report.rows[1].l_phys).epsilon(1e-15));
  CHECK(result.report.rows[2].l == result.report.rows[2].l_phys);
}

}  // TEST_SUITE
