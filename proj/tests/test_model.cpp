#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "nqp/experiment.hpp"
#include "nqp/model.hpp"

using namespace nqp;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.dim = 2;
  c.n_steps = 8;
  c.k_channels = 1;
  c.latent_channels = 4;
  c.proj_hidden = 8;
  c.n_layers = 1;
  return c;
}

ComplexMatrix ground_state(int d) {
  ComplexMatrix m = ComplexMatrix::Zero(d, d);
  m(0, 0) = Complex(1.0, 0.0);
  return m;
}

FieldGrid grid_for(const ModelConfig& c, double dt, double param, FieldForm form = FieldForm::periodic) {
  FieldChannelSpec spec;
  spec.f_op = ComplexMatrix::Identity(c.dim, c.dim);
  spec.form = form;
  spec.param_min = 0.0;
  spec.param_max = 1.0;
  return embed_field({spec.with_param(param)}, TimeGrid{dt, c.n_steps});
}

void zero_affine(AffinePair& p) {
  for (Tensor* t : {&p.w1, &p.b1, &p.w2, &p.b2}) std::fill(t->data.begin(), t->data.end(), 0.0);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("input tensor carries 2d^2+1 channels and a normalized time axis") {
  ModelConfig c;
  c.dim = 2;
  c.n_steps = 400;
  c.k_channels = 1;
  CHECK(c.in_channels() == 9);
  const Tensor input = build_input(ground_state(2), c);
  CHECK(input.rows() == 401);
  CHECK(input.cols() == 9);
  CHECK(input.at2(0, 8) == 0.0);
  CHECK(input.at2(400, 8) == 1.0);
  CHECK(input.at2(123, 0) == 1.0);   // Re rho_00 broadcast
  CHECK(input.at2(123, 1) == 0.0);
}

TEST_CASE("lift_input separates distinct initial states") {
  const ModelConfig c = tiny_config();
  const ModelParams params = init_params(c, 77);
  const Tensor a = lift_input(params, ground_state(2));
  ComplexMatrix other = ComplexMatrix::Zero(2, 2);
  other(1, 1) = Complex(1.0, 0.0);
  const Tensor b = lift_input(params, other);
  CHECK(a.shape == std::vector<long>{9, 4});
  CHECK(a.data != b.data);
}

TEST_CASE("fourier layer collapses to plain GeLU when the spectral branch is zeroed") {
  ModelConfig c = tiny_config();
  ModelParams params = init_params(c, 5);
  FourierLayerParams& layer = params.layers[0];
  std::fill(layer.w.data.begin(), layer.w.data.end(), 0.0);
  zero_affine(layer.p);

  Tape tape;
  ModelVars vars = register_params(tape, params, false);
  Rng rng(9);
  Tensor v({c.rows(), c.latent_channels});
  for (double& x : v.data) x = rng.uniform(-1.0, 1.0);
  Var vin = tape.constant(v);
  Var field = tape.constant(dft_time(field_grid_tensor(grid_for(c, 0.05, 0.4))));

  Var spectrum = tape.dft_time(vin);
  Var lift = tape.linear(field, vars.layers[0].p.w1, vars.layers[0].p.b1);
  lift = tape.gelu(lift);
  lift = tape.linear(lift, vars.layers[0].p.w2, vars.layers[0].p.b2);
  Var mixed = tape.complex_pointwise_mul(tape.add(spectrum, lift), vars.layers[0].w);
  Var out = tape.gelu(tape.add(vin, tape.idft_time(mixed)));

  for (size_t i = 0; i < v.data.size(); ++i)
    CHECK(tape.value(out).data[i] == doctest::Approx(gelu_scalar(v.data[i])).epsilon(1e-12));
}

TEST_CASE("zeroing P_l reduces to the non-driven layer") {
  // oracle: an independent evaluation of sigma(v + IDFT[W . DFT[v]])
  ModelConfig c = tiny_config();
  ModelParams params = init_params(c, 6);
  zero_affine(params.layers[0].p);

  Rng rng(10);
  Tensor v({c.rows(), c.latent_channels});
  for (double& x : v.data) x = rng.uniform(-1.0, 1.0);

  Tape tape;
  ModelVars vars = register_params(tape, params, false);
  Var vin = tape.constant(v);
  Var field = tape.constant(dft_time(field_grid_tensor(grid_for(c, 0.05, 0.9))));
  Var spectrum = tape.dft_time(vin);
  Var lift = tape.linear(field, vars.layers[0].p.w1, vars.layers[0].p.b1);
  lift = tape.gelu(lift);
  lift = tape.linear(lift, vars.layers[0].p.w2, vars.layers[0].p.b2);
  Var mixed = tape.complex_pointwise_mul(tape.add(spectrum, lift), vars.layers[0].w);
  Var driven = tape.gelu(tape.add(vin, tape.idft_time(mixed)));

  Tensor expected = idft_time([&] {
    Tensor spec_only = dft_time(v);
    Tape t2;
    Var m = t2.complex_pointwise_mul(t2.constant(spec_only), t2.constant(params.layers[0].w));
    return t2.value(m);
  }());
  for (size_t i = 0; i < v.data.size(); ++i) {
    const double want = gelu_scalar(v.data[i] + expected.data[i]);
    CHECK(tape.value(driven).data[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("identity mixing with no field gives GeLU(2v) through the round trip") {
  ModelConfig c = tiny_config();
  ModelParams params = init_params(c, 7);
  FourierLayerParams& layer = params.layers[0];
  std::fill(layer.w.data.begin(), layer.w.data.end(), 0.0);
  const long cc = c.latent_channels / 2;
  for (long n = 0; n < c.rows(); ++n)
    for (long i = 0; i < cc; ++i) layer.w.data[static_cast<size_t>(((n * cc + i) * cc + i) * 2)] = 1.0;
  zero_affine(layer.p);

  Rng rng(11);
  Tensor v({c.rows(), c.latent_channels});
  for (double& x : v.data) x = rng.uniform(-1.0, 1.0);

  Tape tape;
  ModelVars vars = register_params(tape, params, false);
  Var vin = tape.constant(v);
  Var spectrum = tape.dft_time(vin);
  Var mixed = tape.complex_pointwise_mul(spectrum, vars.layers[0].w);
  Var out = tape.gelu(tape.add(vin, tape.idft_time(mixed)));
  for (size_t i = 0; i < v.data.size(); ++i)
    CHECK(std::abs(tape.value(out).data[i] - gelu_scalar(2.0 * v.data[i])) < 1e-10);
}

TEST_CASE("forward emits the full trajectory shape") {
  ModelConfig c;
  c.dim = 2;
  c.n_steps = 400;
  c.k_channels = 1;
  c.latent_channels = 8;
  c.proj_hidden = 8;
  c.n_layers = 1;
  const ModelParams params = init_params(c, 13);
  const Trajectory traj = forward(params, ground_state(2), grid_for(c, 0.05, 0.6));
  CHECK(traj.states.size() == 401);
  CHECK(traj.states[0].size() == 4);
  for (const LiouvilleVector& v : traj.states)
    for (long x = 0; x < v.size(); ++x) CHECK(std::isfinite(std::abs(v(x))));
}

TEST_CASE("forward is deterministic") {
  const ModelConfig c = tiny_config();
  const ModelParams params = init_params(c, 17);
  const FieldGrid field = grid_for(c, 0.05, 0.3);
  const Trajectory a = forward(params, ground_state(2), field);
  const Trajectory b = forward(params, ground_state(2), field);
  for (size_t n = 0; n < a.states.size(); ++n) CHECK((a.states[n] - b.states[n]).norm() == 0.0);
}

TEST_CASE("identity-activation hook makes forward affine in rho0") {
  const ModelConfig c = tiny_config();
  const ModelParams params = init_params(c, 19);
  const FieldGrid field = grid_for(c, 0.05, 0.7);
  const Tensor field_modes = dft_time(field_grid_tensor(field));

  auto run = [&](const ComplexMatrix& rho0) {
    Tape tape;
    ModelVars vars = register_params(tape, params, false);
    Var out = forward_graph(tape, vars, tape.constant(build_input(rho0, c)), tape.constant(field_modes), c,
                            ForwardHooks{true});
    return tape.value(out);
  };

  Rng rng(23);
  ComplexMatrix r1(2, 2), r2(2, 2);
  for (int j = 0; j < 2; ++j)
    for (int jp = 0; jp < 2; ++jp) {
      r1(j, jp) = rng.complex_normal();
      r2(j, jp) = rng.complex_normal();
    }
  // affine combinations with alpha + beta = 1; the network has biases, so
  // plain linearity only holds on this slice (the true propagator is linear)
  for (double alpha : {0.3, 1.5, -0.25}) {
    const double beta = 1.0 - alpha;
    const Tensor lhs = run(alpha * r1 + beta * r2);
    const Tensor a = run(r1);
    const Tensor b = run(r2);
    for (size_t i = 0; i < lhs.data.size(); ++i)
      CHECK(std::abs(lhs.data[i] - (alpha * a.data[i] + beta * b.data[i])) < 1e-10);
  }
}

TEST_CASE("zeroing every P_l removes the field dependence") {
  const ModelConfig c = tiny_config();
  ModelParams params = init_params(c, 29);
  for (FourierLayerParams& l : params.layers) zero_affine(l.p);
  const Trajectory a = forward(params, ground_state(2), grid_for(c, 0.05, 0.2));
  const Trajectory b = forward(params, ground_state(2), grid_for(c, 0.05, 0.95));
  for (size_t n = 0; n < a.states.size(); ++n) CHECK((a.states[n] - b.states[n]).norm() == 0.0);
}

TEST_CASE("parameter count formula matches allocation") {
  Rng rng(31);
  for (int rep = 0; rep < 5; ++rep) {
    ModelConfig c;
    c.dim = 2 + static_cast<int>(rng.next_u64() % 3);
    c.n_steps = 4 + static_cast<long>(rng.next_u64() % 40);
    c.k_channels = 1 + static_cast<int>(rng.next_u64() % 3);
    c.latent_channels = 2 * (1 + static_cast<int>(rng.next_u64() % 8));
    c.proj_hidden = 1 + static_cast<int>(rng.next_u64() % 32);
    c.n_layers = 1 + static_cast<int>(rng.next_u64() % 4);
    const ModelParams params = init_params(c, rng.next_u64());
    CHECK(params.total_size() == c.param_count());
  }
}

TEST_CASE("rollout with a single window equals forward") {
  const ModelConfig c = tiny_config();
  const ModelParams params = init_params(c, 37);
  FieldChannelSpec spec;
  spec.f_op = ComplexMatrix::Identity(2, 2);
  spec.form = FieldForm::periodic;
  spec.param_min = 0.0;
  spec.param_max = 1.0;
  const FieldChannel channel = spec.with_param(0.5);
  const FieldGrid field = embed_field({channel}, TimeGrid{0.05, c.n_steps});

  const Trajectory direct = forward(params, ground_state(2), field);
  const Trajectory rolled = rollout(params, ground_state(2), {channel}, c.n_steps, 0.05);
  REQUIRE(rolled.states.size() == direct.states.size());
  for (size_t n = 0; n < direct.states.size(); ++n) CHECK((rolled.states[n] - direct.states[n]).norm() == 0.0);
}

TEST_CASE("rollout spans multiple windows with re-embedded fields") {
  const ModelConfig c = tiny_config();
  const ModelParams params = init_params(c, 41);
  FieldChannelSpec spec;
  spec.f_op = ComplexMatrix::Identity(2, 2);
  spec.form = FieldForm::periodic;
  spec.param_min = 0.0;
  spec.param_max = 1.0;
  const FieldChannel channel = spec.with_param(0.5);

  const Trajectory rolled = rollout(params, ground_state(2), {channel}, 2 * c.n_steps + 3, 0.05);
  CHECK(rolled.states.size() == static_cast<size_t>(2 * c.n_steps + 4));

  // second window must start from the first window's terminal state
  const FieldGrid w0 = embed_field({channel}, TimeGrid{0.05, c.n_steps}, 0);
  const Trajectory first = forward(params, ground_state(2), w0);
  CHECK((rolled.states[static_cast<size_t>(c.n_steps)] - first.states.back()).norm() == 0.0);
}

TEST_CASE("checkpoint round-trip reproduces forward bit-exactly") {
  const ModelConfig c = tiny_config();
  const ModelParams params = init_params(c, 43);
  CheckpointMeta meta;
  meta.seed = 43;
  meta.epoch = 5;
  meta.loss = 0.125;
  meta.config_json = "{}";
  const auto bytes = serialize_checkpoint(params, meta);

  CheckpointMeta back_meta;
  const ModelParams back = deserialize_checkpoint(bytes, &back_meta);
  CHECK(back_meta.seed == 43);
  CHECK(back_meta.epoch == 5);
  CHECK(back_meta.loss == 0.125);

  const FieldGrid field = grid_for(c, 0.05, 0.6);
  const Trajectory a = forward(params, ground_state(2), field);
  const Trajectory b = forward(back, ground_state(2), field);
  for (size_t n = 0; n < a.states.size(); ++n) CHECK((a.states[n] - b.states[n]).norm() == 0.0);
}

TEST_CASE("checkpoint loader rejects corrupt input") {
  const ModelParams params = init_params(tiny_config(), 47);
  auto bytes = serialize_checkpoint(params, CheckpointMeta{});

  SUBCASE("truncation") {
    bytes.resize(bytes.size() / 2);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), IoError);
  }
  SUBCASE("version bump") {
    bytes[4] += 1;
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), IoError);
  }
  SUBCASE("bad magic") {
    bytes[1] = 'Z';
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), IoError);
  }
}

TEST_CASE("checkpoint files round-trip on disk") {
  const std::string path = (std::filesystem::temp_directory_path() / "nqp_test_ckpt.nqpm").string();
  const ModelParams params = init_params(tiny_config(), 53);
  CheckpointMeta meta;
  meta.seed = 53;
  save_checkpoint(params, meta, path);
  const ModelParams back = load_checkpoint(path);
  CHECK(back.to_flat_vector() == params.to_flat_vector());
  std::filesystem::remove(path);
}

}  // TEST_SUITE
