#include "nqp/model.hpp"

#include <bit>
#include <cstring>
#include <cstdlib>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint serialization assumes a little-endian host");

namespace nqp {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'N', 'Q', 'P', 'M'};

long affine_count(long c_in, long hidden, long c_out) { return c_in * hidden + hidden + hidden * c_out + c_out; }

AffinePair make_affine(long c_in, long hidden, long c_out, Rng& rng) {
  AffinePair p;
  p.w1 = Tensor({c_in, hidden});
  p.b1 = Tensor({hidden});
  p.w2 = Tensor({hidden, c_out});
  p.b2 = Tensor({c_out});
  const double s1 = 1.0 / std::sqrt(static_cast<double>(c_in));
  for (double& v : p.w1.data) v = rng.uniform(-s1, s1);
  for (double& v : p.b1.data) v = rng.uniform(-s1, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& v : p.w2.data) v = rng.uniform(-s2, s2);
  for (double& v : p.b2.data) v = rng.uniform(-s2, s2);
  return p;
}

void collect(const AffinePair& p, std::vector<const Tensor*>& out) {
  out.push_back(&p.w1);
  out.push_back(&p.b1);
  out.push_back(&p.w2);
  out.push_back(&p.b2);
}

Var affine_forward(Tape& tape, const AffinePairVars& p, Var x, bool identity_activation) {
  Var h = tape.linear(x, p.w1, p.b1);
  if (!identity_activation) h = tape.gelu(h);
  return tape.linear(h, p.w2, p.b2);
}

AffinePairVars register_affine(Tape& tape, const AffinePair& p, bool trainable) {
  return AffinePairVars{tape.leaf(p.w1, trainable), tape.leaf(p.b1, trainable), tape.leaf(p.w2, trainable),
                        tape.leaf(p.b2, trainable)};
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"dim", c.dim},
                        {"n_steps", c.n_steps},
                        {"k_channels", c.k_channels},
                        {"latent_channels", c.latent_channels},
                        {"proj_hidden", c.proj_hidden},
                        {"n_layers", c.n_layers},
                        {"modes", c.modes}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.dim = j.at("dim").get<int>();
  c.n_steps = j.at("n_steps").get<long>();
  c.k_channels = j.at("k_channels").get<int>();
  c.latent_channels = j.at("latent_channels").get<int>();
  c.proj_hidden = j.at("proj_hidden").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.modes = j.at("modes").get<long>();
  return c;
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  std::memcpy(buf, &v, 4);
  out.insert(out.end(), buf, buf + 4);
}

}  // namespace

void ModelConfig::validate() const {
  if (dim < 2) throw ConfigError("ModelConfig.dim must be >= 2");
  if (n_steps < 1) throw ConfigError("ModelConfig.n_steps must be >= 1");
  if (k_channels < 1) throw ConfigError("ModelConfig.k_channels must be >= 1");
  if (latent_channels < 2 || latent_channels % 2 != 0)
    throw ConfigError("ModelConfig.latent_channels must be a positive even number (paired complex channels)");
  if (proj_hidden < 1) throw ConfigError("ModelConfig.proj_hidden must be >= 1");
  if (n_layers < 1) throw ConfigError("ModelConfig.n_layers must be >= 1");
  if (modes > rows()) throw ConfigError("ModelConfig.modes exceeds N_t + 1");
}

long ModelConfig::param_count() const {
  const long lat = latent_channels;
  const long c = lat / 2;
  const long per_layer = rows() * c * c * 2 + affine_count(2 * k_channels, proj_hidden, lat);
  return affine_count(in_channels(), proj_hidden, lat) + n_layers * per_layer +
         affine_count(lat, proj_hidden, out_channels());
}

std::vector<const Tensor*> ModelParams::flat() const {
  std::vector<const Tensor*> out;
  collect(p_in, out);
  for (const FourierLayerParams& l : layers) {
    out.push_back(&l.w);
    collect(l.p, out);
  }
  collect(p_out, out);
  return out;
}

std::vector<Tensor*> ModelParams::flat() {
  std::vector<const Tensor*> c = static_cast<const ModelParams*>(this)->flat();
  std::vector<Tensor*> out;
  out.reserve(c.size());
  for (const Tensor* t : c) out.push_back(const_cast<Tensor*>(t));
  return out;
}

long ModelParams::total_size() const {
  long n = 0;
  for (const Tensor* t : flat()) n += t->numel();
  return n;
}

std::vector<double> ModelParams::to_flat_vector() const {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total_size()));
  for (const Tensor* t : flat()) out.insert(out.end(), t->data.begin(), t->data.end());
  return out;
}

void ModelParams::from_flat_vector(const std::vector<double>& values) {
  size_t pos = 0;
  for (Tensor* t : flat()) {
    if (pos + t->data.size() > values.size()) throw ConfigError("flat parameter vector too short");
    std::copy(values.begin() + static_cast<long>(pos), values.begin() + static_cast<long>(pos + t->data.size()),
              t->data.begin());
    pos += t->data.size();
  }
  if (pos != values.size()) throw ConfigError("flat parameter vector length mismatch");
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = Rng::stream(seed, {0x03});
  ModelParams p;
  p.config = config;
  const long lat = config.latent_channels;
  const long c = lat / 2;
  p.p_in = make_affine(config.in_channels(), config.proj_hidden, lat, rng);
  p.layers.reserve(static_cast<size_t>(config.n_layers));
  for (int l = 0; l < config.n_layers; ++l) {
    FourierLayerParams layer;
    layer.w = Tensor({config.rows(), c, c, 2});
    double scale = 1.0 / static_cast<double>(lat);
    if (const char* env = std::getenv("NQP_W_SCALE")) scale = std::atof(env);  // experiment hook

    for (double& v : layer.w.data) v = rng.uniform(-scale, scale);
    layer.p = make_affine(2 * config.k_channels, config.proj_hidden, lat, rng);
    p.layers.push_back(std::move(layer));
  }
  p.p_out = make_affine(lat, config.proj_hidden, config.out_channels(), rng);
  return p;
}

Tensor build_input(const DensityMatrix& rho0, const ModelConfig& config) {
  if (rho0.rows() != config.dim || rho0.cols() != config.dim)
    throw ConfigError("rho0 dimension does not match model config");
  const long rows = config.rows();
  const LiouvilleVector v = vectorize(rho0);
  Tensor input({rows, config.in_channels()});
  for (long n = 0; n < rows; ++n) {
    for (long x = 0; x < v.size(); ++x) {
      input.at2(n, 2 * x) = v(x).real();
      input.at2(n, 2 * x + 1) = v(x).imag();
    }
    input.at2(n, 2 * v.size()) = static_cast<double>(n) / static_cast<double>(config.n_steps);
  }
  return input;
}

Tensor field_grid_tensor(const FieldGrid& field) { return complex_rows_tensor(field.values); }

Tensor field_modes_tensor(const FieldGrid& field) { return dft_time(field_grid_tensor(field)); }

Tensor trajectory_tensor(const Trajectory& traj) {
  const long rows = static_cast<long>(traj.states.size());
  const long d2 = traj.states.empty() ? 0 : traj.states[0].size();
  Tensor t({rows, 2 * d2});
  for (long n = 0; n < rows; ++n) {
    const LiouvilleVector& v = traj.states[static_cast<size_t>(n)];
    for (long x = 0; x < d2; ++x) {
      t.at2(n, 2 * x) = v(x).real();
      t.at2(n, 2 * x + 1) = v(x).imag();
    }
  }
  return t;
}

Trajectory tensor_trajectory(const Tensor& t, const TimeGrid& grid) {
  Trajectory traj;
  traj.grid = grid;
  const long d2 = t.cols() / 2;
  traj.states.reserve(static_cast<size_t>(t.rows()));
  for (long n = 0; n < t.rows(); ++n) {
    LiouvilleVector v(d2);
    for (long x = 0; x < d2; ++x) v(x) = Complex(t.at2(n, 2 * x), t.at2(n, 2 * x + 1));
    traj.states.push_back(std::move(v));
  }
  return traj;
}

std::vector<Var> ModelVars::flat() const {
  std::vector<Var> out{p_in.w1, p_in.b1, p_in.w2, p_in.b2};
  for (const FourierLayerVars& l : layers) {
    out.push_back(l.w);
    out.push_back(l.p.w1);
    out.push_back(l.p.b1);
    out.push_back(l.p.w2);
    out.push_back(l.p.b2);
  }
  out.insert(out.end(), {p_out.w1, p_out.b1, p_out.w2, p_out.b2});
  return out;
}

ModelVars register_params(Tape& tape, const ModelParams& params, bool trainable) {
  ModelVars vars;
  vars.p_in = register_affine(tape, params.p_in, trainable);
  vars.layers.reserve(params.layers.size());
  for (const FourierLayerParams& l : params.layers) {
    FourierLayerVars lv;
    lv.w = tape.leaf(l.w, trainable);
    lv.p = register_affine(tape, l.p, trainable);
    vars.layers.push_back(lv);
  }
  vars.p_out = register_affine(tape, params.p_out, trainable);
  return vars;
}

Var forward_graph(Tape& tape, const ModelVars& vars, Var input, Var field_modes, const ModelConfig& config,
                  const ForwardHooks& hooks) {
  Var v = affine_forward(tape, vars.p_in, input, hooks.identity_activation);
  const long keep = config.kept_modes();
  for (const FourierLayerVars& layer : vars.layers) {
    Var spectrum = tape.dft_time(v);
    Var field_lift = affine_forward(tape, layer.p, field_modes, hooks.identity_activation);
    Var mixed = tape.add(spectrum, field_lift);
    if (keep < config.rows()) mixed = tape.zero_modes(mixed, keep);
    mixed = tape.complex_pointwise_mul(mixed, layer.w);
    Var back = tape.idft_time(mixed);
    Var pre = tape.add(v, back);
    v = hooks.identity_activation ? pre : tape.gelu(pre);
  }
  return affine_forward(tape, vars.p_out, v, hooks.identity_activation);
}

Tensor lift_input(const ModelParams& params, const DensityMatrix& rho0) {
  Tape tape;
  ModelVars vars = register_params(tape, params, false);
  Var input = tape.constant(build_input(rho0, params.config));
  Var h = tape.linear(input, vars.p_in.w1, vars.p_in.b1);
  h = tape.gelu(h);
  h = tape.linear(h, vars.p_in.w2, vars.p_in.b2);
  return tape.value(h);
}

Trajectory forward(const ModelParams& params, const DensityMatrix& rho0, const FieldGrid& field) {
  const ModelConfig& config = params.config;
  if (field.rows() != config.rows() || field.channels() != config.k_channels)
    throw ConfigError("field grid is " + std::to_string(field.rows()) + "x" + std::to_string(field.channels()) +
                      ", model expects " + std::to_string(config.rows()) + "x" + std::to_string(config.k_channels));
  Tape tape;
  ModelVars vars = register_params(tape, params, false);
  Var input = tape.constant(build_input(rho0, config));
  Var field_modes = tape.constant(field_modes_tensor(field));
  Var out = forward_graph(tape, vars, input, field_modes, config);
  const Tensor& result = tape.value(out);
  if (!result.all_finite()) throw DivergenceError("model forward produced non-finite values", -1);
  return tensor_trajectory(result, TimeGrid{field.grid.dt, config.n_steps});
}

Trajectory rollout(const ModelParams& params, const DensityMatrix& rho0, const std::vector<FieldChannel>& channels,
                   long horizon_steps, double dt, bool hermitize_between) {
  if (horizon_steps < 1) throw ConfigError("rollout horizon must be at least one step");
  const long window = params.config.n_steps;
  const TimeGrid window_grid{dt, window};

  Trajectory out;
  out.grid = TimeGrid{dt, horizon_steps};
  out.states.reserve(static_cast<size_t>(horizon_steps + 1));

  // Row 0 is the model's own mu_0, so a single window is identical to
  // forward (mu_0 is anchored by the n=0 loss term, not pinned to rho0).
  DensityMatrix rho = rho0;
  long emitted = 0;  // steps emitted so far
  bool first_window = true;
  while (emitted < horizon_steps) {
    const FieldGrid field = embed_field(channels, window_grid, emitted);
    const Trajectory win = forward(params, rho, field);
    const long take = std::min(window, horizon_steps - emitted);
    for (long n = first_window ? 0 : 1; n <= take; ++n) out.states.push_back(win.states[static_cast<size_t>(n)]);
    emitted += take;
    rho = devectorize(win.states[static_cast<size_t>(window)]);
    if (hermitize_between) {
      rho = 0.5 * (rho + rho.adjoint().eval());
      const Complex tr = rho.trace();
      if (std::abs(tr) > 1e-12) rho /= tr;
    }
    first_window = false;
  }
  return out;
}

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["model"] = config_to_json(params.config);
  header["seed"] = meta.seed;
  header["epoch"] = meta.epoch;
  header["loss"] = meta.loss;
  header["experiment"] = meta.config_json;
  const std::string header_str = header.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
  append_u32(out, kCheckpointVersion);
  append_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.insert(out.end(), header_str.begin(), header_str.end());
  for (const Tensor* t : params.flat()) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(t->data.data());
    out.insert(out.end(), bytes, bytes + t->data.size() * sizeof(double));
  }
  return out;
}

ModelParams deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, CheckpointMeta* meta) {
  size_t pos = 0;
  auto need = [&](size_t n) {
    if (pos + n > bytes.size()) throw IoError("truncated checkpoint");
  };
  need(4);
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw IoError("bad magic, not a checkpoint file");
  pos += 4;
  need(4);
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + pos, 4);
  pos += 4;
  if (version != kCheckpointVersion)
    throw IoError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  need(4);
  std::uint32_t header_len;
  std::memcpy(&header_len, bytes.data() + pos, 4);
  pos += 4;
  need(header_len);
  nlohmann::json header = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data() + pos), header_len));
  pos += header_len;

  ModelParams params;
  params.config = config_from_json(header.at("model"));
  params.config.validate();
  // allocate with the right shapes, then overwrite
  ModelParams shaped = init_params(params.config, 0);
  params = std::move(shaped);
  if (meta) {
    meta->seed = header.at("seed").get<std::uint64_t>();
    meta->epoch = header.at("epoch").get<long>();
    meta->loss = header.at("loss").get<double>();
    meta->config_json = header.at("experiment").get<std::string>();
  }
  for (Tensor* t : params.flat()) {
    const size_t n = t->data.size() * sizeof(double);
    need(n);
    std::memcpy(t->data.data(), bytes.data() + pos, n);
    pos += n;
  }
  if (pos != bytes.size()) throw IoError("trailing bytes after checkpoint payload");
  return params;
}

void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(params, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, meta);
}

}  // namespace nqp
