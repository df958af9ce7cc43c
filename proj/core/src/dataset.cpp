#include "nqp/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "dataset serialization assumes a little-endian host");

namespace nqp {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr char kDatasetMagic[4] = {'N', 'Q', 'P', 'D'};

// RNG stream tags; shared with training's physics-set regeneration.
constexpr std::uint64_t kTagDataSample = 0x01;
constexpr std::uint64_t kTagPhysicsSample = 0x02;

void append_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint8_t buf[8];
  std::memcpy(buf, &v, 8);
  out.insert(out.end(), buf, buf + 8);
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  std::memcpy(buf, &v, 4);
  out.insert(out.end(), buf, buf + 4);
}

void append_complex_rowmajor(std::vector<std::uint8_t>& out, const ComplexMatrix& m) {
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) {
      append_f64(out, m(r, c).real());
      append_f64(out, m(r, c).imag());
    }
  }
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    double v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }

  Complex c128() {
    double re = f64();
    double im = f64();
    return {re, im};
  }

  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void expect_magic(const char m[4], const char* what) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) throw IoError(std::string("bad magic, not a ") + what + " file");
    pos_ += 4;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError("truncated file");
  }
  const std::vector<std::uint8_t>& bytes_;
  size_t pos_ = 0;
};

}  // namespace

const char* to_string(DatasetKind kind) { return kind == DatasetKind::data ? "data" : "physics"; }

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "data") return DatasetKind::data;
  if (s == "physics") return DatasetKind::physics;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

FieldChannel FieldChannelSpec::sample(Rng& rng) const {
  if (!(param_max > param_min)) throw ConfigError("field parameter range is empty");
  return with_param(rng.uniform(param_min, param_max));
}

std::vector<Complex> FieldGrid::row(long n) const {
  std::vector<Complex> out(static_cast<size_t>(values.cols()));
  for (long k = 0; k < values.cols(); ++k) out[static_cast<size_t>(k)] = values(n, k);
  return out;
}

std::vector<FieldChannel> SystemContext::channels_with_params(const std::vector<double>& params) const {
  if (params.size() != field_specs.size())
    throw ConfigError("expected " + std::to_string(field_specs.size()) + " field parameters, got " +
                      std::to_string(params.size()));
  std::vector<FieldChannel> out;
  out.reserve(params.size());
  for (size_t k = 0; k < params.size(); ++k) out.push_back(field_specs[k].with_param(params[k]));
  return out;
}

Trajectory propagate(const SystemSpec& spec, const std::vector<BathChannel>& baths,
                     const std::vector<FieldChannel>& channels, const TimeGrid& grid, const DensityMatrix& rho0,
                     long start_step) {
  if (grid.dt <= 0.0 || grid.n_steps <= 0) throw ConfigError("time grid requires dt > 0 and n_steps > 0");
  auto rhs = [&](double t, const ComplexMatrix& rho) { return qme_rhs(spec, baths, channels, t, rho); };

  Trajectory traj;
  traj.grid = grid;
  traj.states.reserve(static_cast<size_t>(grid.rows()));
  traj.states.push_back(vectorize(rho0));

  DensityMatrix rho = rho0;
  for (long n = 0; n < grid.n_steps; ++n) {
    rho = rk4_step(rhs, rho, static_cast<double>(start_step + n) * grid.dt, grid.dt);
    if (!rho.allFinite()) throw DivergenceError("integration diverged at step " + std::to_string(n + 1), n + 1);
    traj.states.push_back(vectorize(rho));
  }
  return traj;
}

DensityMatrix sample_gue_state(Rng& rng, int dim) {
  if (dim < 2) throw ConfigError("sample_gue_state requires dim >= 2");
  for (int attempt = 0; attempt < 100; ++attempt) {
    ComplexMatrix m(dim, dim);
    for (int j = 0; j < dim; ++j) {
      for (int jp = 0; jp < dim; ++jp) {
        if (j == jp)
          m(j, jp) = Complex(rng.normal(), 0.0);
        else
          m(j, jp) = rng.complex_normal();
      }
    }
    ComplexMatrix a = 0.5 * (m + m.adjoint().eval());
    double tr = a.trace().real();
    if (std::abs(tr) < 0.1) continue;
    for (int j = 0; j < dim; ++j) a(j, j) /= tr;
    return a;
  }
  throw ConfigError("GUE sampler exceeded 100 rejection retries");
}

std::vector<FieldChannel> sample_field_channels(Rng& rng, const std::vector<FieldChannelSpec>& specs) {
  std::vector<FieldChannel> out;
  out.reserve(specs.size());
  for (const FieldChannelSpec& s : specs) out.push_back(s.sample(rng));
  return out;
}

FieldGrid embed_field(const std::vector<FieldChannel>& channels, const TimeGrid& grid, long start_step) {
  FieldGrid fg;
  fg.grid = grid;
  fg.values.resize(grid.rows(), static_cast<long>(channels.size()));
  for (long n = 0; n < grid.rows(); ++n) {
    const double t = static_cast<double>(start_step + n) * grid.dt;
    for (size_t k = 0; k < channels.size(); ++k) fg.values(n, static_cast<long>(k)) = channels[k].value(t);
  }
  return fg;
}

FieldGrid sample_field(Rng& rng, const std::vector<FieldChannelSpec>& specs, const TimeGrid& grid) {
  return embed_field(sample_field_channels(rng, specs), grid);
}

Dataset generate_dataset(const SystemContext& ctx, std::uint64_t seed, long n_samples, DatasetKind kind) {
  if (n_samples < 0) throw ConfigError("n_samples must be nonnegative");
  Dataset ds;
  ds.kind = kind;
  ds.seed = seed;
  ds.preset_name = ctx.preset_name;
  ds.dim = ctx.spec.dim;
  ds.grid = ctx.grid;
  ds.channels = static_cast<int>(ctx.field_specs.size());
  ds.samples.reserve(static_cast<size_t>(n_samples));

  const std::uint64_t tag = (kind == DatasetKind::data) ? kTagDataSample : kTagPhysicsSample;
  for (long i = 0; i < n_samples; ++i) {
    Rng rng = Rng::stream(seed, {tag, static_cast<std::uint64_t>(i)});
    DataSample s;
    s.rho0 = sample_gue_state(rng, ctx.spec.dim);
    s.channels = sample_field_channels(rng, ctx.field_specs);
    s.field = embed_field(s.channels, ctx.grid);
    if (kind == DatasetKind::data) {
      try {
        s.trajectory = propagate(ctx.spec, ctx.baths, s.channels, ctx.grid, s.rho0);
      } catch (const DivergenceError& e) {
        throw DivergenceError("sample " + std::to_string(i) + ": " + e.what(), e.step_index);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset generate_physics_epoch(const SystemContext& ctx, std::uint64_t seed, long n_samples, long epoch) {
  Dataset ds;
  ds.kind = DatasetKind::physics;
  ds.seed = seed;
  ds.preset_name = ctx.preset_name;
  ds.dim = ctx.spec.dim;
  ds.grid = ctx.grid;
  ds.channels = static_cast<int>(ctx.field_specs.size());
  ds.samples.reserve(static_cast<size_t>(n_samples));
  for (long i = 0; i < n_samples; ++i) {
    Rng rng = Rng::stream(seed, {kTagPhysicsSample, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(i)});
    DataSample s;
    s.rho0 = sample_gue_state(rng, ctx.spec.dim);
    s.channels = sample_field_channels(rng, ctx.field_specs);
    s.field = embed_field(s.channels, ctx.grid);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& ds) {
  nlohmann::json header;
  header["preset"] = ds.preset_name;
  header["dim"] = ds.dim;
  header["channels"] = ds.channels;
  header["n_steps"] = ds.grid.n_steps;
  header["dt"] = ds.grid.dt;
  header["kind"] = to_string(ds.kind);
  header["seed"] = ds.seed;
  header["n_samples"] = ds.samples.size();
  const std::string header_str = header.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kDatasetMagic, kDatasetMagic + 4);
  append_u32(out, kDatasetVersion);
  append_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.insert(out.end(), header_str.begin(), header_str.end());

  for (const DataSample& s : ds.samples) {
    append_complex_rowmajor(out, s.rho0);
    append_complex_rowmajor(out, s.field.values);
    if (ds.kind == DatasetKind::data) {
      if (!s.trajectory) throw IoError("data sample without trajectory");
      for (const LiouvilleVector& v : s.trajectory->states)
        for (long x = 0; x < v.size(); ++x) {
          append_f64(out, v(x).real());
          append_f64(out, v(x).imag());
        }
    }
  }
  return out;
}

Dataset deserialize_dataset(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.expect_magic(kDatasetMagic, "dataset");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw IoError("dataset format version " + std::to_string(version) + " is not supported (expected " +
                  std::to_string(kDatasetVersion) + ")");
  const std::uint32_t header_len = r.u32();
  nlohmann::json header = nlohmann::json::parse(r.str(header_len));

  Dataset ds;
  ds.preset_name = header.at("preset").get<std::string>();
  ds.dim = header.at("dim").get<int>();
  ds.channels = header.at("channels").get<int>();
  ds.grid.n_steps = header.at("n_steps").get<long>();
  ds.grid.dt = header.at("dt").get<double>();
  ds.kind = dataset_kind_from_string(header.at("kind").get<std::string>());
  ds.seed = header.at("seed").get<std::uint64_t>();
  const long n_samples = header.at("n_samples").get<long>();

  const long d = ds.dim;
  const long rows = ds.grid.rows();
  ds.samples.reserve(static_cast<size_t>(n_samples));
  for (long i = 0; i < n_samples; ++i) {
    DataSample s;
    s.rho0.resize(d, d);
    for (long j = 0; j < d; ++j)
      for (long jp = 0; jp < d; ++jp) s.rho0(j, jp) = r.c128();
    s.field.grid = ds.grid;
    s.field.values.resize(rows, ds.channels);
    for (long n = 0; n < rows; ++n)
      for (long k = 0; k < ds.channels; ++k) s.field.values(n, k) = r.c128();
    if (ds.kind == DatasetKind::data) {
      Trajectory traj;
      traj.grid = ds.grid;
      traj.states.reserve(static_cast<size_t>(rows));
      for (long n = 0; n < rows; ++n) {
        LiouvilleVector v(d * d);
        for (long x = 0; x < d * d; ++x) v(x) = r.c128();
        traj.states.push_back(std::move(v));
      }
      s.trajectory = std::move(traj);
    }
    ds.samples.push_back(std::move(s));
  }
  if (!r.exhausted()) throw IoError("trailing bytes after dataset payload");
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_dataset(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_dataset(bytes);
}

}  // namespace nqp
