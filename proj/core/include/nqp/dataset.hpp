#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nqp/quantum.hpp"
#include "nqp/rng.hpp"

namespace nqp {

// One field channel before its scalar parameter is drawn.
struct FieldChannelSpec {
  ComplexMatrix f_op;
  FieldForm form = FieldForm::periodic;
  bool use_real_part = false;
  double param_min = 0.0;
  double param_max = 0.0;

  FieldChannel with_param(double p) const { return FieldChannel{f_op, form, p, use_real_part}; }
  FieldChannel sample(Rng& rng) const;
};

// External fields embedded on the time grid: row n holds (f_n^1 ... f_n^K).
struct FieldGrid {
  TimeGrid grid;
  ComplexMatrix values;  // (n_steps+1) x K

  long rows() const { return values.rows(); }
  int channels() const { return static_cast<int>(values.cols()); }
  std::vector<Complex> row(long n) const;
};

struct Trajectory {
  TimeGrid grid;
  std::vector<LiouvilleVector> states;  // n_steps + 1 entries
};

struct DataSample {
  DensityMatrix rho0;
  std::vector<FieldChannel> channels;  // concrete drawn parameters
  FieldGrid field;
  std::optional<Trajectory> trajectory;  // present for kind=data
};

enum class DatasetKind { data, physics };

const char* to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

// Everything generation needs: the system, its baths, the field channel
// templates with sampling ranges, and the grid.
struct SystemContext {
  std::string preset_name = "custom";
  SystemSpec spec;
  std::vector<BathChannel> baths;
  std::vector<FieldChannelSpec> field_specs;
  TimeGrid grid;

  std::vector<FieldChannel> channels_with_params(const std::vector<double>& params) const;
};

struct Dataset {
  DatasetKind kind = DatasetKind::data;
  std::uint64_t seed = 0;
  std::string preset_name;
  int dim = 0;
  TimeGrid grid;
  int channels = 0;
  std::vector<DataSample> samples;
};

// Classical RK4 update for d rho / dt = rhs(t, rho).
template <class Rhs>
DensityMatrix rk4_step(Rhs&& rhs, const DensityMatrix& rho, double t, double dt) {
  const ComplexMatrix k1 = rhs(t, rho);
  const ComplexMatrix k2 = rhs(t + 0.5 * dt, (rho + (0.5 * dt) * k1).eval());
  const ComplexMatrix k3 = rhs(t + 0.5 * dt, (rho + (0.5 * dt) * k2).eval());
  const ComplexMatrix k4 = rhs(t + dt, (rho + dt * k3).eval());
  return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Integrates the qme from rho0 over the grid. Field values at the RK4
// stage times come from the analytic channel forms, not the embedded
// grid. start_step shifts the absolute time as t_n = (start_step + n) dt,
// which keeps split propagation bit-exact against a single shot.
Trajectory propagate(const SystemSpec& spec, const std::vector<BathChannel>& baths,
                     const std::vector<FieldChannel>& channels, const TimeGrid& grid, const DensityMatrix& rho0,
                     long start_step = 0);

// GUE draw, hermitized, diagonal rescaled to unit trace. Draws with
// |trace| < 0.1 are rejected and redrawn (at most 100 tries).
DensityMatrix sample_gue_state(Rng& rng, int dim);

std::vector<FieldChannel> sample_field_channels(Rng& rng, const std::vector<FieldChannelSpec>& specs);
FieldGrid embed_field(const std::vector<FieldChannel>& channels, const TimeGrid& grid, long start_step = 0);
FieldGrid sample_field(Rng& rng, const std::vector<FieldChannelSpec>& specs, const TimeGrid& grid);

// kind=data samples carry RK4 trajectories; kind=physics only initial
// states and fields. Sample i draws from substream (seed, kind, i), so
// generation order (or parallelism) cannot change the bytes.
Dataset generate_dataset(const SystemContext& ctx, std::uint64_t seed, long n_samples, DatasetKind kind);

// Physics set for one training epoch, drawn from the epoch-indexed
// substream (seed, physics, epoch, i); disjoint from generate_dataset's
// streams so regeneration never replays file datasets.
Dataset generate_physics_epoch(const SystemContext& ctx, std::uint64_t seed, long n_samples, long epoch);

// File format: "NQPD" magic, u32 format version, u32 JSON header length,
// JSON header, then per sample the packed little-endian doubles.
std::vector<std::uint8_t> serialize_dataset(const Dataset& ds);
Dataset deserialize_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace nqp
