#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nqp/autograd.hpp"
#include "nqp/dataset.hpp"
#include "nqp/tensor.hpp"

namespace nqp {

// Architecture of the propagator network. latent_channels counts real
// channels; the Fourier layers treat them as latent_channels/2 complex
// channels under the paired convention, so it must be even. modes <= 0
// means all N_t+1 modes are kept.
struct ModelConfig {
  int dim = 0;
  long n_steps = 0;
  int k_channels = 0;
  int latent_channels = 32;
  int proj_hidden = 64;
  int n_layers = 2;
  long modes = 0;

  long rows() const { return n_steps + 1; }
  int in_channels() const { return 2 * dim * dim + 1; }
  int out_channels() const { return 2 * dim * dim; }
  long kept_modes() const { return (modes <= 0 || modes > rows()) ? rows() : modes; }
  long param_count() const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Two affine maps with a GeLU between them; the parameterization used by
// P_in, P_out and every P_l.
struct AffinePair {
  Tensor w1, b1, w2, b2;
};

struct FourierLayerParams {
  Tensor w;       // [T, C, C, 2] per-mode complex mixing, C = latent/2
  AffinePair p;   // field lift P_l
};

// Flat parameter order (checkpoint layout): p_in.(w1,b1,w2,b2), then for
// each layer l: w_l, p_l.(w1,b1,w2,b2), then p_out.(w1,b1,w2,b2).
struct ModelParams {
  ModelConfig config;
  AffinePair p_in;
  std::vector<FourierLayerParams> layers;
  AffinePair p_out;

  std::vector<Tensor*> flat();
  std::vector<const Tensor*> flat() const;
  long total_size() const;
  std::vector<double> to_flat_vector() const;
  void from_flat_vector(const std::vector<double>& values);
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Physical-space input: vec(rho0) as paired-real channels broadcast to
// every time row, plus a trailing t_n / t_max coordinate channel.
Tensor build_input(const DensityMatrix& rho0, const ModelConfig& config);

// FieldGrid rows as 2K paired-real channels.
Tensor field_grid_tensor(const FieldGrid& field);

// Mode-space field input for the P_l lifts: forward DFT along time.
Tensor field_modes_tensor(const FieldGrid& field);

Tensor trajectory_tensor(const Trajectory& traj);
Trajectory tensor_trajectory(const Tensor& t, const TimeGrid& grid);

// Parameter nodes registered on a tape.
struct AffinePairVars {
  Var w1, b1, w2, b2;
};
struct FourierLayerVars {
  Var w;
  AffinePairVars p;
};
struct ModelVars {
  AffinePairVars p_in;
  std::vector<FourierLayerVars> layers;
  AffinePairVars p_out;

  std::vector<Var> flat() const;
};

ModelVars register_params(Tape& tape, const ModelParams& params, bool trainable);

struct ForwardHooks {
  bool identity_activation = false;  // test hook: replaces GeLU with identity
};

// Full forward graph: lift, n_layers Fourier layers, projection head.
// input is [T, 2d^2+1]; field_modes is the field grid tensor already
// DFT-transformed along time ([T, 2K] in mode space).
Var forward_graph(Tape& tape, const ModelVars& vars, Var input, Var field_modes, const ModelConfig& config,
                  const ForwardHooks& hooks = {});

// Latent tensor after P_in (inference helper).
Tensor lift_input(const ModelParams& params, const DensityMatrix& rho0);

Trajectory forward(const ModelParams& params, const DensityMatrix& rho0, const FieldGrid& field);

// Recursive window composition: forward over [0, N_t], reuse the final
// state as the next initial state with the field grid re-embedded at the
// absolute times of each window. hermitize_between projects each window
// seed back to a hermitized, unit-trace matrix (off by default).
Trajectory rollout(const ModelParams& params, const DensityMatrix& rho0, const std::vector<FieldChannel>& channels,
                   long horizon_steps, double dt, bool hermitize_between = false);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  long epoch = 0;
  double loss = 0.0;
  std::string config_json;  // experiment config carried alongside, may be empty
};

// Checkpoint file: "NQPM" magic, u32 version, u32 JSON header length,
// JSON header, packed little-endian f64 parameters in flat order.
std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, const CheckpointMeta& meta);
ModelParams deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, CheckpointMeta* meta = nullptr);
void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta, const std::string& path);
ModelParams load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace nqp
