#pragma once

#include <string>

#include "nqp/training.hpp"

namespace nqp {

// Complete description of one experiment: the physical system, the grid,
// the model architecture, and the training budget. Round-trips through
// JSON with canonical (sorted) key order.
struct ExperimentConfig {
  SystemContext system;
  DensityMatrix rho0;
  ModelConfig model;
  TrainConfig train;
  std::string out_dir = "out";

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);

  // Keeps the model's grid-derived fields (dim, n_steps, k_channels) in
  // sync with the system block.
  void sync_model();
  // Rescales the time window, preserving dt; t_max/dt must be integral.
  void set_t_max(double t_max);
};

// Two-level system with absorption and emission baths and one periodic
// drive on the excited-state projector. Desk-scale model/training budgets
// by default; paper_scale selects the published ones.
ExperimentConfig preset_spin_boson(bool paper_scale = false);

// Three levels with a lossy transition state, driven by two constant
// interstate couplings (hermitized operator pairs).
ExperimentConfig preset_three_state(bool paper_scale = false);

ExperimentConfig preset_by_name(const std::string& name, bool paper_scale = false);

}  // namespace nqp
