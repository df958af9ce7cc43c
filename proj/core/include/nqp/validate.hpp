#pragma once

#include <string>
#include <vector>

#include "nqp/model.hpp"

namespace nqp {

struct ErrorStats {
  double pop_max = 0.0;
  double pop_rms = 0.0;
  double coh_max = 0.0;
  double coh_rms = 0.0;
};

struct FieldValidation {
  std::vector<double> field_params;
  ErrorStats within;   // t <= t_max of the model window
  ErrorStats beyond;   // t > t_max (empty horizon leaves zeros)
  bool diverged = false;
  std::string error;
};

struct ValidationReport {
  long window_steps = 0;
  long horizon_steps = 0;
  double dt = 0.0;
  std::vector<FieldValidation> entries;

  std::string to_json() const;
  std::string csv() const;
};

struct ValidateOptions {
  long horizon_steps = 0;      // 0 = one model window
  bool self_check_rk4 = false; // substitute RK4 for the model prediction
  bool hermitize_between = false;
};

// Runs the model rollout and the RK4 reference on identical inputs for
// each field parameter set; errors are split at the training window.
// Divergence in either pipeline is recorded per entry without aborting
// the remaining ones.
ValidationReport validate_model(const ModelParams& params, const SystemContext& ctx, const DensityMatrix& rho0,
                                const std::vector<std::vector<double>>& field_values, const ValidateOptions& options);

// Time-resolved population table "t, rk4_p0.., model_p0.." for one field
// parameter set (the Fig.-style CSV payload).
std::string population_table_csv(const ModelParams& params, const SystemContext& ctx, const DensityMatrix& rho0,
                                 const std::vector<double>& field_params, long horizon_steps);

// Trajectory CSV: t, then Re/Im of every density-matrix entry.
std::string trajectory_csv(const Trajectory& traj, int dim);

}  // namespace nqp
