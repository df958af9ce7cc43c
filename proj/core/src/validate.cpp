#include "nqp/validate.hpp"

#include <cmath>

#include "json.hpp"
#include "nqp/csv.hpp"

namespace nqp {

namespace {

// Population error compares Re of the diagonals; coherence error the
// complex modulus of off-diagonal differences.
ErrorStats error_stats(const std::vector<LiouvilleVector>& model, const std::vector<LiouvilleVector>& ref, long lo,
                       long hi, int dim) {
  ErrorStats s;
  double pop_sq = 0.0, coh_sq = 0.0;
  long pop_n = 0, coh_n = 0;
  for (long n = lo; n < hi; ++n) {
    const LiouvilleVector& a = model[static_cast<size_t>(n)];
    const LiouvilleVector& b = ref[static_cast<size_t>(n)];
    for (int j = 0; j < dim; ++j) {
      for (int jp = 0; jp < dim; ++jp) {
        const long x = static_cast<long>(j) * dim + jp;
        if (j == jp) {
          const double e = std::abs(a(x).real() - b(x).real());
          s.pop_max = std::max(s.pop_max, e);
          pop_sq += e * e;
          ++pop_n;
        } else {
          const double e = std::abs(a(x) - b(x));
          s.coh_max = std::max(s.coh_max, e);
          coh_sq += e * e;
          ++coh_n;
        }
      }
    }
  }
  if (pop_n > 0) s.pop_rms = std::sqrt(pop_sq / static_cast<double>(pop_n));
  if (coh_n > 0) s.coh_rms = std::sqrt(coh_sq / static_cast<double>(coh_n));
  return s;
}

}  // namespace

ValidationReport validate_model(const ModelParams& params, const SystemContext& ctx, const DensityMatrix& rho0,
                                const std::vector<std::vector<double>>& field_values, const ValidateOptions& options) {
  ValidationReport report;
  report.window_steps = params.config.n_steps;
  report.horizon_steps = options.horizon_steps > 0 ? options.horizon_steps : params.config.n_steps;
  report.dt = ctx.grid.dt;

  for (const std::vector<double>& values : field_values) {
    FieldValidation entry;
    entry.field_params = values;
    try {
      const std::vector<FieldChannel> channels = ctx.channels_with_params(values);
      const TimeGrid horizon{ctx.grid.dt, report.horizon_steps};
      const Trajectory ref = propagate(ctx.spec, ctx.baths, channels, horizon, rho0);
      Trajectory pred;
      if (options.self_check_rk4)
        pred = ref;
      else
        pred = rollout(params, rho0, channels, report.horizon_steps, ctx.grid.dt, options.hermitize_between);

      const long split = std::min(report.window_steps + 1, report.horizon_steps + 1);
      entry.within = error_stats(pred.states, ref.states, 0, split, ctx.spec.dim);
      entry.beyond = error_stats(pred.states, ref.states, split, report.horizon_steps + 1, ctx.spec.dim);
    } catch (const DivergenceError& e) {
      entry.diverged = true;
      entry.error = e.what();
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::string ValidationReport::to_json() const {
  nlohmann::json root;
  root["window_steps"] = window_steps;
  root["horizon_steps"] = horizon_steps;
  root["dt"] = dt;
  nlohmann::json entries_j = nlohmann::json::array();
  for (const FieldValidation& e : entries) {
    nlohmann::json j;
    j["field_params"] = e.field_params;
    j["diverged"] = e.diverged;
    if (e.diverged) {
      j["error"] = e.error;
    } else {
      j["within"] = {{"pop_max", e.within.pop_max},
                     {"pop_rms", e.within.pop_rms},
                     {"coh_max", e.within.coh_max},
                     {"coh_rms", e.within.coh_rms}};
      j["beyond"] = {{"pop_max", e.beyond.pop_max},
                     {"pop_rms", e.beyond.pop_rms},
                     {"coh_max", e.beyond.coh_max},
                     {"coh_rms", e.beyond.coh_rms}};
    }
    entries_j.push_back(std::move(j));
  }
  root["entries"] = std::move(entries_j);
  return root.dump(2) + "\n";
}

std::string ValidationReport::csv() const {
  std::string out =
      "field_params,within_pop_max,within_pop_rms,within_coh_max,within_coh_rms,"
      "beyond_pop_max,beyond_pop_rms,beyond_coh_max,beyond_coh_rms,diverged\n";
  for (const FieldValidation& e : entries) {
    std::string params_str;
    for (size_t i = 0; i < e.field_params.size(); ++i) {
      if (i) params_str += ';';
      params_str += fmt_f64(e.field_params[i]);
    }
    out += params_str;
    for (double v : {e.within.pop_max, e.within.pop_rms, e.within.coh_max, e.within.coh_rms, e.beyond.pop_max,
                     e.beyond.pop_rms, e.beyond.coh_max, e.beyond.coh_rms}) {
      out += ',';
      out += fmt_f64(v);
    }
    out += e.diverged ? ",1\n" : ",0\n";
  }
  return out;
}

std::string population_table_csv(const ModelParams& params, const SystemContext& ctx, const DensityMatrix& rho0,
                                 const std::vector<double>& field_params, long horizon_steps) {
  const std::vector<FieldChannel> channels = ctx.channels_with_params(field_params);
  const TimeGrid horizon{ctx.grid.dt, horizon_steps};
  const Trajectory ref = propagate(ctx.spec, ctx.baths, channels, horizon, rho0);
  const Trajectory pred = rollout(params, rho0, channels, horizon_steps, ctx.grid.dt);

  const int d = ctx.spec.dim;
  std::string out = "t";
  for (int j = 0; j < d; ++j) out += ",rk4_p" + std::to_string(j);
  for (int j = 0; j < d; ++j) out += ",nqp_p" + std::to_string(j);
  out += '\n';
  for (long n = 0; n <= horizon_steps; ++n) {
    std::vector<double> row;
    row.push_back(horizon.t(n));
    for (int j = 0; j < d; ++j) row.push_back(ref.states[static_cast<size_t>(n)](j * d + j).real());
    for (int j = 0; j < d; ++j) row.push_back(pred.states[static_cast<size_t>(n)](j * d + j).real());
    out += csv_row(row);
  }
  return out;
}

std::string trajectory_csv(const Trajectory& traj, int dim) {
  std::string out = "t";
  for (int j = 0; j < dim; ++j)
    for (int jp = 0; jp < dim; ++jp) {
      out += ",re_rho_" + std::to_string(j) + "_" + std::to_string(jp);
      out += ",im_rho_" + std::to_string(j) + "_" + std::to_string(jp);
    }
  out += '\n';
  for (size_t n = 0; n < traj.states.size(); ++n) {
    std::vector<double> row;
    row.push_back(traj.grid.t(static_cast<long>(n)));
    const LiouvilleVector& v = traj.states[n];
    for (long x = 0; x < v.size(); ++x) {
      row.push_back(v(x).real());
      row.push_back(v(x).imag());
    }
    out += csv_row(row);
  }
  return out;
}

}  // namespace nqp
