#include "nqp/experiment.hpp"

#include <cmath>

#include "json.hpp"

namespace nqp {

namespace {

using nlohmann::json;

json mat_to_json(const ComplexMatrix& m) {
  json rows = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(json::array({m(r, c).real(), m(r, c).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

ComplexMatrix json_to_mat(const json& j) {
  const long rows = static_cast<long>(j.size());
  if (rows == 0) throw ConfigError("empty matrix in config");
  const long cols = static_cast<long>(j.at(0).size());
  ComplexMatrix m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    if (static_cast<long>(j.at(r).size()) != cols) throw ConfigError("ragged matrix in config");
    for (long c = 0; c < cols; ++c) {
      const json& e = j.at(r).at(c);
      m(r, c) = Complex(e.at(0).get<double>(), e.at(1).get<double>());
    }
  }
  return m;
}

const char* form_name(FieldForm f) { return f == FieldForm::periodic ? "periodic" : "constant"; }

FieldForm form_from_name(const std::string& s) {
  if (s == "periodic") return FieldForm::periodic;
  if (s == "constant") return FieldForm::constant;
  throw ConfigError("unknown field form '" + s + "'");
}

ComplexMatrix basis_projector(int dim, int index) {
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  m(index, index) = Complex(1.0, 0.0);
  return m;
}

ComplexMatrix ket_bra(int dim, int j, int jp) {
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  m(j, jp) = Complex(1.0, 0.0);
  return m;
}

void apply_desk_budget(ExperimentConfig& cfg) {
  cfg.model.latent_channels = 32;
  cfg.model.proj_hidden = 64;
  cfg.model.n_layers = 2;
  cfg.model.modes = 0;
  cfg.train.epochs = 2000;
  cfg.train.n_data = 200;
  cfg.train.n_phys = 32;
  cfg.train.batch_size = 16;
  cfg.train.lr = 1e-3;
}

void apply_paper_budget(ExperimentConfig& cfg) {
  cfg.model.latent_channels = 128;
  cfg.model.proj_hidden = 256;
  cfg.model.n_layers = 4;
  cfg.model.modes = 0;
  cfg.train.epochs = 10000;
  cfg.train.n_data = 2000;
  cfg.train.n_phys = 200;
  cfg.train.batch_size = 32;
  cfg.train.lr = 1e-4;
}

}  // namespace

void ExperimentConfig::sync_model() {
  model.dim = system.spec.dim;
  model.n_steps = system.grid.n_steps;
  model.k_channels = static_cast<int>(system.field_specs.size());
}

void ExperimentConfig::set_t_max(double t_max) {
  const double steps = t_max / system.grid.dt;
  const long n = static_cast<long>(std::llround(steps));
  if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-9)
    throw ConfigError("t_max = " + std::to_string(t_max) + " is not an integer multiple of dt = " +
                      std::to_string(system.grid.dt));
  system.grid.n_steps = n;
  sync_model();
}

std::string ExperimentConfig::to_json() const {
  json sys;
  sys["preset"] = system.preset_name;
  sys["dim"] = system.spec.dim;
  sys["energies"] = system.spec.energies;
  json couplings = json::array();
  for (const Coupling& c : system.spec.couplings)
    couplings.push_back(json{{"j", c.j}, {"jp", c.jp}, {"delta", json::array({c.delta.real(), c.delta.imag()})}});
  sys["couplings"] = std::move(couplings);
  json baths = json::array();
  for (const BathChannel& b : system.baths) baths.push_back(json{{"gamma", b.gamma}, {"v_op", mat_to_json(b.v_op)}});
  sys["baths"] = std::move(baths);
  json fields = json::array();
  for (const FieldChannelSpec& f : system.field_specs)
    fields.push_back(json{{"f_op", mat_to_json(f.f_op)},
                          {"form", form_name(f.form)},
                          {"use_real_part", f.use_real_part},
                          {"param_min", f.param_min},
                          {"param_max", f.param_max}});
  sys["field_specs"] = std::move(fields);
  sys["grid"] = json{{"dt", system.grid.dt}, {"n_steps", system.grid.n_steps}};

  json model_j{{"dim", model.dim},
               {"n_steps", model.n_steps},
               {"k_channels", model.k_channels},
               {"latent_channels", model.latent_channels},
               {"proj_hidden", model.proj_hidden},
               {"n_layers", model.n_layers},
               {"modes", model.modes}};

  json train_j{{"alpha", train.alpha},
               {"lr", train.lr},
               {"epochs", train.epochs},
               {"batch_size", train.batch_size},
               {"n_data", train.n_data},
               {"n_phys", train.n_phys},
               {"seed", train.seed},
               {"squared_loss", train.squared_loss},
               {"threads", train.threads},
               {"checkpoint_every", train.checkpoint_every}};
  if (train.alpha_schedule)
    train_j["alpha_schedule"] = json::array({train.alpha_schedule->first, train.alpha_schedule->second});
  else
    train_j["alpha_schedule"] = nullptr;

  json root{{"system", std::move(sys)},
            {"rho0", mat_to_json(rho0)},
            {"model", std::move(model_j)},
            {"train", std::move(train_j)},
            {"out_dir", out_dir}};
  return root.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    ExperimentConfig cfg;
    const json& sys = root.at("system");
    cfg.system.preset_name = sys.at("preset").get<std::string>();
    cfg.system.spec.dim = sys.at("dim").get<int>();
    cfg.system.spec.energies = sys.at("energies").get<std::vector<double>>();
    for (const json& c : sys.at("couplings"))
      cfg.system.spec.couplings.push_back(Coupling{c.at("j").get<int>(), c.at("jp").get<int>(),
                                                   Complex(c.at("delta").at(0).get<double>(),
                                                           c.at("delta").at(1).get<double>())});
    for (const json& b : sys.at("baths"))
      cfg.system.baths.push_back(BathChannel{b.at("gamma").get<double>(), json_to_mat(b.at("v_op"))});
    for (const json& f : sys.at("field_specs")) {
      FieldChannelSpec spec;
      spec.f_op = json_to_mat(f.at("f_op"));
      spec.form = form_from_name(f.at("form").get<std::string>());
      spec.use_real_part = f.at("use_real_part").get<bool>();
      spec.param_min = f.at("param_min").get<double>();
      spec.param_max = f.at("param_max").get<double>();
      cfg.system.field_specs.push_back(std::move(spec));
    }
    cfg.system.grid.dt = sys.at("grid").at("dt").get<double>();
    cfg.system.grid.n_steps = sys.at("grid").at("n_steps").get<long>();

    cfg.rho0 = json_to_mat(root.at("rho0"));

    const json& m = root.at("model");
    cfg.model.dim = m.at("dim").get<int>();
    cfg.model.n_steps = m.at("n_steps").get<long>();
    cfg.model.k_channels = m.at("k_channels").get<int>();
    cfg.model.latent_channels = m.at("latent_channels").get<int>();
    cfg.model.proj_hidden = m.at("proj_hidden").get<int>();
    cfg.model.n_layers = m.at("n_layers").get<int>();
    cfg.model.modes = m.at("modes").get<long>();

    const json& t = root.at("train");
    cfg.train.alpha = t.at("alpha").get<double>();
    if (!t.at("alpha_schedule").is_null())
      cfg.train.alpha_schedule = {t.at("alpha_schedule").at(0).get<double>(),
                                  t.at("alpha_schedule").at(1).get<double>()};
    cfg.train.lr = t.at("lr").get<double>();
    cfg.train.epochs = t.at("epochs").get<long>();
    cfg.train.batch_size = t.at("batch_size").get<int>();
    cfg.train.n_data = t.at("n_data").get<long>();
    cfg.train.n_phys = t.at("n_phys").get<long>();
    cfg.train.seed = t.at("seed").get<std::uint64_t>();
    cfg.train.squared_loss = t.at("squared_loss").get<bool>();
    cfg.train.threads = t.at("threads").get<int>();
    cfg.train.checkpoint_every = t.at("checkpoint_every").get<long>();

    cfg.out_dir = root.at("out_dir").get<std::string>();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig preset_spin_boson(bool paper_scale) {
  ExperimentConfig cfg;
  cfg.system.preset_name = "spin_boson";
  cfg.system.spec.dim = 2;
  // basis order (g, e); H0 = wz/2 (|e><e| - |g><g|) + wx (|e><g| + |g><e|)
  const double omega_z = 1.0;
  const double omega_x = 0.5;
  cfg.system.spec.energies = {-omega_z / 2.0, omega_z / 2.0};
  cfg.system.spec.couplings = {Coupling{0, 1, Complex(omega_x, 0.0)}};
  cfg.system.baths = {BathChannel{0.1, ket_bra(2, 1, 0)},   // absorption |e><g|
                      BathChannel{0.2, ket_bra(2, 0, 1)}};  // emission   |g><e|
  FieldChannelSpec drive;
  drive.f_op = basis_projector(2, 1);  // |e><e|
  drive.form = FieldForm::periodic;
  drive.use_real_part = false;
  drive.param_min = 0.2;
  drive.param_max = 1.0;
  cfg.system.field_specs = {std::move(drive)};
  cfg.system.grid = TimeGrid{0.05, 400};  // t_max = 20
  cfg.rho0 = basis_projector(2, 0);       // |g><g|
  if (paper_scale)
    apply_paper_budget(cfg);
  else
    apply_desk_budget(cfg);
  cfg.train.seed = 20240901;
  cfg.sync_model();
  return cfg;
}

ExperimentConfig preset_three_state(bool paper_scale) {
  ExperimentConfig cfg;
  cfg.system.preset_name = "three_state_gamma";
  cfg.system.spec.dim = 3;
  cfg.system.spec.energies = {0.0, 0.1, 1.0};
  cfg.system.baths = {BathChannel{0.1, basis_projector(3, 0)}, BathChannel{0.2, basis_projector(3, 1)},
                      BathChannel{0.1, basis_projector(3, 2)}};
  // constant couplings c1 (|1><2| + |2><1|) and c3 (|2><3| + |3><2|)
  FieldChannelSpec c1;
  c1.f_op = ket_bra(3, 0, 1) + ket_bra(3, 1, 0);
  c1.form = FieldForm::constant;
  c1.param_min = 0.2;
  c1.param_max = 0.8;
  FieldChannelSpec c3;
  c3.f_op = ket_bra(3, 1, 2) + ket_bra(3, 2, 1);
  c3.form = FieldForm::constant;
  c3.param_min = 0.2;
  c3.param_max = 0.8;
  cfg.system.field_specs = {std::move(c1), std::move(c3)};
  cfg.system.grid = TimeGrid{0.05, 40};  // t_max = 2
  cfg.rho0 = basis_projector(3, 0);      // |1><1|
  if (paper_scale)
    apply_paper_budget(cfg);
  else
    apply_desk_budget(cfg);
  cfg.train.seed = 20240902;
  cfg.sync_model();
  return cfg;
}

ExperimentConfig preset_by_name(const std::string& name, bool paper_scale) {
  if (name == "spin_boson") return preset_spin_boson(paper_scale);
  if (name == "three_state_gamma") return preset_three_state(paper_scale);
  throw ConfigError("unknown preset '" + name + "' (expected spin_boson or three_state_gamma)");
}

}  // namespace nqp
