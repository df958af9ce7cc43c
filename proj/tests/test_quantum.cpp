#include "doctest.h"

#include "nqp/dataset.hpp"
#include "nqp/experiment.hpp"
#include "nqp/quantum.hpp"
#include "nqp/rng.hpp"

using namespace nqp;

namespace {

SystemSpec spin_boson_spec() {
  SystemSpec s;
  s.dim = 2;
  s.energies = {-0.5, 0.5};
  s.couplings = {Coupling{0, 1, Complex(0.5, 0.0)}};
  return s;
}

ComplexMatrix ket_bra(int d, int j, int jp) {
  ComplexMatrix m = ComplexMatrix::Zero(d, d);
  m(j, jp) = Complex(1.0, 0.0);
  return m;
}

ComplexMatrix random_hermitian(Rng& rng, int d) {
  ComplexMatrix m(d, d);
  for (int j = 0; j < d; ++j)
    for (int jp = 0; jp < d; ++jp) m(j, jp) = rng.complex_normal();
  return 0.5 * (m + m.adjoint().eval());
}

}  // namespace

TEST_SUITE("quantum") {

TEST_CASE("build_h0 spin-boson matches the two-level matrix") {
  const ComplexMatrix h = build_h0(spin_boson_spec());
  CHECK(h(0, 0) == Complex(-0.5, 0.0));
  CHECK(h(0, 1) == Complex(0.5, 0.0));
  CHECK(h(1, 0) == Complex(0.5, 0.0));
  CHECK(h(1, 1) == Complex(0.5, 0.0));
}

TEST_CASE("build_h0 with zero energies and no couplings is the zero matrix") {
  SystemSpec s;
  s.dim = 3;
  s.energies = {0.0, 0.0, 0.0};
  CHECK(build_h0(s).isZero(0.0));
}

TEST_CASE("build_h0 three-state diagonal") {
  SystemSpec s;
  s.dim = 3;
  s.energies = {0.0, 0.1, 1.0};
  const ComplexMatrix h = build_h0(s);
  CHECK(h(0, 0) == Complex(0.0, 0.0));
  CHECK(h(1, 1) == Complex(0.1, 0.0));
  CHECK(h(2, 2) == Complex(1.0, 0.0));
  CHECK(h(0, 1) == Complex(0.0, 0.0));
}

TEST_CASE("build_h0 rejects a non-Hermitian coupling list") {
  SystemSpec s;
  s.dim = 2;
  s.energies = {0.0, 0.0};
  s.couplings = {Coupling{0, 1, Complex(0.0, 1.0)}, Coupling{1, 0, Complex(0.0, 1.0)}};
  CHECK_THROWS_AS(build_h0(s), ConfigError);
}

TEST_CASE("build_h0 equals its own adjoint exactly") {
  Rng rng(7);
  SystemSpec s;
  s.dim = 4;
  s.energies = {0.3, -1.2, 0.0, 2.5};
  s.couplings = {Coupling{0, 2, Complex(0.1, -0.7)}, Coupling{3, 1, Complex(-0.4, 0.2)},
                 Coupling{0, 1, Complex(1.0, 1.0)}};
  const ComplexMatrix h = build_h0(s);
  const ComplexMatrix hd = h.adjoint();
  for (int j = 0; j < 4; ++j)
    for (int jp = 0; jp < 4; ++jp) CHECK(h(j, jp) == hd(j, jp));
}

TEST_CASE("hamiltonian_at evaluates the periodic drive") {
  const SystemSpec s = spin_boson_spec();
  const ComplexMatrix h0 = build_h0(s);
  FieldChannel f{ket_bra(2, 1, 1), FieldForm::periodic, 1.0, false};

  SUBCASE("t = 0 adds the bare operator") {
    const ComplexMatrix h = hamiltonian_at(s, {f}, 0.0);
    CHECK((h - (h0 + ket_bra(2, 1, 1))).norm() == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("t = pi flips the sign of the complex exponential") {
    const ComplexMatrix h = hamiltonian_at(s, {f}, M_PI);
    CHECK((h - (h0 - ket_bra(2, 1, 1))).norm() < 1e-12);
  }
}

TEST_CASE("hamiltonian_at three-state constant couplings stay symmetric") {
  const ExperimentConfig cfg = preset_three_state();
  const std::vector<FieldChannel> channels = cfg.system.channels_with_params({0.3, 0.6});
  const ComplexMatrix h = hamiltonian_at(cfg.system.spec, channels, 1.7);
  CHECK(h(0, 1) == Complex(0.3, 0.0));
  CHECK(h(1, 0) == Complex(0.3, 0.0));
  CHECK(h(1, 2) == Complex(0.6, 0.0));
  CHECK(h(2, 1) == Complex(0.6, 0.0));
  CHECK(h(0, 2) == Complex(0.0, 0.0));
  // symmetry oracle: hermitized constant couplings give H = H^T = H^dagger
  CHECK((h - h.transpose().eval()).norm() == 0.0);
  CHECK((h - h.adjoint().eval()).norm() == 0.0);
}

TEST_CASE("hamiltonian_at rejects mismatched operator dimensions") {
  const SystemSpec s = spin_boson_spec();
  FieldChannel f{ComplexMatrix::Zero(3, 3), FieldForm::constant, 1.0, false};
  CHECK_THROWS_AS(hamiltonian_at(s, {f}, 0.0), ConfigError);
}

TEST_CASE("dissipator on the excited projector") {
  const ComplexMatrix v = ket_bra(2, 0, 1);  // |g><e|
  const ComplexMatrix rho = ket_bra(2, 1, 1);
  const ComplexMatrix out = dissipator_apply(v, rho);
  // frozen from hand algebra: 2|e><e| - 2|g><g|
  ComplexMatrix expected = ComplexMatrix::Zero(2, 2);
  expected(0, 0) = Complex(-2.0, 0.0);
  expected(1, 1) = Complex(2.0, 0.0);
  CHECK((out - expected).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("dissipator is zero on zero state and on the dark state") {
  const ComplexMatrix v = ket_bra(2, 0, 1);
  CHECK(dissipator_apply(v, ComplexMatrix::Zero(2, 2)).isZero(0.0));
  CHECK(dissipator_apply(v, ket_bra(2, 0, 0)).isZero(0.0));
}

TEST_CASE("dissipator is linear") {
  Rng rng(11);
  const int d = 3;
  ComplexMatrix v(d, d);
  for (int j = 0; j < d; ++j)
    for (int jp = 0; jp < d; ++jp) v(j, jp) = rng.complex_normal();
  for (int rep = 0; rep < 20; ++rep) {
    const ComplexMatrix r1 = random_hermitian(rng, d);
    const ComplexMatrix r2 = random_hermitian(rng, d);
    const double a = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-2.0, 2.0);
    const ComplexMatrix lhs = dissipator_apply(v, a * r1 + b * r2);
    const ComplexMatrix rhs = a * dissipator_apply(v, r1) + b * dissipator_apply(v, r2);
    CHECK((lhs - rhs).norm() < 1e-13);
  }
}

TEST_CASE("qme_rhs bath-only fixed point values") {
  const SystemSpec s = spin_boson_spec();
  const std::vector<BathChannel> baths = {BathChannel{0.1, ket_bra(2, 1, 0)}, BathChannel{0.2, ket_bra(2, 0, 1)}};
  // field weight zero: constant channel with c = 0
  const std::vector<FieldChannel> fields = {FieldChannel{ket_bra(2, 1, 1), FieldForm::constant, 0.0, false}};
  const ComplexMatrix rho = 0.5 * ComplexMatrix::Identity(2, 2);
  const ComplexMatrix out = qme_rhs(s, baths, fields, 0.3, rho);
  // frozen from hand Lindblad algebra: commutator with I/2 vanishes
  CHECK(out(0, 0).real() == doctest::Approx(0.1).epsilon(1e-13));
  CHECK(out(1, 1).real() == doctest::Approx(-0.1).epsilon(1e-13));
  CHECK(std::abs(out(0, 1)) < 1e-14);
  CHECK(std::abs(out(1, 0)) < 1e-14);
}

TEST_CASE("qme_rhs closed-system commutator") {
  const SystemSpec s = spin_boson_spec();
  const ComplexMatrix out = qme_rhs(s, {}, {}, 0.0, ket_bra(2, 0, 0));
  CHECK(std::abs(out(0, 0)) < 1e-15);
  CHECK(std::abs(out(1, 1)) < 1e-15);
  CHECK(out(0, 1) == Complex(0.0, 0.5));
  CHECK(out(1, 0) == Complex(0.0, -0.5));
}

TEST_CASE("qme_rhs vanishes on the steady state of pure decay") {
  SystemSpec s;
  s.dim = 2;
  s.energies = {0.0, 0.0};
  const std::vector<BathChannel> baths = {BathChannel{0.7, ket_bra(2, 0, 1)}};
  CHECK(qme_rhs(s, baths, {}, 0.0, ket_bra(2, 0, 0)).isZero(0.0));
}

TEST_CASE("qme_rhs output is always traceless") {
  Rng rng(23);
  const ExperimentConfig sb = preset_spin_boson();
  const ExperimentConfig ts = preset_three_state();
  for (int rep = 0; rep < 50; ++rep) {
    const ExperimentConfig& cfg = (rep % 2 == 0) ? sb : ts;
    std::vector<double> params;
    for (const FieldChannelSpec& f : cfg.system.field_specs) params.push_back(rng.uniform(f.param_min, f.param_max));
    const auto channels = cfg.system.channels_with_params(params);
    const ComplexMatrix rho = random_hermitian(rng, cfg.system.spec.dim);
    const ComplexMatrix out = qme_rhs(cfg.system.spec, cfg.system.baths, channels, rng.uniform(0.0, 20.0), rho);
    CHECK(std::abs(out.trace()) < 1e-13);
  }
}

TEST_CASE("qme_rhs preserves Hermiticity under real fields") {
  Rng rng(29);
  ExperimentConfig cfg = preset_spin_boson();
  cfg.system.field_specs[0].use_real_part = true;
  for (int rep = 0; rep < 50; ++rep) {
    const auto channels = cfg.system.channels_with_params({rng.uniform(0.2, 1.0)});
    const ComplexMatrix rho = random_hermitian(rng, 2);
    const ComplexMatrix out = qme_rhs(cfg.system.spec, cfg.system.baths, channels, rng.uniform(0.0, 20.0), rho);
    CHECK((out - out.adjoint().eval()).norm() < 1e-13);
  }
}

TEST_CASE("vectorize uses row-major collective order") {
  ComplexMatrix rho(2, 2);
  rho << Complex(1, 0), Complex(2, 0), Complex(3, 0), Complex(4, 0);
  const LiouvilleVector v = vectorize(rho);
  CHECK(v(0) == Complex(1, 0));
  CHECK(v(1) == Complex(2, 0));
  CHECK(v(2) == Complex(3, 0));
  CHECK(v(3) == Complex(4, 0));
}

TEST_CASE("vectorize and devectorize are inverse bijections") {
  Rng rng(31);
  for (int d : {2, 3, 5}) {
    ComplexMatrix rho(d, d);
    for (int j = 0; j < d; ++j)
      for (int jp = 0; jp < d; ++jp) rho(j, jp) = rng.complex_normal();
    const ComplexMatrix back = devectorize(vectorize(rho));
    CHECK((back - rho).norm() == 0.0);
  }
}

TEST_CASE("devectorize d=3 identity embedding and length validation") {
  LiouvilleVector v = LiouvilleVector::Zero(9);
  v(0) = v(4) = v(8) = Complex(1.0 / 3.0, 0.0);
  const ComplexMatrix rho = devectorize(v);
  CHECK((rho - ComplexMatrix::Identity(3, 3) / 3.0).norm() == 0.0);
  CHECK_THROWS_AS(devectorize(LiouvilleVector::Zero(5)), ConfigError);
}

TEST_CASE("liouvillian_matrix agrees with the matrix-free path") {
  Rng rng(37);
  for (const ExperimentConfig& cfg : {preset_spin_boson(), preset_three_state()}) {
    const int d = cfg.system.spec.dim;
    std::vector<double> params;
    for (const FieldChannelSpec& f : cfg.system.field_specs) params.push_back(rng.uniform(f.param_min, f.param_max));
    const auto channels = cfg.system.channels_with_params(params);
    for (int rep = 0; rep < 50; ++rep) {
      const double t = rng.uniform(0.0, 20.0);
      const ComplexMatrix l = liouvillian_matrix(cfg.system.spec, cfg.system.baths, channels, t);
      ComplexMatrix rho(d, d);
      for (int j = 0; j < d; ++j)
        for (int jp = 0; jp < d; ++jp) rho(j, jp) = rng.complex_normal();
      const LiouvilleVector lhs = l * vectorize(rho);
      const LiouvilleVector rhs = vectorize(qme_rhs(cfg.system.spec, cfg.system.baths, channels, t, rho));
      CHECK((lhs - rhs).norm() < 1e-12);
    }
  }
}

TEST_CASE("pure-decay Liouvillian has the expected structure") {
  SystemSpec s;
  s.dim = 2;
  s.energies = {0.0, 0.0};
  const double gamma = 0.35;
  const std::vector<BathChannel> baths = {BathChannel{gamma, ket_bra(2, 0, 1)}};
  const ComplexMatrix l = liouvillian_matrix(s, baths, {}, 0.0);
  // Hand algebra, index order (gg, ge, eg, ee): the diagonal is
  // (0, -g, -g, -2g) and emission feeds the ground state through the
  // single off-diagonal entry L(gg, ee) = +2g.
  CHECK(std::abs(l(0, 0)) < 1e-15);
  CHECK(l(1, 1) == Complex(-gamma, 0.0));
  CHECK(l(2, 2) == Complex(-gamma, 0.0));
  CHECK(l(3, 3) == Complex(-2.0 * gamma, 0.0));
  CHECK(l(0, 3) == Complex(2.0 * gamma, 0.0));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (r != c && !(r == 0 && c == 3)) CHECK(std::abs(l(r, c)) < 1e-15);
}

TEST_CASE("vec(I) is a left null vector of the Liouvillian") {
  Rng rng(41);
  const ExperimentConfig cfg = preset_spin_boson();
  const auto channels = cfg.system.channels_with_params({0.7});
  const ComplexMatrix l = liouvillian_matrix(cfg.system.spec, cfg.system.baths, channels, 3.1);
  const LiouvilleVector id = vectorize(ComplexMatrix::Identity(2, 2));
  CHECK((id.transpose() * l).norm() < 1e-13);
}

}  // TEST_SUITE
