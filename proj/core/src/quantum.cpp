#include "nqp/quantum.hpp"

#include <cmath>

namespace nqp {

namespace {

void check_dims(const SystemSpec& spec) {
  if (spec.dim < 2) throw ConfigError("SystemSpec.dim must be >= 2, got " + std::to_string(spec.dim));
  if (static_cast<int>(spec.energies.size()) != spec.dim)
    throw ConfigError("SystemSpec.energies has " + std::to_string(spec.energies.size()) + " entries, expected " +
                      std::to_string(spec.dim));
}

void check_operator_dim(const ComplexMatrix& op, int d, const char* what) {
  if (op.rows() != d || op.cols() != d)
    throw ConfigError(std::string(what) + " is " + std::to_string(op.rows()) + "x" + std::to_string(op.cols()) +
                      ", expected " + std::to_string(d) + "x" + std::to_string(d));
}

}  // namespace

ComplexMatrix build_h0(const SystemSpec& spec) {
  check_dims(spec);
  const int d = spec.dim;
  ComplexMatrix h = ComplexMatrix::Zero(d, d);
  for (int j = 0; j < d; ++j) h(j, j) = Complex(spec.energies[static_cast<size_t>(j)], 0.0);

  ComplexMatrix listed = ComplexMatrix::Zero(d, d);
  for (const Coupling& c : spec.couplings) {
    if (c.j < 0 || c.j >= d || c.jp < 0 || c.jp >= d)
      throw ConfigError("coupling index out of range: (" + std::to_string(c.j) + ", " + std::to_string(c.jp) + ")");
    if (c.j == c.jp) throw ConfigError("coupling with j == j' is not allowed; use energies for diagonals");
    listed(c.j, c.jp) += c.delta;
  }
  for (int j = 0; j < d; ++j) {
    for (int jp = j + 1; jp < d; ++jp) {
      const Complex a = listed(j, jp);
      const Complex b = listed(jp, j);
      if (a != Complex(0.0, 0.0) && b != Complex(0.0, 0.0) && b != std::conj(a))
        throw ConfigError("couplings (" + std::to_string(j) + "," + std::to_string(jp) +
                          ") listed in both directions but not conjugate");
      const Complex v = (a != Complex(0.0, 0.0)) ? a : std::conj(b);
      h(j, jp) = v;
      h(jp, j) = std::conj(v);
    }
  }
  return h;
}

ComplexMatrix hamiltonian_at(const SystemSpec& spec, const std::vector<FieldChannel>& fields, double t) {
  ComplexMatrix h = build_h0(spec);
  for (const FieldChannel& f : fields) {
    check_operator_dim(f.f_op, spec.dim, "field operator");
    h += f.value(t) * f.f_op;
  }
  return h;
}

ComplexMatrix hamiltonian_with_values(const SystemSpec& spec, const std::vector<FieldChannel>& fields,
                                      const std::vector<Complex>& values) {
  if (values.size() != fields.size())
    throw ConfigError("field value row has " + std::to_string(values.size()) + " entries for " +
                      std::to_string(fields.size()) + " channels");
  ComplexMatrix h = build_h0(spec);
  for (size_t k = 0; k < fields.size(); ++k) {
    check_operator_dim(fields[k].f_op, spec.dim, "field operator");
    h += values[k] * fields[k].f_op;
  }
  return h;
}

ComplexMatrix dissipator_apply(const ComplexMatrix& v_op, const ComplexMatrix& rho) {
  if (v_op.rows() != rho.rows() || v_op.cols() != rho.cols() || rho.rows() != rho.cols())
    throw ConfigError("dissipator shape mismatch");
  const ComplexMatrix vdv = v_op.adjoint() * v_op;
  return vdv * rho + rho * vdv - 2.0 * (v_op * rho * v_op.adjoint());
}

ComplexMatrix qme_rhs_with_hamiltonian(const ComplexMatrix& h, const std::vector<BathChannel>& baths,
                                       const ComplexMatrix& rho) {
  const Complex i_unit(0.0, 1.0);
  ComplexMatrix out = -i_unit * (h * rho - rho * h);
  for (const BathChannel& b : baths) {
    if (b.gamma < 0.0) throw ConfigError("bath gamma must be nonnegative");
    if (b.gamma == 0.0) continue;
    out -= b.gamma * dissipator_apply(b.v_op, rho);
  }
  return out;
}

ComplexMatrix qme_rhs(const SystemSpec& spec, const std::vector<BathChannel>& baths,
                      const std::vector<FieldChannel>& fields, double t, const ComplexMatrix& rho) {
  check_operator_dim(rho, spec.dim, "density matrix");
  for (const BathChannel& b : baths) check_operator_dim(b.v_op, spec.dim, "bath operator");
  return qme_rhs_with_hamiltonian(hamiltonian_at(spec, fields, t), baths, rho);
}

LiouvilleVector vectorize(const ComplexMatrix& rho) {
  const long d = rho.rows();
  LiouvilleVector v(d * d);
  for (long j = 0; j < d; ++j)
    for (long jp = 0; jp < d; ++jp) v(j * d + jp) = rho(j, jp);
  return v;
}

ComplexMatrix devectorize(const LiouvilleVector& v) {
  const long n = v.size();
  const long d = static_cast<long>(std::llround(std::sqrt(static_cast<double>(n))));
  if (d * d != n) throw ConfigError("Liouville vector length " + std::to_string(n) + " is not a perfect square");
  ComplexMatrix rho(d, d);
  for (long j = 0; j < d; ++j)
    for (long jp = 0; jp < d; ++jp) rho(j, jp) = v(j * d + jp);
  return rho;
}

ComplexMatrix liouvillian_from_hamiltonian(const ComplexMatrix& h, const std::vector<BathChannel>& baths) {
  const long d = h.rows();
  ComplexMatrix l(d * d, d * d);
  ComplexMatrix basis = ComplexMatrix::Zero(d, d);
  for (long j = 0; j < d; ++j) {
    for (long jp = 0; jp < d; ++jp) {
      basis(j, jp) = Complex(1.0, 0.0);
      l.col(j * d + jp) = vectorize(qme_rhs_with_hamiltonian(h, baths, basis));
      basis(j, jp) = Complex(0.0, 0.0);
    }
  }
  return l;
}

ComplexMatrix liouvillian_matrix(const SystemSpec& spec, const std::vector<BathChannel>& baths,
                                 const std::vector<FieldChannel>& fields, double t) {
  for (const BathChannel& b : baths) check_operator_dim(b.v_op, spec.dim, "bath operator");
  return liouvillian_from_hamiltonian(hamiltonian_at(spec, fields, t), baths);
}

}  // namespace nqp
