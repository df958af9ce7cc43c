#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace nqp {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

// A density matrix is a d x d complex matrix; a Liouville vector is its
// row-major flattening with collective index x = j*d + j'.
using DensityMatrix = ComplexMatrix;
using LiouvilleVector = ComplexVector;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered while integrating or evaluating a model.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step) : std::runtime_error(what), step_index(step) {}
  long step_index = -1;
};

// One interstate coupling Delta_{j j'} of the bare Hamiltonian. Listing
// only one direction implies the conjugate entry; listing both requires
// them to be exact conjugates.
struct Coupling {
  int j = 0;
  int jp = 0;
  Complex delta{0.0, 0.0};
};

struct SystemSpec {
  int dim = 0;                     // number of system states, >= 2
  std::vector<double> energies;    // state energies, units of omega_0
  std::vector<Coupling> couplings;
};

// Markovian heat bath: coupling strength gamma and operator V.
struct BathChannel {
  double gamma = 0.0;
  ComplexMatrix v_op;
};

enum class FieldForm { periodic, constant };

// One external-field channel f_k(t) * F_k. The periodic form is the
// literal complex exponential exp(i w t); use_real_part switches it to
// cos(w t) so Hermiticity-dependent checks can run.
struct FieldChannel {
  ComplexMatrix f_op;
  FieldForm form = FieldForm::periodic;
  double param = 0.0;  // omega_f for periodic, c_k for constant
  bool use_real_part = false;

  Complex value(double t) const {
    if (form == FieldForm::constant) return {param, 0.0};
    if (use_real_part) return {std::cos(param * t), 0.0};
    return {std::cos(param * t), std::sin(param * t)};
  }
};

// Uniform grid t_n = n * dt, n = 0 .. n_steps.
struct TimeGrid {
  double dt = 0.0;
  long n_steps = 0;

  double t(long n) const { return static_cast<double>(n) * dt; }
  double t_max() const { return t(n_steps); }
  long rows() const { return n_steps + 1; }

  bool operator==(const TimeGrid&) const = default;
};

ComplexMatrix build_h0(const SystemSpec& spec);

ComplexMatrix hamiltonian_at(const SystemSpec& spec, const std::vector<FieldChannel>& fields, double t);

// Same assembly with the scalar field values already evaluated (e.g. a
// row of a sampled field grid).
ComplexMatrix hamiltonian_with_values(const SystemSpec& spec, const std::vector<FieldChannel>& fields,
                                      const std::vector<Complex>& values);

// V'V rho + rho V'V - 2 V rho V'  (the qme subtracts gamma times this).
ComplexMatrix dissipator_apply(const ComplexMatrix& v_op, const ComplexMatrix& rho);

ComplexMatrix qme_rhs(const SystemSpec& spec, const std::vector<BathChannel>& baths,
                      const std::vector<FieldChannel>& fields, double t, const ComplexMatrix& rho);

ComplexMatrix qme_rhs_with_hamiltonian(const ComplexMatrix& h, const std::vector<BathChannel>& baths,
                                       const ComplexMatrix& rho);

LiouvilleVector vectorize(const ComplexMatrix& rho);
ComplexMatrix devectorize(const LiouvilleVector& v);

// d^2 x d^2 matrix L(t) with vectorize(qme_rhs(rho)) = L(t) vectorize(rho),
// built column-by-column by probing qme_rhs with basis matrices, so the
// matrix path can never drift from the matrix-free one.
ComplexMatrix liouvillian_matrix(const SystemSpec& spec, const std::vector<BathChannel>& baths,
                                 const std::vector<FieldChannel>& fields, double t);

ComplexMatrix liouvillian_from_hamiltonian(const ComplexMatrix& h, const std::vector<BathChannel>& baths);

}  // namespace nqp
