#include "nqp/tensor.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace nqp {

Tensor::Tensor(std::vector<long> s) : shape(std::move(s)) {
  long n = 1;
  for (long d : shape) {
    if (d < 0) throw ConfigError("negative tensor dimension");
    n *= d;
  }
  data.assign(static_cast<size_t>(n), 0.0);
}

long Tensor::numel() const {
  long n = 1;
  for (long d : shape) n *= d;
  return n;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

double gelu_scalar(double x) { return 0.5 * x * std::erfc(-x * M_SQRT1_2); }

double gelu_grad_scalar(double x) {
  const double phi_cdf = 0.5 * std::erfc(-x * M_SQRT1_2);
  const double phi_pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return phi_cdf + x * phi_pdf;
}

namespace {

// Cached DFT matrices F(k,n) = exp(-2 pi i k n / T). The twiddle angle is
// reduced mod T before the trig call so round trips stay near 1e-13 even
// for T in the hundreds.
const Eigen::MatrixXcd& dft_matrix(long t_len) {
  static std::map<long, Eigen::MatrixXcd> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(t_len);
  if (it != cache.end()) return it->second;
  Eigen::MatrixXcd f(t_len, t_len);
  for (long k = 0; k < t_len; ++k) {
    for (long n = 0; n < t_len; ++n) {
      const long m = (k * n) % t_len;
      const double angle = -2.0 * M_PI * static_cast<double>(m) / static_cast<double>(t_len);
      f(k, n) = Complex(std::cos(angle), std::sin(angle));
    }
  }
  return cache.emplace(t_len, std::move(f)).first->second;
}

using ComplexRowMajor = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_paired(const Tensor& x, const char* what) {
  if (x.rank() != 2) throw ConfigError(std::string(what) + " expects a rank-2 tensor");
  if (x.cols() % 2 != 0) throw ConfigError(std::string(what) + " expects an even channel count (paired complex)");
}

Tensor dft_impl(const Tensor& x, bool inverse) {
  check_paired(x, inverse ? "idft_time" : "dft_time");
  const long t_len = x.rows();
  const long c = x.cols() / 2;
  Tensor out(x.shape);
  Eigen::Map<const ComplexRowMajor> in(reinterpret_cast<const Complex*>(x.data.data()), t_len, c);
  Eigen::Map<ComplexRowMajor> res(reinterpret_cast<Complex*>(out.data.data()), t_len, c);
  const Eigen::MatrixXcd& f = dft_matrix(t_len);
  if (inverse)
    res.noalias() = (f.adjoint() * in) / static_cast<double>(t_len);
  else
    res.noalias() = f * in;
  return out;
}

}  // namespace

Tensor dft_time(const Tensor& x) { return dft_impl(x, false); }
Tensor idft_time(const Tensor& x) { return dft_impl(x, true); }

double frobenius_rows_mean(const Tensor& x, const Tensor& y, double divisor) {
  if (!x.same_shape(y)) throw ConfigError("frobenius_rows_mean shape mismatch");
  if (x.rank() != 2) throw ConfigError("frobenius_rows_mean expects rank-2 tensors");
  if (divisor <= 0.0) throw ConfigError("frobenius_rows_mean divisor must be positive");
  double sum = 0.0;
  for (long r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (long c = 0; c < x.cols(); ++c) {
      const double d = x.at2(r, c) - y.at2(r, c);
      sq += d * d;
    }
    sum += std::sqrt(sq);
  }
  return sum / divisor;
}

Tensor state_to_row(const LiouvilleVector& v) {
  Tensor t({1, 2 * v.size()});
  for (long x = 0; x < v.size(); ++x) {
    t.data[static_cast<size_t>(2 * x)] = v(x).real();
    t.data[static_cast<size_t>(2 * x + 1)] = v(x).imag();
  }
  return t;
}

Tensor complex_rows_tensor(const ComplexMatrix& rows) {
  Tensor t({rows.rows(), 2 * rows.cols()});
  for (long r = 0; r < rows.rows(); ++r) {
    for (long c = 0; c < rows.cols(); ++c) {
      t.at2(r, 2 * c) = rows(r, c).real();
      t.at2(r, 2 * c + 1) = rows(r, c).imag();
    }
  }
  return t;
}

ComplexMatrix tensor_complex_rows(const Tensor& t) {
  check_paired(t, "tensor_complex_rows");
  ComplexMatrix m(t.rows(), t.cols() / 2);
  for (long r = 0; r < t.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) m(r, c) = Complex(t.at2(r, 2 * c), t.at2(r, 2 * c + 1));
  return m;
}

}  // namespace nqp
