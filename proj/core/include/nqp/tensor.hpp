#pragma once

#include <cstddef>
#include <new>
#include <vector>

#include "nqp/quantum.hpp"

namespace nqp {

// 64-byte-aligned allocator for tensor storage. Vectorized kernels pick
// code paths by buffer alignment; pinning the alignment keeps results
// bit-identical no matter how allocations interleave across threads.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using AlignedF64 = std::vector<double, AlignedAllocator<double>>;

// Dense row-major f64 tensor. Complex axes follow the paired-real
// convention: a complex axis of size C is stored as 2C real channels,
// (Re0, Im0, Re1, Im1, ...), which makes a row reinterpretable as a
// std::complex<double> array.
struct Tensor {
  std::vector<long> shape;
  AlignedF64 data;

  Tensor() = default;
  explicit Tensor(std::vector<long> s);
  static Tensor zeros(std::vector<long> s) { return Tensor(std::move(s)); }

  long numel() const;
  int rank() const { return static_cast<int>(shape.size()); }
  long dim(int i) const { return shape[static_cast<size_t>(i)]; }

  // 2-D accessors (rows x cols), used by the rank-2 ops.
  long rows() const { return shape.at(0); }
  long cols() const { return shape.at(1); }
  double& at2(long r, long c) { return data[static_cast<size_t>(r * cols() + c)]; }
  double at2(long r, long c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

// Exact GeLU x * Phi(x) with the erf-based normal CDF.
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

// Unnormalized forward DFT along the time axis (rows), one transform per
// complex channel pair; idft_time applies the 1/T factor. Input shape
// [T, 2C].
Tensor dft_time(const Tensor& x);
Tensor idft_time(const Tensor& x);

// Mean over rows n of the Euclidean norm of row n of (x - y), divided by
// `divisor` instead of the row count: sum_n ||x_n - y_n|| / divisor.
// With divisor = T-1 this is the 1/(N N_t) * sum_{n=0..N_t} structure of
// the trajectory losses (per sample).
double frobenius_rows_mean(const Tensor& x, const Tensor& y, double divisor);

// Conversions between the quantum types and paired-real tensors.
Tensor state_to_row(const LiouvilleVector& v);          // [1, 2 d^2] payload as flat vector<double>
Tensor complex_rows_tensor(const ComplexMatrix& rows);  // [R, 2C] from an R x C complex matrix
ComplexMatrix tensor_complex_rows(const Tensor& t);     // inverse of the above

}  // namespace nqp
