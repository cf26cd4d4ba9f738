#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace igar {

/// Dense row-major matrix of doubles.
///
/// A default-constructed Matrix is empty (0x0) and is only meaningful as an
/// "unset" placeholder; every numeric kernel rejects empty operands.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const;
  void fill(double value);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-entry boolean mask; true means the entry participates.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool value);

  /// Lower-triangular (j <= i) decoder mask.
  static Mask causal(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return allowed_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool value) { allowed_[r * cols_ + c] = value ? 1 : 0; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> allowed_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materialising the transpose.
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);
/// a^T * b without materialising the transpose.
Matrix matmul_transpose_a(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

/// Row-wise softmax with max subtraction. Masked entries come out as exact 0.
Matrix softmax_rows(const Matrix& m);
Matrix softmax_rows(const Matrix& m, const Mask& mask);

void add_inplace(Matrix& target, const Matrix& other);
void scale_inplace(Matrix& target, double factor);
double sum(std::span<const double> values);

/// Counter-based SplitMix64 generator.
///
/// The i-th output is splitmix64_mix(seed + i * 0x9E3779B97F4A7C15), so the
/// stream depends only on (seed, counter) and is identical on every platform.
/// Doubles use the top 53 bits; normals use Box-Muller on two uniforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Unbiased integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent generator keyed on this seed and a stream id.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace igar
