#include "igar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "igar/errors.hpp"

namespace igar {

namespace {

void require_nonempty(const Matrix& m, const char* what) {
  if (m.empty()) throw InvalidInput(std::string(what) + ": empty matrix");
}

// o += s * b over m entries.
inline void axpy(double* __restrict o, const double* __restrict b, double s, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) o[j] += s * b[j];
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidInput("Matrix: data length " + std::to_string(data_.size()) + " != " +
                       std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw InvalidInput("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Mask::Mask(std::size_t rows, std::size_t cols, bool value)
    : rows_(rows), cols_(cols), allowed_(rows * cols, value ? 1 : 0) {}

Mask Mask::causal(std::size_t n) {
  Mask m(n, n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_nonempty(a, "matmul");
  require_nonempty(b, "matmul");
  if (a.cols() != b.rows()) {
    throw InvalidInput("matmul: dimension mismatch " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    const double* ar = a.row(i).data();
    for (std::size_t k = 0; k < n; ++k) {
      const double s = ar[k];
      if (s == 0.0) continue;
      axpy(o, b.row(k).data(), s, m);
    }
  }
  return out;
}

Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
  require_nonempty(a, "matmul_transpose_b");
  require_nonempty(b, "matmul_transpose_b");
  if (a.cols() != b.cols()) throw InvalidInput("matmul_transpose_b: dimension mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
  require_nonempty(a, "matmul_transpose_a");
  require_nonempty(b, "matmul_transpose_a");
  if (a.rows() != b.rows()) throw InvalidInput("matmul_transpose_a: dimension mismatch");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ar = a.row(k).data();
    const double* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = ar[i];
      if (s == 0.0) continue;
      axpy(out.row(i).data(), br, s, b.cols());
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

namespace {

Matrix softmax_impl(const Matrix& m, const Mask* mask) {
  require_nonempty(m, "softmax_rows");
  if (mask && (mask->rows() != m.rows() || mask->cols() != m.cols())) {
    throw InvalidInput("softmax_rows: mask shape mismatch");
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < in.size(); ++j) {
      if (mask && !(*mask)(i, j)) continue;
      mx = std::max(mx, in[j]);
      any = true;
    }
    if (!any) throw InvalidInput("softmax_rows: row " + std::to_string(i) + " is fully masked");
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      if (mask && !(*mask)(i, j)) continue;
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

}  // namespace

Matrix softmax_rows(const Matrix& m) { return softmax_impl(m, nullptr); }
Matrix softmax_rows(const Matrix& m, const Mask& mask) { return softmax_impl(m, &mask); }

void add_inplace(Matrix& target, const Matrix& other) {
  if (target.rows() != other.rows() || target.cols() != other.cols()) {
    throw InvalidInput("add_inplace: shape mismatch");
  }
  auto t = target.data();
  auto o = other.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += o[i];
}

void scale_inplace(Matrix& target, double factor) {
  for (double& v : target.data()) v *= factor;
}

double sum(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return splitmix64_mix(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw InvalidInput("Rng::below: n must be positive");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(splitmix64_mix(seed_ ^ splitmix64_mix(stream + 0x632BE59BD9B4E019ULL)));
}

}  // namespace igar
