#pragma once

// Dense real linear algebra for the small (<= ~200x200) matrices used by the
// whitening transforms and the 2D theory checks.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wbench::linalg {

class LinalgError : public std::runtime_error {
 public:
  enum class Kind { kInvalidInput, kNotSpd, kDimensionMismatch };

  LinalgError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  Matrix transpose() const;
  std::vector<double> diag() const;
  bool all_finite() const;

  // Largest absolute entry.
  double max_abs() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);
std::vector<double> operator*(const Matrix& a, std::span<const double> x);

// Entry-wise max |a - b|.
double max_abs_diff(const Matrix& a, const Matrix& b);

// A matrix that is exactly symmetric. Construction from a general matrix
// rejects any asymmetry; use `symmetrized` to average out rounding noise.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Matrix m);

  static SymMatrix identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }
  static SymMatrix symmetrized(const Matrix& m);

  std::size_t dim() const noexcept { return m_.rows(); }
  double operator()(std::size_t r, std::size_t c) const { return m_(r, c); }
  const Matrix& matrix() const noexcept { return m_; }
  double trace() const;

 private:
  Matrix m_;
};

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // orthonormal columns

  Matrix reconstruct() const;
};

// Cyclic Jacobi eigendecomposition.
EigenDecomposition sym_eig(const SymMatrix& m);

// Symmetric inverse square root U diag(1/sqrt(lambda)) U^T.
SymMatrix inv_sqrt(const SymMatrix& m);

// Lower-triangular L with L L^T = m.
Matrix cholesky(const SymMatrix& m);

// Shifts the spectrum when the smallest eigenvalue falls below 1e-16.
SymMatrix regularize_spd(const SymMatrix& m);

// Moore-Penrose pseudo-inverse; singular values below 1e-12 * sigma_max are
// treated as zero.
Matrix pseudo_inverse(const Matrix& a);

// Inverse of a lower-triangular matrix with nonzero diagonal.
Matrix lower_triangular_inverse(const Matrix& l);

// Solves a small symmetric positive definite system via Cholesky.
std::vector<double> solve_spd(const SymMatrix& a, std::span<const double> b);

inline constexpr double kRegularizationThreshold = 1e-16;

}  // namespace wbench::linalg
