#pragma once

// Linear decorrelating transforms z = W (x - mean), fitted from a training
// batch (rows = samples).

#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

#include "wbench/linalg.hpp"

namespace wbench::whitening {

enum class Method { kNone, kSphering, kSymOrth, kOsp, kCholesky, kPartialRegression };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);
// The five non-trivial methods, in a fixed order.
const std::vector<Method>& all_methods();

struct Transform {
  Method method = Method::kNone;
  std::vector<double> mean;
  linalg::Matrix matrix;
  // Cholesky feature ordering (position k holds the original index of the
  // k-th feature in the factorization); identity for other methods.
  std::vector<std::size_t> ordering;

  std::size_t dim() const noexcept { return mean.size(); }
};

// Sample mean and covariance with the N - 1 denominator.
struct Moments {
  std::vector<double> mean;
  linalg::SymMatrix cov;
  std::size_t n = 0;
};

Moments moments(const linalg::Matrix& x);

Transform fit_none(std::size_t dim);
Transform fit_sphering(const Moments& m);
Transform fit_sym_orth(const Moments& m);
Transform fit_osp(const Moments& m);
// Empty `ordering` means row-major (identity).
Transform fit_cholesky(const Moments& m, std::vector<std::size_t> ordering = {});
Transform fit_partial_regression(const Moments& m);

Transform fit(Method method, const Moments& m, std::vector<std::size_t> ordering = {});
Transform fit(Method method, const linalg::Matrix& train, std::vector<std::size_t> ordering = {});

// M^{-1/2} for the overlap (second-moment) matrix M = Sigma + mean mean^T.
linalg::Matrix sym_orth_overlap_matrix(const Moments& m);

// Rows of `x` mapped through W (x - mean). No rescaling.
linalg::Matrix apply_raw(const Transform& t, const linalg::Matrix& x);
std::vector<double> apply_raw(const Transform& t, std::span<const double> x);

// apply_raw followed by per-row division by max |z| (rows that are all zero
// are left untouched).
linalg::Matrix apply(const Transform& t, const linalg::Matrix& x);

// One JSON header line, '\n', then little-endian float64 mean and W (row-major).
void save_transform(const Transform& t, const std::filesystem::path& path);
Transform load_transform(const std::filesystem::path& path);

}  // namespace wbench::whitening
