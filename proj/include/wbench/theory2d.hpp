#pragma once

// Two-feature suppressor model x = a z + eta with a = (1, 0), z = +-1 and
// correlated Gaussian noise. Bayes-optimal linear weights are computed after
// each whitening transform and compared with closed-form expressions.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "wbench/linalg.hpp"

namespace wbench::theory2d {

struct SuppressorModel {
  double s1 = 1.0;
  double s2 = 1.0;
  double c = 0.8;
  std::size_t n = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Method {
  kNone,
  kSphering,
  kSymOrth,
  kOsp,
  kCholesky,
  kCholeskyPermuted,
  kPartialRegression,
};

std::string_view to_string(Method m);
Method parse_method(std::string_view s);
const std::vector<Method>& all_methods();

// [[s1^2 + 1, c s1 s2], [c s1 s2, s2^2]].
linalg::SymMatrix analytic_covariance(const SuppressorModel& model);

struct SuppressorSample {
  linalg::Matrix x;     // n x 2
  std::vector<int> z;  // +1 or -1
};

SuppressorSample sample_suppressor_data(const SuppressorModel& model);

// Whitening matrix fitted on the analytic covariance (zero mean, n samples).
// CholeskyPermuted factorizes the covariance of (x2, x1).
linalg::Matrix whitening_matrix(const SuppressorModel& model, Method method);

// w = (W Sigma W^T)^{-1} W delta for class-mean difference delta.
// CholeskyPermuted: the weights are computed on the swapped covariance with
// delta left in its original order, then swapped back.
std::array<double, 2> bayes_weights(const SuppressorModel& model, Method method,
                                     std::array<double, 2> delta = {2.0, 0.0});

// Closed-form weights for delta = (2, 0). The SymOrth expression carries the
// sample count n.
std::array<double, 2> closed_form_weights(const SuppressorModel& model, Method method);

// Methods whose closed form is held to 1e-8.
bool closed_form_asserted(Method m);

struct ReportRow {
  Method method = Method::kNone;
  double s1 = 0.0, s2 = 0.0, c = 0.0;
  std::size_t n = 0;
  std::array<double, 2> numeric{};
  std::array<double, 2> closed{};
  double abs_err = 0.0;
  bool asserted = false;
  bool pass = true;
  std::string note;
};

struct GridPoint {
  double s1, s2, c;
  std::size_t n;
};

// Every method at every grid point. Failures are recorded in the rows, not
// thrown. Rows with c = 0 additionally require w2 = 0 (except
// CholeskyPermuted, whose swap-back puts the weight on x2).
std::vector<ReportRow> verify_closed_forms(const std::vector<GridPoint>& grid);
std::vector<GridPoint> default_grid();

void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

// Sampled points in each method's whitened space plus the decision boundary
// w1 z1 + w2 z2 + b = 0.
void write_scatter_csv(const SuppressorModel& model, const std::filesystem::path& path);

}  // namespace wbench::theory2d
