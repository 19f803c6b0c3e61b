#include "wbench/whitening.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wbench/io.hpp"
#include "wbench/log.hpp"

namespace wbench::whitening {

using linalg::LinalgError;
using linalg::Matrix;
using linalg::SymMatrix;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

double variance_pad(const SymMatrix& cov) {
  return 1e-12 * std::max(1.0, cov.trace() / static_cast<double>(cov.dim()));
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> o(n);
  std::iota(o.begin(), o.end(), std::size_t{0});
  return o;
}

Transform make(Method method, const Moments& m, Matrix w) {
  if (!w.all_finite())
    throw LinalgError(LinalgError::Kind::kInvalidInput,
                      std::string(to_string(method)) + ": whitening matrix is not finite");
  Transform t;
  t.method = method;
  t.mean = m.mean;
  t.matrix = std::move(w);
  t.ordering = identity_order(m.mean.size());
  return t;
}

// Diagonal entries of the covariance with non-positive ones padded.
std::vector<double> safe_variances(const SymMatrix& cov, const char* who) {
  std::vector<double> var = cov.matrix().diag();
  const double pad = variance_pad(cov);
  for (std::size_t i = 0; i < var.size(); ++i) {
    if (var[i] < linalg::kRegularizationThreshold) {
      log::warn(std::string(who) + ": feature " + std::to_string(i) +
                " has zero variance; padding");
      var[i] = std::max(var[i], 0.0) + pad;
    }
  }
  return var;
}

Matrix scale_rows(const std::vector<double>& s, Matrix m) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (double& v : m.row(r)) v *= s[r];
  return m;
}

Matrix scale_cols(Matrix m, const std::vector<double>& s) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] *= s[c];
  }
  return m;
}

// D^{-1/2} Sigma D^{-1/2} with an exact unit diagonal.
SymMatrix correlation(const SymMatrix& cov, const std::vector<double>& var) {
  const std::size_t n = cov.dim();
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c(i, j) = i == j ? 1.0 : cov(i, j) / std::sqrt(var[i] * var[j]);
  return SymMatrix(std::move(c));
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kNone: return "None";
    case Method::kSphering: return "Sphering";
    case Method::kSymOrth: return "SymOrth";
    case Method::kOsp: return "OSP";
    case Method::kCholesky: return "Cholesky";
    case Method::kPartialRegression: return "PartialRegression";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::kNone, Method::kSphering, Method::kSymOrth, Method::kOsp,
                   Method::kCholesky, Method::kPartialRegression})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown whitening method: " + std::string(s));
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> kAll{Method::kSphering, Method::kSymOrth, Method::kOsp,
                                        Method::kCholesky, Method::kPartialRegression};
  return kAll;
}

Moments moments(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) throw LinalgError(LinalgError::Kind::kInvalidInput, "moments: need at least 2 samples");
  if (!x.all_finite()) throw LinalgError(LinalgError::Kind::kInvalidInput, "moments: non-finite input");

  Moments m;
  m.n = n;
  m.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) m.mean[c] += row[c];
  }
  for (double& v : m.mean) v /= static_cast<double>(n);

  Matrix centered = x;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = centered.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] -= m.mean[c];
  }
  Matrix cov(d, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = centered.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double ri = row[i];
      if (ri == 0.0) continue;
      for (std::size_t j = i; j < d; ++j) cov(i, j) += ri * row[j];
    }
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= denom;
      cov(j, i) = cov(i, j);
    }
  m.cov = SymMatrix(std::move(cov));
  return m;
}

Transform fit_none(std::size_t dim) {
  Transform t;
  t.mean.assign(dim, 0.0);
  t.matrix = Matrix::identity(dim);
  t.ordering = identity_order(dim);
  return t;
}

Transform fit_sphering(const Moments& m) {
  return make(Method::kSphering, m, linalg::inv_sqrt(linalg::regularize_spd(m.cov)).matrix());
}

Transform fit_sym_orth(const Moments& m) {
  const std::size_t d = m.cov.dim();
  const double dof = static_cast<double>(m.n - 1);
  Matrix scatter = m.cov.matrix();
  scatter *= dof;
  std::vector<double> ds(d);
  const auto var = safe_variances(m.cov, "SymOrth");
  for (std::size_t i = 0; i < d; ++i) ds[i] = std::sqrt(var[i] * dof);

  const SymMatrix scaled = SymMatrix::symmetrized(scale_cols(scale_rows(ds, scatter), ds));
  const Matrix root = linalg::inv_sqrt(linalg::regularize_spd(scaled)).matrix();
  Matrix w = scale_cols(scale_rows(ds, root), ds);

  // Bring every output feature to unit variance.
  const Matrix out_cov = w * m.cov.matrix() * w.transpose();
  std::vector<double> s(d);
  for (std::size_t i = 0; i < d; ++i) {
    s[i] = out_cov(i, i) > linalg::kRegularizationThreshold ? 1.0 / std::sqrt(out_cov(i, i)) : 1.0;
  }
  return make(Method::kSymOrth, m, scale_rows(s, std::move(w)));
}

Matrix sym_orth_overlap_matrix(const Moments& m) {
  Matrix overlap = m.cov.matrix();
  for (std::size_t i = 0; i < overlap.rows(); ++i)
    for (std::size_t j = 0; j < overlap.cols(); ++j) overlap(i, j) += m.mean[i] * m.mean[j];
  return linalg::inv_sqrt(linalg::regularize_spd(SymMatrix::symmetrized(overlap))).matrix();
}

Transform fit_osp(const Moments& m) {
  const auto var = safe_variances(m.cov, "OSP");
  std::vector<double> inv_sd(var.size());
  for (std::size_t i = 0; i < var.size(); ++i) inv_sd[i] = 1.0 / std::sqrt(var[i]);
  const Matrix root = linalg::inv_sqrt(linalg::regularize_spd(correlation(m.cov, var))).matrix();
  return make(Method::kOsp, m, scale_cols(root, inv_sd));
}

Transform fit_cholesky(const Moments& m, std::vector<std::size_t> ordering) {
  const std::size_t d = m.cov.dim();
  if (ordering.empty()) ordering = identity_order(d);
  if (ordering.size() != d)
    throw LinalgError(LinalgError::Kind::kDimensionMismatch, "Cholesky: ordering has wrong length");
  {
    auto sorted = ordering;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != identity_order(d))
      throw LinalgError(LinalgError::Kind::kInvalidInput, "Cholesky: ordering is not a permutation");
  }

  Matrix permuted(d, d);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l < d; ++l) permuted(k, l) = m.cov(ordering[k], ordering[l]);
  const Matrix chol = linalg::cholesky(linalg::regularize_spd(SymMatrix(std::move(permuted))));
  const Matrix inv = linalg::lower_triangular_inverse(chol);

  Matrix w(d, d);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l <= k; ++l) w(ordering[k], ordering[l]) = inv(k, l);
  Transform t = make(Method::kCholesky, m, std::move(w));
  t.ordering = std::move(ordering);
  return t;
}

Transform fit_partial_regression(const Moments& m) {
  const std::size_t d = m.cov.dim();
  const double pad = variance_pad(m.cov);
  Matrix w(d, d);
  for (std::size_t f = 0; f < d; ++f) {
    std::vector<std::size_t> others;
    others.reserve(d - 1);
    for (std::size_t j = 0; j < d; ++j)
      if (j != f) others.push_back(j);

    Matrix s_oo(d - 1, d - 1);
    std::vector<double> s_of(d - 1);
    for (std::size_t a = 0; a < d - 1; ++a) {
      s_of[a] = m.cov(others[a], f);
      for (std::size_t b = 0; b < d - 1; ++b) s_oo(a, b) = m.cov(others[a], others[b]);
    }
    const std::vector<double> beta =
        d > 1 ? linalg::pseudo_inverse(s_oo) * s_of : std::vector<double>{};

    double resid = m.cov(f, f);
    for (std::size_t a = 0; a < d - 1; ++a) resid -= s_of[a] * beta[a];
    if (resid < linalg::kRegularizationThreshold) {
      log::warn("PartialRegression: feature " + std::to_string(f) +
                " is (numerically) explained by the others; padding residual variance");
      resid = std::max(resid, 0.0) + pad;
    }
    const double inv_sd = 1.0 / std::sqrt(resid);
    w(f, f) = inv_sd;
    for (std::size_t a = 0; a < d - 1; ++a) w(f, others[a]) = -beta[a] * inv_sd;
  }
  return make(Method::kPartialRegression, m, std::move(w));
}

Transform fit(Method method, const Moments& m, std::vector<std::size_t> ordering) {
  switch (method) {
    case Method::kNone: return fit_none(m.mean.size());
    case Method::kSphering: return fit_sphering(m);
    case Method::kSymOrth: return fit_sym_orth(m);
    case Method::kOsp: return fit_osp(m);
    case Method::kCholesky: return fit_cholesky(m, std::move(ordering));
    case Method::kPartialRegression: return fit_partial_regression(m);
  }
  throw std::invalid_argument("unknown whitening method");
}

Transform fit(Method method, const Matrix& train, std::vector<std::size_t> ordering) {
  if (method == Method::kNone) return fit_none(train.cols());
  return fit(method, moments(train), std::move(ordering));
}

std::vector<double> apply_raw(const Transform& t, std::span<const double> x) {
  if (x.size() != t.dim())
    throw LinalgError(LinalgError::Kind::kDimensionMismatch, "apply: sample dimension mismatch");
  std::vector<double> centered(x.begin(), x.end());
  for (std::size_t i = 0; i < centered.size(); ++i) centered[i] -= t.mean[i];
  return t.matrix * std::span<const double>(centered);
}

Matrix apply_raw(const Transform& t, const Matrix& x) {
  if (x.cols() != t.dim())
    throw LinalgError(LinalgError::Kind::kDimensionMismatch, "apply: batch dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto z = apply_raw(t, x.row(r));
    std::copy(z.begin(), z.end(), out.row(r).begin());
  }
  return out;
}

Matrix apply(const Transform& t, const Matrix& x) {
  Matrix out = apply_raw(t, x);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double mx = 0.0;
    for (double v : row) mx = std::max(mx, std::abs(v));
    if (mx > 0.0)
      for (double& v : row) v /= mx;
  }
  return out;
}

void save_transform(const Transform& t, const std::filesystem::path& path) {
  const json header{{"format", "wbench-transform"},
                    {"format_version", kFormatVersion},
                    {"method", to_string(t.method)},
                    {"dim", t.dim()},
                    {"ordering", t.ordering}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io::FormatError("cannot write " + path.string());
  out << header.dump() << '\n';
  io::write_f64_le(out, t.mean);
  io::write_f64_le(out, t.matrix.values());
}

Transform load_transform(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::FormatError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const json header = json::parse(line);
  if (header.value("format", "") != "wbench-transform" ||
      header.value("format_version", 0) != kFormatVersion)
    throw io::FormatError("unsupported transform file: " + path.string());
  const auto d = header.at("dim").get<std::size_t>();
  Transform t;
  t.method = parse_method(header.at("method").get<std::string>());
  t.ordering = header.at("ordering").get<std::vector<std::size_t>>();
  t.mean = io::read_f64_le(in, d);
  t.matrix = Matrix(d, d, io::read_f64_le(in, d * d));
  return t;
}

}  // namespace wbench::whitening
