#include "wbench/theory2d.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "wbench/io.hpp"
#include "wbench/rng.hpp"
#include "wbench/whitening.hpp"

namespace wbench::theory2d {

using linalg::Matrix;
using linalg::SymMatrix;

namespace {

struct MethodName {
  Method method;
  std::string_view name;
};

constexpr MethodName kNames[] = {
    {Method::kNone, "None"},
    {Method::kSphering, "Sphering"},
    {Method::kSymOrth, "SymOrth"},
    {Method::kOsp, "OSP"},
    {Method::kCholesky, "Cholesky"},
    {Method::kCholeskyPermuted, "CholeskyPermuted"},
    {Method::kPartialRegression, "PartialRegression"},
};

whitening::Moments analytic_moments(const SuppressorModel& m, const SymMatrix& cov) {
  return {{0.0, 0.0}, cov, m.n};
}

SymMatrix swapped(const SymMatrix& s) {
  Matrix p(2, 2);
  p(0, 0) = s(1, 1);
  p(1, 1) = s(0, 0);
  p(0, 1) = p(1, 0) = s(0, 1);
  return SymMatrix(p);
}

std::array<double, 2> weights_for(const Matrix& w, const SymMatrix& cov, std::array<double, 2> delta) {
  const SymMatrix white = SymMatrix::symmetrized(w * cov.matrix() * w.transpose());
  const auto wd = w * std::span<const double>(delta);
  const auto sol = linalg::solve_spd(white, wd);
  return {sol[0], sol[1]};
}

std::array<double, 2> sphering_closed(double s1, double s2, double c) {
  const double q1 = s1 * s1, q2 = s2 * s2, d = q1 - q2 + 1.0;
  const double alpha = std::sqrt(4.0 * q1 * q2 * c * c + d * d);
  const double beta = q1 + q2 + 1.0;
  const double gamma = (q1 * (c * c - 1.0) - 1.0) * std::sqrt(8.0 * q1 * q2 * c * c + 2.0 * d * d);
  const double lo = std::sqrt(beta - alpha), hi = std::sqrt(alpha + beta);
  const double a2 = alpha * alpha;
  const double w1 = (-((q1 * (2.0 * c * c - 1.0) + q2) * (lo - hi)) + lo -
                     std::sqrt(a2 * (beta - alpha)) - hi - std::sqrt(a2 * (alpha + beta))) /
                    gamma;
  const double w2 = s1 * c *
                    ((q1 + q2) * (lo - hi) + lo + std::sqrt(-a2 * (alpha - beta)) - hi +
                     std::sqrt(a2 * (alpha + beta))) /
                    (s2 * gamma);
  return {w1, w2};
}

std::array<double, 2> sym_orth_closed(double a, double b, double c, double n) {
  const double a2 = a * a, b4 = b * b * b * b, m = n - 1.0, m2 = m * m;
  const double alpha = std::sqrt(4.0 * a2 * (a2 + 1.0) * b4 * c * c +
                                 std::pow((a2 + 1.0) * (a2 + 1.0) - b4, 2.0));
  const double beta = m2 * a2 * a2 + 2.0 * m2 * a2 + (1.0 + b4) * m2;
  const double gamma = a2 * (c * c - 1.0) - 1.0;
  const double lo = std::sqrt(beta - alpha), hi = std::sqrt(beta + alpha);
  const double pre = -4.0 * std::sqrt(2.0) * (1.0 + a2) * b4 * gamma * std::pow(m, 5.0) /
                     (std::pow(beta - alpha, 1.5) * std::pow(beta + alpha, 1.5) * std::sqrt(alpha));
  const double bracket = (lo - hi) * (a2 * a2 * m2 + 2.0 * a2 * m2 - b4 * m2) + alpha * (lo + hi) -
                         2.0 * n * (lo - hi) + n * n * (lo - hi) + std::sqrt(alpha) * (lo + hi);
  const double w2 = -8.0 * std::sqrt(2.0) * a * std::pow(1.0 + a2, 2.0) * std::pow(b, 5.0) * c * gamma *
                    std::pow(m, 7.0) * (lo - hi) /
                    (std::pow(beta - alpha, 1.5) * std::pow(beta + std::sqrt(alpha), 1.5) * std::sqrt(alpha));
  return {pre * bracket, w2};
}

std::array<double, 2> osp_closed(double a, double c) {
  const double r = std::sqrt(a * a + 1.0), t = a * c / r;
  const double alpha = std::sqrt(-r * a * c + a * a + 1.0);
  const double beta = std::sqrt(r * a * c + a * a + 1.0);
  const double k = 1.0 - a * a * (c * c - 1.0);
  const double w1 = (a * c * (std::sqrt(1.0 - t) - std::sqrt(t + 1.0)) + alpha + beta) / k;
  const double w2 = (a * c * std::sqrt(1.0 - t) + a * c * std::sqrt(t + 1.0) + alpha - beta) / -k;
  return {w1, w2};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void SuppressorModel::validate() const {
  if (!(s1 >= 0.0) || !(s2 >= 0.0)) throw std::invalid_argument("noise scales must be non-negative");
  if (!(std::abs(c) <= 1.0)) throw std::invalid_argument("noise correlation must lie in [-1, 1]");
  if (n < 2) throw std::invalid_argument("sample count must be at least 2");
}

std::string_view to_string(Method m) {
  for (const auto& n : kNames)
    if (n.method == m) return n.name;
  return "?";
}

Method parse_method(std::string_view s) {
  for (const auto& n : kNames)
    if (n.name == s) return n.method;
  throw std::invalid_argument("unknown 2D method: " + std::string(s));
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::kNone,     Method::kSphering,
                                           Method::kSymOrth,  Method::kOsp,
                                           Method::kCholesky, Method::kCholeskyPermuted,
                                           Method::kPartialRegression};
  return methods;
}

SymMatrix analytic_covariance(const SuppressorModel& model) {
  model.validate();
  Matrix s(2, 2);
  s(0, 0) = model.s1 * model.s1 + 1.0;
  s(1, 1) = model.s2 * model.s2;
  s(0, 1) = s(1, 0) = model.c * model.s1 * model.s2;
  return SymMatrix(s);
}

SuppressorSample sample_suppressor_data(const SuppressorModel& model) {
  model.validate();
  SuppressorSample out{Matrix(model.n, 2), std::vector<int>(model.n)};
  const double tail = std::sqrt(std::max(0.0, 1.0 - model.c * model.c));
  for (std::size_t i = 0; i < model.n; ++i) {
    Rng rng(model.seed, i);
    const int z = rng.bernoulli(0.5) ? 1 : -1;
    const double g1 = rng.normal(), g2 = rng.normal();
    out.z[i] = z;
    out.x(i, 0) = z + model.s1 * g1;
    out.x(i, 1) = model.s2 * (model.c * g1 + tail * g2);
  }
  return out;
}

Matrix whitening_matrix(const SuppressorModel& model, Method method) {
  const SymMatrix cov = analytic_covariance(model);
  switch (method) {
    case Method::kNone: return Matrix::identity(2);
    case Method::kSphering:
      return whitening::fit_sphering(analytic_moments(model, cov)).matrix;
    case Method::kSymOrth: return whitening::fit_sym_orth(analytic_moments(model, cov)).matrix;
    case Method::kOsp: return whitening::fit_osp(analytic_moments(model, cov)).matrix;
    case Method::kCholesky: return whitening::fit_cholesky(analytic_moments(model, cov)).matrix;
    case Method::kCholeskyPermuted:
      return whitening::fit_cholesky(analytic_moments(model, swapped(cov))).matrix;
    case Method::kPartialRegression:
      return whitening::fit_partial_regression(analytic_moments(model, cov)).matrix;
  }
  throw std::invalid_argument("unknown 2D method");
}

std::array<double, 2> bayes_weights(const SuppressorModel& model, Method method,
                                     std::array<double, 2> delta) {
  const SymMatrix cov = analytic_covariance(model);
  const Matrix w = whitening_matrix(model, method);
  if (method == Method::kCholeskyPermuted) {
    const auto p = weights_for(w, swapped(cov), delta);
    return {p[1], p[0]};
  }
  return weights_for(w, cov, delta);
}

std::array<double, 2> closed_form_weights(const SuppressorModel& model, Method method) {
  model.validate();
  const double a = model.s1, b = model.s2, c = model.c;
  switch (method) {
    case Method::kNone: {
      const double k = 1.0 + a * a * (1.0 - c * c);
      return {2.0 / k, -2.0 * c * a / (b * k)};
    }
    case Method::kSphering: return sphering_closed(a, b, c);
    case Method::kSymOrth: return sym_orth_closed(a, b, c, static_cast<double>(model.n));
    case Method::kOsp: return osp_closed(a, c);
    case Method::kCholesky: {
      const double k = 1.0 - a * a * (c * c - 1.0);
      return {2.0 / std::sqrt(a * a + 1.0), -2.0 * a * c / std::sqrt((a * a + 1.0) * k)};
    }
    case Method::kCholeskyPermuted: {
      const double k = 1.0 - a * a * (c * c - 1.0);
      return {-2.0 * a * c / (b * std::sqrt(k)), 2.0 / b};
    }
    case Method::kPartialRegression:
      return {2.0 / std::sqrt(1.0 - a * a * (c * c - 1.0)), 0.0};
  }
  throw std::invalid_argument("unknown 2D method");
}

bool closed_form_asserted(Method m) { return m != Method::kSymOrth; }

std::vector<GridPoint> default_grid() {
  std::vector<GridPoint> grid;
  for (double s1 : {0.5, 1.0, 2.0})
    for (double s2 : {0.5, 1.0, 2.0})
      for (double c : {-0.8, -0.3, 0.0, 0.3, 0.8})
        for (std::size_t n : {10u, 100u, 1000u}) grid.push_back({s1, s2, c, n});
  return grid;
}

std::vector<ReportRow> verify_closed_forms(const std::vector<GridPoint>& grid) {
  std::vector<ReportRow> rows;
  for (const auto& g : grid) {
    if (std::abs(g.c) >= 1.0) throw std::invalid_argument("grid must avoid |c| = 1");
    const SuppressorModel model{g.s1, g.s2, g.c, g.n, 0};
    for (Method m : all_methods()) {
      ReportRow r;
      r.method = m;
      r.s1 = g.s1;
      r.s2 = g.s2;
      r.c = g.c;
      r.n = g.n;
      r.asserted = closed_form_asserted(m);
      try {
        r.numeric = bayes_weights(model, m);
        r.closed = closed_form_weights(model, m);
        r.abs_err = std::max(std::abs(r.numeric[0] - r.closed[0]), std::abs(r.numeric[1] - r.closed[1]));
        if (r.asserted && !(r.abs_err < 1e-8)) {
          r.pass = false;
          r.note = "closed form mismatch";
        }
        if (!r.asserted) r.note = "closed form reported only";
        if (g.c == 0.0 && m != Method::kCholeskyPermuted && !(std::abs(r.numeric[1]) < 1e-10)) {
          r.pass = false;
          r.note = "w2 nonzero at c = 0";
        }
      } catch (const std::exception& e) {
        r.pass = false;
        r.note = e.what();
      }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "method,s1,s2,c,N,w1_numeric,w2_numeric,w1_closed,w2_closed,abs_err,asserted,pass,note\n";
  for (const auto& r : rows)
    os << to_string(r.method) << ',' << fmt(r.s1) << ',' << fmt(r.s2) << ',' << fmt(r.c) << ',' << r.n
       << ',' << fmt(r.numeric[0]) << ',' << fmt(r.numeric[1]) << ',' << fmt(r.closed[0]) << ','
       << fmt(r.closed[1]) << ',' << fmt(r.abs_err) << ',' << (r.asserted ? 1 : 0) << ','
       << (r.pass ? 1 : 0) << ',' << r.note << '\n';
  io::write_text(path, os.str());
}

void write_scatter_csv(const SuppressorModel& model, const std::filesystem::path& path) {
  const auto data = sample_suppressor_data(model);
  std::ostringstream os;
  os << "method,kind,v1,v2,v3\n";
  for (Method m : all_methods()) {
    const Matrix w = whitening_matrix(model, m);
    const auto name = to_string(m);
    const bool swap = m == Method::kCholeskyPermuted;
    for (std::size_t i = 0; i < model.n; ++i) {
      std::array<double, 2> x{data.x(i, 0), data.x(i, 1)};
      if (swap) std::swap(x[0], x[1]);
      auto z = w * std::span<const double>(x);
      if (swap) std::swap(z[0], z[1]);
      os << name << ",point," << fmt(z[0]) << ',' << fmt(z[1]) << ',' << data.z[i] << '\n';
    }
    const auto wt = bayes_weights(model, m);
    // Class means are symmetric about the origin, so the Bayes offset is 0.
    os << name << ",boundary," << fmt(wt[0]) << ',' << fmt(wt[1]) << ",0\n";
  }
  io::write_text(path, os.str());
}

}  // namespace wbench::theory2d
