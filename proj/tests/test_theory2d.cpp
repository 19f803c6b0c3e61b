#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "wbench/io.hpp"
#include "wbench/theory2d.hpp"

using namespace wbench;
using namespace wbench::theory2d;

namespace {

SuppressorModel model(double s1, double s2, double c, std::size_t n = 1000) { return {s1, s2, c, n, 0}; }

}  // namespace

TEST_CASE("analytic covariance") {
  const auto a = analytic_covariance(model(1, 1, 0));
  CHECK(a(0, 0) == 2.0);
  CHECK(a(0, 1) == 0.0);
  CHECK(a(1, 1) == 1.0);
  const auto b = analytic_covariance(model(1, 1, 0.8));
  CHECK(b(0, 1) == doctest::Approx(0.8));
  for (double c : {-1.0, 1.0}) {
    const auto s = analytic_covariance(model(1.5, 0.7, c));
    const double noise_det = 1.5 * 1.5 * 0.7 * 0.7 * (1.0 - c * c);
    CHECK(noise_det == doctest::Approx(0.0));
    CHECK(s(0, 0) * s(1, 1) - s(0, 1) * s(0, 1) > 0.0);
  }
  CHECK_THROWS(analytic_covariance(model(1, 1, 1.2)));
  CHECK_THROWS(analytic_covariance(model(-1, 1, 0.2)));
}

TEST_CASE("suppressor sampling") {
  SUBCASE("empirical moments at n = 1e6") {
    const auto m = model(1, 1, 0.8, 1000000);
    const auto d = sample_suppressor_data(m);
    double mean[2][2] = {{0, 0}, {0, 0}};
    double count[2] = {0, 0};
    double s00 = 0, s01 = 0, s11 = 0, m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < m.n; ++i) {
      const double x0 = d.x(i, 0), x1 = d.x(i, 1);
      const int k = d.z[i] > 0 ? 0 : 1;
      mean[k][0] += x0;
      mean[k][1] += x1;
      count[k] += 1;
      m0 += x0;
      m1 += x1;
      s00 += x0 * x0;
      s01 += x0 * x1;
      s11 += x1 * x1;
    }
    const double n = static_cast<double>(m.n);
    m0 /= n;
    m1 /= n;
    const auto a = analytic_covariance(m);
    CHECK(std::abs((s00 - n * m0 * m0) / (n - 1) - a(0, 0)) < 0.01);
    CHECK(std::abs((s01 - n * m0 * m1) / (n - 1) - a(0, 1)) < 0.01);
    CHECK(std::abs((s11 - n * m1 * m1) / (n - 1) - a(1, 1)) < 0.01);
    CHECK(mean[0][0] / count[0] == doctest::Approx(1.0).epsilon(0.01));
    CHECK(mean[1][0] / count[1] == doctest::Approx(-1.0).epsilon(0.01));
  }
  SUBCASE("the suppressor carries no class information") {
    const auto m = model(1, 1, 0.8, 20000);
    const auto d = sample_suppressor_data(m);
    double sum[2] = {0, 0}, sq[2] = {0, 0}, cnt[2] = {0, 0};
    for (std::size_t i = 0; i < m.n; ++i) {
      const int k = d.z[i] > 0 ? 0 : 1;
      sum[k] += d.x(i, 1);
      sq[k] += d.x(i, 1) * d.x(i, 1);
      cnt[k] += 1;
    }
    double se2 = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double mu = sum[k] / cnt[k];
      se2 += (sq[k] / cnt[k] - mu * mu) / cnt[k];
    }
    CHECK(std::abs(sum[0] / cnt[0] - sum[1] / cnt[1]) < 3.0 * std::sqrt(se2));
  }
  SUBCASE("uncorrelated noise within a class") {
    const auto m = model(1.3, 0.6, 0.0, 40000);
    const auto d = sample_suppressor_data(m);
    double s0 = 0, s1 = 0, s00 = 0, s01 = 0, s11 = 0, n = 0;
    for (std::size_t i = 0; i < m.n; ++i) {
      if (d.z[i] != 1) continue;
      const double a = d.x(i, 0), b = d.x(i, 1);
      s0 += a;
      s1 += b;
      s00 += a * a;
      s01 += a * b;
      s11 += b * b;
      n += 1;
    }
    const double cov = s01 / n - s0 * s1 / (n * n);
    const double corr = cov / std::sqrt((s00 / n - s0 * s0 / (n * n)) * (s11 / n - s1 * s1 / (n * n)));
    CHECK(std::abs(corr) < 0.01);
  }
  SUBCASE("seeded") {
    auto m = model(1, 1, 0.5, 50);
    CHECK(sample_suppressor_data(m).x == sample_suppressor_data(m).x);
    auto other = m;
    other.seed = 1;
    CHECK_FALSE(sample_suppressor_data(m).x == sample_suppressor_data(other).x);
  }
}

TEST_CASE("Bayes weights at the reference point") {
  const auto m = model(1, 1, 0.8);
  const auto chol = bayes_weights(m, Method::kCholesky);
  CHECK(chol[0] == doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(1e-10));
  CHECK(chol[1] == doctest::Approx(-1.6 / std::sqrt(2.0 * 1.36)).epsilon(1e-10));
  const auto sph = bayes_weights(m, Method::kSphering);
  CHECK(sph[0] == doctest::Approx(1.60878).epsilon(1e-5));
  CHECK(sph[1] == doctest::Approx(-0.59414).epsilon(1e-5));
  const auto osp = bayes_weights(m, Method::kOsp);
  CHECK(osp[0] == doctest::Approx(1.63807).epsilon(1e-5));
  CHECK(osp[1] == doctest::Approx(-0.50785).epsilon(1e-5));
  const auto perm = bayes_weights(m, Method::kCholeskyPermuted);
  CHECK(perm[0] == doctest::Approx(-1.6 / std::sqrt(1.36)).epsilon(1e-10));
  CHECK(perm[1] == doctest::Approx(2.0).epsilon(1e-10));
  const auto pr = bayes_weights(m, Method::kPartialRegression);
  CHECK(pr[0] == doctest::Approx(2.0 / std::sqrt(1.36)).epsilon(1e-10));
  CHECK(std::abs(pr[1]) < 1e-12);
}

TEST_CASE("only partial regression nulls the suppressor") {
  for (double s1 : {0.5, 1.0, 2.0})
    for (double s2 : {0.5, 1.0, 2.0})
      for (double c : {-0.8, -0.3, 0.3, 0.8}) {
        const auto m = model(s1, s2, c);
        for (Method method : all_methods()) {
          const auto w = bayes_weights(m, method);
          if (method == Method::kPartialRegression)
            CHECK(std::abs(w[1]) < 1e-10);
          else
            CHECK(std::abs(w[1]) > 1e-3);
        }
        const auto none = bayes_weights(m, Method::kNone);
        CHECK((none[1] < 0) == (c > 0));
      }
}

TEST_CASE("doubling the mean difference doubles the weights") {
  const auto m = model(0.7, 1.4, -0.3);
  for (Method method : all_methods()) {
    const auto w = bayes_weights(m, method);
    const auto w2 = bayes_weights(m, method, {4.0, 0.0});
    CHECK(w2[0] == doctest::Approx(2.0 * w[0]).epsilon(1e-12));
    CHECK(w2[1] == doctest::Approx(2.0 * w[1]).epsilon(1e-12));
  }
}

TEST_CASE("closed forms over the grid") {
  const auto rows = verify_closed_forms(default_grid());
  CHECK(rows.size() == default_grid().size() * all_methods().size());
  std::size_t sym_rows = 0;
  for (const auto& r : rows) {
    INFO(to_string(r.method), " s1=", r.s1, " s2=", r.s2, " c=", r.c, " N=", r.n, " ", r.note);
    CHECK(r.pass);
    if (r.asserted) CHECK(r.abs_err < 1e-8);
    if (r.c == 0.0 && r.method != Method::kCholeskyPermuted) CHECK(std::abs(r.numeric[1]) < 1e-10);
    if (r.method == Method::kSymOrth) {
      ++sym_rows;
      CHECK_FALSE(r.asserted);
      CHECK(std::isfinite(r.closed[0]));
    }
  }
  CHECK(sym_rows == default_grid().size());
  CHECK_THROWS(verify_closed_forms({{1.0, 1.0, 1.0, 10}}));
}

TEST_CASE("report files") {
  const auto dir = std::filesystem::temp_directory_path() / "wbench_test_theory2d";
  std::filesystem::remove_all(dir);
  write_report_csv(verify_closed_forms({{1.0, 1.0, 0.8, 100}}), dir / "report.csv");
  const auto report = io::read_text(dir / "report.csv");
  CHECK(report.rfind("method,s1,s2,c,N,w1_numeric,w2_numeric,w1_closed,w2_closed,abs_err", 0) == 0);
  CHECK(std::count(report.begin(), report.end(), '\n') == 1 + 7);

  const auto m = model(1, 1, 0.8, 40);
  write_scatter_csv(m, dir / "scatter.csv");
  const auto scatter = io::read_text(dir / "scatter.csv");
  CHECK(std::count(scatter.begin(), scatter.end(), '\n') == 1 + 7 * (40 + 1));
  CHECK(scatter.find("PartialRegression,boundary,") != std::string::npos);
  std::filesystem::remove_all(dir);
}
