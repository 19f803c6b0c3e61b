// Acceptance checks. Prints one PASS/FAIL line per criterion and exits with
// the number of failures that were not listed via --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "wbench/attribution.hpp"
#include "wbench/bench.hpp"
#include "wbench/datagen.hpp"
#include "wbench/io.hpp"
#include "wbench/log.hpp"
#include "wbench/metrics.hpp"
#include "wbench/models.hpp"
#include "wbench/rng.hpp"
#include "wbench/theory2d.hpp"
#include "wbench/whitening.hpp"

namespace fs = std::filesystem;
using namespace wbench;
using linalg::Matrix;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { details.push_back("     " + what); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

datagen::ScenarioConfig base_data() {
  datagen::ScenarioConfig c;
  c.n_samples = 2000;
  c.split = {0.5, 0.1, 0.4};
  return c;
}

models::TrainConfig base_train() {
  models::TrainConfig t;
  t.seed = 0;
  return t;
}

// ---------------------------------------------------------------- 1

Outcome whitening_invariants() {
  Outcome o;
  auto cfg = base_data();
  cfg.background = datagen::Background::kCorr;
  cfg.alpha = 0.5;
  const auto ds = datagen::generate_dataset(cfg);
  const Matrix x = datagen::pixel_matrix(ds, ds.split.train);
  const auto m = whitening::moments(x);
  const auto eig = linalg::sym_eig(m.cov);
  const double top = *std::max_element(eig.eigenvalues.begin(), eig.eigenvalues.end());
  std::size_t rank = 0;
  for (double v : eig.eigenvalues) rank += v > 1e-10 * top ? 1 : 0;
  o.note("train covariance: " + std::to_string(x.rows()) + " x 64, eigenvalues above 1e-10 * max: " +
         std::to_string(rank) + ", min/max = " + fmt("%.3e", *std::min_element(eig.eigenvalues.begin(), eig.eigenvalues.end()) / top));

  for (auto method : {whitening::Method::kSphering, whitening::Method::kSymOrth, whitening::Method::kOsp,
                      whitening::Method::kCholesky}) {
    const auto warnings = log::warning_count();
    const auto t = whitening::fit(method, m);
    const bool regularized = log::warning_count() != warnings;
    const Matrix zc = whitening::moments(whitening::apply_raw(t, x)).cov.matrix();
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < zc.rows(); ++i)
      for (std::size_t j = 0; j < zc.cols(); ++j)
        if (i == j) diag = std::max(diag, std::abs(zc(i, j) - 1.0));
        else off = std::max(off, std::abs(zc(i, j)));
    const std::string name(whitening::to_string(method));
    o.require(off < 1e-6, name + ": max |off-diagonal| = " + fmt("%.3e", off) + (regularized ? " (regularized fit)" : ""));
    o.require(diag < 1e-6, name + ": max |diagonal - 1| = " + fmt("%.3e", diag));
    if (method == whitening::Method::kSphering) {
      const Matrix r = t.matrix.transpose() * t.matrix * m.cov.matrix();
      const double dev = linalg::max_abs_diff(r, Matrix::identity(r.rows()));
      o.require(dev < 1e-6, "Sphering: max |W^T W Sigma - I| = " + fmt("%.3e", dev));
    }
  }
  return o;
}

// ---------------------------------------------------------------- 2

Outcome theory_grid() {
  Outcome o;
  const auto rows = theory2d::verify_closed_forms(theory2d::default_grid());
  using theory2d::Method;
  std::size_t pr_bad = 0, nonzero_bad = 0, zero_bad = 0, zero_checked = 0, zero_excluded = 0;
  std::map<Method, double> worst;
  std::map<Method, std::size_t> count;
  for (const auto& r : rows) {
    const double w2 = std::abs(r.numeric[1]);
    if (r.method == Method::kPartialRegression && w2 > 1e-10) ++pr_bad;
    if (r.method != Method::kPartialRegression && r.c != 0.0 && w2 <= 1e-3) ++nonzero_bad;
    if (r.c == 0.0) {
      if (r.method == Method::kCholeskyPermuted) {
        ++zero_excluded;
      } else {
        ++zero_checked;
        if (w2 > 1e-10) ++zero_bad;
      }
    }
    if (r.method == Method::kCholesky || r.method == Method::kOsp || r.method == Method::kCholeskyPermuted) {
      const double err = std::max(std::abs(r.numeric[0] - r.closed[0]), std::abs(r.numeric[1] - r.closed[1]));
      worst[r.method] = std::max(worst[r.method], err);
      ++count[r.method];
    }
  }
  o.note(std::to_string(rows.size()) + " rows: 7 methods x s1, s2 in {0.5, 1, 2} x c in {0, +-0.3, +-0.8} x N in {10, 100, 1000}");
  o.require(pr_bad == 0, "PartialRegression |w2| <= 1e-10 everywhere (" + std::to_string(pr_bad) + " violations)");
  o.require(nonzero_bad == 0, "other methods |w2| > 1e-3 when c != 0 (" + std::to_string(nonzero_bad) + " violations)");
  o.require(zero_bad == 0, "w2 = 0 within 1e-10 when c = 0 (" + std::to_string(zero_checked) + " rows, " +
                               std::to_string(zero_bad) + " violations)");
  o.note("c = 0 rule not applied to CholeskyPermuted (" + std::to_string(zero_excluded) +
         " rows): its printed closed form puts weight 2/s2 on x2 at every c");
  for (auto m : {Method::kCholesky, Method::kOsp, Method::kCholeskyPermuted})
    o.require(worst[m] < 1e-8, std::string(theory2d::to_string(m)) + " vs closed form over " +
                                   std::to_string(count[m]) + " rows: max error " + fmt("%.3e", worst[m]));
  return o;
}

// ---------------------------------------------------------------- 3

Outcome emd_exactness() {
  Outcome o;
  Rng rng(2024);
  double worst = 0.0;
  for (int problem = 0; problem < 200; ++problem) {
    const std::size_t n = 1 + rng.below(9);
    const std::size_t m = 1 + rng.below(9 / n);
    std::vector<std::size_t> pix(64);
    std::iota(pix.begin(), pix.end(), 0);
    for (std::size_t i = pix.size() - 1; i > 0; --i) std::swap(pix[i], pix[rng.below(i + 1)]);
    std::vector<double> p(n), q(m);
    for (double& v : p) v = rng.uniform(0.05, 1.0);
    for (double& v : q) v = rng.uniform(0.05, 1.0);
    const double sp = std::accumulate(p.begin(), p.end(), 0.0), sq = std::accumulate(q.begin(), q.end(), 0.0);
    for (double& v : p) v /= sp;
    for (double& v : q) v /= sq;
    Matrix cost(n, m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double dr = double(pix[i] / 8) - double(pix[n + j] / 8);
        const double dc = double(pix[i] % 8) - double(pix[n + j] % 8);
        cost(i, j) = std::sqrt(dr * dr + dc * dc);
      }
    const double got = metrics::solve_transport(p, q, cost).cost;
    const double want = testing::vertex_enumeration(p, q, cost);
    worst = std::max(worst, std::abs(got - want));
  }
  o.require(worst < 1e-9, "200 random problems with n * m <= 9 vs vertex enumeration: max cost error " +
                              fmt("%.3e", worst));

  Mask mask(8, 8, std::uint8_t{0});
  for (std::size_t i : {10u, 11u, 12u, 19u}) mask[i] = 1;
  std::vector<double> same(64, 0.0);
  for (std::size_t i = 0; i < 64; ++i) same[i] = mask[i] ? 3.0 : 0.0;
  const double one = metrics::emd_score(same, mask);
  o.require(one == 1.0, "attribution proportional to the mask: score " + fmt("%.17g", one));

  Mask corner(8, 8, std::uint8_t{0});
  corner.at(7, 7) = 1;
  std::vector<double> origin(64, 0.0);
  origin[0] = 1.0;
  const double zero = metrics::emd_score(origin, corner);
  o.require(zero == 0.0, "all mass at (0,0), ground truth at (7,7): score " + fmt("%.17g", zero));
  return o;
}

// ---------------------------------------------------------------- 4

// ReLU on/off states and max-pool winners; the margin is smooth wherever this
// pattern is constant.
std::vector<std::size_t> activation_pattern(const models::Model& model, std::span<const double> x) {
  models::Trace t;
  model.forward(x, t);
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    if (model.layers()[l].kind == models::LayerKind::kReLU)
      for (double v : t.values[l]) out.push_back(v > 0.0);
    if (l < t.argmax.size()) out.insert(out.end(), t.argmax[l].begin(), t.argmax[l].end());
  }
  return out;
}

struct FdCheck {
  double worst = 0.0;
  std::size_t kinks = 0;
};

// Central differences with step 1e-4, shrunk by 10x (down to 1e-8) while the
// stencil straddles a kink. Coordinates that still straddle one are counted,
// not compared.
void fd_check(const models::Model& model, std::vector<double> x, FdCheck& res) {
  const auto g = model.grad_input(x);
  const auto base = activation_pattern(model, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    bool smooth = false;
    double fd = 0.0;
    for (double h = 1e-4; h >= 1e-8 && !smooth; h /= 10) {
      x[i] = keep + h;
      const double up = model.margin(x);
      const bool same_up = activation_pattern(model, x) == base;
      x[i] = keep - h;
      const double down = model.margin(x);
      const bool same_down = activation_pattern(model, x) == base;
      fd = (up - down) / (2 * h);
      smooth = same_up && same_down;
    }
    x[i] = keep;
    if (!smooth) {
      ++res.kinks;
      continue;
    }
    res.worst = std::max(res.worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-3}));
  }
}

Outcome gradient_fidelity() {
  Outcome o;
  Rng rng(404);
  const models::Shape shape{1, 8, 8};
  auto input = [&] {
    std::vector<double> x(64);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
  };
  for (auto arch : {models::Architecture::kLlr, models::Architecture::kMlp, models::Architecture::kCnn}) {
    auto model = models::Model::build(arch, shape, {}, 17);
    for (auto& l : model.mutable_layers())
      for (double& b : l.bias) b = rng.uniform(-0.1, 0.1);
    FdCheck fd;
    double residual = 0.0;
    for (int k = 0; k < 20; ++k) {
      const auto x = input();
      fd_check(model, x, fd);
      const auto ig = attribution::integrated_gradients(model, x, 512);
      const double delta = model.margin(x) - model.margin(std::vector<double>(64, 0.0));
      residual = std::max(residual, std::abs(std::accumulate(ig.begin(), ig.end(), 0.0) - delta));
    }
    const std::string name(models::to_string(arch));
    o.require(fd.worst < 1e-4, name + ": max relative finite-difference error over 20 inputs " +
                                   fmt("%.3e", fd.worst));
    o.note(name + ": " + std::to_string(fd.kinks) + " of 1280 coordinates within 1e-8 of a ReLU or max-pool kink");
    o.require(residual < 1e-3, name + ": max IG completeness residual at 512 steps " + fmt("%.3e", residual));
  }
  return o;
}

// ---------------------------------------------------------------- 5

Outcome linear_collapse() {
  Outcome o;
  auto cfg = base_data();
  const auto ds = datagen::generate_dataset(cfg);
  const auto tm = models::train(models::Model::build(models::Architecture::kLlr, {1, 8, 8}, {}, 0),
                                bench::train_data(ds), base_train());
  o.note("trained LLR on LIN/WHITE, test accuracy " + fmt("%.4f", tm.test_accuracy));
  const auto& w = tm.model.layers()[0].weights;
  attribution::MethodConfig mc;
  std::map<std::string, double> worst;
  std::size_t used = 0;
  for (std::size_t k = 0; k < 20; ++k) {
    const auto& x = ds.samples[ds.split.test[k]].pixels.values;
    std::vector<double> ref(64);
    for (std::size_t i = 0; i < 64; ++i) ref[i] = (w[64 + i] - w[i]) * x[i];
    const double norm = std::sqrt(std::inner_product(ref.begin(), ref.end(), ref.begin(), 0.0));
    if (norm == 0.0) continue;
    ++used;
    Rng rng(7, k);
    const std::map<std::string, std::vector<double>> got{
        {"IntegratedGradients", attribution::integrated_gradients(tm.model, x, mc.ig_steps)},
        {"LRP", attribution::lrp_epsilon(tm.model, x, mc.lrp_epsilon)},
        {"ShapleySampling", attribution::shapley_sampling(tm.model, x, mc.shapley_permutations, rng).values},
        {"GradientSHAP", attribution::gradient_shap(tm.model, x, mc.shap_samples, 0.0, rng).values}};
    for (const auto& [name, a] : got) {
      double e = 0.0;
      for (std::size_t i = 0; i < 64; ++i) e += (a[i] - ref[i]) * (a[i] - ref[i]);
      worst[name] = std::max(worst[name], std::sqrt(e) / norm);
    }
  }
  for (const auto& [name, e] : worst)
    o.require(e < 1e-2, name + ": max relative L2 deviation from (w1 - w0) * x over " + std::to_string(used) +
                            " test inputs " + fmt("%.3e", e));
  return o;
}

// ---------------------------------------------------------------- 6, 7, 8

struct Calibrations {
  std::map<std::string, bench::CalibrationResult> result;
  std::map<std::string, std::string> error;
  // One alpha per scenario: the largest of its per-background calibrations,
  // so every required model of the scenario clears the target.
  std::map<std::string, double> scenario_alpha;
};

Calibrations calibrate_all() {
  Calibrations c;
  const std::vector<std::tuple<datagen::Scenario, datagen::Background, models::Architecture>> cells{
      {datagen::Scenario::kLin, datagen::Background::kWhite, models::Architecture::kLlr},
      {datagen::Scenario::kLin, datagen::Background::kCorr, models::Architecture::kLlr},
      {datagen::Scenario::kXor, datagen::Background::kWhite, models::Architecture::kMlp},
      {datagen::Scenario::kXor, datagen::Background::kCorr, models::Architecture::kMlp}};
  for (const auto& [s, b, m] : cells) {
    auto cfg = base_data();
    cfg.scenario = s;
    cfg.background = b;
    const std::string key = std::string(datagen::to_string(s)) + "/" + std::string(datagen::to_string(b)) + "/" +
                            std::string(models::to_string(m));
    try {
      c.result[key] = bench::calibrate_alpha(cfg, m, {}, base_train());
      auto& a = c.scenario_alpha[std::string(datagen::to_string(s))];
      a = std::max(a, c.result[key].alpha);
    } catch (const bench::CalibrationError& e) {
      c.error[key] = e.what();
    }
  }
  return c;
}

const std::vector<attribution::Method> kFigureMethods{attribution::Method::kSaliency,
                                                      attribution::Method::kIntegratedGradients,
                                                      attribution::Method::kLrpEpsilon,
                                                      attribution::Method::kGradientShap};

bench::ExperimentPlan figure_plan(const Calibrations& cal, const fs::path& out) {
  bench::ExperimentPlan p;
  p.seed = 0;
  p.data = base_data();
  p.train = base_train();
  p.out = out;
  p.alphas = cal.scenario_alpha;
  const std::vector<std::pair<datagen::Background, whitening::Method>> settings{
      {datagen::Background::kWhite, whitening::Method::kNone},
      {datagen::Background::kCorr, whitening::Method::kNone},
      {datagen::Background::kCorr, whitening::Method::kSymOrth},
      {datagen::Background::kCorr, whitening::Method::kSphering},
      {datagen::Background::kCorr, whitening::Method::kOsp}};
  for (auto [scenario, model] : {std::pair{datagen::Scenario::kLin, models::Architecture::kLlr},
                                 std::pair{datagen::Scenario::kXor, models::Architecture::kMlp}})
    for (const auto& [bg, w] : settings) {
      bench::CellSpec c;
      c.scenario = scenario;
      c.background = bg;
      c.whitening = w;
      c.model = model;
      c.methods = kFigureMethods;
      p.cells.push_back(c);
    }
  return p;
}

struct Means {
  double precision = 0.0;
  double emd = 0.0;
  std::size_t n = 0;
};

std::map<std::string, Means> method_means(const fs::path& cell_dir) {
  std::map<std::string, Means> out;
  for (const auto& r : metrics::read_metrics_csv(cell_dir / "metrics.csv")) {
    auto& m = out[r.key.method];
    m.precision += r.precision;
    m.emd += r.emd_score;
    ++m.n;
  }
  for (auto& [k, m] : out) {
    m.precision /= static_cast<double>(m.n);
    m.emd /= static_cast<double>(m.n);
  }
  return out;
}

Outcome directional(const Calibrations& cal, const fs::path& out) {
  Outcome o;
  for (const auto& [k, e] : cal.error) o.require(false, "calibration: " + e);
  for (const auto& [k, r] : cal.result)
    o.note("calibrated alpha " + k + " = " + fmt("%.6g", r.alpha) + " (test accuracy " + fmt("%.4f", r.accuracy) + ")");
  for (const auto& [k, a] : cal.scenario_alpha) o.note("alpha used for " + k + ": " + fmt("%.6g", a));
  if (!cal.error.empty()) return o;

  const auto plan = figure_plan(cal, out);
  const auto manifest = bench::run(plan);
  std::map<std::string, std::map<std::string, Means>> means;
  for (const auto& c : manifest.cells) {
    if (c.status == "error") {
      o.require(false, c.id + ": " + c.error);
      continue;
    }
    means[c.id] = method_means(c.dir);
    const std::size_t correct = means[c.id].begin()->second.n;
    o.require(correct >= 500, c.id + ": test accuracy " + fmt("%.4f", c.test_accuracy) + ", " +
                                  std::to_string(correct) + " correctly predicted test samples");
  }
  if (!o.pass) return o;

  auto line = [&](const std::string& id) {
    std::ostringstream os;
    os << id << ":";
    for (auto m : kFigureMethods) {
      const auto& v = means[id][std::string(attribution::to_string(m))];
      os << " " << attribution::to_string(m) << " " << fmt("%.3f", v.precision) << "/" << fmt("%.3f", v.emd);
    }
    return os.str();
  };
  auto better = [&](const std::string& hi, const std::string& lo) {
    std::size_t n = 0;
    for (auto m : kFigureMethods) {
      const std::string name(attribution::to_string(m));
      const auto& a = means[hi][name];
      const auto& b = means[lo][name];
      n += (a.precision > b.precision && a.emd > b.emd) ? 1 : 0;
    }
    return n;
  };
  o.note("mean precision/EMD score per method:");
  for (const auto& [scen, model] : {std::pair{"LIN", "LLR"}, std::pair{"XOR", "MLP"}}) {
    const std::string s(scen), mdl(model);
    const std::string white = s + "-WHITE-None-" + mdl, corr = s + "-CORR-None-" + mdl;
    o.note(line(white));
    o.note(line(corr));
    for (const char* w : {"SymOrth", "Sphering", "OSP"}) o.note(line(s + "-CORR-" + w + "-" + mdl));
    const std::size_t a = better(white, corr);
    o.require(a >= 3, s + " (a) WHITE above CORR-None on both metrics for " + std::to_string(a) + "/4 methods");
    for (const char* w : {"SymOrth", "Sphering", "OSP"}) {
      const std::size_t b = better(s + "-CORR-" + w + "-" + mdl, corr);
      o.require(b >= 3, s + " (b) CORR-" + w + " above CORR-None on both metrics for " + std::to_string(b) +
                            "/4 methods");
    }
  }
  return o;
}

double test_accuracy(datagen::Scenario s, datagen::Background b, models::Architecture m, double alpha) {
  auto cfg = base_data();
  cfg.scenario = s;
  cfg.background = b;
  cfg.alpha = alpha;
  const auto ds = datagen::generate_dataset(cfg);
  return models::train(models::Model::build(m, {1, 8, 8}, {}, 0), bench::train_data(ds), base_train())
      .test_accuracy;
}

Outcome training_gate(const Calibrations& cal) {
  using datagen::Background;
  using datagen::Scenario;
  using models::Architecture;
  Outcome o;
  for (const auto& [k, e] : cal.error) o.require(false, "calibration: " + e);
  if (!cal.error.empty()) return o;
  auto label = [](Scenario s, Background b, Architecture m, double alpha) {
    return std::string(datagen::to_string(s)) + "/" + std::string(datagen::to_string(b)) + "/" +
           std::string(models::to_string(m)) + " at alpha " + fmt("%.6g", alpha);
  };
  const double lin = cal.scenario_alpha.at("LIN"), xr = cal.scenario_alpha.at("XOR");
  for (const auto& [s, b, m, alpha] : {std::tuple{Scenario::kLin, Background::kWhite, Architecture::kLlr, lin},
                                       std::tuple{Scenario::kXor, Background::kWhite, Architecture::kMlp, xr},
                                       std::tuple{Scenario::kXor, Background::kCorr, Architecture::kMlp, xr}}) {
    const double acc = test_accuracy(s, b, m, alpha);
    o.require(acc >= 0.8, label(s, b, m, alpha) + ": test accuracy " + fmt("%.4f", acc));
  }
  for (auto b : {Background::kWhite, Background::kCorr})
    for (double alpha : {xr, 1.0}) {
      const double acc = test_accuracy(Scenario::kXor, b, Architecture::kLlr, alpha);
      o.require(acc < 0.6, label(Scenario::kXor, b, Architecture::kLlr, alpha) + ": test accuracy " + fmt("%.4f", acc));
    }
  return o;
}

Outcome determinism(const Calibrations& cal, const fs::path& first, const fs::path& second) {
  Outcome o;
  if (!cal.error.empty()) {
    o.require(false, "calibration failed, no reference run");
    return o;
  }
  fs::remove_all(second);
  const auto plan = figure_plan(cal, second);
  for (const char* selector : {"LIN/CORR/SymOrth/LLR", "XOR/WHITE/None/MLP"}) {
    const auto m = bench::run(plan, selector);
    for (const auto& c : m.cells) o.require(c.status == "ok", c.id + " recomputed from scratch: " + c.status);
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(second)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), second);
    const auto top = *rel.begin();
    if (top != "data" && top != "cells") continue;
    ++files;
    if (io::read_bytes(e.path()) != io::read_bytes(first / rel)) {
      ++differ;
      o.note("differs: " + rel.string());
    }
  }
  o.require(files > 0 && differ == 0, std::to_string(files) + " dataset, transform, model, attribution and metrics files compared, " +
                                          std::to_string(differ) + " differ");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance-out";
  std::vector<int> expect_fail;
  std::vector<int> only;
  bool verbose = true;
  app.add_option("--out", out, "Scratch directory for pipeline runs");
  app.add_option("--expect-fail", expect_fail, "Criteria known to fail; reported but not counted in the exit code");
  app.add_option("--only", only, "Run only these criteria (6-8 share calibrations)");
  app.add_flag("!--quiet", verbose, "Only print the summary lines");
  CLI11_PARSE(app, argc, argv);
  log::set_level(log::Level::kError);

  const fs::path root = fs::absolute(out);
  fs::remove_all(root);
  Calibrations cal;
  bool calibrated = false;
  auto need_cal = [&]() -> const Calibrations& {
    if (!calibrated) cal = calibrate_all();
    calibrated = true;
    return cal;
  };

  const std::vector<std::tuple<int, std::string, double, std::function<Outcome()>>> criteria{
      {1, "whitening invariants on CORR", 10, whitening_invariants},
      {2, "theory oracle grid", 5, theory_grid},
      {3, "EMD exactness", 30, emd_exactness},
      {4, "gradient fidelity", 60, gradient_fidelity},
      {5, "linear-model collapse", 60, linear_collapse},
      {6, "directional whitening ordering", 1800, [&] { return directional(need_cal(), root / "figure"); }},
      {7, "training gate", 900, [&] { return training_gate(need_cal()); }},
      {8, "determinism", 600, [&] { return determinism(need_cal(), root / "figure", root / "rerun"); }}};

  int unexpected = 0;
  std::vector<std::string> summary;
  for (const auto& [id, name, budget, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    if (id == 8 && !only.empty() && std::find(only.begin(), only.end(), 6) == only.end())
      directional(need_cal(), root / "figure");
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs < budget, "runtime " + fmt("%.1f", secs) + " s (budget " + fmt("%.0f", budget) + " s)");
    const bool expected = std::find(expect_fail.begin(), expect_fail.end(), id) != expect_fail.end();
    std::string verdict = o.pass ? "PASS" : "FAIL";
    if (!o.pass && expected) verdict += " (known failure)";
    if (!o.pass && !expected) ++unexpected;
    if (o.pass && expected) verdict += " (listed as known failure but passed)";
    const std::string head = "criterion " + std::to_string(id) + " " + name + ": " + verdict;
    if (verbose) {
      std::cout << head << "\n";
      for (const auto& d : o.details) std::cout << "    " << d << "\n";
      std::cout.flush();
    }
    summary.push_back(head);
  }
  std::cout << "\nsummary\n";
  for (const auto& s : summary) std::cout << s << "\n";
  return unexpected;
}
