#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wbench/attribution.hpp"
#include "wbench/bench.hpp"
#include "wbench/datagen.hpp"
#include "wbench/io.hpp"
#include "wbench/log.hpp"
#include "wbench/metrics.hpp"
#include "wbench/models.hpp"
#include "wbench/theory2d.hpp"
#include "wbench/whitening.hpp"

namespace fs = std::filesystem;
using namespace wbench;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> jobs;
  std::string cell;
  std::string log_level = "info";
};

bench::ExperimentPlan load(const Globals& g) {
  bench::ExperimentPlan plan = g.config.empty() ? bench::plan_from_json(nlohmann::json::object())
                                                : bench::load_plan(g.config);
  if (g.seed) {
    plan.seed = *g.seed;
    plan.data.seed = plan.train.seed = plan.attribution.seed = *g.seed;
  }
  if (!g.out.empty()) plan.out = g.out;
  if (g.jobs) plan.jobs = *g.jobs;
  return plan;
}

fs::path strip_ext(fs::path p) {
  if (p.extension() == ".json" || p.extension() == ".bin") p.replace_extension();
  return p;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whitening and feature-attribution benchmark"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "JSON experiment plan (data, train, architecture, attribution, alphas, cells)")
      ->envname("WBENCH_CONFIG");
  app.add_option("--seed", g.seed, "Global seed")->envname("WBENCH_SEED");
  app.add_option("--out", g.out, "Output directory")->envname("WBENCH_OUT");
  app.add_option("--jobs", g.jobs, "Parallel cells (0 = hardware threads)")->envname("WBENCH_JOBS");
  app.add_option("--cell", g.cell, "Cell selector SCENARIO/BACKGROUND/WHITENING/MODEL, '*' matches any")
      ->envname("WBENCH_CELL");
  app.add_option("--log-level", g.log_level, "debug, info, warn, error or quiet")
      ->envname("WBENCH_LOG_LEVEL")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "quiet"}));

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  std::string gen_scenario = "LIN", gen_background = "WHITE";
  std::optional<std::size_t> gen_n;
  std::optional<double> gen_alpha;
  gen->add_option("--scenario", gen_scenario, "LIN, MULT, RIGID or XOR");
  gen->add_option("--background", gen_background, "WHITE or CORR");
  gen->add_option("-n,--samples", gen_n, "Number of samples");
  gen->add_option("--alpha", gen_alpha, "Signal-to-background mixing weight");

  // whiten
  auto* whi = app.add_subcommand("whiten", "Fit a whitening transform on the train split and apply it");
  std::string whi_data, whi_method = "SymOrth";
  whi->add_option("--data", whi_data, "Dataset stem")->required();
  whi->add_option("--method", whi_method, "None, Sphering, SymOrth, OSP, Cholesky or PartialRegression");

  // train
  auto* trn = app.add_subcommand("train", "Train a classifier on a dataset");
  std::string trn_data, trn_model = "LLR";
  trn->add_option("--data", trn_data, "Dataset stem")->required();
  trn->add_option("--model", trn_model, "LLR, MLP or CNN");

  // explain
  auto* exp = app.add_subcommand("explain", "Attribute correctly predicted test samples");
  std::string exp_data, exp_model;
  std::vector<std::string> exp_methods{"Saliency"};
  exp->add_option("--data", exp_data, "Dataset stem")->required();
  exp->add_option("--model", exp_model, "Model stem")->required();
  exp->add_option("--method", exp_methods, "Attribution method (repeatable)");

  // evaluate
  auto* eva = app.add_subcommand("evaluate", "Score attribution batches against ground truth");
  std::string eva_data, eva_whitening = "None", eva_model;
  std::vector<std::string> eva_batches;
  eva->add_option("--data", eva_data, "Dataset stem")->required();
  eva->add_option("batches", eva_batches, "Attribution batch stems")->required();
  eva->add_option("--whitening", eva_whitening, "Whitening label for the metrics rows");
  eva->add_option("--model-label", eva_model, "Model label for the metrics rows (default: batch tag)");

  // theory2d
  auto* th = app.add_subcommand("theory2d", "Check two-feature suppressor weights against closed forms");
  double th_s1 = 1.0, th_s2 = 1.0, th_c = 0.8;
  std::size_t th_n = 1000;
  th->add_option("--s1", th_s1, "Signal-feature noise scale");
  th->add_option("--s2", th_s2, "Suppressor noise scale");
  th->add_option("--c", th_c, "Noise correlation for the scatter export");
  th->add_option("-n,--samples", th_n, "Sample count for the scatter export");

  // calibrate-alpha
  auto* cal = app.add_subcommand("calibrate-alpha", "Smallest alpha reaching a test accuracy target");
  std::string cal_scenario = "LIN", cal_background = "WHITE", cal_model = "LLR";
  double cal_target = 0.80;
  cal->add_option("--scenario", cal_scenario);
  cal->add_option("--background", cal_background);
  cal->add_option("--model", cal_model);
  cal->add_option("--target", cal_target, "Required test accuracy")->check(CLI::Range(0.0, 1.0));

  // run
  auto* rn = app.add_subcommand("run", "Execute every selected cell of the plan");

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "Summarize metrics and write heatmaps for finished runs");
  std::vector<std::string> agg_runs;
  agg->add_option("runs", agg_runs, "Run output directories (default: --out)");

  CLI11_PARSE(app, argc, argv);

  const std::map<std::string, log::Level> levels{{"debug", log::Level::kDebug},
                                                 {"info", log::Level::kInfo},
                                                 {"warn", log::Level::kWarn},
                                                 {"error", log::Level::kError},
                                                 {"quiet", log::Level::kQuiet}};
  log::set_level(levels.at(g.log_level));

  try {
    auto plan = load(g);
    const fs::path out = plan.out;

    if (gen->parsed()) {
      auto cfg = plan.data;
      cfg.scenario = datagen::parse_scenario(gen_scenario);
      cfg.background = datagen::parse_background(gen_background);
      if (gen_n) cfg.n_samples = *gen_n;
      if (gen_alpha) cfg.alpha = *gen_alpha;
      const auto ds = datagen::generate_dataset(cfg);
      const auto stem = out / (gen_scenario + "-" + gen_background);
      datagen::save_dataset(ds, stem);
      print_json({{"dataset", stem.string()}, {"samples", ds.samples.size()}});
      return 0;
    }
    if (whi->parsed()) {
      const auto ds = datagen::load_dataset(strip_ext(whi_data));
      const auto method = whitening::parse_method(whi_method);
      const auto t = bench::fit_on_train(ds, method);
      whitening::save_transform(t, out / "transform.bin");
      datagen::save_dataset(bench::whiten_dataset(ds, t), out / "whitened");
      print_json({{"transform", (out / "transform.bin").string()}, {"dataset", (out / "whitened").string()}});
      return 0;
    }
    if (trn->parsed()) {
      const auto ds = datagen::load_dataset(strip_ext(trn_data));
      const auto arch = models::parse_architecture(trn_model);
      const models::Shape shape{1, ds.config.height, ds.config.width};
      const auto tm = models::train(models::Model::build(arch, shape, plan.architecture, plan.seed),
                                    bench::train_data(ds), plan.train);
      models::save_model(tm, out / "model");
      print_json({{"model", (out / "model").string()},
                  {"test_accuracy", tm.test_accuracy},
                  {"passed_gate", tm.passed_gate},
                  {"best_epoch", tm.best_epoch}});
      return 0;
    }
    if (exp->parsed()) {
      const auto ds = datagen::load_dataset(strip_ext(exp_data));
      const auto tm = models::load_model(strip_ext(exp_model));
      const auto correct = bench::correctly_predicted(tm.model, ds, ds.split.test);
      const std::string tag(models::to_string(tm.model.architecture()));
      nlohmann::json written = nlohmann::json::array();
      for (const auto& name : exp_methods) {
        const auto method = attribution::parse_method(name);
        attribution::AttributionBatch batch;
        if (attribution::is_global(method)) {
          const auto td = bench::train_data(ds);
          const auto map = attribution::permutation_feature_importance(tm.model, td.x_test, td.y_test,
                                                                       plan.attribution.pfi_repeats, plan.seed);
          batch = {method, tag, ds.config.height, ds.config.width, correct,
                   std::vector<std::vector<double>>(correct.size(), map)};
        } else {
          batch = bench::explain_samples(tm.model, ds, correct, method, plan.attribution, tag);
        }
        const auto stem = out / "attributions" / std::string(attribution::to_string(method));
        attribution::save_batch(batch, stem);
        written.push_back(stem.string());
      }
      print_json({{"correct_test_samples", correct.size()}, {"batches", written}});
      return 0;
    }
    if (eva->parsed()) {
      const auto ds = datagen::load_dataset(strip_ext(eva_data));
      std::vector<metrics::MetricsRecord> rows;
      for (const auto& b : eva_batches) {
        const auto batch = attribution::load_batch(strip_ext(b));
        const metrics::MetricsKey key{std::string(datagen::to_string(ds.config.scenario)),
                                      std::string(datagen::to_string(ds.config.background)), eva_whitening,
                                      eva_model.empty() ? batch.model_tag : eva_model,
                                      std::string(attribution::to_string(batch.method)), 0};
        auto r = bench::evaluate(ds, batch, key);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      metrics::write_metrics_csv(rows, out / "metrics.csv");
      const auto summary = metrics::aggregate(rows);
      metrics::write_aggregate_csv(summary, out / "aggregate.csv");
      print_json({{"metrics", (out / "metrics.csv").string()}, {"rows", rows.size()}});
      return 0;
    }
    if (th->parsed()) {
      const auto rows = theory2d::verify_closed_forms(theory2d::default_grid());
      theory2d::write_report_csv(rows, out / "theory2d_report.csv");
      theory2d::write_scatter_csv({th_s1, th_s2, th_c, th_n, plan.seed}, out / "theory2d_scatter.csv");
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.pass ? 0 : 1;
      print_json({{"rows", rows.size()}, {"failed", failed}, {"report", (out / "theory2d_report.csv").string()}});
      return failed == 0 ? 0 : 1;
    }
    if (cal->parsed()) {
      auto cfg = plan.data;
      cfg.scenario = datagen::parse_scenario(cal_scenario);
      cfg.background = datagen::parse_background(cal_background);
      const auto res = bench::calibrate_alpha(cfg, models::parse_architecture(cal_model), plan.architecture,
                                              plan.train, cal_target);
      nlohmann::json trials = nlohmann::json::array();
      for (const auto& t : res.trials) trials.push_back({{"alpha", t.alpha}, {"accuracy", t.accuracy}});
      const nlohmann::json j{{"cell", cal_scenario + "/" + cal_background + "/" + cal_model},
                             {"alpha", res.alpha},
                             {"accuracy", res.accuracy},
                             {"trials", trials}};
      io::write_text(out / "calibration.json", j.dump(2) + "\n");
      print_json(j);
      return 0;
    }
    if (rn->parsed()) {
      const auto m = bench::run(plan, g.cell);
      std::size_t errors = 0;
      for (const auto& c : m.cells) {
        std::cout << c.id << "\t" << c.status << "\t" << c.test_accuracy << (c.passed_gate ? "" : "\tbelow gate")
                  << (c.error.empty() ? "" : "\t" + c.error) << "\n";
        errors += c.status == "error" ? 1 : 0;
      }
      std::cout << m.cells.size() << " cells, " << errors << " errors\n";
      return m.ok() ? 0 : 1;
    }
    if (agg->parsed()) {
      if (agg_runs.empty()) agg_runs.push_back(out.string());
      std::vector<fs::path> dirs;
      for (const auto& r : agg_runs) {
        auto d = bench::cell_dirs(r);
        dirs.insert(dirs.end(), d.begin(), d.end());
      }
      const auto s = bench::aggregate(dirs, out / "aggregate");
      print_json({{"cells_used", s.cells_used},
                  {"cells_excluded", s.cells_excluded},
                  {"heatmaps", s.heatmaps},
                  {"groups", s.rows.size()}});
      return 0;
    }
  } catch (const bench::CalibrationError& e) {
    log::error(e.what());
    return 3;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 2;
  }
  return 0;
}
