#include "doctest.h"

#include <filesystem>

#include "json.hpp"
#include "wbench/bench.hpp"
#include "wbench/io.hpp"

using namespace wbench;
using namespace wbench::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("wbench-test-bench-" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json smoke_plan(const fs::path& out) {
  return {{"seed", 3},
          {"out", out.string()},
          {"data", {{"n_samples", 2000}, {"alpha", 0.6}}},
          {"train", {{"epochs", 200}, {"learning_rate", 0.01}}},
          {"cells",
           {{{"scenario", "LIN"},
             {"background", "WHITE"},
             {"whitening", "None"},
             {"model", "LLR"},
             {"methods", {"Saliency", "Sobel"}}}}}};
}

}  // namespace

TEST_CASE("plan parsing") {
  const auto p = plan_from_json({{"seed", 7},
                                 {"alphas", {{"LIN", 0.3}, {"LIN/CORR", 0.4}, {"LIN/CORR/MLP", 0.5}}},
                                 {"grid",
                                  {{"scenarios", {"LIN", "XOR"}},
                                   {"backgrounds", {"WHITE", "CORR"}},
                                   {"whitenings", {"None", "SymOrth"}},
                                   {"models", {"LLR", "MLP"}},
                                   {"methods", {"Saliency"}}}}});
  CHECK(p.cells.size() == 16);
  CHECK(p.data.seed == 7);
  CHECK(p.train.seed == 7);
  CHECK(p.attribution.seed == 7);
  CellSpec c;
  c.scenario = datagen::Scenario::kLin;
  c.background = datagen::Background::kCorr;
  c.model = models::Architecture::kMlp;
  CHECK(p.alpha_for(c) == 0.5);
  c.model = models::Architecture::kLlr;
  CHECK(p.alpha_for(c) == 0.4);
  c.background = datagen::Background::kWhite;
  CHECK(p.alpha_for(c) == 0.3);
  c.scenario = datagen::Scenario::kXor;
  CHECK(p.alpha_for(c) == p.data.alpha);
  c.alpha = 0.9;
  CHECK(p.alpha_for(c) == 0.9);
  CHECK(c.id() == "XOR-WHITE-None-LLR");

  const auto round = plan_from_json(plan_to_json(p));
  CHECK(round.cells.size() == p.cells.size());
  CHECK(plan_to_json(round) == plan_to_json(p));

  CHECK_THROWS_AS(plan_from_json({{"bogus", 1}}), PlanError);
  CHECK_THROWS_AS(plan_from_json({{"data", {{"alpah", 0.1}}}}), PlanError);
  CHECK_THROWS_AS(plan_from_json({{"cells", {{{"scenario", "NOPE"}, {"background", "WHITE"}, {"model", "LLR"}}}}}),
                  std::invalid_argument);
  auto bad = plan_from_json({{"alphas", {{"LIN", 1.5}}}});
  CHECK_THROWS_AS(bad.validate(), PlanError);
}

TEST_CASE("cell selector") {
  CellSpec c;
  c.scenario = datagen::Scenario::kXor;
  c.background = datagen::Background::kCorr;
  c.whitening = whitening::Method::kOsp;
  c.model = models::Architecture::kMlp;
  CHECK(matches_selector(c, ""));
  CHECK(matches_selector(c, "XOR"));
  CHECK(matches_selector(c, "XOR/CORR"));
  CHECK(matches_selector(c, "*/*/OSP/MLP"));
  CHECK_FALSE(matches_selector(c, "LIN"));
  CHECK_FALSE(matches_selector(c, "*/WHITE"));
  CHECK_THROWS_AS(matches_selector(c, "a/b/c/d/e"), PlanError);
}

TEST_CASE("empty plan runs and writes a manifest") {
  const auto out = scratch("empty");
  ExperimentPlan p;
  p.out = out;
  const auto m = run(p);
  CHECK(m.cells.empty());
  CHECK(m.ok());
  const auto doc = nlohmann::json::parse(io::read_text(out / "manifest.json"));
  CHECK(doc["runs"].size() == 1);
  fs::remove_all(out);
}

TEST_CASE("single cell run, cache and determinism") {
  const auto out = scratch("smoke");
  const auto plan = plan_from_json(smoke_plan(out));
  const auto m = run(plan);
  REQUIRE(m.cells.size() == 1);
  const auto& cell = m.cells[0];
  REQUIRE(cell.status == "ok");
  CHECK(cell.id == "LIN-WHITE-None-LLR");
  CHECK(cell.test_accuracy >= 0.8);
  CHECK(cell.passed_gate);

  const auto cj = nlohmann::json::parse(io::read_text(cell.dir / "cell.json"));
  const std::size_t correct = cj["correct_test_samples"].get<std::size_t>();
  CHECK(correct > 0);
  CHECK(correct <= 800);
  CHECK(cell.metrics_rows == 2 * correct);
  const auto rows = metrics::read_metrics_csv(cell.dir / "metrics.csv");
  CHECK(rows.size() == cell.metrics_rows);
  for (const auto& r : rows) {
    CHECK(r.precision >= 0.0);
    CHECK(r.precision <= 1.0);
    CHECK(r.emd_score >= 0.0);
    CHECK(r.emd_score <= 1.0);
  }
  CHECK(fs::exists(out / "aggregate" / "aggregate.csv"));
  CHECK(fs::exists(out / "aggregate" / "heatmaps" / "LIN-WHITE-None-LLR-Saliency.pgm"));

  const auto metrics_before = io::read_text(cell.dir / "metrics.csv");
  const auto again = run(plan);
  REQUIRE(again.cells.size() == 1);
  CHECK(again.cells[0].status == "cached");
  CHECK(again.cells[0].hash == cell.hash);
  const auto doc = nlohmann::json::parse(io::read_text(out / "manifest.json"));
  CHECK(doc["runs"].size() == 2);

  const auto other = scratch("smoke-rerun");
  auto j = smoke_plan(other);
  const auto fresh = run(plan_from_json(j));
  REQUIRE(fresh.cells[0].status == "ok");
  for (const char* f : {"cell.json", "metrics.csv", "model.bin", "attributions/Saliency.bin"})
    CHECK(io::read_bytes(cell.dir / f) == io::read_bytes(fresh.cells[0].dir / f));
  CHECK(io::read_bytes(out / "aggregate" / "aggregate.csv") == io::read_bytes(other / "aggregate" / "aggregate.csv"));

  j["attribution"] = {{"ig_steps", 10}};
  const auto changed = run(plan_from_json(j));
  CHECK(changed.cells[0].status == "ok");
  CHECK(changed.cells[0].hash != cell.hash);

  j["cells"][0]["scenario"] = "MISSING";
  CHECK_THROWS(plan_from_json(j));
  fs::remove_all(out);
  fs::remove_all(other);
}

TEST_CASE("selector restricts the run and failing cells are reported") {
  const auto out = scratch("select");
  auto j = smoke_plan(out);
  j["cells"].push_back({{"scenario", "LIN"},
                        {"background", "WHITE"},
                        {"whitening", "SymOrth"},
                        {"model", "LLR"},
                        {"methods", {"PFI"}}});
  const auto plan = plan_from_json(j);
  const auto m = run(plan, "*/*/SymOrth");
  REQUIRE(m.cells.size() == 1);
  CHECK(m.cells[0].id == "LIN-WHITE-SymOrth-LLR");
  CHECK(m.cells[0].status == "ok");
  CHECK(fs::exists(m.cells[0].dir / "transform.bin"));
  CHECK_FALSE(fs::exists(out / "cells" / "LIN-WHITE-None-LLR"));
  CHECK(m.ok());
  fs::remove_all(out);
}

TEST_CASE("aggregate excludes gate failures") {
  const auto out = scratch("agg");
  auto write_cell = [&](const std::string& id, bool pass, const std::vector<double>& precision) {
    const auto dir = out / "cells" / id;
    nlohmann::json cj{{"id", id}, {"scenario", "RIGID"}, {"passed_gate", pass}, {"test_accuracy", pass ? 0.9 : 0.5},
                      {"methods", nlohmann::json::array()}};
    io::write_text(dir / "cell.json", cj.dump());
    std::vector<metrics::MetricsRecord> rows;
    for (std::size_t i = 0; i < precision.size(); ++i)
      rows.push_back({{"RIGID", "WHITE", "None", "LLR", "Saliency", i}, precision[i], 0.5});
    metrics::write_metrics_csv(rows, dir / "metrics.csv");
  };
  write_cell("RIGID-WHITE-None-LLR", true, {0.0, 0.25, 0.5, 1.0});
  write_cell("RIGID-CORR-None-LLR", false, {0.0});
  const auto s = aggregate(cell_dirs(out), out / "agg");
  CHECK(s.cells_used == 1);
  CHECK(s.cells_excluded == 1);
  CHECK(s.heatmaps == 0);
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].precision.count == 4);
  CHECK(s.rows[0].precision.mean == doctest::Approx(0.4375));
  CHECK(s.rows[0].precision.median == doctest::Approx(0.375));
  CHECK(s.rows[0].precision.q1 == doctest::Approx(0.1875));
  CHECK(s.rows[0].precision.q3 == doctest::Approx(0.625));
  CHECK(fs::exists(out / "agg" / "aggregate.csv"));
  fs::remove_all(out);
}

TEST_CASE("alpha calibration") {
  datagen::ScenarioConfig data;
  data.n_samples = 2000;
  models::TrainConfig train;
  train.epochs = 200;
  train.learning_rate = 0.01;
  models::ArchitectureConfig arch;

  const auto lin = calibrate_alpha(data, models::Architecture::kLlr, arch, train);
  CHECK(lin.alpha < 1.0);
  CHECK(lin.accuracy >= 0.8);
  CHECK(lin.trials.size() <= 8);
  for (const auto& t : lin.trials)
    if (t.alpha >= lin.alpha - 1e-12 && t.alpha <= lin.alpha + 1e-12) CHECK(t.accuracy == lin.accuracy);

  data.scenario = datagen::Scenario::kXor;
  try {
    calibrate_alpha(data, models::Architecture::kLlr, arch, train);
    FAIL("expected CalibrationError");
  } catch (const CalibrationError& e) {
    CHECK(std::string(e.what()).find("XOR/WHITE/LLR") != std::string::npos);
  }
}
