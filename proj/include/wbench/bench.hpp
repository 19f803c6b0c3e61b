#pragma once

// End-to-end experiment orchestration: dataset -> whitening -> training ->
// attribution -> metrics for a plan of cells, with content-hash caching, a
// run manifest, alpha calibration and result aggregation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "wbench/attribution.hpp"
#include "wbench/datagen.hpp"
#include "wbench/metrics.hpp"
#include "wbench/models.hpp"
#include "wbench/whitening.hpp"

namespace wbench::bench {

class PlanError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CellSpec {
  datagen::Scenario scenario = datagen::Scenario::kLin;
  datagen::Background background = datagen::Background::kWhite;
  whitening::Method whitening = whitening::Method::kNone;
  models::Architecture model = models::Architecture::kLlr;
  std::vector<attribution::Method> methods;
  std::optional<double> alpha;

  // "LIN-WHITE-None-LLR".
  std::string id() const;
};

// Selector fields are scenario/background/whitening/model separated by '/';
// '*' or an empty selector matches anything.
bool matches_selector(const CellSpec& cell, std::string_view selector);

struct ExperimentPlan {
  // Template for every cell's dataset; scenario, background and alpha are
  // filled in per cell.
  datagen::ScenarioConfig data;
  models::TrainConfig train;
  models::ArchitectureConfig architecture;
  attribution::MethodConfig attribution;
  // Alpha overrides keyed "SCENARIO/BACKGROUND/MODEL", "SCENARIO/BACKGROUND"
  // or "SCENARIO" (most specific wins; a cell's own alpha beats all).
  std::map<std::string, double> alphas;
  std::vector<CellSpec> cells;
  std::filesystem::path out = "wbench-out";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const;
  double alpha_for(const CellSpec& cell) const;
  datagen::ScenarioConfig data_for(const CellSpec& cell) const;
};

ExperimentPlan plan_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const ExperimentPlan& plan);
ExperimentPlan load_plan(const std::filesystem::path& path);

struct CellResult {
  std::string id;
  std::string hash;
  // "ok", "cached" or "error".
  std::string status;
  std::string error;
  double test_accuracy = 0.0;
  bool passed_gate = false;
  std::size_t metrics_rows = 0;
  double seconds = 0.0;
  std::filesystem::path dir;
};

struct RunManifest {
  std::vector<CellResult> cells;
  bool ok() const;
};

// Executes (or reuses) every cell matching `selector`, then aggregates.
// The manifest is appended to <out>/manifest.json.
RunManifest run(const ExperimentPlan& plan, std::string_view selector = "");

// Building blocks shared by `run` and the single-step CLI commands.
whitening::Transform fit_on_train(const datagen::Dataset& ds, whitening::Method method);
// Whitened copy of every sample (per-sample max-abs rescale); masks unchanged.
datagen::Dataset whiten_dataset(const datagen::Dataset& ds, const whitening::Transform& t);
models::TrainData train_data(const datagen::Dataset& ds);
std::vector<std::size_t> correctly_predicted(const models::Model& model, const datagen::Dataset& ds,
                                             const std::vector<std::size_t>& indices);
attribution::AttributionBatch explain_samples(const models::Model& model, const datagen::Dataset& ds,
                                              const std::vector<std::size_t>& indices,
                                              attribution::Method method,
                                              const attribution::MethodConfig& config,
                                              const std::string& model_tag);
std::vector<metrics::MetricsRecord> evaluate(const datagen::Dataset& ds,
                                             const attribution::AttributionBatch& batch,
                                             const metrics::MetricsKey& key);

struct CalibrationTrial {
  double alpha = 0.0;
  double accuracy = 0.0;
};

struct CalibrationResult {
  double alpha = 1.0;
  double accuracy = 0.0;
  std::vector<CalibrationTrial> trials;
};

// Smallest alpha = k/64 whose trained model reaches `target` test accuracy,
// by bisection; throws CalibrationError when alpha = 1 falls short.
CalibrationResult calibrate_alpha(const datagen::ScenarioConfig& data, models::Architecture arch,
                                  const models::ArchitectureConfig& architecture,
                                  const models::TrainConfig& train, double target = 0.80);

struct AggregateSummary {
  std::size_t cells_used = 0;
  std::size_t cells_excluded = 0;
  std::size_t heatmaps = 0;
  std::vector<metrics::AggregateRow> rows;
};

// Reads <cell dir>/cell.json, metrics.csv and attribution batches; writes
// <out>/aggregate.csv and <out>/heatmaps/. Cells below the accuracy gate are
// left out.
AggregateSummary aggregate(const std::vector<std::filesystem::path>& cell_dirs,
                           const std::filesystem::path& out);
// Every cell directory under <run out>/cells.
std::vector<std::filesystem::path> cell_dirs(const std::filesystem::path& run_out);

}  // namespace wbench::bench
