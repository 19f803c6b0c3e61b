#include "wbench/bench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "wbench/io.hpp"
#include "wbench/log.hpp"

namespace wbench::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

std::string upper_method_name(attribution::Method m) { return std::string(attribution::to_string(m)); }

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw PlanError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw PlanError("unknown key '" + k + "' in " + where);
  }
}

json data_json(const datagen::ScenarioConfig& c) {
  return {{"scenario", datagen::to_string(c.scenario)},
          {"background", datagen::to_string(c.background)},
          {"n_samples", c.n_samples},
          {"height", c.height},
          {"width", c.width},
          {"alpha", c.alpha},
          {"smooth_sigma", c.smooth_sigma},
          {"seed", c.seed},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}}};
}

json train_json(const models::TrainConfig& t) {
  return {{"epochs", t.epochs},       {"learning_rate", t.learning_rate}, {"beta1", t.beta1},
          {"beta2", t.beta2},         {"epsilon", t.epsilon},             {"batch_size", t.batch_size},
          {"seed", t.seed},           {"accuracy_gate", t.accuracy_gate}};
}

json arch_json(const models::ArchitectureConfig& a) {
  return {{"mlp_hidden", a.mlp_hidden},
          {"conv_layers", a.conv_layers},
          {"conv_filters", a.conv_filters},
          {"conv_kernel", a.conv_kernel},
          {"pool", a.pool}};
}

json attribution_json(const attribution::MethodConfig& m) {
  return {{"ig_steps", m.ig_steps},
          {"shap_samples", m.shap_samples},
          {"noise_std", m.noise_std},
          {"lrp_epsilon", m.lrp_epsilon},
          {"lrp_target", m.lrp_target == attribution::LrpTarget::kMargin ? "margin" : "predicted_logit"},
          {"lime_samples", m.lime_samples},
          {"lime_kernel_width", m.lime_kernel_width},
          {"lime_ridge", m.lime_ridge},
          {"shapley_permutations", m.shapley_permutations},
          {"pfi_repeats", m.pfi_repeats},
          {"rectify_relu", m.rectify_relu},
          {"seed", m.seed}};
}

std::string hash_of(const json& j) { return io::sha256_hex(j.dump()); }

std::vector<std::string> split_fields(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

fs::path with_ext(fs::path stem, const char* ext) {
  stem += ext;
  return stem;
}

struct Stage {
  std::string data_hash;
  std::string model_hash;
  std::string cell_hash;
};

Stage stage_hashes(const ExperimentPlan& plan, const CellSpec& cell) {
  Stage s;
  s.data_hash = hash_of({{"version", kFormatVersion}, {"data", data_json(plan.data_for(cell))}});
  s.model_hash = hash_of({{"data", s.data_hash},
                          {"whitening", whitening::to_string(cell.whitening)},
                          {"model", models::to_string(cell.model)},
                          {"architecture", arch_json(plan.architecture)},
                          {"train", train_json(plan.train)}});
  json methods = json::array();
  for (auto m : cell.methods) methods.push_back(upper_method_name(m));
  s.cell_hash = hash_of({{"model", s.model_hash},
                         {"attribution", attribution_json(plan.attribution)},
                         {"methods", methods}});
  return s;
}

std::optional<json> read_json_if(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  try {
    return json::parse(io::read_text(p));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

CellResult result_from_cell_json(const json& j, const fs::path& dir) {
  CellResult r;
  r.id = j.at("id").get<std::string>();
  r.hash = j.at("hash").get<std::string>();
  r.status = "cached";
  r.test_accuracy = j.at("test_accuracy").get<double>();
  r.passed_gate = j.at("passed_gate").get<bool>();
  r.metrics_rows = j.at("metrics_rows").get<std::size_t>();
  r.dir = dir;
  return r;
}

CellResult execute_cell(const ExperimentPlan& plan, const CellSpec& cell, const datagen::Dataset& raw) {
  const Stage st = stage_hashes(plan, cell);
  const fs::path dir = plan.out / "cells" / cell.id();
  const auto previous = read_json_if(dir / "cell.json");
  if (previous && previous->value("hash", "") == st.cell_hash && previous->value("status", "") == "ok")
    return result_from_cell_json(*previous, dir);

  datagen::Dataset ds = raw;
  if (cell.whitening != whitening::Method::kNone) {
    const auto t = fit_on_train(raw, cell.whitening);
    whitening::save_transform(t, dir / "transform.bin");
    ds = whiten_dataset(raw, t);
  }

  models::TrainedModel tm;
  const fs::path model_stem = dir / "model";
  if (previous && previous->value("model_hash", "") == st.model_hash && fs::exists(with_ext(model_stem, ".bin"))) {
    tm = models::load_model(model_stem);
  } else {
    const models::Shape shape{1, ds.config.height, ds.config.width};
    const auto init = models::Model::build(cell.model, shape, plan.architecture, plan.seed);
    tm = models::train(init, train_data(ds), plan.train);
    models::save_model(tm, model_stem);
  }
  if (!tm.passed_gate)
    log::warn(cell.id() + ": test accuracy " + std::to_string(tm.test_accuracy) + " is below the gate");

  const auto correct = correctly_predicted(tm.model, ds, ds.split.test);
  std::vector<metrics::MetricsRecord> records;
  const std::string tag = cell.id();
  for (auto method : cell.methods) {
    attribution::AttributionBatch batch;
    if (attribution::is_global(method)) {
      const auto td = train_data(ds);
      const auto map = attribution::permutation_feature_importance(
          tm.model, td.x_test, td.y_test, plan.attribution.pfi_repeats, plan.attribution.seed);
      batch.method = method;
      batch.model_tag = tag;
      batch.height = ds.config.height;
      batch.width = ds.config.width;
      batch.sample_ids = correct;
      batch.maps.assign(correct.size(), map);
    } else {
      batch = explain_samples(tm.model, ds, correct, method, plan.attribution, tag);
    }
    attribution::save_batch(batch, dir / "attributions" / upper_method_name(method));
    const metrics::MetricsKey key{std::string(datagen::to_string(cell.scenario)),
                                  std::string(datagen::to_string(cell.background)),
                                  std::string(whitening::to_string(cell.whitening)),
                                  std::string(models::to_string(cell.model)),
                                  upper_method_name(method), 0};
    auto rec = evaluate(ds, batch, key);
    records.insert(records.end(), rec.begin(), rec.end());
  }
  metrics::write_metrics_csv(records, dir / "metrics.csv");

  json methods = json::array();
  for (auto m : cell.methods) methods.push_back(upper_method_name(m));
  const json cj{{"format", "wbench-cell"},
                {"format_version", kFormatVersion},
                {"id", cell.id()},
                {"hash", st.cell_hash},
                {"data_hash", st.data_hash},
                {"model_hash", st.model_hash},
                {"status", "ok"},
                {"scenario", datagen::to_string(cell.scenario)},
                {"background", datagen::to_string(cell.background)},
                {"whitening", whitening::to_string(cell.whitening)},
                {"model", models::to_string(cell.model)},
                {"alpha", plan.alpha_for(cell)},
                {"methods", methods},
                {"test_accuracy", tm.test_accuracy},
                {"passed_gate", tm.passed_gate},
                {"best_epoch", tm.best_epoch},
                {"correct_test_samples", correct.size()},
                {"metrics_rows", records.size()}};
  io::write_text(dir / "cell.json", cj.dump(2) + "\n");

  CellResult r;
  r.id = cell.id();
  r.hash = st.cell_hash;
  r.status = "ok";
  r.test_accuracy = tm.test_accuracy;
  r.passed_gate = tm.passed_gate;
  r.metrics_rows = records.size();
  r.dir = dir;
  return r;
}

json result_json(const CellResult& r) {
  return {{"id", r.id},
          {"hash", r.hash},
          {"status", r.status},
          {"error", r.error},
          {"test_accuracy", r.test_accuracy},
          {"passed_gate", r.passed_gate},
          {"metrics_rows", r.metrics_rows},
          {"seconds", r.seconds},
          {"dir", r.dir.string()}};
}

void append_manifest(const fs::path& out, std::string_view selector, const RunManifest& m) {
  const fs::path path = out / "manifest.json";
  json doc{{"format", "wbench-manifest"}, {"format_version", kFormatVersion}, {"runs", json::array()}};
  if (auto prev = read_json_if(path); prev && prev->value("format", "") == "wbench-manifest") doc = *prev;
  json cells = json::array();
  for (const auto& c : m.cells) cells.push_back(result_json(c));
  doc["runs"].push_back({{"run", doc["runs"].size()}, {"selector", std::string(selector)}, {"cells", cells}});
  io::write_text(path, doc.dump(2) + "\n");
}

}  // namespace

std::string CellSpec::id() const {
  return std::string(datagen::to_string(scenario)) + "-" + std::string(datagen::to_string(background)) +
         "-" + std::string(whitening::to_string(whitening)) + "-" + std::string(models::to_string(model));
}

bool matches_selector(const CellSpec& cell, std::string_view selector) {
  if (selector.empty()) return true;
  const auto fields = split_fields(selector, '/');
  const std::string values[4] = {std::string(datagen::to_string(cell.scenario)),
                                 std::string(datagen::to_string(cell.background)),
                                 std::string(whitening::to_string(cell.whitening)),
                                 std::string(models::to_string(cell.model))};
  if (fields.size() > 4) throw PlanError("cell selector has more than four fields");
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (!fields[i].empty() && fields[i] != "*" && fields[i] != values[i]) return false;
  return true;
}

void ExperimentPlan::validate() const {
  data.validate();
  attribution.validate();
  if (train.epochs == 0 || !(train.learning_rate > 0.0)) throw PlanError("invalid training config");
  std::set<std::string> ids;
  for (const auto& c : cells) {
    if (!ids.insert(c.id()).second) throw PlanError("duplicate cell " + c.id());
    const double a = alpha_for(c);
    if (!(a >= 0.0 && a <= 1.0)) throw PlanError(c.id() + ": alpha must lie in [0, 1]");
  }
  for (const auto& [k, v] : alphas)
    if (!(v >= 0.0 && v <= 1.0)) throw PlanError("alpha for " + k + " must lie in [0, 1]");
}

double ExperimentPlan::alpha_for(const CellSpec& cell) const {
  if (cell.alpha) return *cell.alpha;
  const std::string s(datagen::to_string(cell.scenario)), b(datagen::to_string(cell.background)),
      m(models::to_string(cell.model));
  for (const auto& key : {s + "/" + b + "/" + m, s + "/" + b, s})
    if (auto it = alphas.find(key); it != alphas.end()) return it->second;
  return data.alpha;
}

datagen::ScenarioConfig ExperimentPlan::data_for(const CellSpec& cell) const {
  auto c = data;
  c.scenario = cell.scenario;
  c.background = cell.background;
  c.alpha = alpha_for(cell);
  c.seed = seed;
  return c;
}

ExperimentPlan plan_from_json(const json& j) {
  reject_unknown(j, {"seed", "out", "jobs", "data", "train", "architecture", "attribution", "alphas", "cells", "grid"},
                 "plan");
  ExperimentPlan p;
  try {
    p.seed = get_or<std::uint64_t>(j, "seed", p.seed);
    p.out = get_or<std::string>(j, "out", p.out.string());
    p.jobs = get_or<std::size_t>(j, "jobs", p.jobs);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown(d, {"n_samples", "height", "width", "alpha", "smooth_sigma", "split"}, "data");
      p.data.n_samples = get_or(d, "n_samples", p.data.n_samples);
      p.data.height = get_or(d, "height", p.data.height);
      p.data.width = get_or(d, "width", p.data.width);
      p.data.alpha = get_or(d, "alpha", p.data.alpha);
      p.data.smooth_sigma = get_or(d, "smooth_sigma", p.data.smooth_sigma);
      if (d.contains("split")) {
        const auto& s = d.at("split");
        reject_unknown(s, {"train", "val", "test"}, "data.split");
        p.data.split = {s.at("train").get<double>(), s.at("val").get<double>(), s.at("test").get<double>()};
      }
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, {"epochs", "learning_rate", "beta1", "beta2", "epsilon", "batch_size", "accuracy_gate"},
                     "train");
      p.train.epochs = get_or(t, "epochs", p.train.epochs);
      p.train.learning_rate = get_or(t, "learning_rate", p.train.learning_rate);
      p.train.beta1 = get_or(t, "beta1", p.train.beta1);
      p.train.beta2 = get_or(t, "beta2", p.train.beta2);
      p.train.epsilon = get_or(t, "epsilon", p.train.epsilon);
      p.train.batch_size = get_or(t, "batch_size", p.train.batch_size);
      p.train.accuracy_gate = get_or(t, "accuracy_gate", p.train.accuracy_gate);
    }
    if (j.contains("architecture")) {
      const auto& a = j.at("architecture");
      reject_unknown(a, {"mlp_hidden", "conv_layers", "conv_filters", "conv_kernel", "pool"}, "architecture");
      p.architecture.mlp_hidden = get_or(a, "mlp_hidden", p.architecture.mlp_hidden);
      p.architecture.conv_layers = get_or(a, "conv_layers", p.architecture.conv_layers);
      p.architecture.conv_filters = get_or(a, "conv_filters", p.architecture.conv_filters);
      p.architecture.conv_kernel = get_or(a, "conv_kernel", p.architecture.conv_kernel);
      p.architecture.pool = get_or(a, "pool", p.architecture.pool);
    }
    if (j.contains("attribution")) {
      const auto& a = j.at("attribution");
      reject_unknown(a,
                     {"ig_steps", "shap_samples", "noise_std", "lrp_epsilon", "lrp_target", "lime_samples",
                      "lime_kernel_width", "lime_ridge", "shapley_permutations", "pfi_repeats", "rectify_relu"},
                     "attribution");
      auto& m = p.attribution;
      m.ig_steps = get_or(a, "ig_steps", m.ig_steps);
      m.shap_samples = get_or(a, "shap_samples", m.shap_samples);
      m.noise_std = get_or(a, "noise_std", m.noise_std);
      m.lrp_epsilon = get_or(a, "lrp_epsilon", m.lrp_epsilon);
      if (a.contains("lrp_target")) {
        const auto t = a.at("lrp_target").get<std::string>();
        if (t == "margin") m.lrp_target = attribution::LrpTarget::kMargin;
        else if (t == "predicted_logit") m.lrp_target = attribution::LrpTarget::kPredictedLogit;
        else throw PlanError("lrp_target must be 'margin' or 'predicted_logit'");
      }
      m.lime_samples = get_or(a, "lime_samples", m.lime_samples);
      m.lime_kernel_width = get_or(a, "lime_kernel_width", m.lime_kernel_width);
      m.lime_ridge = get_or(a, "lime_ridge", m.lime_ridge);
      m.shapley_permutations = get_or(a, "shapley_permutations", m.shapley_permutations);
      m.pfi_repeats = get_or(a, "pfi_repeats", m.pfi_repeats);
      m.rectify_relu = get_or(a, "rectify_relu", m.rectify_relu);
    }
    if (j.contains("alphas")) p.alphas = j.at("alphas").get<std::map<std::string, double>>();

    auto parse_methods = [](const json& arr) {
      std::vector<attribution::Method> out;
      for (const auto& m : arr) out.push_back(attribution::parse_method(m.get<std::string>()));
      return out;
    };
    if (j.contains("cells")) {
      for (const auto& c : j.at("cells")) {
        reject_unknown(c, {"scenario", "background", "whitening", "model", "methods", "alpha"}, "cell");
        CellSpec cell;
        cell.scenario = datagen::parse_scenario(c.at("scenario").get<std::string>());
        cell.background = datagen::parse_background(c.at("background").get<std::string>());
        cell.whitening = whitening::parse_method(get_or<std::string>(c, "whitening", "None"));
        cell.model = models::parse_architecture(c.at("model").get<std::string>());
        if (c.contains("methods")) cell.methods = parse_methods(c.at("methods"));
        if (c.contains("alpha")) cell.alpha = c.at("alpha").get<double>();
        p.cells.push_back(std::move(cell));
      }
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      reject_unknown(g, {"scenarios", "backgrounds", "whitenings", "models", "methods"}, "grid");
      const auto methods = g.contains("methods") ? parse_methods(g.at("methods")) : std::vector<attribution::Method>{};
      const auto whitenings = g.contains("whitenings") ? g.at("whitenings").get<std::vector<std::string>>()
                                                       : std::vector<std::string>{"None"};
      for (const auto& s : g.at("scenarios").get<std::vector<std::string>>())
        for (const auto& b : g.at("backgrounds").get<std::vector<std::string>>())
          for (const auto& w : whitenings)
            for (const auto& m : g.at("models").get<std::vector<std::string>>()) {
              CellSpec cell;
              cell.scenario = datagen::parse_scenario(s);
              cell.background = datagen::parse_background(b);
              cell.whitening = whitening::parse_method(w);
              cell.model = models::parse_architecture(m);
              cell.methods = methods;
              p.cells.push_back(std::move(cell));
            }
    }
  } catch (const json::exception& e) {
    throw PlanError(std::string("plan: ") + e.what());
  }
  p.train.seed = p.seed;
  p.attribution.seed = p.seed;
  p.data.seed = p.seed;
  return p;
}

json plan_to_json(const ExperimentPlan& plan) {
  json cells = json::array();
  for (const auto& c : plan.cells) {
    json methods = json::array();
    for (auto m : c.methods) methods.push_back(upper_method_name(m));
    json jc{{"scenario", datagen::to_string(c.scenario)},
            {"background", datagen::to_string(c.background)},
            {"whitening", whitening::to_string(c.whitening)},
            {"model", models::to_string(c.model)},
            {"methods", methods}};
    if (c.alpha) jc["alpha"] = *c.alpha;
    cells.push_back(std::move(jc));
  }
  auto data = data_json(plan.data);
  for (const char* k : {"scenario", "background", "seed"}) data.erase(k);
  auto train = train_json(plan.train);
  train.erase("seed");
  auto attr = attribution_json(plan.attribution);
  attr.erase("seed");
  return {{"seed", plan.seed},   {"out", plan.out.string()},    {"jobs", plan.jobs},
          {"data", data},        {"train", train},              {"architecture", arch_json(plan.architecture)},
          {"attribution", attr}, {"alphas", plan.alphas},       {"cells", cells}};
}

ExperimentPlan load_plan(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw PlanError(path.string() + ": " + e.what());
  }
  return plan_from_json(j);
}

bool RunManifest::ok() const {
  for (const auto& c : cells)
    if (c.status == "error") return false;
  return true;
}

whitening::Transform fit_on_train(const datagen::Dataset& ds, whitening::Method method) {
  return whitening::fit(method, datagen::pixel_matrix(ds, ds.split.train));
}

datagen::Dataset whiten_dataset(const datagen::Dataset& ds, const whitening::Transform& t) {
  std::vector<std::size_t> all(ds.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto z = whitening::apply(t, datagen::pixel_matrix(ds, all));
  datagen::Dataset out = ds;
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& px = out.samples[i].pixels.values;
    const auto row = z.row(i);
    px.assign(row.begin(), row.end());
  }
  return out;
}

models::TrainData train_data(const datagen::Dataset& ds) {
  models::TrainData d;
  d.x_train = datagen::pixel_matrix(ds, ds.split.train);
  d.y_train = datagen::labels(ds, ds.split.train);
  d.x_val = datagen::pixel_matrix(ds, ds.split.val);
  d.y_val = datagen::labels(ds, ds.split.val);
  d.x_test = datagen::pixel_matrix(ds, ds.split.test);
  d.y_test = datagen::labels(ds, ds.split.test);
  return d;
}

std::vector<std::size_t> correctly_predicted(const models::Model& model, const datagen::Dataset& ds,
                                             const std::vector<std::size_t>& indices) {
  std::vector<std::size_t> out;
  for (std::size_t i : indices)
    if (model.predict(ds.samples[i].pixels.values) == ds.samples[i].label) out.push_back(i);
  return out;
}

attribution::AttributionBatch explain_samples(const models::Model& model, const datagen::Dataset& ds,
                                              const std::vector<std::size_t>& indices,
                                              attribution::Method method,
                                              const attribution::MethodConfig& config,
                                              const std::string& model_tag) {
  attribution::AttributionBatch b;
  b.method = method;
  b.model_tag = model_tag;
  b.height = ds.config.height;
  b.width = ds.config.width;
  b.sample_ids = indices;
  b.maps.reserve(indices.size());
  for (std::size_t i : indices)
    b.maps.push_back(attribution::explain(method, model, ds.samples[i].pixels.values, config, i).values);
  return b;
}

std::vector<metrics::MetricsRecord> evaluate(const datagen::Dataset& ds,
                                             const attribution::AttributionBatch& batch,
                                             const metrics::MetricsKey& key) {
  std::vector<metrics::MetricsRecord> out;
  out.reserve(batch.maps.size());
  for (std::size_t k = 0; k < batch.maps.size(); ++k) {
    const std::size_t id = batch.sample_ids[k];
    if (id >= ds.samples.size()) throw std::out_of_range("attribution refers to a missing sample");
    const auto& mask = ds.samples[id].gt_mask;
    metrics::MetricsRecord r;
    r.key = key;
    r.key.sample_id = id;
    r.precision = metrics::precision_at_k(batch.maps[k], mask);
    r.emd_score = metrics::emd_score(batch.maps[k], mask);
    out.push_back(std::move(r));
  }
  return out;
}

RunManifest run(const ExperimentPlan& plan, std::string_view selector) {
  plan.validate();
  std::vector<const CellSpec*> todo;
  for (const auto& c : plan.cells)
    if (matches_selector(c, selector)) todo.push_back(&c);

  RunManifest manifest;
  manifest.cells.resize(todo.size());

  // Datasets are shared between cells that differ only in whitening or model.
  std::map<std::string, datagen::Dataset> datasets;
  std::vector<std::string> data_key(todo.size());
  std::vector<std::string> data_error(todo.size());
  for (std::size_t i = 0; i < todo.size(); ++i) {
    const auto cfg = plan.data_for(*todo[i]);
    const std::string h = stage_hashes(plan, *todo[i]).data_hash;
    data_key[i] = h;
    if (datasets.count(h)) continue;
    const fs::path stem = plan.out / "data" /
                          (std::string(datagen::to_string(cfg.scenario)) + "-" +
                           std::string(datagen::to_string(cfg.background)) + "-" + h.substr(0, 16));
    try {
      if (fs::exists(with_ext(stem, ".json")) && fs::exists(with_ext(stem, ".bin"))) {
        datasets.emplace(h, datagen::load_dataset(stem));
      } else {
        auto ds = datagen::generate_dataset(cfg);
        datagen::save_dataset(ds, stem);
        datasets.emplace(h, std::move(ds));
      }
    } catch (const std::exception& e) {
      data_error[i] = e.what();
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      const auto start = std::chrono::steady_clock::now();
      CellResult r;
      try {
        if (!data_error[i].empty()) throw std::runtime_error(data_error[i]);
        r = execute_cell(plan, *todo[i], datasets.at(data_key[i]));
        log::info(todo[i]->id() + ": " + r.status + ", test accuracy " + std::to_string(r.test_accuracy));
      } catch (const std::exception& e) {
        r.id = todo[i]->id();
        r.status = "error";
        r.error = e.what();
        r.dir = plan.out / "cells" / r.id;
        log::error(r.id + ": " + e.what());
      }
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      manifest.cells[i] = std::move(r);
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(plan.jobs == 0 ? std::thread::hardware_concurrency() : plan.jobs, todo.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  fs::create_directories(plan.out);
  append_manifest(plan.out, selector, manifest);
  std::vector<fs::path> dirs;
  for (const auto& c : manifest.cells)
    if (c.status != "error") dirs.push_back(c.dir);
  if (!dirs.empty()) aggregate(dirs, plan.out / "aggregate");
  return manifest;
}

CalibrationResult calibrate_alpha(const datagen::ScenarioConfig& data, models::Architecture arch,
                                  const models::ArchitectureConfig& architecture,
                                  const models::TrainConfig& train, double target) {
  constexpr int kSteps = 64;
  CalibrationResult res;
  std::map<int, double> cache;
  auto accuracy_at = [&](int k) {
    if (auto it = cache.find(k); it != cache.end()) return it->second;
    auto cfg = data;
    cfg.alpha = static_cast<double>(k) / kSteps;
    const auto ds = datagen::generate_dataset(cfg);
    const models::Shape shape{1, cfg.height, cfg.width};
    const auto tm = models::train(models::Model::build(arch, shape, architecture, train.seed), train_data(ds), train);
    res.trials.push_back({cfg.alpha, tm.test_accuracy});
    log::info("calibrate alpha " + std::to_string(cfg.alpha) + ": test accuracy " + std::to_string(tm.test_accuracy));
    return cache[k] = tm.test_accuracy;
  };
  const std::string cell = std::string(datagen::to_string(data.scenario)) + "/" +
                           std::string(datagen::to_string(data.background)) + "/" +
                           std::string(models::to_string(arch));
  if (accuracy_at(kSteps) < target) {
    std::ostringstream os;
    os << cell << ": target accuracy " << target << " unreachable at alpha = 1 (test accuracy "
       << cache[kSteps] << ")";
    throw CalibrationError(os.str());
  }
  int lo = 0, hi = kSteps;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (accuracy_at(mid) >= target) hi = mid;
    else lo = mid;
  }
  if (lo == 0 && accuracy_at(0) >= target) hi = 0;
  res.alpha = static_cast<double>(hi) / kSteps;
  res.accuracy = cache[hi];
  return res;
}

std::vector<fs::path> cell_dirs(const fs::path& run_out) {
  std::vector<fs::path> out;
  const fs::path root = run_out / "cells";
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "cell.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

AggregateSummary aggregate(const std::vector<fs::path>& dirs, const fs::path& out) {
  AggregateSummary s;
  std::vector<metrics::MetricsRecord> records;
  for (const auto& dir : dirs) {
    const auto cj = read_json_if(dir / "cell.json");
    if (!cj) {
      log::warn(dir.string() + ": no cell.json, skipped");
      continue;
    }
    const std::string id = cj->value("id", dir.filename().string());
    if (!cj->value("passed_gate", false)) {
      log::info(id + ": excluded from aggregate, test accuracy " +
                std::to_string(cj->value("test_accuracy", 0.0)) + " is below the gate");
      ++s.cells_excluded;
      continue;
    }
    ++s.cells_used;
    auto rec = metrics::read_metrics_csv(dir / "metrics.csv");
    records.insert(records.end(), rec.begin(), rec.end());

    if (cj->value("scenario", "") == "RIGID") continue;
    for (const auto& m : cj->at("methods")) {
      const auto name = m.get<std::string>();
      const auto batch = attribution::load_batch(dir / "attributions" / name);
      if (batch.maps.empty()) continue;
      Image mean(batch.height, batch.width, 0.0);
      for (const auto& map : batch.maps)
        for (std::size_t i = 0; i < map.size(); ++i) mean[i] += std::abs(map[i]);
      for (double& v : mean.values) v /= static_cast<double>(batch.maps.size());
      attribution::write_heatmap_pgm(mean, out / "heatmaps" / (id + "-" + name + ".pgm"));
      attribution::write_heatmap_csv(mean, out / "heatmaps" / (id + "-" + name + ".csv"));
      ++s.heatmaps;
    }
  }
  s.rows = metrics::aggregate(records);
  metrics::write_aggregate_csv(s.rows, out / "aggregate.csv");
  return s;
}

}  // namespace wbench::bench
