#include "wbench/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wbench/io.hpp"
#include "wbench/rng.hpp"

namespace wbench::models {

using linalg::Matrix;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

Layer dense(Shape in, std::size_t units) {
  Layer l;
  l.kind = LayerKind::kDense;
  l.in = in;
  l.out = {units, 1, 1};
  l.weights.assign(units * in.size(), 0.0);
  l.bias.assign(units, 0.0);
  return l;
}

Layer conv(Shape in, std::size_t filters, std::size_t kernel) {
  Layer l;
  l.kind = LayerKind::kConv2D;
  l.in = in;
  l.out = {filters, in.height, in.width};
  l.filters = filters;
  l.kernel = kernel;
  l.weights.assign(filters * in.channels * kernel * kernel, 0.0);
  l.bias.assign(filters, 0.0);
  return l;
}

Layer simple(LayerKind kind, Shape in) {
  Layer l;
  l.kind = kind;
  l.in = in;
  l.out = kind == LayerKind::kFlatten ? Shape{in.size(), 1, 1} : in;
  return l;
}

Layer maxpool(Shape in, std::size_t pool) {
  Layer l;
  l.kind = LayerKind::kMaxPool2D;
  l.in = in;
  l.pool = pool;
  l.out = {in.channels, in.height / pool, in.width / pool};
  return l;
}

std::size_t fan_in(const Layer& l) {
  return l.kind == LayerKind::kDense ? l.in.size() : l.in.channels * l.kernel * l.kernel;
}

void forward_layer(const Layer& l, const std::vector<double>& x, std::vector<double>& y,
                   std::vector<std::size_t>& argmax) {
  y.assign(l.out.size(), 0.0);
  switch (l.kind) {
    case LayerKind::kDense: {
      const std::size_t n_in = l.in.size();
      for (std::size_t o = 0; o < y.size(); ++o) {
        const double* w = l.weights.data() + o * n_in;
        double s = l.bias[o];
        for (std::size_t i = 0; i < n_in; ++i) s += w[i] * x[i];
        y[o] = s;
      }
      break;
    }
    case LayerKind::kConv2D: {
      const std::size_t c_in = l.in.channels, h = l.in.height, w = l.in.width, k = l.kernel;
      const long pad = static_cast<long>((k - 1) / 2);
      for (std::size_t f = 0; f < l.filters; ++f) {
        double* out = y.data() + f * h * w;
        std::fill(out, out + h * w, l.bias[f]);
        for (std::size_t c = 0; c < c_in; ++c) {
          const double* in = x.data() + c * h * w;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const double wt = l.weights[((f * c_in + c) * k + ky) * k + kx];
              for (std::size_t r = 0; r < h; ++r) {
                const long rr = static_cast<long>(r + ky) - pad;
                if (rr < 0 || rr >= static_cast<long>(h)) continue;
                for (std::size_t col = 0; col < w; ++col) {
                  const long cc = static_cast<long>(col + kx) - pad;
                  if (cc < 0 || cc >= static_cast<long>(w)) continue;
                  out[r * w + col] += wt * in[rr * w + cc];
                }
              }
            }
        }
      }
      break;
    }
    case LayerKind::kReLU:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case LayerKind::kMaxPool2D: {
      argmax.assign(y.size(), 0);
      const std::size_t p = l.pool, h = l.in.height, w = l.in.width;
      for (std::size_t c = 0; c < l.out.channels; ++c)
        for (std::size_t r = 0; r < l.out.height; ++r)
          for (std::size_t col = 0; col < l.out.width; ++col) {
            std::size_t best = c * h * w + (r * p) * w + col * p;
            for (std::size_t dy = 0; dy < p; ++dy)
              for (std::size_t dx = 0; dx < p; ++dx) {
                const std::size_t idx = c * h * w + (r * p + dy) * w + col * p + dx;
                if (x[idx] > x[best]) best = idx;
              }
            const std::size_t o = (c * l.out.height + r) * l.out.width + col;
            y[o] = x[best];
            argmax[o] = best;
          }
      break;
    }
    case LayerKind::kFlatten:
      y = x;
      break;
    case LayerKind::kSoftmax: {
      const double mx = *std::max_element(x.begin(), x.end());
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] = std::exp(x[i] - mx);
      for (double& v : y) v /= s;
      break;
    }
  }
}

// Gradient w.r.t. the layer input; parameter gradients accumulated into
// `gw`/`gb` when non-null.
std::vector<double> backward_layer(const Layer& l, const std::vector<double>& x,
                                   const std::vector<std::size_t>& argmax,
                                   const std::vector<double>& g, ReluRule rule, double* gw,
                                   double* gb) {
  std::vector<double> gin(l.in.size(), 0.0);
  switch (l.kind) {
    case LayerKind::kDense: {
      const std::size_t n_in = l.in.size();
      for (std::size_t o = 0; o < g.size(); ++o) {
        const double go = g[o];
        if (go == 0.0) continue;
        const double* w = l.weights.data() + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) gin[i] += w[i] * go;
        if (gw) {
          double* dw = gw + o * n_in;
          for (std::size_t i = 0; i < n_in; ++i) dw[i] += go * x[i];
          gb[o] += go;
        }
      }
      break;
    }
    case LayerKind::kConv2D: {
      const std::size_t c_in = l.in.channels, h = l.in.height, w = l.in.width, k = l.kernel;
      const long pad = static_cast<long>((k - 1) / 2);
      for (std::size_t f = 0; f < l.filters; ++f) {
        const double* go = g.data() + f * h * w;
        if (gb)
          for (std::size_t i = 0; i < h * w; ++i) gb[f] += go[i];
        for (std::size_t c = 0; c < c_in; ++c) {
          const double* in = x.data() + c * h * w;
          double* gi = gin.data() + c * h * w;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t wi = ((f * c_in + c) * k + ky) * k + kx;
              const double wt = l.weights[wi];
              double acc = 0.0;
              for (std::size_t r = 0; r < h; ++r) {
                const long rr = static_cast<long>(r + ky) - pad;
                if (rr < 0 || rr >= static_cast<long>(h)) continue;
                for (std::size_t col = 0; col < w; ++col) {
                  const long cc = static_cast<long>(col + kx) - pad;
                  if (cc < 0 || cc >= static_cast<long>(w)) continue;
                  gi[rr * w + cc] += wt * go[r * w + col];
                  acc += go[r * w + col] * in[rr * w + cc];
                }
              }
              if (gw) gw[wi] += acc;
            }
        }
      }
      break;
    }
    case LayerKind::kReLU:
      for (std::size_t i = 0; i < gin.size(); ++i) {
        const bool active = x[i] > 0.0;
        const bool positive = g[i] > 0.0;
        switch (rule) {
          case ReluRule::kPlain: gin[i] = active ? g[i] : 0.0; break;
          case ReluRule::kGuidedBackprop: gin[i] = active && positive ? g[i] : 0.0; break;
          case ReluRule::kDeconv: gin[i] = positive ? g[i] : 0.0; break;
        }
      }
      break;
    case LayerKind::kMaxPool2D:
      for (std::size_t o = 0; o < g.size(); ++o) gin[argmax[o]] += g[o];
      break;
    case LayerKind::kFlatten:
      gin = g;
      break;
    case LayerKind::kSoftmax: {
      // x holds logits; recompute probabilities.
      std::vector<double> p;
      std::vector<std::size_t> unused;
      forward_layer(l, x, p, unused);
      double dot = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * g[i];
      for (std::size_t i = 0; i < p.size(); ++i) gin[i] = p[i] * (g[i] - dot);
      break;
    }
  }
  return gin;
}

void check_chain(Shape input, const std::vector<Layer>& layers) {
  if (layers.empty() || layers.back().kind != LayerKind::kSoftmax || layers.back().out.size() != 2)
    throw ShapeError("model must end in a 2-unit Softmax");
  Shape cur = input;
  for (const auto& l : layers) {
    if (l.in.size() != cur.size() || (l.kind != LayerKind::kDense && !(l.in == cur)))
      throw ShapeError("incompatible layer shapes at " + std::string(to_string(l.kind)));
    if (l.kind == LayerKind::kSoftmax && &l != &layers.back())
      throw ShapeError("Softmax is only supported as the final layer");
    if (l.kind == LayerKind::kDense &&
        (l.weights.size() != l.out.size() * l.in.size() || l.bias.size() != l.out.size()))
      throw ShapeError("dense parameter size mismatch");
    if (l.kind == LayerKind::kConv2D &&
        (l.weights.size() != l.filters * l.in.channels * l.kernel * l.kernel ||
         l.bias.size() != l.filters || l.out.size() != l.filters * l.in.height * l.in.width))
      throw ShapeError("conv parameter size mismatch");
    cur = l.out;
  }
}

}  // namespace

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kDense: return "Dense";
    case LayerKind::kConv2D: return "Conv2D";
    case LayerKind::kReLU: return "ReLU";
    case LayerKind::kMaxPool2D: return "MaxPool2D";
    case LayerKind::kFlatten: return "Flatten";
    case LayerKind::kSoftmax: return "Softmax";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view s) {
  for (auto k : {LayerKind::kDense, LayerKind::kConv2D, LayerKind::kReLU, LayerKind::kMaxPool2D,
                 LayerKind::kFlatten, LayerKind::kSoftmax})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown layer kind: " + std::string(s));
}

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::kLlr: return "LLR";
    case Architecture::kMlp: return "MLP";
    case Architecture::kCnn: return "CNN";
  }
  return "?";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "LLR") return Architecture::kLlr;
  if (s == "MLP") return Architecture::kMlp;
  if (s == "CNN") return Architecture::kCnn;
  throw std::invalid_argument("unknown architecture: " + std::string(s));
}

Model::Model(Architecture arch, Shape input, std::vector<Layer> layers)
    : arch_(arch), input_(input), layers_(std::move(layers)) {
  check_chain(input_, layers_);
}

Model Model::build(Architecture arch, Shape input, const ArchitectureConfig& config,
                   std::uint64_t seed) {
  std::vector<Layer> layers;
  Shape cur = input;
  auto push = [&](Layer l) {
    cur = l.out;
    layers.push_back(std::move(l));
  };
  switch (arch) {
    case Architecture::kLlr:
      push(dense(cur, 2));
      break;
    case Architecture::kMlp:
      for (std::size_t units : config.mlp_hidden) {
        push(dense(cur, units));
        push(simple(LayerKind::kReLU, cur));
      }
      push(dense(cur, 2));
      break;
    case Architecture::kCnn:
      for (std::size_t i = 0; i < config.conv_layers; ++i) {
        push(conv(cur, config.conv_filters, config.conv_kernel));
        push(simple(LayerKind::kReLU, cur));
      }
      if (config.pool > 1) push(maxpool(cur, config.pool));
      push(simple(LayerKind::kFlatten, cur));
      push(dense(cur, 2));
      break;
  }
  push(simple(LayerKind::kSoftmax, cur));

  Rng rng(seed, 0x6d6f64656cULL);
  for (auto& l : layers) {
    if (!l.has_params()) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(l)));
    for (double& w : l.weights) w = rng.uniform(-bound, bound);
  }
  return Model(arch, input, std::move(layers));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

bool Model::all_finite() const {
  for (const auto& l : layers_) {
    for (double v : l.weights)
      if (!std::isfinite(v)) return false;
    for (double v : l.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

void Model::forward(std::span<const double> x, Trace& trace) const {
  if (x.size() != input_.size()) throw ShapeError("input size does not match the model");
  trace.values.resize(layers_.size() + 1);
  trace.argmax.resize(layers_.size());
  trace.values[0].assign(x.begin(), x.end());
  for (std::size_t i = 0; i < layers_.size(); ++i)
    forward_layer(layers_[i], trace.values[i], trace.values[i + 1], trace.argmax[i]);
}

std::array<double, 2> Model::logits(std::span<const double> x) const {
  Trace t;
  forward(x, t);
  const auto& z = t.values[softmax_index()];
  return {z[0], z[1]};
}

std::array<double, 2> Model::probabilities(std::span<const double> x) const {
  Trace t;
  forward(x, t);
  return {t.values.back()[0], t.values.back()[1]};
}

int Model::predict(std::span<const double> x) const {
  const auto z = logits(x);
  return z[1] > z[0] ? 1 : 0;
}

double Model::margin(std::span<const double> x) const {
  const auto z = logits(x);
  return z[1] - z[0];
}

std::vector<double> Model::backward(const Trace& trace, std::array<double, 2> seed, ReluRule rule,
                                    std::vector<std::vector<double>>* param_grads) const {
  std::vector<double> g(seed.begin(), seed.end());
  for (std::size_t i = softmax_index(); i-- > 0;) {
    const Layer& l = layers_[i];
    double* gw = nullptr;
    double* gb = nullptr;
    if (param_grads && l.has_params()) {
      auto& pg = (*param_grads)[i];
      pg.resize(l.weights.size() + l.bias.size(), 0.0);
      gw = pg.data();
      gb = pg.data() + l.weights.size();
    }
    g = backward_layer(l, trace.values[i], trace.argmax[i], g, rule, gw, gb);
  }
  return g;
}

std::vector<double> Model::grad_input(std::span<const double> x, std::array<double, 2> seed,
                                      ReluRule rule) const {
  Trace t;
  forward(x, t);
  return backward(t, seed, rule);
}

double cross_entropy(const Model& model, const Matrix& x, const std::vector<int>& y) {
  if (x.rows() != y.size()) throw ShapeError("cross_entropy: label count mismatch");
  if (x.rows() == 0) return 0.0;
  Trace t;
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    model.forward(x.row(r), t);
    const auto& z = t.values[model.softmax_index()];
    const double mx = std::max(z[0], z[1]);
    const double lse = mx + std::log(std::exp(z[0] - mx) + std::exp(z[1] - mx));
    loss += lse - z[y[r]];
  }
  return loss / static_cast<double>(x.rows());
}

double accuracy(const Model& model, const Matrix& x, const std::vector<int>& y) {
  if (x.rows() != y.size()) throw ShapeError("accuracy: label count mismatch");
  if (x.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) correct += model.predict(x.row(r)) == y[r] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

TrainedModel train(const Model& initial, const TrainData& data, const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (config.epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  if (data.x_train.rows() == 0 || data.x_val.rows() == 0 || data.x_test.rows() == 0)
    throw std::invalid_argument("train/val/test splits must be nonempty");
  if (data.x_train.rows() != data.y_train.size() || data.x_val.rows() != data.y_val.size() ||
      data.x_test.rows() != data.y_test.size())
    throw ShapeError("label count mismatch");

  Model model = initial;
  const auto& layers = model.layers();
  const std::size_t n_layers = layers.size();
  std::vector<std::vector<double>> m(n_layers), v(n_layers), grads(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::size_t np = layers[i].weights.size() + layers[i].bias.size();
    m[i].assign(np, 0.0);
    v[i].assign(np, 0.0);
  }

  const std::size_t n = data.x_train.rows();
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainedModel out;
  out.best_val_loss = std::numeric_limits<double>::infinity();
  Model best = model;
  Trace trace;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Both losses are logged for the weights at the start of the epoch.
    const double val_loss = cross_entropy(model, data.x_val, data.y_val);
    if (!std::isfinite(val_loss) || !model.all_finite())
      throw TrainingError("training diverged at epoch " + std::to_string(epoch), epoch);
    if (val_loss < out.best_val_loss) {
      out.best_val_loss = val_loss;
      out.best_epoch = epoch;
      best = model;
    }
    if (batch < n) {
      Rng rng(config.seed, epoch, 0x7368756666ULL);
      rng.shuffle(order.begin(), order.end());
    }

    double train_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t r = order[b];
        model.forward(data.x_train.row(r), trace);
        const auto& p = trace.values.back();
        const auto& z = trace.values[model.softmax_index()];
        const int y = data.y_train[r];
        const double mx = std::max(z[0], z[1]);
        train_loss += mx + std::log(std::exp(z[0] - mx) + std::exp(z[1] - mx)) - z[y];
        const std::array<double, 2> seed{(p[0] - (y == 0 ? 1.0 : 0.0)) * scale,
                                         (p[1] - (y == 1 ? 1.0 : 0.0)) * scale};
        model.backward(trace, seed, ReluRule::kPlain, &grads);
      }

      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      auto& mut = model.mutable_layers();
      for (std::size_t i = 0; i < n_layers; ++i) {
        if (!mut[i].has_params()) continue;
        const std::size_t nw = mut[i].weights.size();
        for (std::size_t k = 0; k < grads[i].size(); ++k) {
          const double g = grads[i][k];
          m[i][k] = config.beta1 * m[i][k] + (1.0 - config.beta1) * g;
          v[i][k] = config.beta2 * v[i][k] + (1.0 - config.beta2) * g * g;
          const double update =
              config.learning_rate * (m[i][k] / c1) / (std::sqrt(v[i][k] / c2) + config.epsilon);
          if (k < nw) mut[i].weights[k] -= update;
          else mut[i].bias[k - nw] -= update;
        }
      }
    }
    train_loss /= static_cast<double>(n);

    if (!std::isfinite(train_loss))
      throw TrainingError("training diverged at epoch " + std::to_string(epoch), epoch);
    out.log.push_back({epoch, train_loss, val_loss});
  }

  out.model = std::move(best);
  out.test_accuracy = accuracy(out.model, data.x_test, data.y_test);
  out.passed_gate = out.test_accuracy >= config.accuracy_gate;
  return out;
}

namespace {

json shape_json(const Shape& s) { return json::array({s.channels, s.height, s.width}); }
Shape shape_from(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>()}; }

}  // namespace

void save_model(const TrainedModel& tm, const std::filesystem::path& stem) {
  auto with = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  const Model& model = tm.model;
  json layers = json::array();
  std::size_t offset = 0;
  for (const auto& l : model.layers()) {
    json jl{{"kind", to_string(l.kind)}, {"in", shape_json(l.in)}, {"out", shape_json(l.out)}};
    if (l.kind == LayerKind::kConv2D) {
      jl["filters"] = l.filters;
      jl["kernel"] = l.kernel;
    }
    if (l.kind == LayerKind::kMaxPool2D) jl["pool"] = l.pool;
    if (l.has_params()) {
      jl["weights_offset"] = offset;
      offset += 8 * l.weights.size();
      jl["bias_offset"] = offset;
      offset += 8 * l.bias.size();
    }
    layers.push_back(std::move(jl));
  }
  const json manifest{{"format", "wbench-model"},
                      {"format_version", kFormatVersion},
                      {"architecture", to_string(model.architecture())},
                      {"input", shape_json(model.input_shape())},
                      {"layers", layers},
                      {"payload", with(".bin").filename().string()},
                      {"payload_bytes", offset},
                      {"best_epoch", tm.best_epoch},
                      {"best_val_loss", tm.best_val_loss},
                      {"test_accuracy", tm.test_accuracy},
                      {"passed_gate", tm.passed_gate}};
  io::write_text(with(".json"), manifest.dump(2) + "\n");

  std::ofstream bin(with(".bin"), std::ios::binary | std::ios::trunc);
  if (!bin) throw io::FormatError("cannot write " + with(".bin").string());
  for (const auto& l : model.layers()) {
    if (!l.has_params()) continue;
    io::write_f64_le(bin, l.weights);
    io::write_f64_le(bin, l.bias);
  }

  std::ostringstream csv;
  csv << "epoch,train_loss,val_loss\n" << std::setprecision(17);
  for (const auto& e : tm.log) csv << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
  io::write_text(with(".log.csv"), csv.str());
}

TrainedModel load_model(const std::filesystem::path& stem) {
  auto with = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  const json manifest = json::parse(io::read_text(with(".json")));
  if (manifest.value("format", "") != "wbench-model" ||
      manifest.value("format_version", 0) != kFormatVersion)
    throw io::FormatError("unsupported model file: " + with(".json").string());

  std::ifstream bin(stem.parent_path() / manifest.at("payload").get<std::string>(), std::ios::binary);
  if (!bin) throw io::FormatError("cannot open model payload for " + stem.string());
  std::vector<Layer> layers;
  for (const auto& jl : manifest.at("layers")) {
    Layer l;
    l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
    l.in = shape_from(jl.at("in"));
    l.out = shape_from(jl.at("out"));
    l.filters = jl.value("filters", std::size_t{0});
    l.kernel = jl.value("kernel", std::size_t{0});
    l.pool = jl.value("pool", std::size_t{0});
    if (l.kind == LayerKind::kDense) {
      l.weights = io::read_f64_le(bin, l.out.size() * l.in.size());
      l.bias = io::read_f64_le(bin, l.out.size());
    } else if (l.kind == LayerKind::kConv2D) {
      l.weights = io::read_f64_le(bin, l.filters * l.in.channels * l.kernel * l.kernel);
      l.bias = io::read_f64_le(bin, l.filters);
    }
    layers.push_back(std::move(l));
  }

  TrainedModel tm;
  tm.model = Model(parse_architecture(manifest.at("architecture").get<std::string>()),
                   shape_from(manifest.at("input")), std::move(layers));
  tm.best_epoch = manifest.at("best_epoch").get<std::size_t>();
  tm.best_val_loss = manifest.at("best_val_loss").get<double>();
  tm.test_accuracy = manifest.at("test_accuracy").get<double>();
  tm.passed_gate = manifest.at("passed_gate").get<bool>();

  std::istringstream csv(io::read_text(with(".log.csv")));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    EpochLog e;
    char comma;
    std::istringstream ls(line);
    ls >> e.epoch >> comma >> e.train_loss >> comma >> e.val_loss;
    tm.log.push_back(e);
  }
  return tm;
}

}  // namespace wbench::models
