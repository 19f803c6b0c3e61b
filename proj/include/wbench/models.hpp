#pragma once

// Small feed-forward classifiers (LLR, MLP, CNN) over C x H x W inputs with
// exact reverse-mode gradients and full-batch Adam training.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "wbench/linalg.hpp"

namespace wbench::models {

enum class LayerKind { kDense, kConv2D, kReLU, kMaxPool2D, kFlatten, kSoftmax };
enum class Architecture { kLlr, kMlp, kCnn };
enum class ReluRule { kPlain, kGuidedBackprop, kDeconv };

std::string_view to_string(LayerKind k);
std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view s);
LayerKind parse_layer_kind(std::string_view s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// Channel-major tensor shape.
struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Layer {
  LayerKind kind = LayerKind::kReLU;
  Shape in;
  Shape out;
  // Conv2D: `filters` output channels, square `kernel`, stride 1, "same"
  // padding with the extra row/column on the bottom/right. MaxPool2D: `pool`
  // sized non-overlapping windows.
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t pool = 0;
  // Dense: out x in row-major. Conv2D: [filter][channel][ky][kx].
  std::vector<double> weights;
  std::vector<double> bias;

  bool has_params() const noexcept { return kind == LayerKind::kDense || kind == LayerKind::kConv2D; }
};

struct ArchitectureConfig {
  std::vector<std::size_t> mlp_hidden{64, 64, 64};
  std::size_t conv_layers = 4;
  std::size_t conv_filters = 4;
  std::size_t conv_kernel = 2;
  std::size_t pool = 2;
};

// Per-layer inputs recorded during a forward pass. `values[i]` is the input
// of layer i; `values.back()` is the network output (class probabilities).
struct Trace {
  std::vector<std::vector<double>> values;
  // For MaxPool2D layers: flat input index of each output's winner.
  std::vector<std::vector<std::size_t>> argmax;
};

inline constexpr std::array<double, 2> kMarginSeed{-1.0, 1.0};

class Model {
 public:
  Model() = default;
  Model(Architecture arch, Shape input, std::vector<Layer> layers);

  // Fan-in uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
  static Model build(Architecture arch, Shape input, const ArchitectureConfig& config,
                     std::uint64_t seed);

  Architecture architecture() const noexcept { return arch_; }
  const Shape& input_shape() const noexcept { return input_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }
  std::size_t parameter_count() const;
  bool all_finite() const;

  void forward(std::span<const double> x, Trace& trace) const;
  // Pre-softmax outputs.
  std::array<double, 2> logits(std::span<const double> x) const;
  std::array<double, 2> probabilities(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
  // logit_1 - logit_0.
  double margin(std::span<const double> x) const;

  // Gradient of seed . logits with respect to the input. The default seed
  // selects the class margin.
  std::vector<double> grad_input(std::span<const double> x,
                                 std::array<double, 2> seed = kMarginSeed,
                                 ReluRule rule = ReluRule::kPlain) const;

  // Backpropagates `seed` (gradient w.r.t. the logits) through a recorded
  // trace. When `param_grads` is non-null, parameter gradients are
  // accumulated into it (same layout as the layers' weights then biases).
  std::vector<double> backward(const Trace& trace, std::array<double, 2> seed, ReluRule rule,
                               std::vector<std::vector<double>>* param_grads = nullptr) const;

  // Index of the final Softmax (logits are the input of this layer).
  std::size_t softmax_index() const noexcept { return layers_.size() - 1; }

 private:
  Architecture arch_ = Architecture::kLlr;
  Shape input_;
  std::vector<Layer> layers_;
};

struct TrainConfig {
  std::size_t epochs = 500;
  double learning_rate = 0.004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // 0 means full batch.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  double accuracy_gate = 0.80;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainData {
  linalg::Matrix x_train;
  std::vector<int> y_train;
  linalg::Matrix x_val;
  std::vector<int> y_val;
  linalg::Matrix x_test;
  std::vector<int> y_test;
};

struct TrainedModel {
  Model model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double test_accuracy = 0.0;
  bool passed_gate = false;
};

double cross_entropy(const Model& model, const linalg::Matrix& x, const std::vector<int>& y);
double accuracy(const Model& model, const linalg::Matrix& x, const std::vector<int>& y);

// Adam on mean cross-entropy; returns the weights of the epoch with the
// lowest validation loss.
TrainedModel train(const Model& initial, const TrainData& data, const TrainConfig& config);

// JSON description (stem.json), little-endian weights (stem.bin) and the
// per-epoch log (stem.log.csv).
void save_model(const TrainedModel& tm, const std::filesystem::path& stem);
TrainedModel load_model(const std::filesystem::path& stem);

}  // namespace wbench::models
