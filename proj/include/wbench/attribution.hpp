#pragma once

// Per-sample importance maps from trained models, plus model-free baselines.
// Gradient, path and sampling methods explain the class margin
// logit_1 - logit_0; LRP explains the margin or the predicted-class logit.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "wbench/image.hpp"
#include "wbench/linalg.hpp"
#include "wbench/models.hpp"
#include "wbench/rng.hpp"

namespace wbench::attribution {

enum class Method {
  kSaliency,
  kIntegratedGradients,
  kGradientShap,
  kLrpEpsilon,
  kLime,
  kShapleySampling,
  kGuidedBackprop,
  kDeconvolution,
  kPfi,
  kSobel,
  kLaplace,
  kRandom,
  kRectifiedInput,
};

std::string_view to_string(Method m);
Method parse_method(std::string_view s);
bool is_baseline(Method m);
// PFI yields one map for a whole test set instead of one per sample.
bool is_global(Method m);

enum class LrpTarget { kMargin, kPredictedLogit };

struct MethodConfig {
  std::size_t ig_steps = 50;
  std::size_t shap_samples = 200;
  double noise_std = 0.1;
  double lrp_epsilon = 1e-6;
  LrpTarget lrp_target = LrpTarget::kMargin;
  std::size_t lime_samples = 1000;
  // 0 selects 0.25 * sqrt(D).
  double lime_kernel_width = 0.0;
  double lime_ridge = 1e-3;
  std::size_t shapley_permutations = 50;
  std::size_t pfi_repeats = 5;
  // Rectified-input baseline: |x| by default, max(x, 0) when set.
  bool rectify_relu = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Attribution {
  std::vector<double> values;
  // Monte-Carlo standard error per feature; empty for deterministic methods.
  std::vector<double> std_error;
};

std::vector<double> saliency(const models::Model& model, std::span<const double> x);

// Trapezoidal rule on the straight path from the zero baseline.
std::vector<double> integrated_gradients(const models::Model& model, std::span<const double> x,
                                         std::size_t steps);

// Mean of grad f(b + u (x - b)) * (x - b) with b ~ N(0, noise_std^2 I), u ~ U(0, 1).
Attribution gradient_shap(const models::Model& model, std::span<const double> x,
                          std::size_t samples, double noise_std, Rng& rng);

// Epsilon-rule LRP with stabilizer epsilon * sign(z). For the margin target
// the last Dense layer is collapsed to the single unit w_1 - w_0.
std::vector<double> lrp_epsilon(const models::Model& model, std::span<const double> x,
                                double epsilon, LrpTarget target = LrpTarget::kMargin);
// The scalar whose relevance lrp_epsilon distributes.
double lrp_output(const models::Model& model, std::span<const double> x, LrpTarget target);

// Masked copies x * z (z binary, p = 1/2 per feature) fitted with a weighted
// ridge surrogate; weights exp(-d^2 / width^2) with d the Euclidean distance
// between z and the all-ones mask.
std::vector<double> lime(const models::Model& model, std::span<const double> x,
                         std::size_t samples, double kernel_width, double ridge, Rng& rng);

// Permutation-sampling Shapley values with the zero baseline.
Attribution shapley_sampling(const models::Model& model, std::span<const double> x,
                             std::size_t permutations, Rng& rng);

// Mean accuracy drop when one feature column is shuffled.
std::vector<double> permutation_feature_importance(const models::Model& model,
                                                   const linalg::Matrix& x,
                                                   const std::vector<int>& y, std::size_t repeats,
                                                   std::uint64_t seed);

Image sobel(const Image& x);
Image laplace(const Image& x);
Image random_uniform(std::size_t height, std::size_t width, Rng& rng);
Image rectified(const Image& x, bool relu);

// Dispatch for per-sample methods. Stochastic methods draw from the stream
// (config.seed, sample_id, method).
Attribution explain(Method method, const models::Model& model, std::span<const double> x,
                    const MethodConfig& config, std::uint64_t sample_id);

struct AttributionBatch {
  Method method = Method::kSaliency;
  std::string model_tag;
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<std::size_t> sample_ids;
  std::vector<std::vector<double>> maps;
};

// Manifest (stem.json) and little-endian float64 maps (stem.bin).
void save_batch(const AttributionBatch& batch, const std::filesystem::path& stem);
AttributionBatch load_batch(const std::filesystem::path& stem);

// Absolute values scaled to a maximum of 1 (all-zero maps stay zero).
Image normalized_abs(const Image& map);
// 16-bit binary PGM and a CSV grid of normalized_abs(map).
void write_heatmap_pgm(const Image& map, const std::filesystem::path& path);
void write_heatmap_csv(const Image& map, const std::filesystem::path& path);

}  // namespace wbench::attribution
