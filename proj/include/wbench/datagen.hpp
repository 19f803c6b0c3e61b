#pragma once

// Synthetic tetromino classification datasets (LIN, MULT, RIGID, XOR) on WHITE
// or spatially smoothed CORR backgrounds, with per-sample ground-truth masks.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wbench/image.hpp"
#include "wbench/linalg.hpp"
#include "wbench/rng.hpp"

namespace wbench::datagen {

enum class Scenario { kLin, kMult, kRigid, kXor };
enum class Background { kWhite, kCorr };
enum class TetrominoKind { kT, kL };

std::string_view to_string(Scenario s);
std::string_view to_string(Background b);
Scenario parse_scenario(std::string_view s);
Background parse_background(std::string_view s);

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Split {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::kLin;
  Background background = Background::kWhite;
  std::size_t n_samples = 10000;
  std::size_t height = 8;
  std::size_t width = 8;
  double alpha = 0.5;
  double smooth_sigma = 3.0;
  std::uint64_t seed = 0;
  Split split;

  // Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

struct Anchor {
  int row = 0;
  int col = 0;
};

struct Sample {
  Image pixels;
  int label = 0;
  Mask gt_mask;
  Image signal_component;
  // LIN/MULT: 0 = T, 1 = L. XOR: 0 = (+T+L), 1 = (-T-L), 2 = (+T-L), 3 = (-T+L).
  // RIGID: kind * 4 + quarter turns.
  int pattern_id = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct Dataset {
  ScenarioConfig config;
  std::vector<Sample> samples;
  SplitIndices split;

  std::size_t dim() const { return config.height * config.width; }
};

// Offsets of the four cells of a tetromino after `quarter_turns` clockwise
// 90-degree rotations, shifted so the bounding box starts at (0, 0).
std::vector<Anchor> tetromino_cells(TetrominoKind kind, int quarter_turns);

// Binary pattern with the rotated shape's bounding box at `anchor`.
Image make_tetromino(TetrominoKind kind, Anchor anchor, int rotation_degrees,
                     std::size_t height = 8, std::size_t width = 8);

// Fixed LIN/MULT/XOR placement: T near the top-left, L near the bottom-right.
Anchor fixed_anchor(TetrominoKind kind, std::size_t height, std::size_t width);

// Separable Gaussian filter, reflect padding, kernel truncated at 4 sigma.
Image gaussian_smooth(const Image& in, double sigma);

Image make_background(const ScenarioConfig& config, Rng& rng);

// Divides every image by the Frobenius norm of the stacked batch; returns the norm.
double frobenius_normalize(std::vector<Image>& batch);

// x = alpha * s + (1 - alpha) * n, then each sample divided by its max |x|.
std::vector<Image> compose_additive(const std::vector<Image>& signal,
                                    const std::vector<Image>& noise, double alpha);
// x = (1 - alpha * s) * n elementwise, then max-abs scaled.
std::vector<Image> compose_multiplicative(const std::vector<Image>& signal,
                                          const std::vector<Image>& noise, double alpha);

Mask ground_truth_mask(Scenario scenario, const Image& signal_component);

Dataset generate_dataset(const ScenarioConfig& config);

SplitIndices make_split(std::size_t n, const Split& split);

// N x D matrix of flattened pixels for the given sample indices.
linalg::Matrix pixel_matrix(const Dataset& ds, const std::vector<std::size_t>& indices);

std::vector<int> labels(const Dataset& ds, const std::vector<std::size_t>& indices);

// Manifest (JSON) + little-endian payload. `stem` gets ".json" and ".bin".
void save_dataset(const Dataset& ds, const std::filesystem::path& stem);
Dataset load_dataset(const std::filesystem::path& stem);

}  // namespace wbench::datagen
