#include "wbench/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include "json.hpp"

#include "wbench/io.hpp"

namespace wbench::datagen {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::size_t reflect_index(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

double max_abs(const Image& img) {
  double m = 0.0;
  for (double v : img.values) m = std::max(m, std::abs(v));
  return m;
}

void scale_max_abs(Image& img) {
  const double m = max_abs(img);
  if (m > 0.0)
    for (double& v : img.values) v /= m;
}

void check_batches(const std::vector<Image>& signal, const std::vector<Image>& noise) {
  if (signal.size() != noise.size())
    throw std::invalid_argument("compose: signal and noise batch sizes differ");
  for (std::size_t i = 0; i < signal.size(); ++i)
    if (!signal[i].same_shape(noise[i]))
      throw std::invalid_argument("compose: signal and noise shapes differ");
}

Image add_into(Image a, const Image& b, double sign) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += sign * b[i];
  return a;
}

}  // namespace

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::kLin: return "LIN";
    case Scenario::kMult: return "MULT";
    case Scenario::kRigid: return "RIGID";
    case Scenario::kXor: return "XOR";
  }
  return "?";
}

std::string_view to_string(Background b) { return b == Background::kWhite ? "WHITE" : "CORR"; }

Scenario parse_scenario(std::string_view s) {
  if (s == "LIN") return Scenario::kLin;
  if (s == "MULT") return Scenario::kMult;
  if (s == "RIGID") return Scenario::kRigid;
  if (s == "XOR") return Scenario::kXor;
  throw std::invalid_argument("unknown scenario: " + std::string(s));
}

Background parse_background(std::string_view s) {
  if (s == "WHITE") return Background::kWhite;
  if (s == "CORR") return Background::kCorr;
  throw std::invalid_argument("unknown background: " + std::string(s));
}

void ScenarioConfig::validate() const {
  if (n_samples == 0) throw std::invalid_argument("n_samples must be positive");
  if (height == 0 || width == 0) throw std::invalid_argument("image dimensions must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (background == Background::kCorr && !(smooth_sigma > 0.0))
    throw std::invalid_argument("smooth_sigma must be positive for CORR backgrounds");
  if (split.train < 0 || split.val < 0 || split.test < 0 ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be nonnegative and sum to 1");
}

std::vector<Anchor> tetromino_cells(TetrominoKind kind, int quarter_turns) {
  std::vector<Anchor> cells = kind == TetrominoKind::kT
                                  ? std::vector<Anchor>{{0, 0}, {0, 1}, {0, 2}, {1, 1}}
                                  : std::vector<Anchor>{{0, 0}, {1, 0}, {2, 0}, {2, 1}};
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t)
    for (auto& c : cells) c = {c.col, -c.row};
  int min_r = cells[0].row, min_c = cells[0].col;
  for (const auto& c : cells) {
    min_r = std::min(min_r, c.row);
    min_c = std::min(min_c, c.col);
  }
  for (auto& c : cells) {
    c.row -= min_r;
    c.col -= min_c;
  }
  return cells;
}

Image make_tetromino(TetrominoKind kind, Anchor anchor, int rotation_degrees, std::size_t height,
                     std::size_t width) {
  if (rotation_degrees % 90 != 0)
    throw std::invalid_argument("rotation must be a multiple of 90 degrees");
  Image img(height, width, 0.0);
  for (const auto& c : tetromino_cells(kind, rotation_degrees / 90)) {
    const int r = anchor.row + c.row;
    const int col = anchor.col + c.col;
    if (r < 0 || col < 0 || r >= static_cast<int>(height) || col >= static_cast<int>(width))
      throw PlacementError("tetromino does not fit inside the image");
    img.at(r, col) = 1.0;
  }
  return img;
}

Anchor fixed_anchor(TetrominoKind kind, std::size_t height, std::size_t width) {
  const int h = static_cast<int>(height);
  const int w = static_cast<int>(width);
  if (kind == TetrominoKind::kT) return {1, 1};
  // L's 3x2 bounding box ends at (h - 2, w - 2).
  return {h - 4, w - 3};
}

Image gaussian_smooth(const Image& in, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_smooth: sigma must be positive");
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    sum += kernel[k + radius];
  }
  for (double& v : kernel) v /= sum;

  const std::size_t h = in.height, w = in.width;
  Image tmp(h, w, 0.0), out(h, w, 0.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * in.at(r, reflect_index(static_cast<long>(c) + k, w));
      tmp.at(r, c) = acc;
    }
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * tmp.at(reflect_index(static_cast<long>(r) + k, h), c);
      out.at(r, c) = acc;
    }
  return out;
}

Image make_background(const ScenarioConfig& config, Rng& rng) {
  Image img(config.height, config.width, 0.0);
  for (double& v : img.values) v = rng.normal();
  if (config.background == Background::kCorr) return gaussian_smooth(img, config.smooth_sigma);
  return img;
}

double frobenius_normalize(std::vector<Image>& batch) {
  double ss = 0.0;
  for (const auto& img : batch)
    for (double v : img.values) ss += v * v;
  const double norm = std::sqrt(ss);
  if (norm > 0.0)
    for (auto& img : batch)
      for (double& v : img.values) v /= norm;
  return norm;
}

std::vector<Image> compose_additive(const std::vector<Image>& signal,
                                    const std::vector<Image>& noise, double alpha) {
  check_batches(signal, noise);
  std::vector<Image> out;
  out.reserve(signal.size());
  for (std::size_t n = 0; n < signal.size(); ++n) {
    Image x(signal[n].height, signal[n].width, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = alpha * signal[n][i] + (1.0 - alpha) * noise[n][i];
    scale_max_abs(x);
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Image> compose_multiplicative(const std::vector<Image>& signal,
                                          const std::vector<Image>& noise, double alpha) {
  check_batches(signal, noise);
  std::vector<Image> out;
  out.reserve(signal.size());
  for (std::size_t n = 0; n < signal.size(); ++n) {
    Image x(signal[n].height, signal[n].width, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = (1.0 - alpha * signal[n][i]) * noise[n][i];
    scale_max_abs(x);
    out.push_back(std::move(x));
  }
  return out;
}

Mask ground_truth_mask(Scenario scenario, const Image& signal_component) {
  Mask mask(signal_component.height, signal_component.width, 0);
  if (scenario == Scenario::kLin || scenario == Scenario::kMult) {
    const auto h = signal_component.height, w = signal_component.width;
    const Image t = make_tetromino(TetrominoKind::kT, fixed_anchor(TetrominoKind::kT, h, w), 0, h, w);
    const Image l = make_tetromino(TetrominoKind::kL, fixed_anchor(TetrominoKind::kL, h, w), 0, h, w);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (t[i] != 0.0 || l[i] != 0.0) ? 1 : 0;
    return mask;
  }
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = signal_component[i] != 0.0 ? 1 : 0;
  return mask;
}

SplitIndices make_split(std::size_t n, const Split& split) {
  const auto n_train = static_cast<std::size_t>(std::floor(split.train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(split.val * static_cast<double>(n) + 1e-9));
  SplitIndices s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) s.train.push_back(i);
    else if (i < n_train + n_val) s.val.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

Dataset generate_dataset(const ScenarioConfig& config) {
  config.validate();
  const std::size_t n = config.n_samples, h = config.height, w = config.width;

  const auto t_fixed = make_tetromino(TetrominoKind::kT, fixed_anchor(TetrominoKind::kT, h, w), 0, h, w);
  const auto l_fixed = make_tetromino(TetrominoKind::kL, fixed_anchor(TetrominoKind::kL, h, w), 0, h, w);

  Dataset ds;
  ds.config = config;
  ds.samples.resize(n);
  std::vector<Image> signal(n), noise(n);

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(config.seed, i);
    Sample& s = ds.samples[i];
    s.label = rng.bernoulli(0.5) ? 1 : 0;

    switch (config.scenario) {
      case Scenario::kLin:
      case Scenario::kMult:
        s.pattern_id = s.label;
        s.signal_component = s.label == 0 ? t_fixed : l_fixed;
        break;
      case Scenario::kXor: {
        const bool flip = rng.bernoulli(0.5);
        const double sign = flip ? -1.0 : 1.0;
        // Class 0: same-sign pair; class 1: opposite signs.
        s.signal_component = add_into(t_fixed, l_fixed, s.label == 0 ? 1.0 : -1.0);
        for (double& v : s.signal_component.values) v *= sign;
        s.pattern_id = 2 * s.label + (flip ? 1 : 0);
        break;
      }
      case Scenario::kRigid: {
        const auto kind = s.label == 0 ? TetrominoKind::kT : TetrominoKind::kL;
        const int turns = static_cast<int>(rng.below(4));
        const auto cells = tetromino_cells(kind, turns);
        int extent_r = 0, extent_c = 0;
        for (const auto& c : cells) {
          extent_r = std::max(extent_r, c.row);
          extent_c = std::max(extent_c, c.col);
        }
        const auto rows = static_cast<std::uint64_t>(h - extent_r);
        const auto cols = static_cast<std::uint64_t>(w - extent_c);
        const Anchor anchor{static_cast<int>(rng.below(rows)), static_cast<int>(rng.below(cols))};
        s.signal_component = make_tetromino(kind, anchor, 90 * turns, h, w);
        s.pattern_id = 4 * (s.label) + turns;
        break;
      }
    }
    s.gt_mask = ground_truth_mask(config.scenario, s.signal_component);
    signal[i] = s.signal_component;
    noise[i] = make_background(config, rng);
  }

  if (config.scenario != Scenario::kMult) frobenius_normalize(signal);
  frobenius_normalize(noise);
  auto pixels = config.scenario == Scenario::kMult
                    ? compose_multiplicative(signal, noise, config.alpha)
                    : compose_additive(signal, noise, config.alpha);
  for (std::size_t i = 0; i < n; ++i) ds.samples[i].pixels = std::move(pixels[i]);
  ds.split = make_split(n, config.split);
  return ds;
}

linalg::Matrix pixel_matrix(const Dataset& ds, const std::vector<std::size_t>& indices) {
  const std::size_t d = ds.dim();
  linalg::Matrix m(indices.size(), d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& px = ds.samples.at(indices[r]).pixels.values;
    std::copy(px.begin(), px.end(), m.row(r).begin());
  }
  return m;
}

std::vector<int> labels(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<int> y;
  y.reserve(indices.size());
  for (auto i : indices) y.push_back(ds.samples.at(i).label);
  return y;
}

namespace {

json config_to_json(const ScenarioConfig& c) {
  return json{{"scenario", to_string(c.scenario)},
              {"background", to_string(c.background)},
              {"n_samples", c.n_samples},
              {"height", c.height},
              {"width", c.width},
              {"alpha", c.alpha},
              {"smooth_sigma", c.smooth_sigma},
              {"seed", c.seed},
              {"split", {c.split.train, c.split.val, c.split.test}}};
}

ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig c;
  c.scenario = parse_scenario(j.at("scenario").get<std::string>());
  c.background = parse_background(j.at("background").get<std::string>());
  c.n_samples = j.at("n_samples").get<std::size_t>();
  c.height = j.at("height").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.smooth_sigma = j.at("smooth_sigma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& sp = j.at("split");
  c.split = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
  return c;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& stem) {
  const std::size_t n = ds.samples.size(), d = ds.dim();
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";

  json manifest{{"format", "wbench-dataset"},
                {"format_version", kFormatVersion},
                {"config", config_to_json(ds.config)},
                {"N", n},
                {"H", ds.config.height},
                {"W", ds.config.width},
                {"payload", bin_path.filename().string()},
                {"offsets",
                 {{"pixels", 0}, {"labels", n * d * 8}, {"masks", n * d * 8 + n}}},
                {"payload_bytes", n * d * 8 + n + n * d}};
  io::write_text(json_path, manifest.dump(2) + "\n");

  std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
  if (!out) throw io::FormatError("cannot write " + bin_path.string());
  for (const auto& s : ds.samples) io::write_f64_le(out, s.pixels.values);
  std::vector<std::uint8_t> lab(n);
  for (std::size_t i = 0; i < n; ++i) lab[i] = static_cast<std::uint8_t>(ds.samples[i].label);
  io::write_u8(out, lab);
  for (const auto& s : ds.samples) io::write_u8(out, s.gt_mask.values);
}

Dataset load_dataset(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  const json manifest = json::parse(io::read_text(json_path));
  if (manifest.value("format", "") != "wbench-dataset" ||
      manifest.value("format_version", 0) != kFormatVersion)
    throw io::FormatError("unsupported dataset manifest: " + json_path.string());

  Dataset ds;
  ds.config = config_from_json(manifest.at("config"));
  const std::size_t n = manifest.at("N").get<std::size_t>();
  const std::size_t h = manifest.at("H").get<std::size_t>();
  const std::size_t w = manifest.at("W").get<std::size_t>();
  const std::size_t d = h * w;

  std::ifstream in(stem.parent_path() / manifest.at("payload").get<std::string>(), std::ios::binary);
  if (!in) throw io::FormatError("cannot open dataset payload for " + stem.string());
  ds.samples.resize(n);
  for (auto& s : ds.samples) s.pixels = Image(h, w, io::read_f64_le(in, d));
  const auto lab = io::read_u8(in, n);
  for (std::size_t i = 0; i < n; ++i) ds.samples[i].label = lab[i];
  for (auto& s : ds.samples) s.gt_mask = Mask(h, w, io::read_u8(in, d));
  for (auto& s : ds.samples) s.signal_component = Image(h, w, 0.0);
  ds.split = make_split(n, ds.config.split);
  return ds;
}

}  // namespace wbench::datagen
