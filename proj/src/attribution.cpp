#include "wbench/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "wbench/io.hpp"
#include "wbench/log.hpp"

namespace wbench::attribution {

using linalg::Matrix;
using models::Layer;
using models::LayerKind;
using models::Model;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

struct MethodName {
  Method method;
  std::string_view name;
};

constexpr MethodName kNames[] = {
    {Method::kSaliency, "Saliency"},
    {Method::kIntegratedGradients, "IntegratedGradients"},
    {Method::kGradientShap, "GradientSHAP"},
    {Method::kLrpEpsilon, "LRP"},
    {Method::kLime, "LIME"},
    {Method::kShapleySampling, "ShapleySampling"},
    {Method::kGuidedBackprop, "GuidedBackprop"},
    {Method::kDeconvolution, "Deconvolution"},
    {Method::kPfi, "PFI"},
    {Method::kSobel, "Sobel"},
    {Method::kLaplace, "Laplace"},
    {Method::kRandom, "Random"},
    {Method::kRectifiedInput, "RectifiedInput"},
};

double stabilize(double z, double eps) { return z + (z >= 0.0 ? eps : -eps); }

std::size_t reflect_index(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

Image correlate3(const Image& x, const double (&k)[3][3]) {
  Image out(x.height, x.width, 0.0);
  for (std::size_t r = 0; r < x.height; ++r)
    for (std::size_t c = 0; c < x.width; ++c) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          acc += k[dy + 1][dx + 1] * x.at(reflect_index(static_cast<long>(r) + dy, x.height),
                                          reflect_index(static_cast<long>(c) + dx, x.width));
      out.at(r, c) = acc;
    }
  return out;
}

// Transposed Dense/Conv2D product: input-space vector sum_j w_ji s_j.
std::vector<double> transpose_apply(const Layer& l, const std::vector<double>& s) {
  std::vector<double> g(l.in.size(), 0.0);
  if (l.kind == LayerKind::kDense) {
    const std::size_t n_in = l.in.size();
    for (std::size_t o = 0; o < l.out.size(); ++o) {
      const double* w = l.weights.data() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) g[i] += w[i] * s[o];
    }
    return g;
  }
  const std::size_t c_in = l.in.channels, h = l.in.height, w = l.in.width, k = l.kernel;
  const long pad = static_cast<long>((k - 1) / 2);
  for (std::size_t f = 0; f < l.filters; ++f) {
    const double* so = s.data() + f * h * w;
    for (std::size_t c = 0; c < c_in; ++c) {
      double* gi = g.data() + c * h * w;
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wt = l.weights[((f * c_in + c) * k + ky) * k + kx];
          for (std::size_t r = 0; r < h; ++r) {
            const long rr = static_cast<long>(r + ky) - pad;
            if (rr < 0 || rr >= static_cast<long>(h)) continue;
            for (std::size_t col = 0; col < w; ++col) {
              const long cc = static_cast<long>(col + kx) - pad;
              if (cc < 0 || cc >= static_cast<long>(w)) continue;
              gi[rr * w + cc] += wt * so[r * w + col];
            }
          }
        }
    }
  }
  return g;
}

void check_counts(const MethodConfig& c) {
  if (c.ig_steps < 1 || c.shap_samples < 1 || c.lime_samples < 1 || c.shapley_permutations < 1 ||
      c.pfi_repeats < 1)
    throw std::invalid_argument("attribution sample counts must be at least 1");
  if (!(c.lrp_epsilon > 0.0)) throw std::invalid_argument("lrp_epsilon must be positive");
  if (!(c.noise_std >= 0.0)) throw std::invalid_argument("noise_std must be non-negative");
  if (!(c.lime_kernel_width >= 0.0) || !(c.lime_ridge > 0.0))
    throw std::invalid_argument("LIME kernel width and ridge must be positive");
}

// Running mean and standard error per feature.
struct Accumulator {
  std::vector<double> sum, sum_sq;
  std::size_t n = 0;

  explicit Accumulator(std::size_t d) : sum(d, 0.0), sum_sq(d, 0.0) {}

  Attribution result() const {
    Attribution a;
    a.values.resize(sum.size());
    a.std_error.assign(sum.size(), 0.0);
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      a.values[i] = sum[i] / nn;
      if (n > 1) {
        const double var = std::max(0.0, (sum_sq[i] - nn * a.values[i] * a.values[i]) / (nn - 1.0));
        a.std_error[i] = std::sqrt(var / nn);
      }
    }
    return a;
  }
};

Image as_image(const Model& model, std::span<const double> x) {
  const auto& s = model.input_shape();
  if (s.channels != 1) throw models::ShapeError("baseline maps need single-channel inputs");
  if (x.size() != s.size()) throw models::ShapeError("input size does not match the model");
  return Image(s.height, s.width, std::vector<double>(x.begin(), x.end()));
}

}  // namespace

std::string_view to_string(Method m) {
  for (const auto& n : kNames)
    if (n.method == m) return n.name;
  return "?";
}

Method parse_method(std::string_view s) {
  for (const auto& n : kNames)
    if (n.name == s) return n.method;
  throw std::invalid_argument("unknown attribution method: " + std::string(s));
}

bool is_baseline(Method m) {
  return m == Method::kSobel || m == Method::kLaplace || m == Method::kRandom ||
         m == Method::kRectifiedInput;
}

bool is_global(Method m) { return m == Method::kPfi; }

void MethodConfig::validate() const { check_counts(*this); }

std::vector<double> saliency(const Model& model, std::span<const double> x) {
  return model.grad_input(x);
}

std::vector<double> integrated_gradients(const Model& model, std::span<const double> x,
                                         std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("ig_steps must be at least 1");
  const std::size_t d = x.size();
  std::vector<double> avg(d, 0.0), point(d);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double alpha = static_cast<double>(k) / static_cast<double>(steps);
    const double weight = (k == 0 || k == steps ? 0.5 : 1.0) / static_cast<double>(steps);
    for (std::size_t i = 0; i < d; ++i) point[i] = alpha * x[i];
    const auto g = model.grad_input(point);
    for (std::size_t i = 0; i < d; ++i) avg[i] += weight * g[i];
  }
  for (std::size_t i = 0; i < d; ++i) avg[i] *= x[i];
  return avg;
}

Attribution gradient_shap(const Model& model, std::span<const double> x, std::size_t samples,
                          double noise_std, Rng& rng) {
  if (samples < 1) throw std::invalid_argument("shap_samples must be at least 1");
  const std::size_t d = x.size();
  Accumulator acc(d);
  std::vector<double> base(d), point(d);
  for (std::size_t s = 0; s < samples; ++s) {
    for (double& b : base) b = noise_std * rng.normal();
    const double u = rng.uniform();
    for (std::size_t i = 0; i < d; ++i) point[i] = base[i] + u * (x[i] - base[i]);
    const auto g = model.grad_input(point);
    for (std::size_t i = 0; i < d; ++i) {
      const double v = g[i] * (x[i] - base[i]);
      acc.sum[i] += v;
      acc.sum_sq[i] += v * v;
    }
    ++acc.n;
  }
  return acc.result();
}

double lrp_output(const Model& model, std::span<const double> x, LrpTarget target) {
  const auto z = model.logits(x);
  if (target == LrpTarget::kMargin) return z[1] - z[0];
  return z[model.predict(x)];
}

std::vector<double> lrp_epsilon(const Model& model, std::span<const double> x, double epsilon,
                                LrpTarget target) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("lrp_epsilon must be positive");
  const auto& layers = model.layers();
  const std::size_t top = model.softmax_index();
  if (top == 0 || layers[top - 1].kind != LayerKind::kDense)
    throw std::invalid_argument("LRP needs a Dense layer below the softmax");

  models::Trace trace;
  model.forward(x, trace);

  // Output unit: collapsed margin row or the predicted-class row.
  const Layer& head = layers[top - 1];
  const std::size_t n_in = head.in.size();
  std::vector<double> w(n_in);
  double b = 0.0;
  if (target == LrpTarget::kMargin) {
    for (std::size_t i = 0; i < n_in; ++i) w[i] = head.weights[n_in + i] - head.weights[i];
    b = head.bias[1] - head.bias[0];
  } else {
    const auto& logits = trace.values[top];
    const std::size_t c = logits[1] > logits[0] ? 1 : 0;
    std::copy_n(head.weights.begin() + static_cast<long>(c * n_in), n_in, w.begin());
    b = head.bias[c];
  }
  const auto& a_top = trace.values[top - 1];
  double z = b;
  for (std::size_t i = 0; i < n_in; ++i) z += w[i] * a_top[i];
  const double scale = z / stabilize(z, epsilon);
  std::vector<double> rel(n_in);
  for (std::size_t i = 0; i < n_in; ++i) rel[i] = a_top[i] * w[i] * scale;

  for (std::size_t li = top - 1; li-- > 0;) {
    const Layer& l = layers[li];
    const auto& a = trace.values[li];
    switch (l.kind) {
      case LayerKind::kDense:
      case LayerKind::kConv2D: {
        const auto& out = trace.values[li + 1];
        std::vector<double> s(out.size());
        for (std::size_t j = 0; j < out.size(); ++j) s[j] = rel[j] / stabilize(out[j], epsilon);
        const auto c = transpose_apply(l, s);
        rel.assign(a.size(), 0.0);
        for (std::size_t i = 0; i < a.size(); ++i) rel[i] = a[i] * c[i];
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kFlatten:
        break;
      case LayerKind::kMaxPool2D: {
        std::vector<double> r(a.size(), 0.0);
        const auto& arg = trace.argmax[li];
        for (std::size_t o = 0; o < rel.size(); ++o) r[arg[o]] += rel[o];
        rel = std::move(r);
        break;
      }
      default:
        throw std::invalid_argument("LRP does not support layer " +
                                    std::string(models::to_string(l.kind)));
    }
  }
  return rel;
}

std::vector<double> lime(const Model& model, std::span<const double> x, std::size_t samples,
                         double kernel_width, double ridge, Rng& rng) {
  if (samples < 1) throw std::invalid_argument("lime_samples must be at least 1");
  const std::size_t d = x.size();
  const double width = kernel_width > 0.0 ? kernel_width : 0.25 * std::sqrt(static_cast<double>(d));

  Matrix z(samples, d, 1.0);
  std::vector<double> y(samples), wt(samples);
  std::vector<double> masked(d);
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t off = 0;
    if (s > 0)
      for (std::size_t i = 0; i < d; ++i) {
        const bool keep = rng.bernoulli(0.5);
        z(s, i) = keep ? 1.0 : 0.0;
        off += keep ? 0 : 1;
      }
    for (std::size_t i = 0; i < d; ++i) masked[i] = x[i] * z(s, i);
    y[s] = model.margin(masked);
    wt[s] = std::exp(-static_cast<double>(off) / (width * width));
  }

  double wsum = 0.0, ybar = 0.0;
  std::vector<double> zbar(d, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    wsum += wt[s];
    ybar += wt[s] * y[s];
    for (std::size_t i = 0; i < d; ++i) zbar[i] += wt[s] * z(s, i);
  }
  ybar /= wsum;
  for (double& v : zbar) v /= wsum;

  Matrix gram(d, d, 0.0);
  std::vector<double> rhs(d, 0.0), zc(d);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < d; ++i) zc[i] = z(s, i) - zbar[i];
    const double yc = y[s] - ybar;
    for (std::size_t i = 0; i < d; ++i) {
      const double wi = wt[s] * zc[i];
      rhs[i] += wi * yc;
      for (std::size_t j = 0; j <= i; ++j) gram(i, j) += wi * zc[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) gram(j, i) = gram(i, j);

  double lambda = ridge;
  for (int attempt = 0;; ++attempt) {
    Matrix a = gram;
    for (std::size_t i = 0; i < d; ++i) a(i, i) += lambda;
    try {
      auto coef = linalg::solve_spd(linalg::SymMatrix(a), rhs);
      if (std::all_of(coef.begin(), coef.end(), [](double v) { return std::isfinite(v); }))
        return coef;
    } catch (const linalg::LinalgError&) {
    }
    if (attempt >= 12) throw std::runtime_error("LIME ridge system stayed singular");
    lambda *= 10.0;
    log::warn("LIME ridge system singular; increasing regularizer to " + std::to_string(lambda));
  }
}

Attribution shapley_sampling(const Model& model, std::span<const double> x,
                             std::size_t permutations, Rng& rng) {
  if (permutations < 1) throw std::invalid_argument("shapley_permutations must be at least 1");
  const std::size_t d = x.size();
  Accumulator acc(d);
  std::vector<std::size_t> order(d);
  std::vector<double> cur(d);
  const double f0 = model.margin(std::vector<double>(d, 0.0));
  for (std::size_t p = 0; p < permutations; ++p) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    std::fill(cur.begin(), cur.end(), 0.0);
    double prev = f0;
    for (std::size_t idx : order) {
      cur[idx] = x[idx];
      const double f = model.margin(cur);
      const double v = f - prev;
      acc.sum[idx] += v;
      acc.sum_sq[idx] += v * v;
      prev = f;
    }
    ++acc.n;
  }
  return acc.result();
}

std::vector<double> permutation_feature_importance(const Model& model, const Matrix& x,
                                                   const std::vector<int>& y, std::size_t repeats,
                                                   std::uint64_t seed) {
  if (x.rows() < 2) throw std::invalid_argument("PFI needs at least two test samples");
  if (y.size() != x.rows()) throw std::invalid_argument("PFI label count does not match samples");
  if (repeats < 1) throw std::invalid_argument("pfi_repeats must be at least 1");
  const double base = models::accuracy(model, x, y);
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> importance(d, 0.0);
  Matrix work = x;
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < d; ++j) {
    double drop = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      Rng rng(seed, j, r);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(perm.begin(), perm.end());
      for (std::size_t i = 0; i < n; ++i) work(i, j) = x(perm[i], j);
      drop += base - models::accuracy(model, work, y);
    }
    for (std::size_t i = 0; i < n; ++i) work(i, j) = x(i, j);
    importance[j] = drop / static_cast<double>(repeats);
  }
  return importance;
}

Image sobel(const Image& x) {
  static constexpr double gx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static constexpr double gy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  const Image a = correlate3(x, gx), b = correlate3(x, gy);
  Image out(x.height, x.width, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(a[i], b[i]);
  return out;
}

Image laplace(const Image& x) {
  static constexpr double k[3][3] = {{0, -1, 0}, {-1, 4, -1}, {0, -1, 0}};
  return correlate3(x, k);
}

Image random_uniform(std::size_t height, std::size_t width, Rng& rng) {
  Image out(height, width, 0.0);
  for (double& v : out.values) v = rng.uniform();
  return out;
}

Image rectified(const Image& x, bool relu) {
  Image out = x;
  for (double& v : out.values) v = relu ? std::max(v, 0.0) : std::abs(v);
  return out;
}

Attribution explain(Method method, const Model& model, std::span<const double> x,
                    const MethodConfig& config, std::uint64_t sample_id) {
  config.validate();
  Rng rng(config.seed, sample_id, static_cast<std::uint64_t>(method));
  switch (method) {
    case Method::kSaliency: return {saliency(model, x), {}};
    case Method::kIntegratedGradients: return {integrated_gradients(model, x, config.ig_steps), {}};
    case Method::kGradientShap:
      return gradient_shap(model, x, config.shap_samples, config.noise_std, rng);
    case Method::kLrpEpsilon:
      return {lrp_epsilon(model, x, config.lrp_epsilon, config.lrp_target), {}};
    case Method::kLime:
      return {lime(model, x, config.lime_samples, config.lime_kernel_width, config.lime_ridge, rng),
              {}};
    case Method::kShapleySampling:
      return shapley_sampling(model, x, config.shapley_permutations, rng);
    case Method::kGuidedBackprop:
      return {model.grad_input(x, models::kMarginSeed, models::ReluRule::kGuidedBackprop), {}};
    case Method::kDeconvolution:
      return {model.grad_input(x, models::kMarginSeed, models::ReluRule::kDeconv), {}};
    case Method::kSobel: return {sobel(as_image(model, x)).values, {}};
    case Method::kLaplace: return {laplace(as_image(model, x)).values, {}};
    case Method::kRandom: {
      const auto& s = model.input_shape();
      return {random_uniform(s.height, s.width, rng).values, {}};
    }
    case Method::kRectifiedInput:
      return {rectified(as_image(model, x), config.rectify_relu).values, {}};
    case Method::kPfi: break;
  }
  throw std::invalid_argument("PFI is a global method; use permutation_feature_importance");
}

void save_batch(const AttributionBatch& batch, const std::filesystem::path& stem) {
  const std::size_t d = batch.height * batch.width;
  if (batch.maps.size() != batch.sample_ids.size())
    throw std::invalid_argument("attribution batch: one sample id per map required");
  for (const auto& m : batch.maps)
    if (m.size() != d) throw std::invalid_argument("attribution batch: map size mismatch");
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";
  const json manifest{{"format", "wbench-attributions"},
                      {"format_version", kFormatVersion},
                      {"method", to_string(batch.method)},
                      {"model_tag", batch.model_tag},
                      {"height", batch.height},
                      {"width", batch.width},
                      {"count", batch.maps.size()},
                      {"sample_ids", batch.sample_ids},
                      {"payload", bin_path.filename().string()}};
  io::write_text(json_path, manifest.dump(2) + "\n");
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw io::FormatError("cannot write " + bin_path.string());
  for (const auto& m : batch.maps) io::write_f64_le(bin, m);
}

AttributionBatch load_batch(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  json manifest;
  try {
    manifest = json::parse(io::read_text(json_path));
  } catch (const json::exception& e) {
    throw io::FormatError(json_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "wbench-attributions" ||
      manifest.value("format_version", 0) != kFormatVersion)
    throw io::FormatError(json_path.string() + ": not an attribution batch");
  AttributionBatch b;
  b.method = parse_method(manifest.at("method").get<std::string>());
  b.model_tag = manifest.at("model_tag").get<std::string>();
  b.height = manifest.at("height").get<std::size_t>();
  b.width = manifest.at("width").get<std::size_t>();
  b.sample_ids = manifest.at("sample_ids").get<std::vector<std::size_t>>();
  const auto count = manifest.at("count").get<std::size_t>();
  if (b.sample_ids.size() != count) throw io::FormatError("attribution batch: id count mismatch");
  std::ifstream bin(stem.parent_path() / manifest.at("payload").get<std::string>(), std::ios::binary);
  if (!bin) throw io::FormatError("attribution batch: missing payload");
  for (std::size_t i = 0; i < count; ++i) b.maps.push_back(io::read_f64_le(bin, b.height * b.width));
  return b;
}

Image normalized_abs(const Image& map) {
  Image out = map;
  double mx = 0.0;
  for (double& v : out.values) mx = std::max(mx, v = std::abs(v));
  if (mx > 0.0)
    for (double& v : out.values) v /= mx;
  return out;
}

void write_heatmap_pgm(const Image& map, const std::filesystem::path& path) {
  const Image n = normalized_abs(map);
  std::string data = "P5\n" + std::to_string(n.width) + " " + std::to_string(n.height) + "\n65535\n";
  for (double v : n.values) {
    const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    data.push_back(static_cast<char>(q >> 8));
    data.push_back(static_cast<char>(q & 0xff));
  }
  io::write_text(path, data);
}

void write_heatmap_csv(const Image& map, const std::filesystem::path& path) {
  const Image n = normalized_abs(map);
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t r = 0; r < n.height; ++r) {
    for (std::size_t c = 0; c < n.width; ++c) os << (c ? "," : "") << n.at(r, c);
    os << '\n';
  }
  io::write_text(path, os.str());
}

}  // namespace wbench::attribution
