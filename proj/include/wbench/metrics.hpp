#pragma once

// Explanation-correctness scores against ground-truth masks: top-k precision
// and a normalized earth mover's distance computed with an exact
// transportation solver.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wbench/image.hpp"
#include "wbench/linalg.hpp"

namespace wbench::metrics {

// Fraction of ground-truth pixels among the k largest |attr| (ties go to the
// lower pixel index). k = 0 selects k = |mask|.
double precision_at_k(std::span<const double> attr, const Mask& mask, std::size_t k = 0);

struct TransportResult {
  linalg::Matrix plan;
  double cost = 0.0;
  std::size_t pivots = 0;
};

// Exact balanced transportation problem min <plan, cost> subject to
// plan 1 = supply, plan^T 1 = demand, plan >= 0 (transportation simplex).
TransportResult solve_transport(std::span<const double> supply, std::span<const double> demand,
                                const linalg::Matrix& cost);

// Euclidean distances between pixel centres of two index lists on a W-wide grid.
linalg::Matrix pixel_distances(std::span<const std::size_t> from, std::span<const std::size_t> to,
                               std::size_t width);

// EMD between two mass distributions on the same H x W grid.
double emd(std::span<const double> p, std::span<const double> q, std::size_t height,
           std::size_t width);

// 1 - EMD(|attr| / sum |attr|, uniform on mask) / sqrt((H-1)^2 + (W-1)^2).
// An all-zero attribution is scored as the uniform distribution, with a warning.
double emd_score(std::span<const double> attr, const Mask& mask);

struct MetricsKey {
  std::string scenario;
  std::string background;
  std::string whitening;
  std::string model;
  std::string method;
  std::size_t sample_id = 0;

  friend bool operator==(const MetricsKey&, const MetricsKey&) = default;
};

struct MetricsRecord {
  MetricsKey key;
  double precision = 0.0;
  double emd_score = 0.0;
};

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

// Box-plot statistics; quartiles use linear interpolation between order
// statistics.
struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

Summary summarize(std::vector<double> values);

struct AggregateRow {
  MetricsKey group;  // sample_id unused
  Summary precision;
  Summary emd_score;
};

// Groups records by everything except the sample id, in first-seen order.
std::vector<AggregateRow> aggregate(const std::vector<MetricsRecord>& records);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);

}  // namespace wbench::metrics
