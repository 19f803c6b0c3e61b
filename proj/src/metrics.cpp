#include "wbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wbench/io.hpp"
#include "wbench/log.hpp"

namespace wbench::metrics {

using linalg::Matrix;

namespace {

constexpr const char* kMetricsHeader = "scenario,background,whitening,model,method,sample_id,precision,emd_score";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Spanning-tree basis of the transportation simplex. Nodes 0..n-1 are
// supplies, n..n+m-1 demands; every basic cell is a tree edge.
class TransportTree {
 public:
  TransportTree(std::size_t n, std::size_t m) : n_(n), m_(m), basic_(n * m, 0), flow_(n * m, 0.0) {}

  void add(std::size_t i, std::size_t j, double x) {
    basic_[i * m_ + j] = 1;
    flow_[i * m_ + j] = x;
  }
  void remove(std::size_t i, std::size_t j) {
    basic_[i * m_ + j] = 0;
    flow_[i * m_ + j] = 0.0;
  }
  bool is_basic(std::size_t i, std::size_t j) const { return basic_[i * m_ + j] != 0; }
  double& flow(std::size_t i, std::size_t j) { return flow_[i * m_ + j]; }
  const std::vector<double>& flows() const { return flow_; }

  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(n_ + m_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < m_; ++j)
        if (is_basic(i, j)) {
          adj[i].push_back(n_ + j);
          adj[n_ + j].push_back(i);
        }
    return adj;
  }

  // Dual potentials with u_0 = 0 and u_i + v_j = c_ij on basic cells.
  void potentials(const Matrix& cost, std::vector<double>& u, std::vector<double>& v) const {
    const auto adj = adjacency();
    std::vector<double> pot(n_ + m_, 0.0);
    std::vector<char> seen(n_ + m_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b : adj[a]) {
        if (seen[b]) continue;
        seen[b] = 1;
        const double c = a < n_ ? cost(a, b - n_) : cost(b, a - n_);
        pot[b] = c - pot[a];
        stack.push_back(b);
      }
    }
    u.assign(pot.begin(), pot.begin() + static_cast<long>(n_));
    v.assign(pot.begin() + static_cast<long>(n_), pot.end());
  }

  // Tree path from supply node i to demand node j as a list of (row, col)
  // cells, starting at the cell touching column j.
  std::vector<std::pair<std::size_t, std::size_t>> path(std::size_t i, std::size_t j) const {
    const auto adj = adjacency();
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> parent(n_ + m_, kNone);
    std::vector<std::size_t> queue{i};
    parent[i] = i;
    for (std::size_t h = 0; h < queue.size(); ++h)
      for (std::size_t b : adj[queue[h]])
        if (parent[b] == kNone) {
          parent[b] = queue[h];
          queue.push_back(b);
        }
    if (parent[n_ + j] == kNone) throw std::logic_error("transportation basis is not a spanning tree");
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t node = n_ + j; node != i; node = parent[node]) {
      const std::size_t p = parent[node];
      cells.emplace_back(node < n_ ? node : p, node < n_ ? p - n_ : node - n_);
    }
    return cells;
  }

 private:
  std::size_t n_, m_;
  std::vector<char> basic_;
  std::vector<double> flow_;
};

}  // namespace

double precision_at_k(std::span<const double> attr, const Mask& mask, std::size_t k) {
  if (attr.size() != mask.size()) throw std::invalid_argument("attribution and mask sizes differ");
  const std::size_t positives = count_true(mask);
  if (positives == 0) throw std::invalid_argument("ground-truth mask is empty");
  if (k == 0) k = positives;
  if (k > attr.size()) throw std::invalid_argument("k exceeds the number of features");
  std::vector<std::size_t> idx(attr.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(attr[a]) > std::abs(attr[b]);
  });
  std::size_t hits = 0;
  for (std::size_t r = 0; r < k; ++r) hits += mask[idx[r]] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(positives);
}

TransportResult solve_transport(std::span<const double> supply, std::span<const double> demand,
                                const Matrix& cost) {
  const std::size_t n = supply.size(), m = demand.size();
  if (n == 0 || m == 0) throw std::invalid_argument("transport problem needs masses");
  if (cost.rows() != n || cost.cols() != m) throw std::invalid_argument("cost matrix shape mismatch");
  double sp = 0.0, sq = 0.0;
  for (double v : supply) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("supply masses must be finite and >= 0");
    sp += v;
  }
  for (double v : demand) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("demand masses must be finite and >= 0");
    sq += v;
  }
  if (std::abs(sp - sq) > 1e-12 * std::max(1.0, sp))
    throw std::invalid_argument("supply and demand totals differ");
  if (!cost.all_finite()) throw std::invalid_argument("transport costs must be finite");

  // North-west corner start: n + m - 1 basic cells forming a staircase tree.
  TransportTree tree(n, m);
  {
    std::vector<double> a(supply.begin(), supply.end()), b(demand.begin(), demand.end());
    std::size_t i = 0, j = 0;
    while (i < n && j < m) {
      const double x = (i == n - 1 && j == m - 1) ? std::max(a[i], 0.0) : std::min(a[i], b[j]);
      tree.add(i, j, x);
      a[i] -= x;
      b[j] -= x;
      if (i == n - 1) ++j;
      else if (j == m - 1) ++i;
      else if (a[i] <= b[j]) ++i;
      else ++j;
    }
  }

  const double tol = 1e-12 * std::max(1.0, cost.max_abs());
  std::size_t pivots = 0, degenerate_run = 0;
  const std::size_t pivot_limit = 50 * (n + m) * (n + m) + 1000;
  std::vector<double> u, v;
  for (;;) {
    tree.potentials(cost, u, v);
    // Dantzig pricing; smallest-index (Bland) pricing after a long run of
    // degenerate pivots.
    const bool bland = degenerate_run > n + m;
    double best = -tol;
    std::size_t ei = n, ej = m;
    for (std::size_t i = 0; i < n && !(bland && ei < n); ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (tree.is_basic(i, j)) continue;
        const double r = cost(i, j) - u[i] - v[j];
        if (r < best) {
          best = r;
          ei = i;
          ej = j;
          if (bland) break;
        }
      }
    if (ei == n) break;
    if (++pivots > pivot_limit) throw std::runtime_error("transportation simplex did not converge");

    const auto cycle = tree.path(ei, ej);
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = cycle.size();
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const auto [r, c] = cycle[k];
      const double f = tree.flow(r, c);
      const bool better = f < theta || (f == theta && bland &&
                                        r * m + c < cycle[leave].first * m + cycle[leave].second);
      if (better) {
        theta = f;
        leave = k;
      }
    }
    degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
    tree.add(ei, ej, theta);
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      const auto [r, c] = cycle[k];
      tree.flow(r, c) += (k % 2 == 0 ? -theta : theta);
    }
    tree.remove(cycle[leave].first, cycle[leave].second);
  }

  TransportResult res;
  res.plan = Matrix(n, m, 0.0);
  res.pivots = pivots;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double f = std::max(tree.flows()[i * m + j], 0.0);
      res.plan(i, j) = f;
      res.cost += f * cost(i, j);
    }
  return res;
}

Matrix pixel_distances(std::span<const std::size_t> from, std::span<const std::size_t> to,
                       std::size_t width) {
  Matrix d(from.size(), to.size());
  for (std::size_t a = 0; a < from.size(); ++a)
    for (std::size_t b = 0; b < to.size(); ++b) {
      const double dr = static_cast<double>(from[a] / width) - static_cast<double>(to[b] / width);
      const double dc = static_cast<double>(from[a] % width) - static_cast<double>(to[b] % width);
      d(a, b) = std::hypot(dr, dc);
    }
  return d;
}

double emd(std::span<const double> p, std::span<const double> q, std::size_t height,
           std::size_t width) {
  if (p.size() != height * width || q.size() != p.size())
    throw std::invalid_argument("distribution sizes do not match the grid");
  std::vector<std::size_t> src, dst;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      src.push_back(i);
      a.push_back(p[i]);
    }
    if (q[i] > 0.0) {
      dst.push_back(i);
      b.push_back(q[i]);
    }
  }
  if (src.empty() || dst.empty()) throw std::invalid_argument("EMD needs nonzero mass on both sides");
  return solve_transport(a, b, pixel_distances(src, dst, width)).cost;
}

double emd_score(std::span<const double> attr, const Mask& mask) {
  if (attr.size() != mask.size()) throw std::invalid_argument("attribution and mask sizes differ");
  const std::size_t positives = count_true(mask);
  if (positives == 0) throw std::invalid_argument("ground-truth mask is empty");
  std::vector<double> p(attr.size());
  double total = 0.0;
  for (std::size_t i = 0; i < attr.size(); ++i) {
    if (!std::isfinite(attr[i])) throw std::invalid_argument("attribution has non-finite values");
    total += p[i] = std::abs(attr[i]);
  }
  if (total > 0.0) {
    for (double& v : p) v /= total;
  } else {
    log::warn("all-zero attribution scored as a uniform distribution");
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
  }
  std::vector<double> q(attr.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i)
    if (mask[i]) q[i] = 1.0 / static_cast<double>(positives);
  const double h = static_cast<double>(mask.height) - 1.0, w = static_cast<double>(mask.width) - 1.0;
  const double d_max = std::hypot(h, w);
  if (d_max == 0.0) return 1.0;
  const double score = 1.0 - emd(p, q, mask.height, mask.width) / d_max;
  return std::clamp(score, 0.0, 1.0);
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path) {
  std::ostringstream os;
  os << kMetricsHeader << '\n' << std::setprecision(17);
  for (const auto& r : records)
    os << r.key.scenario << ',' << r.key.background << ',' << r.key.whitening << ',' << r.key.model
       << ',' << r.key.method << ',' << r.key.sample_id << ',' << r.precision << ',' << r.emd_score
       << '\n';
  io::write_text(path, os.str());
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::istringstream is(io::read_text(path));
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader)
    throw io::FormatError(path.string() + ": unexpected metrics header");
  std::vector<MetricsRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 8) throw io::FormatError(path.string() + ": malformed row: " + line);
    MetricsRecord r;
    r.key = {cells[0], cells[1], cells[2], cells[3], cells[4], std::stoul(cells[5])};
    r.precision = std::stod(cells[6]);
    r.emd_score = std::stod(cells[7]);
    out.push_back(std::move(r));
  }
  return out;
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.median = quantile(values, 0.5);
  s.q1 = quantile(values, 0.25);
  s.q3 = quantile(values, 0.75);
  s.min = values.front();
  s.max = values.back();
  return s;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricsRecord>& records) {
  std::vector<MetricsKey> groups;
  std::vector<std::vector<double>> prec, emds;
  for (const auto& r : records) {
    MetricsKey g = r.key;
    g.sample_id = 0;
    auto it = std::find(groups.begin(), groups.end(), g);
    std::size_t gi = static_cast<std::size_t>(it - groups.begin());
    if (it == groups.end()) {
      groups.push_back(g);
      prec.emplace_back();
      emds.emplace_back();
    }
    prec[gi].push_back(r.precision);
    emds[gi].push_back(r.emd_score);
  }
  std::vector<AggregateRow> rows;
  for (std::size_t g = 0; g < groups.size(); ++g)
    rows.push_back({groups[g], summarize(prec[g]), summarize(emds[g])});
  return rows;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "scenario,background,whitening,model,method,count";
  for (const char* m : {"precision", "emd_score"})
    for (const char* s : {"mean", "median", "q1", "q3", "min", "max"}) os << ',' << m << '_' << s;
  os << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.group.scenario << ',' << r.group.background << ',' << r.group.whitening << ','
       << r.group.model << ',' << r.group.method << ',' << r.precision.count;
    for (const Summary* s : {&r.precision, &r.emd_score})
      os << ',' << s->mean << ',' << s->median << ',' << s->q1 << ',' << s->q3 << ',' << s->min << ','
         << s->max;
    os << '\n';
  }
  io::write_text(path, os.str());
}

}  // namespace wbench::metrics
