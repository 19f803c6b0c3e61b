#pragma once

#include <vector>

#include "wbench/datagen.hpp"
#include "wbench/models.hpp"
#include "wbench/rng.hpp"

namespace wbench::testing {

inline models::TrainData split_data(const datagen::Dataset& ds) {
  models::TrainData d;
  d.x_train = datagen::pixel_matrix(ds, ds.split.train);
  d.y_train = datagen::labels(ds, ds.split.train);
  d.x_val = datagen::pixel_matrix(ds, ds.split.val);
  d.y_val = datagen::labels(ds, ds.split.val);
  d.x_test = datagen::pixel_matrix(ds, ds.split.test);
  d.y_test = datagen::labels(ds, ds.split.test);
  return d;
}

inline std::vector<double> random_input(Rng& rng, std::size_t n = 64) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

inline models::Layer dense(std::size_t in, std::size_t out, std::vector<double> w,
                           std::vector<double> b) {
  models::Layer l;
  l.kind = models::LayerKind::kDense;
  l.in = {in, 1, 1};
  l.out = {out, 1, 1};
  l.weights = std::move(w);
  l.bias = std::move(b);
  return l;
}

inline models::Layer simple(models::LayerKind kind, std::size_t n) {
  models::Layer l;
  l.kind = kind;
  l.in = l.out = {n, 1, 1};
  return l;
}

}  // namespace wbench::testing
