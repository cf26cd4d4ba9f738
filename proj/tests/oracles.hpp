#pragma once

// Independent straight-line reference implementations used by the unit tests
// and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "igar/sink_detection.hpp"
#include "igar/tensor.hpp"

namespace oracle {

struct Sinks {
  std::vector<std::size_t> dims;
  std::set<std::size_t> sinks, visual, text;
};

inline Sinks brute_force_sinks(const igar::Matrix& h, const std::vector<igar::Modality>& labels, double gamma,
                               std::size_t k, double tau, double eps) {
  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t d = 0; d < h.cols(); ++d) {
    double mx = 0.0, total = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i) {
      mx = std::max(mx, std::abs(h(i, d)));
      total += std::abs(h(i, d));
    }
    const double phi = mx / (total / static_cast<double>(h.rows()) + eps);
    if (phi > gamma) candidates.push_back({phi, d});
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  Sinks out;
  for (std::size_t i = 0; i < candidates.size() && i < k; ++i) out.dims.push_back(candidates[i].second);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t d : out.dims) {
      if (std::abs(h(i, d)) > tau) {
        out.sinks.insert(i);
        if (labels[i] == igar::Modality::Visual) out.visual.insert(i);
        if (labels[i] == igar::Modality::Text) out.text.insert(i);
        break;
      }
    }
  }
  return out;
}

inline igar::Matrix random_hidden(std::size_t n, std::size_t d, igar::Rng& rng) {
  igar::Matrix h(n, d);
  for (double& v : h.data()) v = rng.normal(0.0, 2.0);
  // Plant a few spikes so that detection has something to find.
  const std::size_t spikes = rng.below(4);
  for (std::size_t s = 0; s < spikes; ++s) h(rng.below(n), rng.below(d)) = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(5, 60);
  return h;
}

inline std::vector<igar::Modality> random_labels(std::size_t n, igar::Rng& rng) {
  std::vector<igar::Modality> out(n);
  for (auto& m : out) m = static_cast<igar::Modality>(rng.below(4));
  return out;
}

}  // namespace oracle

namespace oracle {

/// Random probability row with some exact zeros.
inline std::vector<double> random_row(std::size_t n, igar::Rng& rng) {
  std::vector<double> row(n);
  double total = 0.0;
  for (double& v : row) {
    v = rng.uniform() < 0.15 ? 0.0 : rng.uniform();
    total += v;
  }
  if (total == 0.0) {
    row[0] = 1.0;
    return row;
  }
  for (double& v : row) v /= total;
  return row;
}

/// Disjoint sink / non-sink-text index sets drawn over [0, n).
inline std::pair<igar::IndexSet, igar::IndexSet> random_partition(std::size_t n, igar::Rng& rng) {
  igar::IndexSet sinks, text;
  for (std::size_t j = 0; j < n; ++j) {
    const double u = rng.uniform();
    if (u < 0.25) sinks.push_back(j);
    else if (u < 0.65) text.push_back(j);
  }
  return {sinks, text};
}

}  // namespace oracle
