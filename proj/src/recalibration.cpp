#include "igar/recalibration.hpp"

#include <cmath>
#include <string>

#include "igar/errors.hpp"

namespace igar {

void RecalConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(rho)) throw InvalidInput("RecalConfig: rho must lie in [0,1]");
  if (!unit(alpha)) throw InvalidInput("RecalConfig: alpha must lie in [0,1]");
  if (!unit(p)) throw InvalidInput("RecalConfig: p must lie in [0,1]");
}

AttentionTensor::AttentionTensor(std::vector<Matrix> heads) : heads_(std::move(heads)) {
  if (heads_.empty()) throw InvalidInput("AttentionTensor: at least one head required");
  const std::size_t n = heads_.front().rows();
  for (const auto& h : heads_) {
    if (h.rows() != n || h.cols() != n) throw InvalidInput("AttentionTensor: heads must be NxN");
  }
}

void AttentionTensor::validate(double tolerance) const {
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const Matrix& m = heads_[h];
    for (std::size_t q = 0; q < m.rows(); ++q) {
      double total = 0.0;
      for (double v : m.row(q)) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw InvalidInput("AttentionTensor: negative or non-finite entry in head " +
                             std::to_string(h) + " row " + std::to_string(q));
        }
        total += v;
      }
      if (std::abs(total - 1.0) > tolerance) {
        throw InvalidInput("AttentionTensor: head " + std::to_string(h) + " row " +
                           std::to_string(q) + " sums to " + std::to_string(total));
      }
    }
  }
}

namespace {

double mass(std::span<const double> row, const IndexSet& set) {
  double acc = 0.0;
  for (std::size_t j : set) acc += row[j];
  return acc;
}

IndexSet set_union(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i] < b[j])) {
      out.push_back(a[i++]);
    } else if (i == a.size() || b[j] < a[i]) {
      out.push_back(b[j++]);
    } else {
      out.push_back(a[i]);
      ++i;
      ++j;
    }
  }
  return out;
}

IndexSet set_difference(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  for (std::size_t v : a)
    if (!contains(b, v)) out.push_back(v);
  return out;
}

}  // namespace

double visual_sink_fraction(std::span<const double> row, const IndexSet& visual_sinks,
                            const IndexSet& visual, double epsilon) {
  return mass(row, visual_sinks) / (mass(row, visual) + epsilon);
}

SelectionSet select_head_queries(const AttentionTensor& attention, const SinkReport& sinks,
                                 const ModalityMap& modality, const RecalConfig& cfg,
                                 double epsilon) {
  if (modality.size() != attention.seq_len()) {
    throw InvalidInput("select_head_queries: modality map does not match attention size");
  }
  SelectionSet selected;
  const IndexSet& visual = modality.visual();
  for (std::size_t h = 0; h < attention.num_heads(); ++h) {
    const Matrix& a = attention.head(h);
    for (std::size_t q = 0; q < a.rows(); ++q) {
      if (modality.label(q) == Modality::Visual) continue;
      auto row = a.row(q);
      // With no visual sinks the fraction is exactly 0, so c1 always holds.
      const bool c1 = visual_sink_fraction(row, sinks.visual_sinks, visual, epsilon) <= cfg.rho;
      const bool c2 = mass(row, visual) >= cfg.alpha;
      if (c1 && c2) selected.push_back({h, q});
    }
  }
  return selected;
}

double redistribution_budget(std::span<const double> row, const IndexSet& sinks, double p) {
  if (p < 0.0 || p > 1.0) throw InvalidInput("redistribution_budget: p must lie in [0,1]");
  return (1.0 - p) * mass(row, sinks);
}

RedistributedRow redistribute_row(std::span<const double> row, const IndexSet& sinks,
                                  const IndexSet& non_sink_text, double p) {
  RedistributedRow out;
  out.row.assign(row.begin(), row.end());
  out.budget = redistribution_budget(row, sinks, p);
  if (out.budget == 0.0) return out;

  const double receiver_mass = mass(row, non_sink_text);
  if (non_sink_text.empty() || !(receiver_mass > 0.0)) {
    out.starved = true;
    return out;
  }
  for (std::size_t j : sinks) out.row[j] = p * row[j];
  const double share = out.budget / receiver_mass;
  for (std::size_t j : non_sink_text) out.row[j] = row[j] + share * row[j];
  return out;
}

LayerRecalibration igar_layer(const AttentionTensor& attention, const Matrix& hidden,
                              const ModalityMap& modality, const SinkDetectConfig& sink_cfg,
                              const RecalConfig& recal_cfg) {
  recal_cfg.validate();
  if (hidden.rows() != attention.seq_len()) {
    throw InvalidInput("igar_layer: hidden states and attention cover different sequences");
  }
  LayerRecalibration result;
  result.attention = attention;
  result.sinks = detect_sinks(hidden, modality, sink_cfg);
  result.selection = select_head_queries(attention, result.sinks, modality, recal_cfg, sink_cfg.epsilon);

  const IndexSet drained = recal_cfg.drain_visual_sinks
                               ? set_union(result.sinks.text_sinks, result.sinks.visual_sinks)
                               : result.sinks.text_sinks;
  const IndexSet non_sink_text = set_difference(modality.text(), result.sinks.text_sinks);

  for (const HeadQuery& hq : result.selection) {
    auto src = attention.head(hq.head).row(hq.query);
    RedistributedRow r = redistribute_row(src, drained, non_sink_text, recal_cfg.p);
    result.rows.push_back({hq.head, hq.query, r.budget, r.starved});
    if (r.budget == 0.0 || r.starved) continue;
    auto dst = result.attention.head(hq.head).row(hq.query);
    std::copy(r.row.begin(), r.row.end(), dst.begin());
  }
  return result;
}

nlohmann::json to_json(const LayerRecalibration& layer, const ModalityMap& modality) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : layer.rows) {
    rows.push_back({{"head", r.head}, {"query", r.query}, {"budget", r.budget}, {"starved", r.starved}});
  }
  return {{"sinks", to_json(layer.sinks, modality)}, {"rows", std::move(rows)}};
}

}  // namespace igar
