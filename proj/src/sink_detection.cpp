#include "igar/sink_detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "igar/errors.hpp"

namespace igar {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Visual: return "visual";
    case Modality::Text: return "text";
    case Modality::ActionQuery: return "action_query";
    case Modality::Other: return "other";
  }
  return "other";
}

ModalityMap::ModalityMap(std::vector<Modality> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    switch (labels_[i]) {
      case Modality::Visual: visual_.push_back(i); break;
      case Modality::Text: text_.push_back(i); break;
      case Modality::ActionQuery: action_queries_.push_back(i); break;
      case Modality::Other: break;
    }
  }
}

ModalityMap ModalityMap::relabeled(std::size_t i, Modality m) const {
  auto labels = labels_;
  labels.at(i) = m;
  return ModalityMap(std::move(labels));
}

void SinkDetectConfig::validate() const {
  if (!(gamma > 1.0)) throw InvalidInput("SinkDetectConfig: gamma must be > 1");
  if (k < 1) throw InvalidInput("SinkDetectConfig: k must be >= 1");
  if (!(tau > 0.0)) throw InvalidInput("SinkDetectConfig: tau must be > 0");
  if (!(epsilon > 0.0)) throw InvalidInput("SinkDetectConfig: epsilon must be > 0");
}

bool contains(const IndexSet& set, std::size_t value) {
  return std::binary_search(set.begin(), set.end(), value);
}

std::vector<double> rms_norms(const Matrix& hidden) {
  if (hidden.empty()) throw InvalidInput("rms_norms: empty matrix");
  std::vector<double> out(hidden.rows());
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    double acc = 0.0;
    for (double v : hidden.row(i)) acc += v * v;
    out[i] = std::sqrt(acc / static_cast<double>(hidden.cols()));
  }
  return out;
}

std::vector<double> spike_ratios(const Matrix& hidden, double epsilon) {
  if (hidden.empty()) throw InvalidInput("spike_ratios: empty matrix");
  if (!(epsilon > 0.0)) throw InvalidInput("spike_ratios: epsilon must be > 0");
  std::vector<double> peak(hidden.cols(), 0.0);
  std::vector<double> total(hidden.cols(), 0.0);
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    auto row = hidden.row(i);
    for (std::size_t d = 0; d < row.size(); ++d) {
      const double a = std::abs(row[d]);
      peak[d] = std::max(peak[d], a);
      total[d] += a;
    }
  }
  std::vector<double> out(hidden.cols());
  const double n = static_cast<double>(hidden.rows());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = peak[d] / (total[d] / n + epsilon);
  return out;
}

IndexSet select_spike_dims(const std::vector<double>& ratios, double gamma, std::size_t k) {
  if (k < 1) throw InvalidInput("select_spike_dims: k must be >= 1");
  IndexSet dims;
  for (std::size_t d = 0; d < ratios.size(); ++d)
    if (ratios[d] > gamma) dims.push_back(d);
  std::stable_sort(dims.begin(), dims.end(),
                   [&](std::size_t a, std::size_t b) { return ratios[a] > ratios[b]; });
  if (dims.size() > k) dims.resize(k);
  return dims;
}

SinkReport detect_sinks(const Matrix& hidden, const ModalityMap& modality, const SinkDetectConfig& cfg) {
  cfg.validate();
  if (hidden.empty()) throw InvalidInput("detect_sinks: empty hidden states");
  if (modality.size() != hidden.rows()) {
    throw InvalidInput("detect_sinks: modality map covers " + std::to_string(modality.size()) +
                       " tokens but hidden states have " + std::to_string(hidden.rows()));
  }
  SinkReport report;
  report.spike_dims = select_spike_dims(spike_ratios(hidden, cfg.epsilon), cfg.gamma, cfg.k);
  report.peak_activation.assign(hidden.rows(), 0.0);
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    double peak = 0.0;
    for (std::size_t d : report.spike_dims) peak = std::max(peak, std::abs(hidden(i, d)));
    report.peak_activation[i] = peak;
    if (report.spike_dims.empty() || !(peak > cfg.tau)) continue;
    report.sinks.push_back(i);
    if (modality.label(i) == Modality::Visual) report.visual_sinks.push_back(i);
    if (modality.label(i) == Modality::Text) report.text_sinks.push_back(i);
  }
  return report;
}

nlohmann::json to_json(const SinkReport& report, const ModalityMap& modality) {
  nlohmann::json tokens = nlohmann::json::array();
  for (std::size_t i = 0; i < report.peak_activation.size(); ++i) {
    tokens.push_back({{"index", i},
                      {"modality", std::string(to_string(modality.label(i)))},
                      {"peak_activation", report.peak_activation[i]},
                      {"sink", contains(report.sinks, i)}});
  }
  return {{"spike_dims", report.spike_dims},
          {"sinks", report.sinks},
          {"visual_sinks", report.visual_sinks},
          {"text_sinks", report.text_sinks},
          {"tokens", std::move(tokens)}};
}

}  // namespace igar
