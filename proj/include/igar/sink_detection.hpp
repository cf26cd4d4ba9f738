#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "igar/tensor.hpp"

namespace igar {

using IndexSet = std::vector<std::size_t>;  // sorted, unique

enum class Modality : std::uint8_t { Visual, Text, ActionQuery, Other };

std::string_view to_string(Modality m);

/// Per-token modality labels with the derived visual / text / action-query
/// index sets.
class ModalityMap {
 public:
  ModalityMap() = default;
  explicit ModalityMap(std::vector<Modality> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  Modality label(std::size_t i) const { return labels_.at(i); }
  const std::vector<Modality>& labels() const noexcept { return labels_; }

  const IndexSet& visual() const noexcept { return visual_; }
  const IndexSet& text() const noexcept { return text_; }
  const IndexSet& action_queries() const noexcept { return action_queries_; }

  ModalityMap relabeled(std::size_t i, Modality m) const;

  bool operator==(const ModalityMap& other) const { return labels_ == other.labels_; }

 private:
  std::vector<Modality> labels_;
  IndexSet visual_;
  IndexSet text_;
  IndexSet action_queries_;
};

struct SinkDetectConfig {
  double gamma = 3.0;    ///< spike-ratio threshold
  std::size_t k = 5;     ///< number of spike dimensions kept
  double tau = 20.0;     ///< activation threshold for a sink token
  double epsilon = 1e-6; ///< stabiliser in ratio denominators

  void validate() const;
};

struct SinkReport {
  IndexSet spike_dims;   ///< ordered by spike ratio, descending
  IndexSet sinks;
  IndexSet visual_sinks;
  IndexSet text_sinks;
  std::vector<double> peak_activation;  ///< per token, max |H| over spike dims (0 when none)

  bool operator==(const SinkReport&) const = default;
};

/// Root-mean-square of each row.
std::vector<double> rms_norms(const Matrix& hidden);

/// max_i |H[i,d]| / (mean_i |H[i,d]| + epsilon) for each column d.
std::vector<double> spike_ratios(const Matrix& hidden, double epsilon);

/// Dimensions with ratio > gamma, sorted by ratio descending (ties by lower
/// index), truncated to k.
IndexSet select_spike_dims(const std::vector<double>& ratios, double gamma, std::size_t k);

SinkReport detect_sinks(const Matrix& hidden, const ModalityMap& modality, const SinkDetectConfig& cfg);

nlohmann::json to_json(const SinkReport& report, const ModalityMap& modality);

bool contains(const IndexSet& set, std::size_t value);

}  // namespace igar
