#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

#include "igar/sink_detection.hpp"
#include "igar/tensor.hpp"

namespace igar {

struct RecalConfig {
  double rho = 0.4;    ///< upper bound on the visual-sink share of visual mass
  double alpha = 0.01; ///< minimum visual mass for a head-query pair
  double p = 0.6;      ///< text-sink decay factor
  std::size_t layers = 16;  ///< number of initial layers intervened
  /// Also scale visual sinks by p and route their freed mass to non-sink
  /// text tokens. Off by default.
  bool drain_visual_sinks = false;

  void validate() const;
};

/// Per-head row-stochastic attention maps over one token sequence.
class AttentionTensor {
 public:
  AttentionTensor() = default;
  explicit AttentionTensor(std::vector<Matrix> heads);

  std::size_t num_heads() const noexcept { return heads_.size(); }
  std::size_t seq_len() const noexcept { return heads_.empty() ? 0 : heads_.front().rows(); }
  const Matrix& head(std::size_t h) const { return heads_.at(h); }
  Matrix& head(std::size_t h) { return heads_.at(h); }
  const std::vector<Matrix>& heads() const noexcept { return heads_; }

  /// Throws InvalidInput unless every row is non-negative and sums to 1
  /// within `tolerance`.
  void validate(double tolerance = 1e-9) const;

  bool operator==(const AttentionTensor&) const = default;

 private:
  std::vector<Matrix> heads_;
};

struct HeadQuery {
  std::size_t head = 0;
  std::size_t query = 0;
  auto operator<=>(const HeadQuery&) const = default;
};

/// Sorted (head, query) pairs chosen for reallocation.
using SelectionSet = std::vector<HeadQuery>;

double visual_sink_fraction(std::span<const double> row, const IndexSet& visual_sinks,
                            const IndexSet& visual, double epsilon);

/// Head-query pairs over all non-visual query positions that satisfy both
/// the visual-sink bound (rho) and the minimum visual mass (alpha).
SelectionSet select_head_queries(const AttentionTensor& attention, const SinkReport& sinks,
                                 const ModalityMap& modality, const RecalConfig& cfg,
                                 double epsilon);

/// (1 - p) times the attention mass on the drained sink tokens.
double redistribution_budget(std::span<const double> row, const IndexSet& sinks, double p);

struct RedistributedRow {
  std::vector<double> row;
  double budget = 0.0;
  /// Budget was positive but no non-sink text token could receive it; the
  /// row is returned unchanged.
  bool starved = false;
};

/// Scales the sink entries by p and hands the freed budget to the non-sink
/// text tokens in proportion to their current weights. Every other entry is
/// copied through untouched.
RedistributedRow redistribute_row(std::span<const double> row, const IndexSet& sinks,
                                  const IndexSet& non_sink_text, double p);

struct RowDiagnostic {
  std::size_t head = 0;
  std::size_t query = 0;
  double budget = 0.0;
  bool starved = false;
};

struct LayerRecalibration {
  AttentionTensor attention;
  SinkReport sinks;
  SelectionSet selection;
  std::vector<RowDiagnostic> rows;
};

/// Sink detection, head selection and redistribution for one layer.
/// Unselected rows are bit-identical to the input.
LayerRecalibration igar_layer(const AttentionTensor& attention, const Matrix& hidden,
                              const ModalityMap& modality, const SinkDetectConfig& sink_cfg,
                              const RecalConfig& recal_cfg);

nlohmann::json to_json(const LayerRecalibration& layer, const ModalityMap& modality);

}  // namespace igar
