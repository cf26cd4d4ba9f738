#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "igar/recalibration.hpp"
#include "igar/sink_detection.hpp"

namespace igar {

enum class Variant : std::uint8_t { Normal, V1, V2, V3, V4 };

inline constexpr std::array<Variant, 5> kAllVariants{Variant::Normal, Variant::V1, Variant::V2,
                                                     Variant::V3, Variant::V4};
inline constexpr std::array<Variant, 4> kContradictionVariants{Variant::V1, Variant::V2, Variant::V3,
                                                               Variant::V4};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct SuccessRecord {
  std::uint64_t episode_id = 0;
  Variant variant = Variant::Normal;
  bool success = false;  ///< judged against the original instruction
  std::size_t steps = 0;
  double ivar_mean = 0.0;
};

struct VariantStats {
  std::size_t rollouts = 0;
  std::size_t successes = 0;
  double sr = 0.0;         ///< percent, one decimal
  double lgs = 0.0;        ///< SR(Normal) - SR(this variant)
  double ivar_mean = 0.0;
};

struct SuiteReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::array<std::optional<VariantStats>, 5> variants;

  const VariantStats& at(Variant v) const;
  bool has(Variant v) const { return variants[static_cast<std::size_t>(v)].has_value(); }
};

/// (1/H) * sum over heads.
Matrix head_average(const AttentionTensor& attention);

/// Text share of the text+visual attention mass in row `query` of a
/// head-averaged map. Throws UndefinedResult when that mass is zero.
double ivar(const Matrix& averaged, std::size_t query, const ModalityMap& modality);

/// IVAR averaged over every action-query position.
double ivar_over_queries(const Matrix& averaged, const ModalityMap& modality);

/// Success rate in percent, rounded to one decimal.
double success_rate(std::size_t successes, std::size_t rollouts);

/// SR(normal) - SR(contradiction), computed on the one-decimal SR grid so
/// that paper-style table values subtract exactly.
double lgs(double sr_normal, double sr_contra);

/// Tallies records per variant. Throws InvalidInput without Normal records.
SuiteReport aggregate(std::vector<SuccessRecord> records);

}  // namespace igar
