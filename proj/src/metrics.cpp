#include "igar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "igar/errors.hpp"

namespace igar {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Normal: return "Normal";
    case Variant::V1: return "V1";
    case Variant::V2: return "V2";
    case Variant::V3: return "V3";
    case Variant::V4: return "V4";
  }
  return "Normal";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (to_string(v) == name) return v;
  throw InvalidInput("unknown variant '" + std::string(name) + "'");
}

const VariantStats& SuiteReport::at(Variant v) const {
  const auto& slot = variants[static_cast<std::size_t>(v)];
  if (!slot) throw LookupError("SuiteReport: no records for variant " + std::string(to_string(v)));
  return *slot;
}

Matrix head_average(const AttentionTensor& attention) {
  if (attention.num_heads() == 0) throw InvalidInput("head_average: no heads");
  Matrix out = attention.head(0);
  for (std::size_t h = 1; h < attention.num_heads(); ++h) add_inplace(out, attention.head(h));
  if (attention.num_heads() > 1) scale_inplace(out, 1.0 / static_cast<double>(attention.num_heads()));
  return out;
}

double ivar(const Matrix& averaged, std::size_t query, const ModalityMap& modality) {
  if (query >= averaged.rows()) throw InvalidInput("ivar: query position out of range");
  if (modality.size() != averaged.cols()) throw InvalidInput("ivar: modality map size mismatch");
  auto row = averaged.row(query);
  double text = 0.0;
  double visual = 0.0;
  for (std::size_t j : modality.text()) text += row[j];
  for (std::size_t j : modality.visual()) visual += row[j];
  const double denom = text + visual;
  if (!(denom > 0.0)) {
    throw UndefinedResult("ivar: query " + std::to_string(query) + " has no text or visual mass");
  }
  return text / denom;
}

double ivar_over_queries(const Matrix& averaged, const ModalityMap& modality) {
  const auto& queries = modality.action_queries();
  if (queries.empty()) throw InvalidInput("ivar_over_queries: no action-query positions");
  double acc = 0.0;
  for (std::size_t q : queries) acc += ivar(averaged, q, modality);
  return acc / static_cast<double>(queries.size());
}

double success_rate(std::size_t successes, std::size_t rollouts) {
  if (rollouts == 0) throw InvalidInput("success_rate: zero rollouts");
  return std::round(1000.0 * static_cast<double>(successes) / static_cast<double>(rollouts)) / 10.0;
}

double lgs(double sr_normal, double sr_contra) {
  auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
  if (!in_range(sr_normal) || !in_range(sr_contra)) throw InvalidInput("lgs: SR must lie in [0,100]");
  return (std::round(sr_normal * 10.0) - std::round(sr_contra * 10.0)) / 10.0;
}

SuiteReport aggregate(std::vector<SuccessRecord> records) {
  std::sort(records.begin(), records.end(), [](const SuccessRecord& a, const SuccessRecord& b) {
    return a.episode_id < b.episode_id;
  });
  struct Tally {
    std::size_t rollouts = 0, successes = 0;
    double ivar_sum = 0.0;
  };
  std::array<Tally, 5> tallies{};
  for (const auto& r : records) {
    if (r.ivar_mean < 0.0 || r.ivar_mean > 1.0) throw InvalidInput("aggregate: IVAR outside [0,1]");
    auto& t = tallies[static_cast<std::size_t>(r.variant)];
    ++t.rollouts;
    t.successes += r.success ? 1 : 0;
    t.ivar_sum += r.ivar_mean;
  }
  if (tallies[0].rollouts == 0) throw InvalidInput("aggregate: Normal variant missing; LGS undefined");

  SuiteReport report;
  const double sr_normal = success_rate(tallies[0].successes, tallies[0].rollouts);
  for (std::size_t v = 0; v < tallies.size(); ++v) {
    const auto& t = tallies[v];
    if (t.rollouts == 0) continue;
    VariantStats s;
    s.rollouts = t.rollouts;
    s.successes = t.successes;
    s.sr = success_rate(t.successes, t.rollouts);
    s.lgs = lgs(sr_normal, s.sr);
    s.ivar_mean = t.ivar_sum / static_cast<double>(t.rollouts);
    report.variants[v] = s;
  }
  return report;
}

}  // namespace igar
