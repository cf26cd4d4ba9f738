#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "igar/recalibration.hpp"
#include "igar/scene_world.hpp"
#include "igar/sink_detection.hpp"
#include "igar/tensor.hpp"
#include "igar/tokenizer.hpp"

namespace igar {

struct PolicyShape {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 32;
  std::size_t ff_hidden = 64;
  std::size_t vocab = vocab::kSize;
  std::size_t actions = kNumActions;
  std::size_t max_seq = 48;
  std::size_t features = kNumTokenFeatures;
  std::size_t action_queries = 1;
  /// Label BOS as Text so it can act as the drained text sink.
  bool bos_text_sink = false;

  std::size_t head_dim() const { return d_model / heads; }
  void validate() const;
  bool operator==(const PolicyShape&) const = default;
};

struct LayerWeights {
  Matrix attn_gain;  ///< 1 x D
  Matrix wq, wk, wv, wo;  ///< D x D
  Matrix ff_gain;    ///< 1 x D
  Matrix w1;         ///< D x F
  Matrix b1;         ///< 1 x F
  Matrix w2;         ///< F x D
  Matrix b2;         ///< 1 x D
  bool operator==(const LayerWeights&) const = default;
};

/// Pre-norm causal transformer over a TokenSequence, with a linear action
/// head on the (mean of the) action-query rows. Row-vector convention: y = x W.
struct PolicySpec {
  PolicyShape shape;
  Matrix tok_emb;    ///< vocab x D
  Matrix pos_emb;    ///< max_seq x D
  Matrix feat_proj;  ///< features x D
  std::vector<LayerWeights> layers;
  Matrix final_gain;  ///< 1 x D
  Matrix w_out;       ///< D x actions
  Matrix b_out;       ///< 1 x actions

  /// Zero weights with unit norm gains.
  static PolicySpec zeros(const PolicyShape& shape);
  /// Normal(0, scale) weights with unit norm gains and zero biases.
  static PolicySpec random(const PolicyShape& shape, Rng& rng, double scale = 0.1);

  /// Visits every parameter matrix in serialization order: tok_emb, pos_emb,
  /// feat_proj, then per layer attn_gain, wq, wk, wv, wo, ff_gain, w1, b1, w2,
  /// b2, then final_gain, w_out, b_out.
  template <typename F>
  void for_each_parameter(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each_parameter(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;
  void validate() const;
  bool operator==(const PolicySpec&) const = default;

 private:
  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    f(s.tok_emb);
    f(s.pos_emb);
    f(s.feat_proj);
    for (auto& l : s.layers) {
      f(l.attn_gain);
      f(l.wq);
      f(l.wk);
      f(l.wv);
      f(l.wo);
      f(l.ff_gain);
      f(l.w1);
      f(l.b1);
      f(l.w2);
      f(l.b2);
    }
    f(s.final_gain);
    f(s.w_out);
    f(s.b_out);
  }
};

inline constexpr double kNormEpsilon = 1e-6;

struct Intervention {
  SinkDetectConfig sink;
  RecalConfig recal;
};

struct LayerTrace {
  Matrix input;  ///< residual stream entering the layer (sink detection input)
  AttentionTensor pre;
  AttentionTensor post;
  std::optional<LayerRecalibration> recalibration;  ///< set on intervened layers
};

struct ForwardTrace {
  ModalityMap modality;  ///< as seen by the intervention (BOS relabeled when configured)
  std::vector<LayerTrace> layers;
  Matrix output;  ///< residual stream after the last layer
  std::vector<double> logits;
  std::size_t action = 0;
};

/// Number of layers an intervention touches: min(recal.layers, spec layers).
/// Logs a warning (once per process) when clamping.
std::size_t intervened_layers(const PolicySpec& spec, const RecalConfig& recal);

ForwardTrace forward(const PolicySpec& spec, const TokenSequence& tokens,
                     const std::optional<Intervention>& intervention = std::nullopt);

double gelu(double x);
double gelu_derivative(double x);

/// Binary weights container: magic "IGARVLA\0", u32 version, u32 header
/// length n, n u32 shape fields (layers, heads, d_model, ff_hidden, vocab,
/// actions, max_seq, features, action_queries, flags), u64 value count, then
/// little-endian f64 values in for_each_parameter order.
inline constexpr std::uint32_t kWeightsVersion = 1;
void write_weights(const PolicySpec& spec, std::ostream& out);
PolicySpec read_weights(std::istream& in);
void save_weights(const PolicySpec& spec, const std::filesystem::path& path);
PolicySpec load_weights(const std::filesystem::path& path);

/// Greedy policy over a MiniVLA; reports IVAR from the final layer.
class VlaPolicy : public Policy {
 public:
  VlaPolicy(std::shared_ptr<const PolicySpec> spec, std::optional<Intervention> intervention);

  Decision decide(const WorldState& state, const Instruction& instruction) const override;
  ForwardTrace trace(const WorldState& state, const Instruction& instruction) const;

  const PolicySpec& spec() const { return *spec_; }
  const std::optional<Intervention>& intervention() const { return intervention_; }

 private:
  std::shared_ptr<const PolicySpec> spec_;
  std::optional<Intervention> intervention_;
};

}  // namespace igar
