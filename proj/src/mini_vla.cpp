#include "igar/mini_vla.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <string>

#include "igar/errors.hpp"
#include "igar/metrics.hpp"

namespace igar {

void PolicyShape::validate() const {
  if (layers == 0) throw InvalidInput("PolicyShape: at least one layer");
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw InvalidInput("PolicyShape: d_model must be a positive multiple of heads");
  }
  if (ff_hidden == 0) throw InvalidInput("PolicyShape: ff_hidden must be positive");
  if (vocab < vocab::kSize) throw InvalidInput("PolicyShape: vocab smaller than the token id space");
  if (actions < 2) throw InvalidInput("PolicyShape: action space needs at least two actions");
  if (max_seq < layout::kFirstText + 1) throw InvalidInput("PolicyShape: max_seq too small");
  if (action_queries == 0) throw InvalidInput("PolicyShape: at least one action query");
}

namespace {

Matrix ones(std::size_t cols) { return Matrix(1, cols, 1.0); }

void fill_normal(Matrix& m, Rng& rng, double scale) {
  for (double& v : m.data()) v = rng.normal(0.0, scale);
}

void expect_shape(const Matrix& m, std::size_t r, std::size_t c, const char* name) {
  if (m.rows() != r || m.cols() != c) {
    throw InvalidInput(std::string("PolicySpec: ") + name + " has shape " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" + std::to_string(c));
  }
}

// y = g * x / sqrt(mean(x^2) + eps), row by row.
Matrix rms_norm_rows(const Matrix& x, const Matrix& gain) {
  Matrix y(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    double ss = 0.0;
    for (double v : xr) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / d + kNormEpsilon);
    auto yr = y.row(i);
    for (std::size_t k = 0; k < x.cols(); ++k) yr[k] = gain(0, k) * xr[k] * inv;
  }
  return y;
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t k = 0; k < m.cols(); ++k) r[k] += bias(0, k);
  }
}

AttentionTensor causal_attention(const Matrix& q, const Matrix& k, std::size_t heads) {
  const std::size_t n = q.rows();
  const std::size_t dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> maps;
  maps.reserve(heads);
  std::vector<double> scores(n);
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix a(n, n);
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      const double* qi = q.row(i).data() + off;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        const double* kj = k.row(j).data() + off;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        total += scores[j];
      }
      auto row = a.row(i);
      for (std::size_t j = 0; j <= i; ++j) row[j] = scores[j] / total;
    }
    maps.push_back(std::move(a));
  }
  return AttentionTensor(std::move(maps));
}

Matrix aggregate_values(const AttentionTensor& att, const Matrix& v) {
  const std::size_t n = v.rows();
  const std::size_t heads = att.num_heads();
  const std::size_t dh = v.cols() / heads;
  Matrix z(n, v.cols());
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix& a = att.head(h);
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      double* zi = z.row(i).data() + off;
      auto ar = a.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        const double w = ar[j];
        if (w == 0.0) continue;
        const double* vj = v.row(j).data() + off;
        for (std::size_t d = 0; d < dh; ++d) zi[d] += w * vj[d];
      }
    }
  }
  return z;
}

std::atomic<bool> g_clamp_warned{false};

}  // namespace

PolicySpec PolicySpec::zeros(const PolicyShape& shape) {
  shape.validate();
  const std::size_t d = shape.d_model;
  const std::size_t f = shape.ff_hidden;
  PolicySpec s;
  s.shape = shape;
  s.tok_emb = Matrix(shape.vocab, d);
  s.pos_emb = Matrix(shape.max_seq, d);
  s.feat_proj = Matrix(shape.features, d);
  for (std::size_t l = 0; l < shape.layers; ++l) {
    LayerWeights w;
    w.attn_gain = ones(d);
    w.wq = Matrix(d, d);
    w.wk = Matrix(d, d);
    w.wv = Matrix(d, d);
    w.wo = Matrix(d, d);
    w.ff_gain = ones(d);
    w.w1 = Matrix(d, f);
    w.b1 = Matrix(1, f);
    w.w2 = Matrix(f, d);
    w.b2 = Matrix(1, d);
    s.layers.push_back(std::move(w));
  }
  s.final_gain = ones(d);
  s.w_out = Matrix(d, shape.actions);
  s.b_out = Matrix(1, shape.actions);
  return s;
}

PolicySpec PolicySpec::random(const PolicyShape& shape, Rng& rng, double scale) {
  PolicySpec s = zeros(shape);
  fill_normal(s.tok_emb, rng, scale);
  fill_normal(s.pos_emb, rng, scale);
  fill_normal(s.feat_proj, rng, scale);
  for (auto& l : s.layers) {
    fill_normal(l.wq, rng, scale);
    fill_normal(l.wk, rng, scale);
    fill_normal(l.wv, rng, scale);
    fill_normal(l.wo, rng, scale);
    fill_normal(l.w1, rng, scale);
    fill_normal(l.w2, rng, scale);
  }
  fill_normal(s.w_out, rng, scale);
  return s;
}

std::size_t PolicySpec::parameter_count() const {
  std::size_t n = 0;
  for_each_parameter([&](const Matrix& m) { n += m.size(); });
  return n;
}

void PolicySpec::validate() const {
  shape.validate();
  const std::size_t d = shape.d_model;
  const std::size_t f = shape.ff_hidden;
  expect_shape(tok_emb, shape.vocab, d, "tok_emb");
  expect_shape(pos_emb, shape.max_seq, d, "pos_emb");
  expect_shape(feat_proj, shape.features, d, "feat_proj");
  if (layers.size() != shape.layers) throw InvalidInput("PolicySpec: layer count mismatch");
  for (const auto& l : layers) {
    expect_shape(l.attn_gain, 1, d, "attn_gain");
    expect_shape(l.wq, d, d, "wq");
    expect_shape(l.wk, d, d, "wk");
    expect_shape(l.wv, d, d, "wv");
    expect_shape(l.wo, d, d, "wo");
    expect_shape(l.ff_gain, 1, d, "ff_gain");
    expect_shape(l.w1, d, f, "w1");
    expect_shape(l.b1, 1, f, "b1");
    expect_shape(l.w2, f, d, "w2");
    expect_shape(l.b2, 1, d, "b2");
  }
  expect_shape(final_gain, 1, d, "final_gain");
  expect_shape(w_out, d, shape.actions, "w_out");
  expect_shape(b_out, 1, shape.actions, "b_out");
  bool finite = true;
  for_each_parameter([&](const Matrix& m) { finite = finite && m.all_finite(); });
  if (!finite) throw InvalidInput("PolicySpec: non-finite weight");
}

std::size_t intervened_layers(const PolicySpec& spec, const RecalConfig& recal) {
  if (recal.layers > spec.shape.layers) {
    if (!g_clamp_warned.exchange(true)) {
      std::clog << "warning: intervention layers " << recal.layers << " clamped to policy depth "
                << spec.shape.layers << "\n";
    }
    return spec.shape.layers;
  }
  return recal.layers;
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_derivative(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

ForwardTrace forward(const PolicySpec& spec, const TokenSequence& tokens,
                     const std::optional<Intervention>& intervention) {
  const PolicyShape& sh = spec.shape;
  const std::size_t n = tokens.size();
  if (n == 0 || n > sh.max_seq) throw InvalidInput("forward: sequence length outside [1, max_seq]");
  if (tokens.modality.size() != n) throw InvalidInput("forward: modality map does not cover the sequence");
  if (tokens.features.rows() != n || tokens.features.cols() != sh.features) {
    throw InvalidInput("forward: feature matrix shape mismatch");
  }
  if (tokens.modality.action_queries().empty()) throw InvalidInput("forward: no action-query token");

  ForwardTrace trace;
  trace.modality = tokens.modality;
  if (sh.bos_text_sink && tokens.modality.label(layout::kBos) == Modality::Other) {
    trace.modality = tokens.modality.relabeled(layout::kBos, Modality::Text);
  }

  const std::size_t d = sh.d_model;
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const int id = tokens.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= sh.vocab) throw InvalidInput("forward: token id out of range");
    auto xr = x.row(i);
    auto te = spec.tok_emb.row(static_cast<std::size_t>(id));
    auto pe = spec.pos_emb.row(i);
    for (std::size_t k = 0; k < d; ++k) xr[k] = te[k] + pe[k];
    for (std::size_t f = 0; f < sh.features; ++f) {
      const double v = tokens.features(i, f);
      if (v == 0.0) continue;
      auto fp = spec.feat_proj.row(f);
      for (std::size_t k = 0; k < d; ++k) xr[k] += v * fp[k];
    }
  }

  const std::size_t depth =
      intervention ? (intervention->recal.validate(), intervened_layers(spec, intervention->recal)) : 0;
  if (intervention) intervention->sink.validate();

  trace.layers.reserve(sh.layers);
  for (std::size_t l = 0; l < sh.layers; ++l) {
    const LayerWeights& w = spec.layers[l];
    LayerTrace lt;
    lt.input = x;
    const Matrix xn = rms_norm_rows(x, w.attn_gain);
    const Matrix q = matmul(xn, w.wq);
    const Matrix k = matmul(xn, w.wk);
    const Matrix v = matmul(xn, w.wv);
    lt.pre = causal_attention(q, k, sh.heads);
    if (l < depth) {
      lt.recalibration =
          igar_layer(lt.pre, lt.input, trace.modality, intervention->sink, intervention->recal);
      lt.post = lt.recalibration->attention;
    } else {
      lt.post = lt.pre;
    }
    add_inplace(x, matmul(aggregate_values(lt.post, v), w.wo));

    const Matrix xn2 = rms_norm_rows(x, w.ff_gain);
    Matrix hidden = matmul(xn2, w.w1);
    add_row_bias(hidden, w.b1);
    for (double& h : hidden.data()) h = gelu(h);
    Matrix ff = matmul(hidden, w.w2);
    add_row_bias(ff, w.b2);
    add_inplace(x, ff);
    trace.layers.push_back(std::move(lt));
  }

  const auto& queries = tokens.modality.action_queries();
  trace.logits.assign(sh.actions, 0.0);
  Matrix aq(queries.size(), d);
  for (std::size_t r = 0; r < queries.size(); ++r) {
    auto src = x.row(queries[r]);
    std::copy(src.begin(), src.end(), aq.row(r).begin());
  }
  const Matrix logits_rows = matmul(rms_norm_rows(aq, spec.final_gain), spec.w_out);
  const double inv_q = 1.0 / static_cast<double>(queries.size());
  for (std::size_t a = 0; a < sh.actions; ++a) {
    double acc = 0.0;
    for (std::size_t r = 0; r < queries.size(); ++r) acc += logits_rows(r, a);
    trace.logits[a] = acc * inv_q + spec.b_out(0, a);
  }
  trace.action = static_cast<std::size_t>(
      std::max_element(trace.logits.begin(), trace.logits.end()) - trace.logits.begin());
  trace.output = std::move(x);
  return trace;
}

namespace {

constexpr char kMagic[8] = {'I', 'G', 'A', 'R', 'V', 'L', 'A', '\0'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_bytes(std::istream& in, int count) {
  unsigned char b[8] = {};
  in.read(reinterpret_cast<char*>(b), count);
  if (!in) throw InvalidInput("read_weights: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < count; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_weights(const PolicySpec& spec, std::ostream& out) {
  spec.validate();
  const PolicyShape& s = spec.shape;
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kWeightsVersion);
  const std::uint32_t fields[] = {
      static_cast<std::uint32_t>(s.layers),   static_cast<std::uint32_t>(s.heads),
      static_cast<std::uint32_t>(s.d_model),  static_cast<std::uint32_t>(s.ff_hidden),
      static_cast<std::uint32_t>(s.vocab),    static_cast<std::uint32_t>(s.actions),
      static_cast<std::uint32_t>(s.max_seq),  static_cast<std::uint32_t>(s.features),
      static_cast<std::uint32_t>(s.action_queries), s.bos_text_sink ? 1u : 0u};
  put_u32(out, static_cast<std::uint32_t>(std::size(fields)));
  for (std::uint32_t f : fields) put_u32(out, f);
  put_u64(out, spec.parameter_count());
  spec.for_each_parameter([&](const Matrix& m) {
    for (double v : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  });
  if (!out) throw InvalidInput("write_weights: stream error");
}

PolicySpec read_weights(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw InvalidInput("read_weights: bad magic");
  const auto version = static_cast<std::uint32_t>(get_bytes(in, 4));
  if (version != kWeightsVersion) {
    throw InvalidInput("read_weights: unsupported version " + std::to_string(version));
  }
  const auto nfields = static_cast<std::uint32_t>(get_bytes(in, 4));
  if (nfields != 10) throw InvalidInput("read_weights: unexpected header length");
  std::uint32_t f[10];
  for (auto& v : f) v = static_cast<std::uint32_t>(get_bytes(in, 4));
  PolicyShape s;
  s.layers = f[0];
  s.heads = f[1];
  s.d_model = f[2];
  s.ff_hidden = f[3];
  s.vocab = f[4];
  s.actions = f[5];
  s.max_seq = f[6];
  s.features = f[7];
  s.action_queries = f[8];
  s.bos_text_sink = (f[9] & 1u) != 0;
  PolicySpec spec = PolicySpec::zeros(s);
  const std::uint64_t count = get_bytes(in, 8);
  if (count != spec.parameter_count()) throw InvalidInput("read_weights: value count does not match header");
  spec.for_each_parameter([&](Matrix& m) {
    for (double& v : m.data()) v = std::bit_cast<double>(get_bytes(in, 8));
  });
  spec.validate();
  return spec;
}

void save_weights(const PolicySpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("save_weights: cannot open " + path.string());
  write_weights(spec, out);
}

PolicySpec load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("load_weights: cannot open " + path.string());
  return read_weights(in);
}

VlaPolicy::VlaPolicy(std::shared_ptr<const PolicySpec> spec, std::optional<Intervention> intervention)
    : spec_(std::move(spec)), intervention_(std::move(intervention)) {
  if (!spec_) throw InvalidInput("VlaPolicy: null spec");
  spec_->validate();
}

ForwardTrace VlaPolicy::trace(const WorldState& state, const Instruction& instruction) const {
  return forward(*spec_, tokenize(state, instruction, spec_->shape.action_queries), intervention_);
}

Decision VlaPolicy::decide(const WorldState& state, const Instruction& instruction) const {
  const ForwardTrace t = trace(state, instruction);
  Decision d;
  d.action = t.action < kNumActions ? action_from_index(t.action) : Action{};
  const Matrix avg = head_average(t.layers.back().post);
  try {
    d.ivar = ivar_over_queries(avg, t.modality);
  } catch (const UndefinedResult&) {
    d.ivar.reset();
  }
  return d;
}

}  // namespace igar
