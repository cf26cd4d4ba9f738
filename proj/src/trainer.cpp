#include "igar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "igar/errors.hpp"

namespace igar {

void ToyDataset::validate() const {
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw InvalidInput("ToyDataset: dropout must lie in [0,1]");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    WorldState state(ex.scene);
    if (ex.held && !state.apply({ActionKind::Pick, *ex.held, Relation::On})) {
      throw InvalidInput("ToyDataset: example " + std::to_string(i) + " holds an invalid object");
    }
    if (ex.action >= kNumActions || !state.apply(action_from_index(ex.action))) {
      throw InvalidInput("ToyDataset: example " + std::to_string(i) + " has an infeasible expert action");
    }
  }
}

TokenSequence tokenize(const TrainingExample& example, std::size_t action_queries) {
  const std::vector<std::string> words = example.instruction ? example.instruction->words()
                                                             : std::vector<std::string>{};
  return tokenize(example.scene, example.held, words, action_queries);
}

ToyDataset make_shortcut_dataset(std::size_t scenes, double dropout, Rng& rng) {
  ToyDataset data;
  data.dropout = dropout;
  const SuiteKind kinds[] = {SuiteKind::Spatial, SuiteKind::Object, SuiteKind::Goal};
  for (std::size_t i = 0; i < scenes; ++i) {
    SceneTask task = generate_scene(kinds[i % 3], rng);
    const std::size_t obj = task.scene.most_salient_object();
    const std::size_t loc = task.scene.most_salient_location();
    const Relation rel = canonical_relation(task.scene.locations[loc].category);

    TrainingExample pick{task.scene, std::nullopt, task.instruction,
                         action_index({ActionKind::Pick, obj, Relation::On})};
    if (rng.uniform() < dropout) pick.instruction.reset();
    TrainingExample place{task.scene, obj, task.instruction, action_index({ActionKind::Place, loc, rel})};
    if (rng.uniform() < dropout) place.instruction.reset();
    data.examples.push_back(std::move(pick));
    data.examples.push_back(std::move(place));
  }
  data.validate();
  return data;
}

namespace {

struct NormCache {
  Matrix y;
  std::vector<double> inv;  // 1 / r per row
};

NormCache norm_forward(const Matrix& x, const Matrix& gain) {
  NormCache c{Matrix(x.rows(), x.cols()), std::vector<double>(x.rows())};
  const double d = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double ss = 0.0;
    for (double v : x.row(i)) ss += v * v;
    c.inv[i] = 1.0 / std::sqrt(ss / d + kNormEpsilon);
    for (std::size_t k = 0; k < x.cols(); ++k) c.y(i, k) = gain(0, k) * x(i, k) * c.inv[i];
  }
  return c;
}

// Returns dx; accumulates the gain gradient.
Matrix norm_backward(const Matrix& x, const Matrix& gain, const std::vector<double>& inv, const Matrix& dy,
                     Matrix& dgain) {
  Matrix dx(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) {
      dgain(0, k) += dy(i, k) * x(i, k) * inv[i];
      dot += gain(0, k) * dy(i, k) * x(i, k);
    }
    const double inv3 = inv[i] * inv[i] * inv[i];
    for (std::size_t k = 0; k < x.cols(); ++k) {
      dx(i, k) = gain(0, k) * dy(i, k) * inv[i] - x(i, k) * dot * inv3 / d;
    }
  }
  return dx;
}

void add_bias(Matrix& m, const Matrix& b) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t k = 0; k < m.cols(); ++k) m(i, k) += b(0, k);
}

void add_column_sums(Matrix& target, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t k = 0; k < m.cols(); ++k) target(0, k) += m(i, k);
}

struct LayerCache {
  Matrix x_in;
  NormCache n1;
  Matrix q, k, v;
  std::vector<Matrix> att;
  Matrix z;
  Matrix x_mid;
  NormCache n2;
  Matrix u;
  Matrix h;
};

}  // namespace

double loss_and_gradient(const PolicySpec& spec, const TokenSequence& tokens, std::size_t target,
                         PolicySpec* grad) {
  const PolicyShape& sh = spec.shape;
  const std::size_t n = tokens.size();
  const std::size_t d = sh.d_model;
  const std::size_t heads = sh.heads;
  const std::size_t dh = sh.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (target >= sh.actions) throw InvalidInput("loss_and_gradient: target outside the action space");
  if (n == 0 || n > sh.max_seq) throw InvalidInput("loss_and_gradient: sequence length outside [1, max_seq]");
  const auto& queries = tokens.modality.action_queries();
  if (queries.empty()) throw InvalidInput("loss_and_gradient: no action-query token");

  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<std::size_t>(tokens.ids[i]);
    for (std::size_t c = 0; c < d; ++c) {
      double v = spec.tok_emb(id, c) + spec.pos_emb(i, c);
      for (std::size_t f = 0; f < sh.features; ++f) v += tokens.features(i, f) * spec.feat_proj(f, c);
      x(i, c) = v;
    }
  }

  std::vector<LayerCache> caches(sh.layers);
  for (std::size_t l = 0; l < sh.layers; ++l) {
    const LayerWeights& w = spec.layers[l];
    LayerCache& c = caches[l];
    c.x_in = x;
    c.n1 = norm_forward(x, w.attn_gain);
    c.q = matmul(c.n1.y, w.wq);
    c.k = matmul(c.n1.y, w.wk);
    c.v = matmul(c.n1.y, w.wv);
    c.z = Matrix(n, d);
    for (std::size_t h = 0; h < heads; ++h) {
      Matrix a(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) s += c.q(i, h * dh + e) * c.k(j, h * dh + e);
          a(i, j) = s * scale;
          mx = std::max(mx, a(i, j));
        }
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          a(i, j) = std::exp(a(i, j) - mx);
          total += a(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) a(i, j) /= total;
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t e = 0; e < dh; ++e) c.z(i, h * dh + e) += a(i, j) * c.v(j, h * dh + e);
      }
      c.att.push_back(std::move(a));
    }
    add_inplace(x, matmul(c.z, w.wo));
    c.x_mid = x;
    c.n2 = norm_forward(x, w.ff_gain);
    c.u = matmul(c.n2.y, w.w1);
    add_bias(c.u, w.b1);
    c.h = c.u;
    for (double& v : c.h.data()) v = gelu(v);
    Matrix ff = matmul(c.h, w.w2);
    add_bias(ff, w.b2);
    add_inplace(x, ff);
  }

  const std::size_t nq = queries.size();
  Matrix xq(nq, d);
  for (std::size_t r = 0; r < nq; ++r)
    for (std::size_t c = 0; c < d; ++c) xq(r, c) = x(queries[r], c);
  const NormCache fin = norm_forward(xq, spec.final_gain);
  const Matrix rows = matmul(fin.y, spec.w_out);
  std::vector<double> logits(sh.actions);
  for (std::size_t a = 0; a < sh.actions; ++a) {
    double acc = 0.0;
    for (std::size_t r = 0; r < nq; ++r) acc += rows(r, a);
    logits[a] = acc / static_cast<double>(nq) + spec.b_out(0, a);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - mx);
  const double log_z = mx + std::log(total);
  const double loss = log_z - logits[target];
  if (!grad) return loss;

  // Backward.
  Matrix dlogits(1, sh.actions);
  for (std::size_t a = 0; a < sh.actions; ++a) dlogits(0, a) = std::exp(logits[a] - log_z);
  dlogits(0, target) -= 1.0;
  add_inplace(grad->b_out, dlogits);

  Matrix dy(nq, d);
  const double inv_q = 1.0 / static_cast<double>(nq);
  for (std::size_t r = 0; r < nq; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t a = 0; a < sh.actions; ++a) {
        grad->w_out(c, a) += fin.y(r, c) * dlogits(0, a) * inv_q;
        acc += spec.w_out(c, a) * dlogits(0, a);
      }
      dy(r, c) = acc * inv_q;
    }
  }
  const Matrix dxq = norm_backward(xq, spec.final_gain, fin.inv, dy, grad->final_gain);
  Matrix dx(n, d);
  for (std::size_t r = 0; r < nq; ++r)
    for (std::size_t c = 0; c < d; ++c) dx(queries[r], c) += dxq(r, c);

  for (std::size_t l = sh.layers; l-- > 0;) {
    const LayerWeights& w = spec.layers[l];
    LayerWeights& g = grad->layers[l];
    const LayerCache& c = caches[l];

    // Feed-forward.
    add_column_sums(g.b2, dx);
    add_inplace(g.w2, matmul_transpose_a(c.h, dx));
    Matrix du = matmul_transpose_b(dx, w.w2);
    for (std::size_t i = 0; i < du.size(); ++i) du.data()[i] *= gelu_derivative(c.u.data()[i]);
    add_column_sums(g.b1, du);
    add_inplace(g.w1, matmul_transpose_a(c.n2.y, du));
    const Matrix dn2 = matmul_transpose_b(du, w.w1);
    add_inplace(dx, norm_backward(c.x_mid, w.ff_gain, c.n2.inv, dn2, g.ff_gain));

    // Attention.
    add_inplace(g.wo, matmul_transpose_a(c.z, dx));
    const Matrix dz = matmul_transpose_b(dx, w.wo);
    Matrix dq(n, d), dk(n, d), dv(n, d);
    std::vector<double> da(n);
    for (std::size_t h = 0; h < heads; ++h) {
      const Matrix& a = c.att[h];
      for (std::size_t i = 0; i < n; ++i) {
        double row_dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) s += dz(i, h * dh + e) * c.v(j, h * dh + e);
          da[j] = s;
          row_dot += s * a(i, j);
          for (std::size_t e = 0; e < dh; ++e) dv(j, h * dh + e) += a(i, j) * dz(i, h * dh + e);
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const double ds = a(i, j) * (da[j] - row_dot) * scale;
          if (ds == 0.0) continue;
          for (std::size_t e = 0; e < dh; ++e) {
            dq(i, h * dh + e) += ds * c.k(j, h * dh + e);
            dk(j, h * dh + e) += ds * c.q(i, h * dh + e);
          }
        }
      }
    }
    add_inplace(g.wq, matmul_transpose_a(c.n1.y, dq));
    add_inplace(g.wk, matmul_transpose_a(c.n1.y, dk));
    add_inplace(g.wv, matmul_transpose_a(c.n1.y, dv));
    Matrix dn1 = matmul_transpose_b(dq, w.wq);
    add_inplace(dn1, matmul_transpose_b(dk, w.wk));
    add_inplace(dn1, matmul_transpose_b(dv, w.wv));
    add_inplace(dx, norm_backward(c.x_in, w.attn_gain, c.n1.inv, dn1, g.attn_gain));
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<std::size_t>(tokens.ids[i]);
    for (std::size_t c = 0; c < d; ++c) {
      grad->tok_emb(id, c) += dx(i, c);
      grad->pos_emb(i, c) += dx(i, c);
      for (std::size_t f = 0; f < sh.features; ++f) grad->feat_proj(f, c) += tokens.features(i, f) * dx(i, c);
    }
  }
  return loss;
}

namespace {

std::vector<Matrix*> parameters(PolicySpec& s) {
  std::vector<Matrix*> out;
  s.for_each_parameter([&](Matrix& m) { out.push_back(&m); });
  return out;
}

}  // namespace

TrainResult train(const PolicySpec& spec, const ToyDataset& data, const TrainOptions& options, Rng& rng) {
  if (!(options.lr >= 0.0) || !std::isfinite(options.lr)) throw InvalidInput("train: lr must be >= 0");
  if (options.epochs == 0) throw InvalidInput("train: epochs must be >= 1");
  if (options.batch_size == 0) throw InvalidInput("train: batch size must be >= 1");
  if (data.examples.empty()) throw InvalidInput("train: empty dataset");
  spec.validate();

  std::vector<TokenSequence> tokens;
  std::vector<std::size_t> targets;
  for (const auto& ex : data.examples) {
    tokens.push_back(tokenize(ex, spec.shape.action_queries));
    targets.push_back(ex.action);
  }

  TrainResult result{spec, {}};
  PolicySpec grad = PolicySpec::zeros(spec.shape);
  std::vector<Matrix*> params = parameters(result.spec);
  std::vector<Matrix*> grads = parameters(grad);
  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      for (Matrix* g : grads) g->fill(0.0);
      for (std::size_t b = start; b < end; ++b) {
        const double loss = loss_and_gradient(result.spec, tokens[order[b]], targets[order[b]], &grad);
        if (!std::isfinite(loss)) {
          throw DivergenceError("train: non-finite loss in epoch " + std::to_string(epoch + 1));
        }
        epoch_loss += loss;
      }
      const double step = options.lr / static_cast<double>(end - start);
      if (step == 0.0) continue;
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto dst = params[p]->data();
        auto src = grads[p]->data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= step * src[i];
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!result.epoch_loss.empty() && epoch_loss > 1.05 * result.epoch_loss.back()) {
      std::clog << "train: epoch " << epoch + 1 << " loss rose from " << result.epoch_loss.back() << " to "
                << epoch_loss << "\n";
    }
    result.epoch_loss.push_back(epoch_loss);
  }
  if (!result.spec.tok_emb.all_finite()) throw DivergenceError("train: weights became non-finite");
  return result;
}

TrainResult train_shortcut_policy(const ShortcutRecipe& recipe) {
  Rng root(recipe.seed);
  Rng data_rng = root.fork(1);
  Rng init_rng = root.fork(2);
  Rng order_rng = root.fork(3);
  const ToyDataset data = make_shortcut_dataset(recipe.scenes, recipe.dropout, data_rng);
  const PolicySpec init = PolicySpec::random(recipe.shape, init_rng, recipe.init_scale);
  return train(init, data, recipe.options, order_rng);
}

}  // namespace igar
