// Copyright 2026 The SMART Retrieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Token-wise readout adapter: r = normalize(W^T LN(h) + b), trained with
// in-batch InfoNCE over the late-interaction score of the adapted tokens.
// The backbone is frozen, so gradients stop at the LayerNorm parameters.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "smart/core_types.hpp"
#include "smart/error.hpp"
#include "smart/matrix.hpp"
#include "smart/random.hpp"
#include "smart/scoring.hpp"

namespace smart {

template <typename Scalar>
struct AdapterParams {
  std::vector<Scalar> ln_scale;    // H
  std::vector<Scalar> ln_shift;    // H
  BasicMatrix<Scalar> proj_weight; // H x d
  std::vector<Scalar> proj_bias;   // d
  Scalar ln_epsilon = static_cast<Scalar>(1e-6);

  std::size_t hidden_dim() const noexcept { return ln_scale.size(); }
  std::size_t output_dim() const noexcept { return proj_bias.size(); }

  // ln_scale = 1, ln_shift = 0, bias = 0, weights ~ U(+-sqrt(6 / (H + d))).
  static AdapterParams initialize(std::size_t hidden, std::size_t out,
                                  std::uint64_t seed) {
    if (hidden == 0 || out == 0) {
      throw Error(ErrorCode::kInvalidArgument, "adapter widths must be > 0");
    }
    AdapterParams p;
    p.ln_scale.assign(hidden, Scalar(1));
    p.ln_shift.assign(hidden, Scalar(0));
    p.proj_bias.assign(out, Scalar(0));
    p.proj_weight = BasicMatrix<Scalar>(hidden, out);
    Rng rng(seed);
    double limit = std::sqrt(6.0 / static_cast<double>(hidden + out));
    for (auto& w : p.proj_weight.data()) {
      w = static_cast<Scalar>(rng.uniform(-limit, limit));
    }
    return p;
  }

  static AdapterParams zeros_like(const AdapterParams& o) {
    AdapterParams p;
    p.ln_scale.assign(o.hidden_dim(), Scalar(0));
    p.ln_shift.assign(o.hidden_dim(), Scalar(0));
    p.proj_weight = BasicMatrix<Scalar>(o.hidden_dim(), o.output_dim());
    p.proj_bias.assign(o.output_dim(), Scalar(0));
    p.ln_epsilon = o.ln_epsilon;
    return p;
  }

  // Visits the trainable fields in their serialization order.
  template <typename Fn>
  void for_each_field(Fn&& fn) {
    fn(std::span<Scalar>(ln_scale));
    fn(std::span<Scalar>(ln_shift));
    fn(proj_weight.data());
    fn(std::span<Scalar>(proj_bias));
  }
  template <typename Fn>
  void for_each_field(Fn&& fn) const {
    fn(std::span<const Scalar>(ln_scale));
    fn(std::span<const Scalar>(ln_shift));
    fn(proj_weight.data());
    fn(std::span<const Scalar>(proj_bias));
  }

  std::size_t num_parameters() const {
    return 2 * hidden_dim() + hidden_dim() * output_dim() + output_dim();
  }

  void validate() const {
    const std::size_t h = hidden_dim(), d = output_dim();
    if (h == 0 || d == 0 || ln_shift.size() != h ||
        proj_weight.rows() != h || proj_weight.cols() != d) {
      throw Error(ErrorCode::kInvalidArgument, "adapter parameter shapes");
    }
    bool finite = std::isfinite(static_cast<double>(ln_epsilon));
    for_each_field([&](auto s) {
      for (auto v : s) finite = finite && std::isfinite(static_cast<double>(v));
    });
    if (!finite) {
      throw Error(ErrorCode::kInvalidArgument,
                  "adapter parameters must be finite");
    }
  }

  template <typename U>
  AdapterParams<U> cast() const {
    AdapterParams<U> p;
    p.ln_scale.assign(ln_scale.begin(), ln_scale.end());
    p.ln_shift.assign(ln_shift.begin(), ln_shift.end());
    p.proj_weight = proj_weight.template cast<U>();
    p.proj_bias.assign(proj_bias.begin(), proj_bias.end());
    p.ln_epsilon = static_cast<U>(ln_epsilon);
    return p;
  }

  friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

template <typename Scalar>
using AdapterGradients = AdapterParams<Scalar>;

// Intermediates kept for the backward pass.
template <typename Scalar>
struct AdapterActivations {
  BasicMatrix<Scalar> xhat;  // LN output before scale/shift, n x H
  BasicMatrix<Scalar> y;     // LN output, n x H
  BasicMatrix<Scalar> r;     // normalized readout, n x d
  std::vector<Scalar> znorm; // ||W^T y + b|| per row
};

template <typename Scalar, typename In>
AdapterActivations<Scalar> adapter_forward_cached(
    const BasicMatrix<In>& tokens, const AdapterParams<Scalar>& p) {
  const std::size_t n = tokens.rows(), h = p.hidden_dim(), d = p.output_dim();
  if (n > 0 && tokens.cols() != h) {
    throw Error(ErrorCode::kDimensionMismatch,
                "adapter input width " + std::to_string(tokens.cols()) +
                    " vs hidden width " + std::to_string(h));
  }
  AdapterActivations<Scalar> a;
  a.xhat = BasicMatrix<Scalar>(n, h);
  a.y = BasicMatrix<Scalar>(n, h);
  a.r = BasicMatrix<Scalar>(n, d);
  a.znorm.resize(n);
  std::vector<Scalar> z(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = tokens.row(i);
    Scalar mean = 0;
    for (auto v : x) mean += static_cast<Scalar>(v);
    mean /= static_cast<Scalar>(h);
    Scalar var = 0;
    for (auto v : x) {
      Scalar c = static_cast<Scalar>(v) - mean;
      var += c * c;
    }
    var /= static_cast<Scalar>(h);
    const Scalar inv_std = Scalar(1) / std::sqrt(var + p.ln_epsilon);
    for (std::size_t k = 0; k < h; ++k) {
      Scalar xh = (static_cast<Scalar>(x[k]) - mean) * inv_std;
      a.xhat(i, k) = xh;
      a.y(i, k) = p.ln_scale[k] * xh + p.ln_shift[k];
    }
    std::copy(p.proj_bias.begin(), p.proj_bias.end(), z.begin());
    for (std::size_t k = 0; k < h; ++k) {
      const Scalar yk = a.y(i, k);
      auto w = p.proj_weight.row(k);
      for (std::size_t o = 0; o < d; ++o) z[o] += yk * w[o];
    }
    Scalar zz = 0;
    for (auto v : z) zz += v * v;
    const Scalar zn = std::sqrt(zz);
    if (!(static_cast<double>(zn) > kZeroNormThreshold)) {
      throw Error(ErrorCode::kZeroNormProjection,
                  "projected row collapsed to zero", i);
    }
    a.znorm[i] = zn;
    for (std::size_t o = 0; o < d; ++o) a.r(i, o) = z[o] / zn;
  }
  return a;
}

template <typename Scalar, typename In>
BasicMatrix<Scalar> adapter_forward(const BasicMatrix<In>& tokens,
                                    const AdapterParams<Scalar>& p) {
  return adapter_forward_cached<Scalar>(tokens, p).r;
}

// Readout for PreparedCorpus / prepare(); evaluates in 64-bit and stores
// the adapted rows in 32-bit for the blocked kernel.
inline TokenReadout make_readout(const AdapterParams<double>& params) {
  auto shared = std::make_shared<const AdapterParams<double>>(params);
  return [shared](const Matrix& raw) {
    return adapter_forward<double>(raw, *shared).cast<float>();
  };
}

inline Matrix valid_rows(const SequenceEmbedding& emb, RoleSet exclude) {
  auto idx = valid_indices(emb, exclude);
  Matrix out(idx.size(), emb.dim());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = emb.tokens().row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

// MaxSim over adapter outputs; the pooled path is not involved.
inline double adapted_late_score(const SequenceEmbedding& q,
                                 const SequenceEmbedding& c,
                                 const AdapterParams<double>& params,
                                 const ScoringConfig& cfg) {
  auto qr = valid_rows(q, cfg.query_exclude_roles);
  auto cr = valid_rows(c, cfg.candidate_exclude_roles);
  detail::check_nonempty(qr.rows(), cr.rows());
  return maxsim_reference_normalized(adapter_forward<double>(qr, params),
                                     adapter_forward<double>(cr, params));
}

// ---------------------------------------------------------------------------
// InfoNCE

inline double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// -log softmax of the positive among {pos} U negs at temperature tau.
inline double infonce_loss(double pos_score, std::span<const double> neg_scores,
                           double tau) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  }
  if (neg_scores.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "at least one negative required");
  }
  // log(1 + sum exp(g)) with g relative to the positive; log1p keeps the
  // saturated regime (all g << 0) from cancelling to zero.
  std::vector<double> gaps;
  gaps.reserve(neg_scores.size());
  double m = 0.0;
  for (double s : neg_scores) {
    gaps.push_back((s - pos_score) / tau);
    m = std::max(m, gaps.back());
  }
  double tail = 0.0;
  for (double g : gaps) tail += std::exp(g - m);
  if (m == 0.0) return std::log1p(tail);
  return std::max(0.0, m + std::log(std::exp(-m) + tail));
}

// ---------------------------------------------------------------------------
// Training

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  double temperature = 0.05;
  double learning_rate = 1e-2;
  std::size_t steps = 100;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (!(temperature > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
    }
    if (batch_size < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "batch_size must be >= 2 for in-batch negatives");
    }
    if (!(learning_rate >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "learning_rate must be non-negative");
    }
  }
};

// Raw valid token rows of one (query, positive) pair.
template <typename Scalar>
struct TrainingPair {
  BasicMatrix<Scalar> query;
  BasicMatrix<Scalar> positive;
};

template <typename Scalar>
TrainingPair<Scalar> make_training_pair(const SequenceEmbedding& query,
                                        const SequenceEmbedding& positive,
                                        const ScoringConfig& cfg = {}) {
  return {valid_rows(query, cfg.query_exclude_roles).cast<Scalar>(),
          valid_rows(positive, cfg.candidate_exclude_roles).cast<Scalar>()};
}

template <typename Scalar>
struct LossAndGradients {
  double loss = 0.0;
  AdapterGradients<Scalar> grad;
};

namespace detail {

// dL/dr -> parameter gradients for one token matrix.
template <typename Scalar>
void backprop_tokens(const AdapterActivations<Scalar>& act,
                     const BasicMatrix<Scalar>& d_r,
                     const AdapterParams<Scalar>& p,
                     AdapterGradients<Scalar>& g) {
  const std::size_t h = p.hidden_dim(), d = p.output_dim();
  std::vector<Scalar> dz(d), dy(h);
  for (std::size_t i = 0; i < act.r.rows(); ++i) {
    auto r = act.r.row(i);
    auto dr = d_r.row(i);
    Scalar proj = 0;
    for (std::size_t o = 0; o < d; ++o) proj += r[o] * dr[o];
    bool any = false;
    for (std::size_t o = 0; o < d; ++o) {
      dz[o] = (dr[o] - r[o] * proj) / act.znorm[i];
      any = any || dz[o] != Scalar(0);
    }
    if (!any) continue;
    for (std::size_t o = 0; o < d; ++o) g.proj_bias[o] += dz[o];
    for (std::size_t k = 0; k < h; ++k) {
      const Scalar yk = act.y(i, k);
      auto w = p.proj_weight.row(k);
      auto gw = g.proj_weight.row(k);
      Scalar acc = 0;
      for (std::size_t o = 0; o < d; ++o) {
        gw[o] += yk * dz[o];
        acc += w[o] * dz[o];
      }
      dy[k] = acc;
    }
    for (std::size_t k = 0; k < h; ++k) {
      g.ln_scale[k] += dy[k] * act.xhat(i, k);
      g.ln_shift[k] += dy[k];
    }
  }
}

}  // namespace detail

// Mean in-batch InfoNCE over s_late of adapted tokens and its exact
// gradient. For item b the positive is batch[b].positive and the negatives
// are the positives of every other item. MaxSim routes gradient to the
// argmax candidate token only (lowest index on ties).
template <typename Scalar>
LossAndGradients<Scalar> adapter_loss_and_gradients(
    std::span<const TrainingPair<Scalar>> data,
    std::span<const std::size_t> batch, const AdapterParams<Scalar>& p,
    double tau) {
  const std::size_t nb = batch.size();
  if (nb < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch needs at least two items for in-batch negatives");
  }
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  }
  const std::size_t d = p.output_dim();

  std::vector<AdapterActivations<Scalar>> qa, pa;
  qa.reserve(nb);
  pa.reserve(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& item = data[batch[b]];
    if (item.query.rows() == 0) {
      throw Error(ErrorCode::kEmptyQueryTokens, "training query", batch[b]);
    }
    if (item.positive.rows() == 0) {
      throw Error(ErrorCode::kEmptyCandidateTokens, "training positive",
                  batch[b]);
    }
    qa.push_back(adapter_forward_cached<Scalar>(item.query, p));
    pa.push_back(adapter_forward_cached<Scalar>(item.positive, p));
  }

  // scores[b][c] and argmax[b][c][i]
  std::vector<std::vector<double>> scores(nb, std::vector<double>(nb));
  std::vector<std::vector<std::vector<std::size_t>>> argmax(
      nb, std::vector<std::vector<std::size_t>>(nb));
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& qr = qa[b].r;
    for (std::size_t c = 0; c < nb; ++c) {
      const auto& cr = pa[c].r;
      auto& am = argmax[b][c];
      am.resize(qr.rows());
      double sum = 0.0;
      for (std::size_t i = 0; i < qr.rows(); ++i) {
        Scalar best = -std::numeric_limits<Scalar>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < cr.rows(); ++j) {
          Scalar s = 0;
          for (std::size_t o = 0; o < d; ++o) s += qr(i, o) * cr(j, o);
          if (s > best) {
            best = s;
            arg = j;
          }
        }
        am[i] = arg;
        sum += static_cast<double>(best);
      }
      scores[b][c] = sum / static_cast<double>(qr.rows());
    }
  }

  LossAndGradients<Scalar> out;
  out.grad = AdapterGradients<Scalar>::zeros_like(p);
  std::vector<BasicMatrix<Scalar>> dq(nb), dp(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    dq[b] = BasicMatrix<Scalar>(qa[b].r.rows(), d);
    dp[b] = BasicMatrix<Scalar>(pa[b].r.rows(), d);
  }

  std::vector<double> logits(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nb; ++c) logits[c] = scores[b][c] / tau;
    const double lse = log_sum_exp(logits);
    out.loss += lse - logits[b];
    const auto& qr = qa[b].r;
    const double inv_n = 1.0 / static_cast<double>(qr.rows());
    for (std::size_t c = 0; c < nb; ++c) {
      double prob = std::exp(logits[c] - lse);
      double g_score = (prob - (b == c ? 1.0 : 0.0)) /
                       (tau * static_cast<double>(nb));
      const auto coef = static_cast<Scalar>(g_score * inv_n);
      const auto& cr = pa[c].r;
      for (std::size_t i = 0; i < qr.rows(); ++i) {
        const std::size_t j = argmax[b][c][i];
        for (std::size_t o = 0; o < d; ++o) {
          dq[b](i, o) += coef * cr(j, o);
          dp[c](j, o) += coef * qr(i, o);
        }
      }
    }
  }
  out.loss /= static_cast<double>(nb);

  for (std::size_t b = 0; b < nb; ++b) {
    detail::backprop_tokens(qa[b], dq[b], p, out.grad);
    detail::backprop_tokens(pa[b], dp[b], p, out.grad);
  }
  return out;
}

template <typename Scalar>
LossAndGradients<Scalar> adapter_gradients(
    std::span<const TrainingPair<Scalar>> batch,
    const AdapterParams<Scalar>& p, const TrainConfig& cfg) {
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0);
  return adapter_loss_and_gradients<Scalar>(batch, idx, p, cfg.temperature);
}

// Mean per-item loss over consecutive batches of `batch_size` in dataset
// order. A trailing partial batch is included when it has >= 2 items.
template <typename Scalar>
double mean_infonce_loss(std::span<const TrainingPair<Scalar>> data,
                         const AdapterParams<Scalar>& p, double tau,
                         std::size_t batch_size) {
  double total = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::size_t end = std::min(data.size(), start + batch_size);
    if (end - start < 2) break;
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto lg = adapter_loss_and_gradients<Scalar>(data, idx, p, tau);
    total += lg.loss * static_cast<double>(idx.size());
    count += idx.size();
  }
  if (count == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "need at least two items to evaluate the loss");
  }
  return total / static_cast<double>(count);
}

template <typename Scalar>
struct TrainResult {
  AdapterParams<Scalar> params;
  std::vector<double> loss_trace;  // batch loss before each update
};

template <typename Scalar>
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const AdapterParams<Scalar>& like)
      : cfg_(cfg),
        m_(AdapterParams<Scalar>::zeros_like(like)),
        v_(AdapterParams<Scalar>::zeros_like(like)) {}

  void step(AdapterParams<Scalar>& p, AdapterGradients<Scalar>& g) {
    ++t_;
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      apply(p, g, m_, v_, [&](Scalar& w, Scalar gw, Scalar&, Scalar&) {
        w -= static_cast<Scalar>(lr) * gw;
      });
      return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.adam_epsilon;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    apply(p, g, m_, v_, [&](Scalar& w, Scalar gw, Scalar& m, Scalar& v) {
      m = static_cast<Scalar>(b1 * m + (1.0 - b1) * gw);
      v = static_cast<Scalar>(b2 * v + (1.0 - b2) * gw * gw);
      double mh = m / c1, vh = v / c2;
      w -= static_cast<Scalar>(lr * mh / (std::sqrt(vh) + eps));
    });
  }

 private:
  template <typename Fn>
  static void apply(AdapterParams<Scalar>& p, AdapterGradients<Scalar>& g,
                    AdapterParams<Scalar>& m, AdapterParams<Scalar>& v,
                    Fn&& fn) {
    std::vector<std::span<Scalar>> ps, gs, ms, vs;
    p.for_each_field([&](std::span<Scalar> s) { ps.push_back(s); });
    g.for_each_field([&](std::span<Scalar> s) { gs.push_back(s); });
    m.for_each_field([&](std::span<Scalar> s) { ms.push_back(s); });
    v.for_each_field([&](std::span<Scalar> s) { vs.push_back(s); });
    for (std::size_t f = 0; f < ps.size(); ++f) {
      for (std::size_t k = 0; k < ps[f].size(); ++k) {
        fn(ps[f][k], gs[f][k], ms[f][k], vs[f][k]);
      }
    }
  }

  TrainConfig cfg_;
  AdapterParams<Scalar> m_, v_;
  std::uint64_t t_ = 0;
};

// Runs cfg.steps optimizer steps on batches drawn from a seeded reshuffle
// of `dataset` (a new permutation whenever fewer than batch_size items
// remain). Only `params` is written.
template <typename Scalar>
TrainResult<Scalar> train_adapter(std::span<const TrainingPair<Scalar>> dataset,
                                  AdapterParams<Scalar> params,
                                  const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  if (dataset.size() < cfg.batch_size) {
    throw Error(ErrorCode::kInvalidArgument,
                "dataset smaller than batch_size");
  }
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t cursor = 0;

  Optimizer<Scalar> opt(cfg, params);
  TrainResult<Scalar> result;
  result.loss_trace.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cursor + cfg.batch_size > order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    std::span<const std::size_t> batch(order.data() + cursor, cfg.batch_size);
    cursor += cfg.batch_size;
    auto lg = adapter_loss_and_gradients<Scalar>(dataset, batch, params,
                                                 cfg.temperature);
    if (!std::isfinite(lg.loss)) {
      throw Error(ErrorCode::kNonFiniteLoss,
                  "loss is not finite (last finite: " +
                      (result.loss_trace.empty()
                           ? std::string("none")
                           : std::to_string(result.loss_trace.back())) +
                      ")",
                  step);
    }
    result.loss_trace.push_back(lg.loss);
    opt.step(params, lg.grad);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace smart
