#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lig/adam.hpp"
#include "lig/common.hpp"
#include "lig/decoder.hpp"
#include "lig/part_corpus.hpp"

namespace lig {

/// Numerically stable binary cross-entropy on a logit; label 1 = interior.
inline double bce_with_logits(double z, double label) {
  return std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Accuracy of logit > 0 as "interior" against labels.
inline double classification_accuracy(std::span<const float> logits, std::span<const std::uint8_t> labels) {
  if (logits.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) ok += ((logits[i] > 0.0f) == (labels[i] == 1));
  return static_cast<double>(ok) / static_cast<double>(logits.size());
}

/// Gradient of lambda * ||c||_2 (zero at the origin).
inline void add_norm_gradient(std::span<const float> c, double scale, std::span<float> grad) {
  double n2 = 0;
  for (float v : c) n2 += static_cast<double>(v) * v;
  const double n = std::sqrt(n2);
  if (n <= 0) return;
  for (std::size_t i = 0; i < c.size(); ++i) grad[i] += static_cast<float>(scale * c[i] / n);
}

inline double l2_norm(std::span<const float> c) {
  double n2 = 0;
  for (float v : c) n2 += static_cast<double>(v) * v;
  return std::sqrt(n2);
}

struct TrainConfig {
  std::size_t batch_parts = 32;
  std::size_t samples_per_part = 2048;
  double latent_penalty = 1e-2;
  double learning_rate = 1e-3;
  std::size_t steps = 10000;
  std::uint64_t seed = 0;
  double latent_init_std = 1e-2;
  DecoderArch arch = desk_arch();
  /// Called every step with (step, loss); may be empty.
  std::function<void(std::size_t, double)> on_step;
};

struct TrainResult {
  DecoderParams params;
  Eigen::MatrixXf latents;  // latent_dim x parts
  std::vector<double> loss_trace;
};

namespace detail {

struct LayerAdam {
  AdamState weight, bias;
};

inline std::vector<LayerAdam> make_layer_adam(const DecoderParams& p) {
  std::vector<LayerAdam> out;
  for (const auto& l : p.layers())
    out.push_back({AdamState(static_cast<std::size_t>(l.weight.size())), AdamState(static_cast<std::size_t>(l.bias.size()))});
  return out;
}

inline void apply_adam(DecoderParams& p, const DecoderGrads& g, std::vector<LayerAdam>& st, const AdamConfig& cfg) {
  for (std::size_t l = 0; l < p.layers().size(); ++l) {
    auto& L = p.layers()[l];
    const auto& G = g.layers[l];
    st[l].weight.step({L.weight.data(), static_cast<std::size_t>(L.weight.size())},
                      {G.weight.data(), static_cast<std::size_t>(G.weight.size())}, cfg);
    st[l].bias.step({L.bias.data(), static_cast<std::size_t>(L.bias.size())},
                    {G.bias.data(), static_cast<std::size_t>(G.bias.size())}, cfg);
  }
}

inline void check_finite_loss(double loss, std::size_t step) {
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss at step " + std::to_string(step));
}

}  // namespace detail

/// Joint optimization of decoder weights and one free latent per part, minimizing
/// mean BCE-with-logits over the batch samples + lambda * mean over batch parts of ||c_i||_2.
inline TrainResult train_decoder(const std::vector<CorpusPart>& corpus, const TrainConfig& cfg,
                                 const DecoderParams* init = nullptr) {
  require(!corpus.empty(), "training corpus is empty");
  require(cfg.batch_parts > 0 && cfg.samples_per_part > 0 && cfg.steps > 0, "training sizes must be positive");
  require(cfg.learning_rate > 0 && cfg.latent_penalty >= 0, "invalid training hyperparameters");
  for (const auto& p : corpus) require(!p.samples.empty(), "corpus part without samples");

  TrainResult res;
  res.params = init ? *init : DecoderParams::random(cfg.arch, mix_seed(cfg.seed, 1));
  const int d = res.params.latent_dim();
  const auto n_parts = corpus.size();
  res.latents.resize(d, static_cast<Eigen::Index>(n_parts));
  {
    Rng rng(mix_seed(cfg.seed, 2));
    std::normal_distribution<float> g(0.0f, static_cast<float>(cfg.latent_init_std));
    for (Eigen::Index j = 0; j < res.latents.cols(); ++j)
      for (int i = 0; i < d; ++i) res.latents(i, j) = g(rng);
  }
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  auto layer_state = detail::make_layer_adam(res.params);
  std::vector<AdamState> latent_state(n_parts, AdamState(static_cast<std::size_t>(d)));
  DecoderGrads grads = DecoderGrads::zeros_like(res.params);
  DecoderCache cache;
  Eigen::MatrixXf d_input;
  Rng rng(mix_seed(cfg.seed, 3));
  std::vector<std::size_t> order(n_parts);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bp = std::min(cfg.batch_parts, n_parts);

  std::vector<std::size_t> batch(bp);
  std::vector<std::uint8_t> labels;
  std::vector<float> d_logits;
  res.loss_trace.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    // Partial Fisher-Yates: first bp entries of `order` become the batch.
    for (std::size_t i = 0; i < bp; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_parts - 1);
      std::swap(order[i], order[pick(rng)]);
      batch[i] = order[i];
    }
    std::vector<std::size_t> counts(bp);
    std::size_t total = 0;
    for (std::size_t b = 0; b < bp; ++b) {
      counts[b] = std::min(cfg.samples_per_part, corpus[batch[b]].samples.size());
      total += counts[b];
    }
    cache.input.resize(res.params.arch().input_dim(), static_cast<Eigen::Index>(total));
    labels.resize(total);
    Eigen::Index col = 0;
    for (std::size_t b = 0; b < bp; ++b) {
      const auto& samples = corpus[batch[b]].samples;
      const bool all = cfg.samples_per_part >= samples.size();
      std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
      const std::span<const float> c(res.latents.col(static_cast<Eigen::Index>(batch[b])).data(), d);
      for (std::size_t s = 0; s < counts[b]; ++s, ++col) {
        const auto& smp = samples[all ? s : pick(rng)];
        write_input_column(cache.input, col, c, smp.position.cast<float>());
        labels[col] = smp.label;
      }
    }
    forward(res.params, cache);
    const auto logits = cache.logits();
    d_logits.resize(total);
    double loss = 0;
    const double inv_n = 1.0 / static_cast<double>(total);
    for (std::size_t i = 0; i < total; ++i) {
      loss += bce_with_logits(logits[i], labels[i]);
      d_logits[i] = static_cast<float>((sigmoid(logits[i]) - labels[i]) * inv_n);
    }
    loss *= inv_n;
    const double reg_scale = cfg.latent_penalty / static_cast<double>(bp);
    for (std::size_t b = 0; b < bp; ++b)
      loss += reg_scale * l2_norm({res.latents.col(static_cast<Eigen::Index>(batch[b])).data(), static_cast<std::size_t>(d)});
    detail::check_finite_loss(loss, step);

    grads.set_zero();
    backward(res.params, cache, d_logits, &d_input, &grads);
    detail::apply_adam(res.params, grads, layer_state, adam);
    col = 0;
    std::vector<float> g(static_cast<std::size_t>(d));
    for (std::size_t b = 0; b < bp; ++b) {
      std::fill(g.begin(), g.end(), 0.0f);
      for (std::size_t s = 0; s < counts[b]; ++s, ++col)
        for (int i = 0; i < d; ++i) g[i] += d_input(i, col);
      float* c = res.latents.col(static_cast<Eigen::Index>(batch[b])).data();
      add_norm_gradient({c, static_cast<std::size_t>(d)}, reg_scale, g);
      latent_state[batch[b]].step({c, static_cast<std::size_t>(d)}, g, adam);
    }
    res.loss_trace.push_back(loss);
    if (cfg.on_step) cfg.on_step(step, loss);
  }
  return res;
}

struct LatentFitConfig {
  std::size_t steps = 1000;
  double learning_rate = 1e-2;
  double latent_penalty = 1e-2;
  double latent_init_std = 1e-2;
  std::uint64_t seed = 0;
};

struct LatentFitResult {
  std::vector<float> latent;
  std::vector<double> loss_trace;
  double accuracy = 0;
};

/// Latent-only fit of one part's samples against a frozen decoder (full batch).
inline LatentFitResult fit_latent(const DecoderParams& params, const std::vector<SignedSample>& samples,
                                  const LatentFitConfig& cfg) {
  require(!samples.empty(), "no samples to fit");
  const int d = params.latent_dim();
  LatentFitResult res;
  res.latent.resize(static_cast<std::size_t>(d));
  Rng rng(cfg.seed);
  std::normal_distribution<float> g0(0.0f, static_cast<float>(cfg.latent_init_std));
  for (float& v : res.latent) v = g0(rng);
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  AdamState state(static_cast<std::size_t>(d));
  DecoderCache cache;
  Eigen::MatrixXf d_input;
  const auto n = samples.size();
  std::vector<std::uint8_t> labels(n);
  cache.input.resize(params.arch().input_dim(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    write_input_column(cache.input, static_cast<Eigen::Index>(i), res.latent, samples[i].position.cast<float>());
    labels[i] = samples[i].label;
  }
  std::vector<float> d_logits(n), grad(static_cast<std::size_t>(d));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) cache.input(k, static_cast<Eigen::Index>(i)) = res.latent[k];
    forward(params, cache);
    const auto logits = cache.logits();
    if (step == cfg.steps) {
      res.accuracy = classification_accuracy(logits, labels);
      break;
    }
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      loss += bce_with_logits(logits[i], labels[i]);
      d_logits[i] = static_cast<float>((sigmoid(logits[i]) - labels[i]) * inv_n);
    }
    loss = loss * inv_n + cfg.latent_penalty * l2_norm(res.latent);
    detail::check_finite_loss(loss, step);
    res.loss_trace.push_back(loss);
    backward(params, cache, d_logits, &d_input, nullptr);
    std::fill(grad.begin(), grad.end(), 0.0f);
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) grad[k] += d_input(k, static_cast<Eigen::Index>(i));
    add_norm_gradient(res.latent, cfg.latent_penalty, grad);
    state.step(res.latent, grad, adam);
  }
  return res;
}

/// Accuracy of a decoder + latent on a part's samples.
inline double part_accuracy(const DecoderParams& params, std::span<const float> latent,
                            const std::vector<SignedSample>& samples) {
  DecoderCache cache;
  cache.input.resize(params.arch().input_dim(), static_cast<Eigen::Index>(samples.size()));
  std::vector<std::uint8_t> labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    write_input_column(cache.input, static_cast<Eigen::Index>(i), latent, samples[i].position.cast<float>());
    labels[i] = samples[i].label;
  }
  forward(params, cache);
  return classification_accuracy(cache.logits(), labels);
}

}  // namespace lig
