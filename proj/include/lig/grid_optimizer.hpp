#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lig/adam.hpp"
#include "lig/common.hpp"
#include "lig/decoder.hpp"
#include "lig/geometry.hpp"
#include "lig/latent_grid.hpp"
#include "lig/part_corpus.hpp"
#include "lig/train.hpp"

namespace lig {

struct OptimConfig {
  std::size_t samples_per_point = 10;
  double sigma = 0.01;
  double latent_penalty = 1e-2;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32768;
  std::size_t steps = 10000;
  std::uint64_t seed = 0;
  /// Called after every step with (step, loss, batch accuracy); may be empty.
  std::function<void(std::size_t, double, double)> on_step;

  void validate() const {
    require(samples_per_point >= 1, "samples per point must be >= 1");
    require(sigma > 0, "sigma must be positive");
    require(latent_penalty >= 0, "latent penalty must be non-negative");
    require(learning_rate > 0, "learning rate must be positive");
    require(batch_size >= 1, "batch size must be >= 1");
  }
};

/// Offsets along each normal, d ~ N(0, sigma^2); d > 0 is outside (label 0).
inline std::vector<SignedSample> make_sign_samples(const OrientedPointCloud& points, std::size_t k, double sigma,
                                                   std::uint64_t seed) {
  check_unit_normals(points);
  require(sigma > 0, "sigma must be positive");
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<SignedSample> out;
  out.reserve(points.size() * k);
  for (const auto& p : points) {
    for (std::size_t s = 0; s < k; ++s) {
      double d = 0;
      while (d == 0) d = g(rng);
      out.push_back({p.position + d * p.normal, static_cast<std::uint8_t>(d < 0 ? 1 : 0)});
    }
  }
  return out;
}

struct OptimStep {
  double loss = 0;
  double accuracy = 0;
};

struct OptimResult {
  LatentGrid grid;
  std::vector<OptimStep> trace;
};

inline void write_trace_csv(const std::vector<OptimStep>& trace, std::ostream& os) {
  os << "step,loss,accuracy\n";
  char buf[96];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.6f\n", i, trace[i].loss, trace[i].accuracy);
    os << buf;
  }
}

namespace detail {

inline constexpr std::size_t kOptimChunk = 2048;

struct BatchTerms {
  double bce = 0;
  std::size_t correct = 0;
};

/// Mean-free BCE sum, correct count and latent gradient of one chunk of a batch.
inline BatchTerms chunk_terms(const LatentGrid& grid, const DecoderParams& params,
                              std::span<const Stencil* const> stencils, std::span<const std::uint8_t> labels,
                              double inv_batch, std::span<float> grad, BlendEvaluator& ev) {
  const auto z = ev.forward(grid, params, stencils);
  BatchTerms t;
  std::vector<double> dz(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    t.bce += bce_with_logits(z[i], labels[i]);
    t.correct += (z[i] > 0) == (labels[i] == 1);
    dz[i] = (sigmoid(z[i]) - labels[i]) * inv_batch;
  }
  ev.backward(grid, params, dz, grad);
  return t;
}

}  // namespace detail

/// Objective on a fixed batch: mean BCE + (lambda / |G|) * sum_j ||c_j||. Writes its latent gradient
/// (slot-major) into grad when non-empty.
inline double grid_objective(const LatentGrid& grid, const DecoderParams& params, std::span<const SignedSample> batch,
                             double latent_penalty, std::span<float> grad = {}, double* accuracy = nullptr) {
  require(!batch.empty(), "empty batch");
  std::vector<Stencil> st(batch.size());
  std::vector<const Stencil*> ptr(batch.size());
  std::vector<std::uint8_t> labels(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    st[i] = make_stencil(grid, batch[i].position);
    ptr[i] = &st[i];
    labels[i] = batch[i].label;
  }
  std::vector<float> local(grid.latent_data().size(), 0.0f);
  BlendEvaluator ev;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto t = detail::chunk_terms(grid, params, ptr, labels, inv_b, local, ev);
  double reg = 0;
  const double scale = grid.empty() ? 0.0 : latent_penalty / static_cast<double>(grid.size());
  for (std::size_t s = 0; s < grid.size(); ++s) {
    reg += l2_norm(grid.latent(s));
    add_norm_gradient(grid.latent(s), scale, std::span<float>(local).subspan(s * grid.latent_dim(), grid.latent_dim()));
  }
  if (!grad.empty()) {
    require(grad.size() == local.size(), "gradient buffer size mismatch");
    std::copy(local.begin(), local.end(), grad.begin());
  }
  if (accuracy) *accuracy = static_cast<double>(t.correct) * inv_b;
  return t.bce * inv_b + scale * reg;
}

/// Adam on all latents of grid against the signed samples; decoder frozen. Mini-batches are drawn
/// with replacement. Chunked evaluation makes the result independent of the thread count.
inline OptimResult optimize(LatentGrid grid, const DecoderParams& params, const std::vector<SignedSample>& samples,
                            const OptimConfig& cfg) {
  cfg.validate();
  require(!samples.empty(), "no signed samples to optimize against");
  if (grid.latent_dim() != params.latent_dim())
    throw InvalidArgument("grid latent_dim " + std::to_string(grid.latent_dim()) + " does not match decoder latent_dim " +
                          std::to_string(params.latent_dim()));
  const std::size_t n = samples.size();
  std::vector<Stencil> stencils(n);
  parallel_ranges(n, 8192, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) stencils[i] = make_stencil(grid, samples[i].position);
  });

  const std::size_t B = cfg.batch_size;
  const std::size_t chunks = (B + detail::kOptimChunk - 1) / detail::kOptimChunk;
  const std::size_t nlat = grid.latent_data().size();
  const int d = grid.latent_dim();
  std::vector<std::vector<float>> chunk_grad(chunks, std::vector<float>(nlat));
  std::vector<detail::BatchTerms> chunk_terms(chunks);
  std::vector<BlendEvaluator> evaluators(chunks);
  std::vector<const Stencil*> batch(B);
  std::vector<std::uint8_t> labels(B);
  std::vector<float> grad(nlat);

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  AdamState state(nlat);
  Rng rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const double inv_b = 1.0 / static_cast<double>(B);
  const double scale = grid.empty() ? 0.0 : cfg.latent_penalty / static_cast<double>(grid.size());

  OptimResult res;
  res.trace.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t i = pick(rng);
      batch[b] = &stencils[i];
      labels[b] = samples[i].label;
    }
    parallel_chunks(chunks, [&](std::size_t c) {
      const std::size_t lo = c * detail::kOptimChunk, hi = std::min(B, lo + detail::kOptimChunk);
      auto& g = chunk_grad[c];
      std::fill(g.begin(), g.end(), 0.0f);
      chunk_terms[c] = detail::chunk_terms(grid, params, std::span(batch).subspan(lo, hi - lo),
                                           std::span(labels).subspan(lo, hi - lo), inv_b, g, evaluators[c]);
    });
    std::fill(grad.begin(), grad.end(), 0.0f);
    double bce = 0;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
      bce += chunk_terms[c].bce;
      correct += chunk_terms[c].correct;
      for (std::size_t k = 0; k < nlat; ++k) grad[k] += chunk_grad[c][k];
    }
    double reg = 0;
    if (scale > 0) {
      for (std::size_t s = 0; s < grid.size(); ++s) {
        reg += l2_norm(grid.latent(s));
        add_norm_gradient(grid.latent(s), scale, std::span<float>(grad).subspan(s * d, d));
      }
    }
    const double loss = bce * inv_b + scale * reg;
    if (!std::isfinite(loss)) throw NumericalError("non-finite loss at step " + std::to_string(step));
    const double acc = static_cast<double>(correct) * inv_b;
    res.trace.push_back({loss, acc});
    if (cfg.on_step) cfg.on_step(step, loss, acc);
    state.step(grid.latent_data(), grad, adam);
  }
  res.grid = std::move(grid);
  return res;
}

/// Fraction of samples classified correctly (logit > 0 means interior).
inline double grid_accuracy(const LatentGrid& grid, const DecoderParams& params, std::span<const SignedSample> samples) {
  if (samples.empty()) return 0.0;
  std::vector<Point3> xs(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) xs[i] = samples[i].position;
  const auto z = query_batch(grid, params, xs);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < z.size(); ++i) ok += (z[i] > 0) == (samples[i].label == 1);
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

/// Part scale for a point density: nearest of the anchor densities in log space, ties going to
/// the larger scale.
inline double choose_part_scale(double density) {
  if (!(density > 0) || !std::isfinite(density)) throw InvalidArgument("density must be positive");
  static constexpr std::array<std::pair<double, double>, 4> anchors{
      {{20.0, 0.75}, {100.0, 0.50}, {500.0, 0.35}, {1000.0, 0.25}}};
  double best = anchors[0].second, best_d = std::numeric_limits<double>::infinity();
  const double ld = std::log(density);
  for (const auto& [dens, s] : anchors) {
    const double dist = std::abs(ld - std::log(dens));
    if (dist < best_d || (dist == best_d && s > best)) {
      best_d = dist;
      best = s;
    }
  }
  return best;
}

}  // namespace lig
