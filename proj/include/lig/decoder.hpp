#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lig/binary_io.hpp"
#include "lig/common.hpp"

namespace lig {

/// Shape of the implicit decoder: (latent ++ xyz) -> hidden layers with input skips -> logit.
struct DecoderArch {
  int latent_dim = 32;
  std::vector<int> hidden{512, 256, 128, 64};
  float leaky_slope = 0.02f;

  int input_dim() const { return latent_dim + 3; }
};

/// Smaller widths used for laptop-scale training and the bundled demo weights.
inline DecoderArch desk_arch() {
  DecoderArch a;
  a.hidden = {128, 64, 32, 32};
  return a;
}

struct DenseLayer {
  Eigen::MatrixXf weight;  // out x in, column-major
  Eigen::VectorXf bias;
};

class DecoderParams {
 public:
  DecoderParams() = default;

  DecoderParams(DecoderArch arch, std::vector<DenseLayer> layers) : arch_(std::move(arch)), layers_(std::move(layers)) {
    validate();
  }

  /// Zero-initialized parameters.
  static DecoderParams zeros(const DecoderArch& arch) {
    std::vector<DenseLayer> layers;
    for (auto [rows, cols] : layer_shapes(arch))
      layers.push_back({Eigen::MatrixXf::Zero(rows, cols), Eigen::VectorXf::Zero(rows)});
    return DecoderParams(arch, std::move(layers));
  }

  /// Kaiming-normal hidden layers (leaky-ReLU gain), small output layer, zero biases.
  static DecoderParams random(const DecoderArch& arch, std::uint64_t seed) {
    DecoderParams p = zeros(arch);
    Rng rng(seed);
    for (std::size_t l = 0; l < p.layers_.size(); ++l) {
      auto& W = p.layers_[l].weight;
      const bool last = l + 1 == p.layers_.size();
      const double gain = last ? 1.0 : std::sqrt(2.0 / (1.0 + arch.leaky_slope * arch.leaky_slope));
      std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(W.cols())));
      for (Eigen::Index c = 0; c < W.cols(); ++c)
        for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = static_cast<float>(dist(rng));
    }
    return p;
  }

  static std::vector<std::pair<int, int>> layer_shapes(const DecoderArch& arch) {
    require(arch.latent_dim >= 1, "latent_dim must be >= 1");
    std::vector<std::pair<int, int>> shapes;
    int prev = 0;
    for (int width : arch.hidden) {
      require(width >= 1, "hidden widths must be >= 1");
      shapes.emplace_back(width, prev + arch.input_dim());
      prev = width;
    }
    shapes.emplace_back(1, prev + arch.input_dim());
    return shapes;
  }

  const DecoderArch& arch() const { return arch_; }
  int latent_dim() const { return arch_.latent_dim; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool operator==(const DecoderParams& o) const {
    if (arch_.latent_dim != o.arch_.latent_dim || arch_.hidden != o.arch_.hidden ||
        layers_.size() != o.layers_.size())
      return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& a = layers_[l];
      const auto& b = o.layers_[l];
      if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
      if (std::memcmp(a.weight.data(), b.weight.data(), sizeof(float) * a.weight.size()) != 0) return false;
      if (std::memcmp(a.bias.data(), b.bias.data(), sizeof(float) * a.bias.size()) != 0) return false;
    }
    return true;
  }

 private:
  void validate() const {
    const auto shapes = layer_shapes(arch_);
    if (shapes.size() != layers_.size()) throw InvalidArgument("decoder layer count does not match architecture");
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      const auto& L = layers_[l];
      if (L.weight.rows() != shapes[l].first || L.weight.cols() != shapes[l].second ||
          L.bias.size() != shapes[l].first)
        throw InvalidArgument("decoder layer " + std::to_string(l) + " has inconsistent shape");
    }
  }

  DecoderArch arch_;
  std::vector<DenseLayer> layers_;
};

/// Gradient buffers with the same layout as the parameters.
struct DecoderGrads {
  std::vector<DenseLayer> layers;

  static DecoderGrads zeros_like(const DecoderParams& p) {
    DecoderGrads g;
    for (const auto& l : p.layers())
      g.layers.push_back({Eigen::MatrixXf::Zero(l.weight.rows(), l.weight.cols()),
                          Eigen::VectorXf::Zero(l.bias.size())});
    return g;
  }

  void set_zero() {
    for (auto& l : layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }
};

namespace detail {

// out(:, j) (+)= W * in(:, j) for every column j. Each output column is computed with the same
// instruction sequence regardless of how many columns are in the batch, so batched and single
// evaluations agree bit for bit.
inline void column_products(const float* __restrict W, int rows, int cols, const float* __restrict in,
                            Eigen::Index in_stride, float* __restrict out, Eigen::Index out_stride,
                            Eigen::Index n, bool accumulate) {
  Eigen::Index j = 0;
  for (; j + 4 <= n; j += 4) {
    float* __restrict y0 = out + (j + 0) * out_stride;
    float* __restrict y1 = out + (j + 1) * out_stride;
    float* __restrict y2 = out + (j + 2) * out_stride;
    float* __restrict y3 = out + (j + 3) * out_stride;
    const float* x0 = in + (j + 0) * in_stride;
    const float* x1 = in + (j + 1) * in_stride;
    const float* x2 = in + (j + 2) * in_stride;
    const float* x3 = in + (j + 3) * in_stride;
    if (!accumulate)
      for (int i = 0; i < rows; ++i) y0[i] = y1[i] = y2[i] = y3[i] = 0.0f;
    for (int k = 0; k < cols; ++k) {
      const float* __restrict w = W + static_cast<Eigen::Index>(k) * rows;
      const float a0 = x0[k], a1 = x1[k], a2 = x2[k], a3 = x3[k];
      for (int i = 0; i < rows; ++i) {
        y0[i] += w[i] * a0;
        y1[i] += w[i] * a1;
        y2[i] += w[i] * a2;
        y3[i] += w[i] * a3;
      }
    }
  }
  for (; j < n; ++j) {
    float* __restrict y0 = out + j * out_stride;
    const float* x0 = in + j * in_stride;
    if (!accumulate)
      for (int i = 0; i < rows; ++i) y0[i] = 0.0f;
    for (int k = 0; k < cols; ++k) {
      const float* __restrict w = W + static_cast<Eigen::Index>(k) * rows;
      const float a0 = x0[k];
      for (int i = 0; i < rows; ++i) y0[i] += w[i] * a0;
    }
  }
}

}  // namespace detail

/// Activations kept from a forward pass, needed by backward().
struct DecoderCache {
  Eigen::MatrixXf input;                // input_dim x N
  std::vector<Eigen::MatrixXf> pre;     // pre-activation per layer
  std::vector<Eigen::MatrixXf> act;     // post-activation per hidden layer
  Eigen::Index count() const { return input.cols(); }
  std::span<const float> logits() const { return {pre.back().data(), static_cast<std::size_t>(pre.back().size())}; }
};

/// Batched forward pass. `cache.input` must hold one (latent ++ xyz) column per query.
inline void forward(const DecoderParams& params, DecoderCache& cache) {
  const auto& X = cache.input;
  const int in_dim = params.arch().input_dim();
  if (X.rows() != in_dim)
    throw InvalidArgument("decoder input has " + std::to_string(X.rows()) + " rows, expected " +
                          std::to_string(in_dim));
  const Eigen::Index n = X.cols();
  const auto& layers = params.layers();
  cache.pre.resize(layers.size());
  cache.act.resize(layers.size() - 1);
  const float slope = params.arch().leaky_slope;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const int rows = static_cast<int>(L.weight.rows());
    const int prev = static_cast<int>(L.weight.cols()) - in_dim;
    auto& Z = cache.pre[l];
    Z.resize(rows, n);
    bool acc = false;
    if (l > 0) {
      detail::column_products(L.weight.data(), rows, prev, cache.act[l - 1].data(), prev, Z.data(), rows, n, false);
      acc = true;
    }
    detail::column_products(L.weight.data() + static_cast<Eigen::Index>(prev) * rows, rows, in_dim, X.data(), in_dim,
                            Z.data(), rows, n, acc);
    Z.colwise() += L.bias;
    if (l + 1 < layers.size()) {
      auto& A = cache.act[l];
      A = Z.unaryExpr([slope](float z) { return z > 0.0f ? z : slope * z; });
    }
  }
}

/// Back-propagates d(loss)/d(logit) per column. Writes d(loss)/d(input) into d_input when non-null
/// and accumulates parameter gradients into grads when non-null.
inline void backward(const DecoderParams& params, const DecoderCache& cache, std::span<const float> d_logits,
                     Eigen::MatrixXf* d_input, DecoderGrads* grads) {
  const auto& layers = params.layers();
  const int in_dim = params.arch().input_dim();
  const Eigen::Index n = cache.count();
  if (static_cast<Eigen::Index>(d_logits.size()) != n) throw InvalidArgument("upstream gradient size mismatch");
  const float slope = params.arch().leaky_slope;
  if (d_input) d_input->setZero(in_dim, n);
  Eigen::MatrixXf dZ = Eigen::Map<const Eigen::RowVectorXf>(d_logits.data(), n);
  Eigen::MatrixXf dA;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& L = layers[li];
    const int rows = static_cast<int>(L.weight.rows());
    const int prev = static_cast<int>(L.weight.cols()) - in_dim;
    if (grads) {
      auto& G = grads->layers[li];
      if (li > 0) G.weight.leftCols(prev).noalias() += dZ * cache.act[li - 1].transpose();
      G.weight.rightCols(in_dim).noalias() += dZ * cache.input.transpose();
      G.bias += dZ.rowwise().sum();
    }
    if (d_input) {
      const Eigen::MatrixXf WxT = L.weight.rightCols(in_dim).transpose();
      detail::column_products(WxT.data(), in_dim, rows, dZ.data(), rows, d_input->data(), in_dim, n, true);
    }
    if (li == 0) break;
    const Eigen::MatrixXf WhT = L.weight.leftCols(prev).transpose();
    dA.resize(prev, n);
    detail::column_products(WhT.data(), prev, rows, dZ.data(), rows, dA.data(), prev, n, false);
    const auto& Zp = cache.pre[li - 1];
    dZ = dA.binaryExpr(Zp, [slope](float g, float z) { return z > 0.0f ? g : slope * g; });
  }
}

/// Packs latent codes and local points into a decoder input column.
inline void write_input_column(Eigen::MatrixXf& X, Eigen::Index col, std::span<const float> latent,
                               const Eigen::Vector3f& p) {
  const auto d = static_cast<Eigen::Index>(latent.size());
  for (Eigen::Index i = 0; i < d; ++i) X(i, col) = latent[i];
  X(d, col) = p.x();
  X(d + 1, col) = p.y();
  X(d + 2, col) = p.z();
}

inline void check_latent(const DecoderParams& params, std::span<const float> latent) {
  if (static_cast<int>(latent.size()) != params.latent_dim())
    throw InvalidArgument("latent length " + std::to_string(latent.size()) + " does not match decoder latent_dim " +
                          std::to_string(params.latent_dim()));
}

/// Logit of a single query; positive means interior.
inline float decode(const DecoderParams& params, std::span<const float> latent, const Eigen::Vector3f& p_local) {
  check_latent(params, latent);
  DecoderCache cache;
  cache.input.resize(params.arch().input_dim(), 1);
  write_input_column(cache.input, 0, latent, p_local);
  forward(params, cache);
  return cache.logits()[0];
}

/// Logits of many queries sharing nothing but the parameters.
inline std::vector<float> decode_batch(const DecoderParams& params, std::span<const std::vector<float>> latents,
                                       std::span<const Eigen::Vector3f> points) {
  require(latents.size() == points.size(), "latent/point count mismatch");
  DecoderCache cache;
  cache.input.resize(params.arch().input_dim(), static_cast<Eigen::Index>(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) {
    check_latent(params, latents[j]);
    write_input_column(cache.input, static_cast<Eigen::Index>(j), latents[j], points[j]);
  }
  forward(params, cache);
  auto l = cache.logits();
  return {l.begin(), l.end()};
}

struct DecodeGradient {
  Eigen::VectorXf d_latent;
  Eigen::Vector3f d_point;
  DecoderGrads d_params;
};

/// Exact gradients of upstream * logit with respect to latent, point and parameters.
inline DecodeGradient decode_backward(const DecoderParams& params, std::span<const float> latent,
                                      const Eigen::Vector3f& p_local, float upstream) {
  check_latent(params, latent);
  DecoderCache cache;
  cache.input.resize(params.arch().input_dim(), 1);
  write_input_column(cache.input, 0, latent, p_local);
  forward(params, cache);
  DecodeGradient g;
  g.d_params = DecoderGrads::zeros_like(params);
  Eigen::MatrixXf d_in;
  const float up[1] = {upstream};
  backward(params, cache, up, &d_in, &g.d_params);
  const int d = params.latent_dim();
  g.d_latent = d_in.col(0).head(d);
  g.d_point = d_in.col(0).tail<3>();
  return g;
}

// ---------------------------------------------------------------------------
// Weight file: "LIGW", u32 version, u32 latent_dim, u32 layer count, then per layer
// u32 rows, u32 cols, rows*cols f32 weights (row-major), rows f32 biases. Little-endian.

inline constexpr std::uint32_t kWeightFileVersion = 1;

inline void save_params(const DecoderParams& params, std::ostream& os) {
  bin::put_magic(os, "LIGW");
  bin::put_u32(os, kWeightFileVersion);
  bin::put_u32(os, static_cast<std::uint32_t>(params.latent_dim()));
  bin::put_u32(os, static_cast<std::uint32_t>(params.layers().size()));
  for (const auto& L : params.layers()) {
    bin::put_u32(os, static_cast<std::uint32_t>(L.weight.rows()));
    bin::put_u32(os, static_cast<std::uint32_t>(L.weight.cols()));
    for (Eigen::Index r = 0; r < L.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < L.weight.cols(); ++c) bin::put_f32(os, L.weight(r, c));
    for (Eigen::Index r = 0; r < L.bias.size(); ++r) bin::put_f32(os, L.bias[r]);
  }
}

inline void save_params(const DecoderParams& params, const std::string& path) {
  auto os = bin::open_out(path);
  save_params(params, os);
  bin::finish(os, path);
}

/// Reads a weight file. expected_latent_dim < 0 accepts any latent size.
inline DecoderParams load_params(std::istream& is, const std::string& what = "weights", int expected_latent_dim = -1,
                                 float leaky_slope = 0.02f) {
  bin::Reader rd(is, what);
  rd.expect_magic("LIGW");
  const auto version = rd.u32();
  if (version != kWeightFileVersion)
    throw FormatError(what + ": unsupported weight file version " + std::to_string(version));
  const auto latent_dim = rd.u32();
  const auto count = rd.u32();
  if (latent_dim == 0 || latent_dim > (1u << 16) || count == 0 || count > 64)
    throw FormatError(what + ": implausible header");
  if (expected_latent_dim >= 0 && static_cast<int>(latent_dim) != expected_latent_dim)
    throw FormatError(what + ": latent_dim mismatch (file has " + std::to_string(latent_dim) + ", expected " +
                      std::to_string(expected_latent_dim) + ")");
  DecoderArch arch;
  arch.latent_dim = static_cast<int>(latent_dim);
  arch.leaky_slope = leaky_slope;
  arch.hidden.clear();
  std::vector<DenseLayer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto rows = rd.u32();
    const auto cols = rd.u32();
    if (rows == 0 || cols == 0 || rows > (1u << 16) || cols > (1u << 17))
      throw FormatError(what + ": implausible layer shape");
    DenseLayer L{Eigen::MatrixXf(rows, cols), Eigen::VectorXf(rows)};
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) L.weight(r, c) = rd.f32();
    for (std::uint32_t r = 0; r < rows; ++r) L.bias[r] = rd.f32();
    if (l + 1 < count) arch.hidden.push_back(static_cast<int>(rows));
    layers.push_back(std::move(L));
  }
  try {
    return DecoderParams(arch, std::move(layers));
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": shape mismatch: " + e.what());
  }
}

inline DecoderParams load_params(const std::string& path, int expected_latent_dim = -1, float leaky_slope = 0.02f) {
  auto is = bin::open_in(path);
  return load_params(is, path, expected_latent_dim, leaky_slope);
}

}  // namespace lig
