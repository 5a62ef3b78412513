#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nlmr/nlm/config.hpp"

namespace nlmr::nlm {

// Every weight matrix is stored (inputs x outputs): column j holds the
// weights feeding output unit j, and a forward product is W^T x.
template <typename Real>
struct BasicParameters {
  using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

  struct Layer {
    Matrix weight;      // (input + projection) x 4*hidden, gate order i, f, g, o
    Matrix bias;        // 4*hidden x 1
    Matrix projection;  // hidden x projection
  };

  ModelConfig config;
  Matrix embedding;      // embed x vocab; column w is the input embedding of w
  std::vector<Layer> layers;
  Matrix output_weight;  // projection x vocab; column w is e_w
  Matrix output_bias;    // vocab x 1
  Matrix lnz;            // 1 x 1 log-partition offset used by unnormalized scores

  /// Correctly shaped, all-zero parameters.
  static BasicParameters Zeros(const ModelConfig& config);

  std::size_t InputDim(std::size_t layer) const {
    return layer == 0 ? config.embed_dim : config.projection_dim;
  }

  /// Named tensors in a fixed order: embedding, lstm.<l>.{weight,bias,projection},
  /// output.weight, output.bias, nce.lnz.
  std::vector<std::pair<std::string, Matrix*>> Tensors();
  std::vector<std::pair<std::string, const Matrix*>> Tensors() const;

  void SetZero();
  std::size_t ParameterCount() const;
  bool AllFinite() const;

  template <typename Other>
  BasicParameters<Other> Cast() const;
};

using Parameters = BasicParameters<float>;

/// uniform(-0.05, 0.05) matrices, zero biases, forget-gate bias +1, lnz 0.
template <typename Real>
BasicParameters<Real> InitParameters(const ModelConfig& config, std::uint64_t seed);

/// Tensor names matched by `name`: an exact tensor name, or a group prefix
/// such as "embedding", "lstm.0", "output", "nce". Throws if nothing matches.
std::vector<std::string> ResolveTensorNames(const Parameters& params, const std::string& name);

template <typename Real>
template <typename Other>
BasicParameters<Other> BasicParameters<Real>::Cast() const {
  BasicParameters<Other> out;
  out.config = config;
  out.embedding = embedding.template cast<Other>();
  for (const auto& l : layers) {
    out.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>(),
                          l.projection.template cast<Other>()});
  }
  out.output_weight = output_weight.template cast<Other>();
  out.output_bias = output_bias.template cast<Other>();
  out.lnz = lnz.template cast<Other>();
  return out;
}

}  // namespace nlmr::nlm
