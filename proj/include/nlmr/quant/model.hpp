#pragma once

#include <filesystem>

#include "nlmr/nlm/model.hpp"
#include "nlmr/quant/quantize.hpp"

namespace nlmr::quant {

/// Every Parameters tensor in 16-bit form. Matrix products run on integer
/// codes; gate nonlinearities run in float on the rescaled pre-activations.
class QuantizedModel : public nlm::NeuralModel {
 public:
  struct Layer {
    QuantizedMatrix weight;
    QuantizedMatrix bias;
    QuantizedMatrix projection;
  };

  static QuantizedModel FromParameters(const nlm::Parameters& params);

  const nlm::ModelConfig& config() const override { return config_; }
  nlm::Vector Step(nlm::LmState& state, TokenId token) const override;
  float Logit(const nlm::Vector& context, TokenId word) const override;
  void Logits(const nlm::Vector& context, nlm::Vector& out) const override;
  float LnZOffset() const override { return lnz_; }

  const QuantizedMatrix& embedding() const { return embedding_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const QuantizedMatrix& output_weight() const { return output_weight_; }
  const QuantizedMatrix& output_bias() const { return output_bias_; }

  /// Float parameters with every tensor replaced by its dequantized value.
  nlm::Parameters Dequantize() const;

  void Save(const std::filesystem::path& path) const;
  static QuantizedModel Load(const std::filesystem::path& path);

  friend bool operator==(const QuantizedModel& a, const QuantizedModel& b);

 private:
  void Cache();

  nlm::ModelConfig config_;
  QuantizedMatrix embedding_;
  std::vector<Layer> layers_;
  QuantizedMatrix output_weight_;
  QuantizedMatrix output_bias_;
  QuantizedMatrix lnz_q_;
  // Dequantized biases and offset, cached for the float parts of the step.
  std::vector<nlm::Vector> bias_;
  nlm::Vector out_bias_;
  float lnz_ = 0.0f;
};

}  // namespace nlmr::quant
