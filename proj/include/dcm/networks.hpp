#pragma once

#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "dcm/blocks.hpp"

namespace dcm::nn {

/// Architectural modules switched on or off for ablations. Fixed at construction.
struct GeneratorToggles {
  bool ddscm = true;
  bool dfre = true;
  bool ffm = true;

  bool operator==(const GeneratorToggles&) const = default;
};

struct GeneratorConfig {
  int64_t base_channels = 64;
  int64_t res_stages = 6;
  int64_t rdb_growth = 32;
  int64_t rdb_layers = 4;
  bool use_gate_activation = true;
  /// Replicate-pad inputs whose sides are not multiples of 4 (and crop back) instead of rejecting.
  bool pad_to_multiple = false;
  /// Predict a bounded correction added to the input rather than the image itself.
  bool global_residual = true;
  GeneratorToggles toggles;

  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
  int64_t base_channels = 64;

  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

void to_json(nlohmann::json& j, const GeneratorToggles& t);
void from_json(const nlohmann::json& j, GeneratorToggles& t);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Sobel responses of the luminance, replicate-padded to full size: channels (gx, gy, |g|).
torch::Tensor contour_features(const torch::Tensor& images);

/// Image-to-image generator. Input and output are [B, 3, H, W] in [0, 1].
///
/// encoder (7x7 stem, two stride-2 downsamplings) -> residual stages (DDSCM-gated when enabled)
/// -> DFRE at the bottleneck -> FFM fusion with Sobel features of the input
/// -> decoder (two x2 upsamplings) -> 7x7 conv -> tanh -> added to the input (global_residual)
/// -> clamped and rescaled to [0, 1].
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& images);

  const GeneratorConfig& config() const { return cfg_; }
  /// Final 7x7 convolution; zeroing it makes a global-residual generator the identity.
  torch::nn::Conv2d output_layer() const;

 private:
  torch::Tensor forward_aligned(const torch::Tensor& images);

  GeneratorConfig cfg_;
  torch::nn::Sequential encoder{nullptr};
  torch::nn::Sequential trunk{nullptr};
  DFRE dfre{nullptr};
  torch::nn::Sequential contour_encoder{nullptr};
  FFM ffm{nullptr};
  torch::nn::Sequential decoder{nullptr};
};
TORCH_MODULE(Generator);

/// Patch discriminator: four 4x4 stride-2 stages and a 1x1 head, one unbounded score per patch.
/// Output side is floor(side / 16); inputs smaller than the 46-pixel receptive field are rejected.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  static constexpr int64_t kReceptiveField = 46;

  explicit DiscriminatorImpl(const DiscriminatorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& images);

  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Discriminator);

}  // namespace dcm::nn
