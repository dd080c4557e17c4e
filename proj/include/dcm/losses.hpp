#pragma once

#include <optional>
#include <string_view>

#include <json.hpp>
#include <torch/torch.h>

#include "dcm/image.hpp"

// Training objectives. Tensor arguments are [B, C, H, W] batches; every expectation is an
// arithmetic mean over all elements so magnitudes do not depend on resolution.

namespace dcm::loss {

struct LossWeights {
  double cyc = 1.0;
  double adv = 1.0;
  double contour = 0.5;

  void validate() const;
};

struct LossBreakdown {
  double cyc = 0.0;
  double adv_g = 0.0;  ///< generator adversarial terms, both translation directions
  double adv_d = 0.0;  ///< discriminator objectives, both discriminators
  double contour = 0.0;
  double total = 0.0;  ///< generator-side weighted sum
};

void to_json(nlohmann::json& j, const LossBreakdown& b);
void from_json(const nlohmann::json& j, LossBreakdown& b);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// mean|G - G_hat| + mean|H - H_hat|
torch::Tensor cycle_loss(const torch::Tensor& clear, const torch::Tensor& clear_rec,
                         const torch::Tensor& hazy, const torch::Tensor& hazy_rec);

/// Least-squares discriminator objective: mean((real - 1)^2) + mean(fake^2).
torch::Tensor adv_loss_discriminator(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

/// Least-squares generator objective: mean((fake - 1)^2).
torch::Tensor adv_loss_generator(const torch::Tensor& fake_scores);

/// BT.601 luminance of a [B, 3, H, W] batch -> [B, 1, H, W].
torch::Tensor to_grayscale(const torch::Tensor& images);
/// Luminance of a single image as [H, W] float64.
torch::Tensor to_grayscale(const Image& image);

struct GradientPair {
  torch::Tensor gx;
  torch::Tensor gy;
};

/// Horizontal/vertical Sobel kernels, correlation orientation.
torch::Tensor sobel_kernel_x(torch::TensorOptions opts = torch::kFloat64);
torch::Tensor sobel_kernel_y(torch::TensorOptions opts = torch::kFloat64);

/// Valid-region correlation with the Sobel kernels. Accepts [H, W] or [B, 1, H, W];
/// outputs have two fewer rows and columns.
GradientPair sobel_gradients(const torch::Tensor& gray);

inline constexpr double kMagnitudeEpsilon = 1e-12;

/// sqrt(gx^2 + gy^2 + eps) - sqrt(eps) over the valid region of the luminance, [B, 1, H-2, W-2].
torch::Tensor gradient_magnitude(const torch::Tensor& images);

enum class ContourMode { Literal, Matched };

ContourMode parse_contour_mode(std::string_view name);
std::string_view to_string(ContourMode mode);

/// Literal: mean gradient magnitude of `images`.
/// Matched: mean |M(images) - M(reference)|; the reference is required.
torch::Tensor contour_loss(const torch::Tensor& images, ContourMode mode = ContourMode::Literal,
                           const std::optional<torch::Tensor>& reference = std::nullopt);

/// Weighted generator objective. Throws NumericError naming the first non-finite component.
double total_loss(const LossBreakdown& components, const LossWeights& weights = {});

/// Throws NumericError if `value` is not finite.
void require_finite(const torch::Tensor& value, std::string_view component);

}  // namespace dcm::loss
