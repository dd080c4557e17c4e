#include "dcm/losses.hpp"

#include <cmath>
#include <string>

#include "dcm/errors.hpp"

namespace dcm::loss {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
  for (double w : {cyc, adv, contour}) {
    if (!std::isfinite(w) || w < 0) throw ParameterError("loss weights must be finite and nonnegative");
  }
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = nlohmann::json{{"cyc", b.cyc}, {"adv_g", b.adv_g}, {"adv_d", b.adv_d},
                     {"contour", b.contour}, {"total", b.total}};
}

void from_json(const nlohmann::json& j, LossBreakdown& b) {
  j.at("cyc").get_to(b.cyc);
  j.at("adv_g").get_to(b.adv_g);
  j.at("adv_d").get_to(b.adv_d);
  j.at("contour").get_to(b.contour);
  j.at("total").get_to(b.total);
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"lambda_cyc", w.cyc}, {"lambda_adv", w.adv}, {"lambda_contour", w.contour}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  j.at("lambda_cyc").get_to(w.cyc);
  j.at("lambda_adv").get_to(w.adv);
  j.at("lambda_contour").get_to(w.contour);
}

void require_finite(const torch::Tensor& value, std::string_view component) {
  if (!torch::isfinite(value).all().item<bool>()) {
    throw NumericError(std::string(component), "non-finite value in '" + std::string(component) + "'");
  }
}

torch::Tensor cycle_loss(const torch::Tensor& clear, const torch::Tensor& clear_rec,
                         const torch::Tensor& hazy, const torch::Tensor& hazy_rec) {
  if (clear.sizes() != clear_rec.sizes() || hazy.sizes() != hazy_rec.sizes()) {
    throw ShapeError("cycle_loss: reconstructions must match their inputs in shape");
  }
  return (clear - clear_rec).abs().mean() + (hazy - hazy_rec).abs().mean();
}

torch::Tensor adv_loss_discriminator(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  require_finite(real_scores, "real_scores");
  require_finite(fake_scores, "fake_scores");
  return (real_scores - 1).square().mean() + fake_scores.square().mean();
}

torch::Tensor adv_loss_generator(const torch::Tensor& fake_scores) {
  require_finite(fake_scores, "fake_scores");
  return (fake_scores - 1).square().mean();
}

torch::Tensor to_grayscale(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ShapeError("to_grayscale expects a [B, 3, H, W] batch");
  }
  return 0.299 * images.narrow(1, 0, 1) + 0.587 * images.narrow(1, 1, 1) +
         0.114 * images.narrow(1, 2, 1);
}

torch::Tensor to_grayscale(const Image& image) {
  return to_grayscale(image.tensor().unsqueeze(0)).squeeze(0).squeeze(0);
}

torch::Tensor sobel_kernel_x(torch::TensorOptions opts) {
  return torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, opts).view({3, 3});
}

torch::Tensor sobel_kernel_y(torch::TensorOptions opts) {
  return torch::tensor({-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0}, opts).view({3, 3});
}

GradientPair sobel_gradients(const torch::Tensor& gray) {
  const bool plain = gray.dim() == 2;
  if (!plain && !(gray.dim() == 4 && gray.size(1) == 1)) {
    throw ShapeError("sobel_gradients expects [H, W] or [B, 1, H, W]");
  }
  auto x = plain ? gray.unsqueeze(0).unsqueeze(0) : gray;
  if (x.size(2) < 3 || x.size(3) < 3) throw ShapeError("sobel_gradients needs at least a 3x3 input");
  // Separable form of the two 3x3 correlations (valid region). Differencing first makes
  // flat regions come out as exact zeros, which a single conv2d does not guarantee.
  const int64_t h = x.size(2), w = x.size(3);
  auto dx = x.narrow(3, 2, w - 2) - x.narrow(3, 0, w - 2);
  auto gx = dx.narrow(2, 0, h - 2) + 2.0 * dx.narrow(2, 1, h - 2) + dx.narrow(2, 2, h - 2);
  auto dy = x.narrow(2, 2, h - 2) - x.narrow(2, 0, h - 2);
  auto gy = dy.narrow(3, 0, w - 2) + 2.0 * dy.narrow(3, 1, w - 2) + dy.narrow(3, 2, w - 2);
  if (plain) return {gx.squeeze(0).squeeze(0), gy.squeeze(0).squeeze(0)};
  return {gx, gy};
}

torch::Tensor gradient_magnitude(const torch::Tensor& images) {
  auto [gx, gy] = sobel_gradients(to_grayscale(images));
  // Shifted by sqrt(eps) so flat regions contribute exactly zero.
  return torch::sqrt(gx.square() + gy.square() + kMagnitudeEpsilon) - std::sqrt(kMagnitudeEpsilon);
}

ContourMode parse_contour_mode(std::string_view name) {
  if (name == "literal") return ContourMode::Literal;
  if (name == "matched") return ContourMode::Matched;
  throw ParameterError("unknown contour mode '" + std::string(name) + "'");
}

std::string_view to_string(ContourMode mode) {
  return mode == ContourMode::Literal ? "literal" : "matched";
}

torch::Tensor contour_loss(const torch::Tensor& images, ContourMode mode,
                           const std::optional<torch::Tensor>& reference) {
  auto m = gradient_magnitude(images);
  if (mode == ContourMode::Literal) return m.mean();
  if (!reference) throw ParameterError("matched contour mode requires a reference image");
  if (reference->sizes() != images.sizes()) throw ShapeError("contour reference must match the image shape");
  return (m - gradient_magnitude(*reference)).abs().mean();
}

double total_loss(const LossBreakdown& c, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, double> parts[] = {{"cyc", c.cyc}, {"adv_g", c.adv_g}, {"contour", c.contour}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) throw NumericError(name, std::string("non-finite loss component '") + name + "'");
  }
  return w.cyc * c.cyc + w.adv * c.adv_g + w.contour * c.contour;
}

}  // namespace dcm::loss
