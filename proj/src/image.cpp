#include "dcm/image.hpp"

#include "dcm/errors.hpp"

namespace dcm {

Image Image::from_tensor(const torch::Tensor& chw) {
  if (!chw.defined() || chw.dim() != 3 || chw.size(0) != 3) {
    throw ShapeError("image tensor must have shape [3, H, W]");
  }
  if (chw.size(1) < kMinDim || chw.size(2) < kMinDim) {
    throw ShapeError("image must be at least 3x3, got " + std::to_string(chw.size(1)) + "x" +
                     std::to_string(chw.size(2)));
  }
  auto data = chw.detach().to(torch::kFloat64).contiguous().clone();
  if (!torch::isfinite(data).all().item<bool>()) {
    throw ValidationError("image contains non-finite values");
  }
  return Image(std::move(data));
}

Image Image::filled(int64_t height, int64_t width, std::array<double, 3> rgb) {
  auto data = torch::empty({3, height, width}, torch::kFloat64);
  for (int64_t c = 0; c < 3; ++c) data[c].fill_(rgb[c]);
  return from_tensor(data);
}

double Image::at(int64_t y, int64_t x, int64_t channel) const {
  return data_.data_ptr<double>()[(channel * height() + y) * width() + x];
}

Image Image::clamped() const { return Image(data_.clamp(0.0, 1.0)); }

torch::Tensor to_batch(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("cannot batch an empty image list");
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& img : images) {
    if (img.height() != images[0].height() || img.width() != images[0].width()) {
      throw ShapeError("batched images must share spatial dimensions");
    }
    parts.push_back(img.tensor());
  }
  return torch::stack(parts).to(torch::kFloat32);
}

std::vector<Image> from_batch(const torch::Tensor& batch) {
  if (batch.dim() != 4) throw ShapeError("batch must have shape [B, 3, H, W]");
  std::vector<Image> out;
  out.reserve(batch.size(0));
  for (int64_t i = 0; i < batch.size(0); ++i) out.push_back(Image::from_tensor(batch[i]));
  return out;
}

}  // namespace dcm
