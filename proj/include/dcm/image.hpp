#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace dcm {

/// RGB raster with unit-range intensities, stored channel-first ([3, H, W]) in double precision.
///
/// Construction validates shape (3 channels, H and W at least 3) and finiteness. The range
/// is not enforced on construction because intermediate haze math is unclamped; use
/// `clamped()` where a [0,1] guarantee is required.
class Image {
 public:
  static constexpr int64_t kMinDim = 3;

  Image() = default;

  /// Accepts a [3, H, W] tensor of any floating dtype; the data is copied to float64.
  static Image from_tensor(const torch::Tensor& chw);
  static Image filled(int64_t height, int64_t width, std::array<double, 3> rgb);

  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }
  bool empty() const { return !data_.defined(); }

  const torch::Tensor& tensor() const { return data_; }
  double at(int64_t y, int64_t x, int64_t channel) const;

  Image clamped() const;

 private:
  explicit Image(torch::Tensor data) : data_(std::move(data)) {}
  torch::Tensor data_;
};

/// Stacks images of equal size into a float32 [B, 3, H, W] batch.
torch::Tensor to_batch(std::span<const Image> images);

/// Splits a [B, 3, H, W] batch back into images.
std::vector<Image> from_batch(const torch::Tensor& batch);

}  // namespace dcm
