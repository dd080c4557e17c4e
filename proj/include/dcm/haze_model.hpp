#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "dcm/image.hpp"

// Atmospheric scattering model: I = J * t + A * (1 - t), with t = exp(-beta * d).

namespace dcm::haze {

/// Scene depth, [H, W] float64, nonnegative.
class DepthField {
 public:
  DepthField() = default;
  static DepthField from_tensor(const torch::Tensor& hw);

  int64_t height() const { return values_.size(0); }
  int64_t width() const { return values_.size(1); }
  const torch::Tensor& tensor() const { return values_; }
  double at(int64_t y, int64_t x) const { return values_.data_ptr<double>()[y * width() + x]; }

 private:
  explicit DepthField(torch::Tensor v) : values_(std::move(v)) {}
  torch::Tensor values_;
};

/// Transmission in (0, 1], [H, W] float64.
class TransmissionMap {
 public:
  TransmissionMap() = default;
  static TransmissionMap from_tensor(const torch::Tensor& hw);

  int64_t height() const { return values_.size(0); }
  int64_t width() const { return values_.size(1); }
  const torch::Tensor& tensor() const { return values_; }
  double min() const { return values_.min().item<double>(); }

 private:
  explicit TransmissionMap(torch::Tensor v) : values_(std::move(v)) {}
  torch::Tensor values_;
};

struct HazeParams {
  double beta = 1.0;                          ///< scattering coefficient per depth unit, > 0
  std::array<double, 3> airlight{1.0, 1.0, 1.0};  ///< global atmospheric light per channel

  void validate() const;
};

inline constexpr double kDefaultTransmissionFloor = 0.05;
inline constexpr double kDefaultMaxDepth = 3.0;

TransmissionMap transmission(const DepthField& depth, double beta);

/// Hazy observation of `clear`, clamped to [0,1].
Image synthesize_haze(const Image& clear, const DepthField& depth, const HazeParams& params);

/// Same as `synthesize_haze` without the final clamp; exposed for convexity checks.
torch::Tensor synthesize_haze_unclamped(const Image& clear, const DepthField& depth,
                                        const HazeParams& params);

/// Analytic inverse. Throws DegenerateTransmissionError if t < t_floor anywhere.
Image invert_haze(const Image& hazy, const DepthField& depth, const HazeParams& params,
                  double t_floor = kDefaultTransmissionFloor);

enum class DepthKind { RampH, RampV, Radial, SmoothNoise };

DepthKind parse_depth_kind(std::string_view name);
std::string_view to_string(DepthKind kind);

/// Deterministic synthetic depth normalized to [0, max_depth].
DepthField generate_depth_field(DepthKind kind, int64_t height, int64_t width, uint64_t seed,
                                double max_depth = kDefaultMaxDepth);

}  // namespace dcm::haze
