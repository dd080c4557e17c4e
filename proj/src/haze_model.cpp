#include "dcm/haze_model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "dcm/errors.hpp"

namespace dcm::haze {

namespace F = torch::nn::functional;

DepthField DepthField::from_tensor(const torch::Tensor& hw) {
  if (!hw.defined() || hw.dim() != 2) throw ShapeError("depth field must have shape [H, W]");
  auto v = hw.detach().to(torch::kFloat64).contiguous().clone();
  if (!torch::isfinite(v).all().item<bool>()) throw ValidationError("depth contains non-finite values");
  if ((v < 0).any().item<bool>()) throw ValidationError("depth must be nonnegative");
  return DepthField(std::move(v));
}

TransmissionMap TransmissionMap::from_tensor(const torch::Tensor& hw) {
  if (!hw.defined() || hw.dim() != 2) throw ShapeError("transmission map must have shape [H, W]");
  auto v = hw.detach().to(torch::kFloat64).contiguous().clone();
  if (!((v > 0) & (v <= 1)).all().item<bool>()) {
    throw ValidationError("transmission values must lie in (0, 1]");
  }
  return TransmissionMap(std::move(v));
}

void HazeParams::validate() const {
  if (!(beta > 0) || !std::isfinite(beta)) {
    throw ParameterError("beta must be positive and finite, got " + std::to_string(beta));
  }
  for (double a : airlight) {
    if (!(a >= 0 && a <= 1)) throw ParameterError("airlight channels must lie in [0, 1]");
  }
}

TransmissionMap transmission(const DepthField& depth, double beta) {
  if (!(beta > 0) || !std::isfinite(beta)) {
    throw ParameterError("beta must be positive and finite, got " + std::to_string(beta));
  }
  if (!depth.tensor().defined()) throw ValidationError("depth field is empty");
  // exp underflows to 0 for huge beta*d; keep the (0, 1] contract with the smallest normal.
  auto t = torch::exp(-beta * depth.tensor()).clamp_min(std::numeric_limits<double>::min());
  return TransmissionMap::from_tensor(t);
}

namespace {

void check_aligned(const Image& img, const DepthField& depth) {
  if (img.empty() || !depth.tensor().defined()) throw ValidationError("empty image or depth field");
  if (img.height() != depth.height() || img.width() != depth.width()) {
    throw ValidationError("image is " + std::to_string(img.height()) + "x" +
                          std::to_string(img.width()) + " but depth is " +
                          std::to_string(depth.height()) + "x" + std::to_string(depth.width()));
  }
}

torch::Tensor airlight_tensor(const HazeParams& p) {
  return torch::tensor({p.airlight[0], p.airlight[1], p.airlight[2]}, torch::kFloat64)
      .view({3, 1, 1});
}

}  // namespace

torch::Tensor synthesize_haze_unclamped(const Image& clear, const DepthField& depth,
                                        const HazeParams& params) {
  params.validate();
  check_aligned(clear, depth);
  auto t = transmission(depth, params.beta).tensor().unsqueeze(0);
  return clear.tensor() * t + airlight_tensor(params) * (1.0 - t);
}

Image synthesize_haze(const Image& clear, const DepthField& depth, const HazeParams& params) {
  return Image::from_tensor(synthesize_haze_unclamped(clear, depth, params).clamp(0.0, 1.0));
}

Image invert_haze(const Image& hazy, const DepthField& depth, const HazeParams& params,
                  double t_floor) {
  params.validate();
  check_aligned(hazy, depth);
  if (!(t_floor > 0 && t_floor <= 1)) throw ParameterError("t_floor must lie in (0, 1]");
  auto tmap = transmission(depth, params.beta);
  if (tmap.min() < t_floor) {
    throw DegenerateTransmissionError("transmission drops to " + std::to_string(tmap.min()) +
                                      ", below the floor " + std::to_string(t_floor));
  }
  auto t = tmap.tensor().unsqueeze(0);
  auto a = airlight_tensor(params);
  return Image::from_tensor(((hazy.tensor() - a * (1.0 - t)) / t).clamp(0.0, 1.0));
}

DepthKind parse_depth_kind(std::string_view name) {
  if (name == "ramp_h") return DepthKind::RampH;
  if (name == "ramp_v") return DepthKind::RampV;
  if (name == "radial") return DepthKind::Radial;
  if (name == "smooth_noise") return DepthKind::SmoothNoise;
  throw ParameterError("unknown depth kind '" + std::string(name) + "'");
}

std::string_view to_string(DepthKind kind) {
  switch (kind) {
    case DepthKind::RampH: return "ramp_h";
    case DepthKind::RampV: return "ramp_v";
    case DepthKind::Radial: return "radial";
    case DepthKind::SmoothNoise: return "smooth_noise";
  }
  throw ParameterError("unknown depth kind");
}

namespace {

torch::Tensor normalize_range(const torch::Tensor& v, double max_depth) {
  const double lo = v.min().item<double>();
  const double hi = v.max().item<double>();
  if (hi - lo <= 0) return torch::zeros_like(v);
  return (v - lo) / (hi - lo) * max_depth;
}

}  // namespace

DepthField generate_depth_field(DepthKind kind, int64_t height, int64_t width, uint64_t seed,
                                double max_depth) {
  if (height < 3 || width < 3) throw ShapeError("depth field must be at least 3x3");
  if (!(max_depth >= 0) || !std::isfinite(max_depth)) {
    throw ParameterError("max_depth must be finite and nonnegative");
  }
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  torch::Tensor v;
  switch (kind) {
    case DepthKind::RampH:
      v = torch::linspace(0.0, 1.0, width, opts).unsqueeze(0).expand({height, width});
      break;
    case DepthKind::RampV:
      v = torch::linspace(0.0, 1.0, height, opts).unsqueeze(1).expand({height, width});
      break;
    case DepthKind::Radial: {
      const double cy = (0.25 + 0.5 * unit(rng)) * static_cast<double>(height - 1);
      const double cx = (0.25 + 0.5 * unit(rng)) * static_cast<double>(width - 1);
      auto ys = torch::arange(height, opts).unsqueeze(1) - cy;
      auto xs = torch::arange(width, opts).unsqueeze(0) - cx;
      v = torch::sqrt(ys * ys + xs * xs);
      break;
    }
    case DepthKind::SmoothNoise: {
      constexpr int64_t kGrid = 5;
      auto grid = torch::empty({1, 1, kGrid, kGrid}, opts);
      auto* g = grid.data_ptr<double>();
      for (int64_t i = 0; i < kGrid * kGrid; ++i) g[i] = unit(rng);
      v = F::interpolate(grid, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{height, width})
                                   .mode(torch::kBilinear)
                                   .align_corners(true))
              .squeeze(0)
              .squeeze(0);
      break;
    }
  }
  return DepthField::from_tensor(normalize_range(v.contiguous(), max_depth));
}

}  // namespace dcm::haze
