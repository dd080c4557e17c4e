#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcm/image.hpp"

namespace dcm::metrics {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// PSNR in dB with peak 1.0; identical images give +infinity.
double psnr(const Image& x, const Image& y);

/// Single-scale SSIM on BT.601 luminance: 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, averaged over valid window positions.
double ssim(const Image& x, const Image& y);

struct Lab {
  double l = 0, a = 0, b = 0;
};

/// sRGB (D65) -> CIELAB.
Lab srgb_to_lab(double r, double g, double b);

/// CIEDE2000 colour difference with kL = kC = kH = 1.
double delta_e00(const Lab& x, const Lab& y);

/// Mean per-pixel CIEDE2000 between two sRGB images.
double ciede2000(const Image& x, const Image& y);

struct ImageScore {
  std::string id;
  double psnr_db = 0;
  double ssim = 0;
  double ciede2000 = 0;
};

struct PairingError {
  std::string id;
  std::string reason;
};

struct MetricReport {
  std::vector<ImageScore> per_image;  ///< sorted by id
  ImageScore aggregate{"aggregate"};  ///< column means over per_image
  std::vector<PairingError> errors;
};

/// Pairs files of `pred_dir` and `gt_dir` by filename stem and scores every pair.
/// Files without a partner (on either side) and unreadable/mismatched pairs go to `errors`.
MetricReport evaluate_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir);

/// Formats a metric value for reports; +infinity becomes "inf".
std::string format_value(double v);

std::string to_csv(const MetricReport& report);
nlohmann::json to_json(const MetricReport& report);

/// Writes `<stem>.csv` and `<stem>.json`.
void write_report(const MetricReport& report, const std::filesystem::path& stem);

}  // namespace dcm::metrics
