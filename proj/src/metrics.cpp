#include "dcm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "dcm/errors.hpp"
#include "dcm/image_io.hpp"
#include "dcm/losses.hpp"

namespace dcm::metrics {

namespace F = torch::nn::functional;

namespace {

void require_same_shape(const Image& x, const Image& y, const char* metric) {
  if (x.empty() || y.empty()) throw ShapeError(std::string(metric) + ": empty image");
  if (x.height() != y.height() || x.width() != y.width()) {
    throw ShapeError(std::string(metric) + ": images differ in size (" + std::to_string(x.height()) + "x" +
                     std::to_string(x.width()) + " vs " + std::to_string(y.height()) + "x" +
                     std::to_string(y.width()) + ")");
  }
}

torch::Tensor gaussian_window(int64_t size, double sigma) {
  auto coords = torch::arange(size, torch::kFloat64) - static_cast<double>(size / 2);
  auto g = torch::exp(-(coords * coords) / (2 * sigma * sigma));
  auto w = torch::outer(g, g);
  return (w / w.sum()).view({1, 1, size, size});
}

constexpr int64_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

}  // namespace

double psnr(const Image& x, const Image& y) {
  require_same_shape(x, y, "psnr");
  const double mse = (x.tensor() - y.tensor()).square().mean().item<double>();
  if (mse == 0.0) return kInfinity;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& x, const Image& y) {
  require_same_shape(x, y, "ssim");
  if (x.height() < kSsimWindow || x.width() < kSsimWindow) {
    throw ShapeError("ssim: images must be at least 11x11");
  }
  const auto window = gaussian_window(kSsimWindow, kSsimSigma);
  auto lx = loss::to_grayscale(x).unsqueeze(0).unsqueeze(0);
  auto ly = loss::to_grayscale(y).unsqueeze(0).unsqueeze(0);
  auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, window); };

  auto mu_x = filt(lx);
  auto mu_y = filt(ly);
  auto var_x = filt(lx * lx) - mu_x * mu_x;
  auto var_y = filt(ly * ly) - mu_y * mu_y;
  auto cov = filt(lx * ly) - mu_x * mu_y;
  auto num = (2 * mu_x * mu_y + kC1) * (2 * cov + kC2);
  auto den = (mu_x * mu_x + mu_y * mu_y + kC1) * (var_x + var_y + kC2);
  return (num / den).mean().item<double>();
}

Lab srgb_to_lab(double r, double g, double b) {
  auto linear = [](double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); };
  const double lr = linear(r), lg = linear(g), lb = linear(b);
  const double x = (0.412453 * lr + 0.357580 * lg + 0.180423 * lb) / 0.95047;
  const double y = (0.212671 * lr + 0.715160 * lg + 0.072169 * lb) / 1.0;
  const double z = (0.019334 * lr + 0.119193 * lg + 0.950227 * lb) / 1.08883;
  auto f = [](double t) { return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0; };
  const double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double delta_e00(const Lab& c1, const Lab& c2) {
  using std::numbers::pi;
  constexpr double kDeg = pi / 180.0;
  constexpr double k25pow7 = 6103515625.0;  // 25^7

  const double c1ab = std::hypot(c1.a, c1.b);
  const double c2ab = std::hypot(c2.a, c2.b);
  const double cbar7 = std::pow((c1ab + c2ab) / 2.0, 7);
  const double g = 0.5 * (1.0 - std::sqrt(cbar7 / (cbar7 + k25pow7)));
  const double a1 = (1.0 + g) * c1.a;
  const double a2 = (1.0 + g) * c2.a;
  const double cp1 = std::hypot(a1, c1.b);
  const double cp2 = std::hypot(a2, c2.b);

  auto hue = [](double b, double a) {
    if (a == 0.0 && b == 0.0) return 0.0;
    double h = std::atan2(b, a) / kDeg;
    return h < 0 ? h + 360.0 : h;
  };
  const double hp1 = hue(c1.b, a1);
  const double hp2 = hue(c2.b, a2);

  const double dl = c2.l - c1.l;
  const double dc = cp2 - cp1;
  double dh = 0.0;
  if (cp1 * cp2 != 0.0) {
    dh = hp2 - hp1;
    if (dh > 180.0) dh -= 360.0;
    else if (dh < -180.0) dh += 360.0;
  }
  const double dH = 2.0 * std::sqrt(cp1 * cp2) * std::sin(dh * kDeg / 2.0);

  const double lbar = (c1.l + c2.l) / 2.0;
  const double cbar = (cp1 + cp2) / 2.0;
  double hbar = hp1 + hp2;
  if (cp1 * cp2 != 0.0) {
    if (std::abs(hp1 - hp2) <= 180.0) hbar /= 2.0;
    else if (hbar < 360.0) hbar = (hbar + 360.0) / 2.0;
    else hbar = (hbar - 360.0) / 2.0;
  }

  const double t = 1.0 - 0.17 * std::cos((hbar - 30.0) * kDeg) + 0.24 * std::cos(2.0 * hbar * kDeg) +
                   0.32 * std::cos((3.0 * hbar + 6.0) * kDeg) - 0.20 * std::cos((4.0 * hbar - 63.0) * kDeg);
  const double dtheta = 30.0 * std::exp(-std::pow((hbar - 275.0) / 25.0, 2));
  const double cbar_p7 = std::pow(cbar, 7);
  const double rc = 2.0 * std::sqrt(cbar_p7 / (cbar_p7 + k25pow7));
  const double l50 = (lbar - 50.0) * (lbar - 50.0);
  const double sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double sc = 1.0 + 0.045 * cbar;
  const double sh = 1.0 + 0.015 * cbar * t;
  const double rt = -std::sin(2.0 * dtheta * kDeg) * rc;

  const double tl = dl / sl;
  const double tc = dc / sc;
  const double th = dH / sh;
  return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

double ciede2000(const Image& x, const Image& y) {
  require_same_shape(x, y, "ciede2000");
  const int64_t n = x.height() * x.width();
  const double* px = x.tensor().data_ptr<double>();
  const double* py = y.tensor().data_ptr<double>();
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const Lab a = srgb_to_lab(px[i], px[n + i], px[2 * n + i]);
    const Lab b = srgb_to_lab(py[i], py[n + i], py[2 * n + i]);
    sum += delta_e00(a, b);
  }
  return sum / static_cast<double>(n);
}

namespace {

std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && io::has_image_extension(entry.path())) {
      out.emplace(entry.path().stem().string(), entry.path());
    }
  }
  return out;
}

}  // namespace

MetricReport evaluate_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
  const auto preds = list_images(pred_dir);
  const auto gts = list_images(gt_dir);
  MetricReport report;
  for (const auto& [id, pred_path] : preds) {
    auto gt = gts.find(id);
    if (gt == gts.end()) {
      report.errors.push_back({id, "no ground-truth partner in '" + gt_dir.string() + "'"});
      continue;
    }
    try {
      const Image p = io::read_image(pred_path);
      const Image g = io::read_image(gt->second);
      report.per_image.push_back({id, psnr(p, g), ssim(p, g), ciede2000(p, g)});
    } catch (const Error& e) {
      report.errors.push_back({id, e.what()});
    }
  }
  for (const auto& [id, _] : gts) {
    if (!preds.count(id)) report.errors.push_back({id, "no prediction in '" + pred_dir.string() + "'"});
  }
  std::sort(report.errors.begin(), report.errors.end(),
            [](const PairingError& a, const PairingError& b) { return a.id < b.id; });

  if (!report.per_image.empty()) {
    double s_psnr = 0, s_ssim = 0, s_ciede = 0;
    for (const auto& row : report.per_image) {
      s_psnr += row.psnr_db;
      s_ssim += row.ssim;
      s_ciede += row.ciede2000;
    }
    const double n = static_cast<double>(report.per_image.size());
    report.aggregate.psnr_db = s_psnr / n;
    report.aggregate.ssim = s_ssim / n;
    report.aggregate.ciede2000 = s_ciede / n;
  }
  return report;
}

std::string format_value(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string to_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "id,psnr_db,ssim,ciede2000\n";
  for (const auto& r : report.per_image) {
    os << r.id << ',' << format_value(r.psnr_db) << ',' << format_value(r.ssim) << ','
       << format_value(r.ciede2000) << '\n';
  }
  return os.str();
}

namespace {

nlohmann::json value_json(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

nlohmann::json score_json(const ImageScore& s) {
  return {{"id", s.id}, {"psnr_db", value_json(s.psnr_db)}, {"ssim", value_json(s.ssim)},
          {"ciede2000", value_json(s.ciede2000)}};
}

}  // namespace

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.per_image) rows.push_back(score_json(r));
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& e : report.errors) errors.push_back({{"id", e.id}, {"reason", e.reason}});
  auto agg = score_json(report.aggregate);
  agg.erase("id");
  agg["count"] = report.per_image.size();
  return {{"per_image", rows}, {"aggregate", agg}, {"errors", errors}};
}

void write_report(const MetricReport& report, const std::filesystem::path& stem) {
  io::write_file_atomic(stem.string() + ".csv", to_csv(report));
  io::write_file_atomic(stem.string() + ".json", to_json(report).dump(2) + "\n");
}

}  // namespace dcm::metrics
