#include "dcm/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dcm/errors.hpp"

namespace dcm::io {

namespace fs = std::filesystem;

bool has_image_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Image read_image(const fs::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (raw.empty()) throw IoError("cannot read image '" + path.string() + "'");
  if (raw.depth() != CV_8U) throw IoError("'" + path.string() + "' is not an 8-bit image");
  cv::Mat rgb;
  cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
  return Image::from_tensor(hwc.permute({2, 0, 1}).to(torch::kFloat64) / 255.0);
}

void write_image(const fs::path& path, const Image& image) {
  auto hwc = (image.tensor().clamp(0.0, 1.0) * 255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  cv::Mat rgb(static_cast<int>(image.height()), static_cast<int>(image.width()), CV_8UC3,
              hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write image '" + path.string() + "': " + e.what());
  }
  if (!ok) throw IoError("cannot write image '" + path.string() + "'");
}

void write_depth_png(const fs::path& path, const haze::DepthField& depth, double scale) {
  if (!(scale > 0)) throw ParameterError("depth scale must be positive");
  auto q = (depth.tensor() / scale).round().clamp(0.0, 65535.0).to(torch::kInt32).contiguous();
  cv::Mat m(static_cast<int>(depth.height()), static_cast<int>(depth.width()), CV_16UC1);
  const auto* src = q.data_ptr<int32_t>();
  for (int y = 0; y < m.rows; ++y) {
    auto* row = m.ptr<uint16_t>(y);
    for (int x = 0; x < m.cols; ++x) row[x] = static_cast<uint16_t>(src[y * m.cols + x]);
  }
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write depth '" + path.string() + "': " + e.what());
  }
  if (!ok) throw IoError("cannot write depth '" + path.string() + "'");
}

haze::DepthField read_depth_png(const fs::path& path, double scale) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IoError("cannot read depth '" + path.string() + "'");
  if (m.type() != CV_16UC1) throw IoError("'" + path.string() + "' is not a 16-bit single-channel PNG");
  auto t = torch::empty({m.rows, m.cols}, torch::kFloat64);
  auto* dst = t.data_ptr<double>();
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<uint16_t>(y);
    for (int x = 0; x < m.cols; ++x) dst[y * m.cols + x] = row[x] * scale;
  }
  return haze::DepthField::from_tensor(t);
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename onto '" + path.string() + "': " + ec.message());
}

}  // namespace dcm::io
