#include "dcm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dcm/errors.hpp"
#include "dcm/image_io.hpp"

namespace dcm::data {

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw ParameterError("unknown split '" + std::string(name) + "'");
}

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

namespace {

std::string make_id(int64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(index));
  return buf;
}

nlohmann::json pool_json(const std::vector<PoolItem>& pool) {
  auto arr = nlohmann::json::array();
  for (const auto& item : pool) arr.push_back({{"id", item.id}, {"path", item.path.generic_string()}});
  return arr;
}

std::vector<PoolItem> pool_from_json(const nlohmann::json& arr) {
  std::vector<PoolItem> out;
  for (const auto& item : arr) out.push_back({item.at("id").get<std::string>(), item.at("path").get<std::string>()});
  return out;
}

}  // namespace

nlohmann::json to_json(const DatasetManifest& m) {
  auto entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json j{{"id", e.id}, {"hazy", e.hazy.generic_string()}};
    if (e.clean) j["clean"] = e.clean->generic_string();
    if (e.depth) j["depth"] = e.depth->generic_string();
    if (e.depth_scale) j["depth_scale"] = *e.depth_scale;
    if (e.depth_kind) j["depth_kind"] = *e.depth_kind;
    if (e.params) {
      j["params"] = {{"beta", e.params->beta},
                     {"airlight", {e.params->airlight[0], e.params->airlight[1], e.params->airlight[2]}}};
    }
    entries.push_back(std::move(j));
  }
  return {{"version", m.version},
          {"root", "."},
          {"split", std::string(to_string(m.split))},
          {"seed", m.seed},
          {"entries", entries},
          {"pools", {{"hazy", pool_json(m.hazy_pool)}, {"clean", pool_json(m.clean_pool)}}}};
}

DatasetManifest manifest_from_json(const nlohmann::json& doc, const fs::path& root) {
  DatasetManifest m;
  try {
    m.version = doc.at("version").get<std::string>();
    if (m.version != kManifestVersion) throw DatasetError("unsupported manifest version '" + m.version + "'");
    m.root = root;
    m.split = parse_split(doc.at("split").get<std::string>());
    m.seed = doc.at("seed").get<uint64_t>();
    for (const auto& j : doc.at("entries")) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.hazy = j.at("hazy").get<std::string>();
      if (j.contains("clean")) e.clean = fs::path(j["clean"].get<std::string>());
      if (j.contains("depth")) e.depth = fs::path(j["depth"].get<std::string>());
      if (j.contains("depth_scale")) e.depth_scale = j["depth_scale"].get<double>();
      if (j.contains("depth_kind")) e.depth_kind = j["depth_kind"].get<std::string>();
      if (j.contains("params")) {
        haze::HazeParams p;
        p.beta = j["params"].at("beta").get<double>();
        p.airlight = j["params"].at("airlight").get<std::array<double, 3>>();
        e.params = p;
      }
      m.entries.push_back(std::move(e));
    }
    m.hazy_pool = pool_from_json(doc.at("pools").at("hazy"));
    m.clean_pool = pool_from_json(doc.at("pools").at("clean"));
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

namespace {

void validate_manifest(const DatasetManifest& m) {
  std::set<std::string> ids;
  auto exists = [&](const fs::path& p, const std::string& id) {
    if (!fs::exists(m.resolve(p))) {
      throw DatasetError("entry '" + id + "' references missing file '" + m.resolve(p).string() + "'");
    }
  };
  for (const auto& e : m.entries) {
    if (!ids.insert(e.id).second) throw DatasetError("duplicate id '" + e.id + "' in manifest");
    exists(e.hazy, e.id);
    if (e.clean) exists(*e.clean, e.id);
    if (e.depth) {
      exists(*e.depth, e.id);
      if (!e.clean || !e.params || !e.depth_scale) {
        throw DatasetError("synthetic entry '" + e.id + "' lacks clean/params/depth_scale provenance");
      }
    }
  }
  for (const auto* pool : {&m.hazy_pool, &m.clean_pool}) {
    for (const auto& item : *pool) exists(item.path, item.id);
  }
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root) {
  const auto path = root / kManifestName;
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open manifest '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("malformed manifest '" + path.string() + "': " + e.what());
  }
  auto m = manifest_from_json(doc, root);
  validate_manifest(m);
  return m;
}

void save_manifest(const DatasetManifest& manifest) {
  io::write_file_atomic(manifest.root / kManifestName, to_json(manifest).dump(2) + "\n");
}

void SynthOptions::validate() const {
  if (count < 2) throw ParameterError("synthetic dataset needs at least 2 images");
  if (size < 16) throw ParameterError("synthetic image size must be >= 16");
  if (!(beta_min > 0) || beta_max < beta_min) throw ParameterError("invalid beta range");
  if (airlight_min < 0 || airlight_max > 1 || airlight_max < airlight_min) {
    throw ParameterError("invalid airlight range");
  }
  if (!(max_depth > 0)) throw ParameterError("max_depth must be positive");
}

Image procedural_scene(int64_t size, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int s = static_cast<int>(size);

  // Two-colour linear gradient in a random direction.
  const cv::Vec3f c0(unit(rng), unit(rng), unit(rng));
  const cv::Vec3f c1(unit(rng), unit(rng), unit(rng));
  const double angle = unit(rng) * 2.0 * M_PI;
  const double dx = std::cos(angle), dy = std::sin(angle);
  cv::Mat img(s, s, CV_32FC3);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double u = 0.5 + ((x - s / 2.0) * dx + (y - s / 2.0) * dy) / s;
      const float w = static_cast<float>(std::clamp(u, 0.0, 1.0));
      img.at<cv::Vec3f>(y, x) = c0 * (1.0f - w) + c1 * w;
    }
  }

  std::uniform_int_distribution<int> shape_count(3, 7);
  std::uniform_int_distribution<int> coord(0, s - 1);
  std::uniform_int_distribution<int> radius(std::max(2, s / 16), std::max(3, s / 4));
  const int shapes = shape_count(rng);
  for (int i = 0; i < shapes; ++i) {
    const cv::Scalar colour(unit(rng), unit(rng), unit(rng));
    const cv::Point centre(coord(rng), coord(rng));
    const int r = radius(rng);
    switch (rng() % 3) {
      case 0:
        cv::circle(img, centre, r, colour, cv::FILLED, cv::LINE_8);
        break;
      case 1:
        cv::rectangle(img, centre - cv::Point(r, r / 2), centre + cv::Point(r, r / 2), colour, cv::FILLED);
        break;
      default: {
        std::vector<cv::Point> tri{centre + cv::Point(0, -r), centre + cv::Point(r, r), centre + cv::Point(-r, r)};
        cv::fillConvexPoly(img, tri, colour, cv::LINE_8);
        break;
      }
    }
  }

  // Low-amplitude value noise: coarse random grid, bilinearly upsampled.
  constexpr int kGrid = 8;
  cv::Mat grid(kGrid, kGrid, CV_32FC3);
  for (int y = 0; y < kGrid; ++y) {
    for (int x = 0; x < kGrid; ++x) {
      grid.at<cv::Vec3f>(y, x) = cv::Vec3f(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5) * 0.12f;
    }
  }
  cv::Mat noise;
  cv::resize(grid, noise, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
  img += noise;

  auto hwc = torch::from_blob(img.data, {s, s, 3}, torch::kFloat32);
  return Image::from_tensor(hwc.permute({2, 0, 1}).clamp(0.0, 1.0));
}

DatasetManifest build_synthetic_dataset(const SynthOptions& options, const fs::path& out_root) {
  options.validate();
  std::error_code ec;
  fs::create_directories(out_root, ec);
  if (ec || !fs::is_directory(out_root)) {
    throw IoError("cannot create dataset directory '" + out_root.string() + "'");
  }

  DatasetManifest m;
  m.root = out_root;
  m.split = options.split;
  m.seed = options.seed;

  constexpr haze::DepthKind kKinds[] = {haze::DepthKind::RampH, haze::DepthKind::RampV,
                                        haze::DepthKind::Radial, haze::DepthKind::SmoothNoise};
  const double depth_scale = options.max_depth / 65535.0;
  for (int64_t i = 0; i < options.count; ++i) {
    std::seed_seq seq{static_cast<uint32_t>(options.seed), static_cast<uint32_t>(options.seed >> 32),
                      static_cast<uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto id = make_id(i);
    const auto kind = kKinds[rng() % 4];
    const uint64_t scene_seed = rng();
    const uint64_t depth_seed = rng();
    haze::HazeParams params;
    params.beta = std::exp(std::log(options.beta_min) +
                           unit(rng) * (std::log(options.beta_max) - std::log(options.beta_min)));
    for (auto& a : params.airlight) a = options.airlight_min + unit(rng) * (options.airlight_max - options.airlight_min);

    const Image clean = procedural_scene(options.size, scene_seed);
    const auto raw_depth = haze::generate_depth_field(kind, options.size, options.size, depth_seed, options.max_depth);
    // Synthesize from the quantized depth so the stored triple is self-consistent.
    const auto depth = haze::DepthField::from_tensor((raw_depth.tensor() / depth_scale).round() * depth_scale);
    const Image hazy = haze::synthesize_haze(clean, depth, params);

    ManifestEntry e;
    e.id = id;
    e.hazy = fs::path("hazy") / (id + ".png");
    e.clean = fs::path("clean") / (id + ".png");
    e.depth = fs::path("depth") / (id + ".png");
    e.depth_scale = depth_scale;
    e.depth_kind = std::string(haze::to_string(kind));
    e.params = params;
    io::write_image(out_root / e.hazy, hazy);
    io::write_image(out_root / *e.clean, clean);
    io::write_depth_png(out_root / *e.depth, depth, depth_scale);
    m.entries.push_back(std::move(e));
  }

  // Disjoint halves: hazy views of one half, clean views of the other.
  std::vector<size_t> order(m.entries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 split_rng(options.seed ^ 0x5eedULL);
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng() % i]);
  const size_t half = order.size() / 2;
  std::vector<size_t> hazy_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<size_t> clean_idx(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
  std::sort(hazy_idx.begin(), hazy_idx.end());
  std::sort(clean_idx.begin(), clean_idx.end());
  for (size_t i : hazy_idx) m.hazy_pool.push_back({m.entries[i].id, m.entries[i].hazy});
  for (size_t i : clean_idx) m.clean_pool.push_back({m.entries[i].id, *m.entries[i].clean});

  save_manifest(m);
  return m;
}

namespace {

std::vector<PoolItem> scan_pool(const fs::path& dir, std::vector<std::string>& warnings) {
  if (!fs::is_directory(dir)) throw DatasetError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PoolItem> pool;
  for (const auto& f : files) {
    if (!io::has_image_extension(f)) {
      warnings.push_back("skipping non-image file '" + f.string() + "'");
      continue;
    }
    if (cv::imread(f.string(), cv::IMREAD_COLOR).empty()) {
      warnings.push_back("skipping unreadable image '" + f.string() + "'");
      continue;
    }
    pool.push_back({f.stem().string(), fs::absolute(f)});
  }
  if (pool.empty()) throw DatasetError("'" + dir.string() + "' contains no readable images");
  return pool;
}

}  // namespace

DatasetManifest load_unpaired(const fs::path& hazy_dir, const fs::path& clean_dir) {
  DatasetManifest m;
  m.root = fs::absolute(hazy_dir).parent_path();
  m.hazy_pool = scan_pool(hazy_dir, m.warnings);
  m.clean_pool = scan_pool(clean_dir, m.warnings);
  return m;
}

UnpairedSampler::UnpairedSampler(const DatasetManifest& manifest) {
  if (manifest.hazy_pool.empty() || manifest.clean_pool.empty()) {
    throw DatasetError("both hazy and clean pools must be nonempty");
  }
  for (const auto& item : manifest.hazy_pool) hazy_.push_back({item.id, io::read_image(manifest.resolve(item.path))});
  for (const auto& item : manifest.clean_pool) clean_.push_back({item.id, io::read_image(manifest.resolve(item.path))});
}

namespace {

torch::Tensor take_crop(const Image& img, const SampleOptions& opt, std::mt19937_64& rng, CropRecord& rec) {
  torch::Tensor t = img.tensor();
  if (img.height() < opt.crop || img.width() < opt.crop) {
    if (!opt.allow_upscale) {
      throw ShapeError("crop " + std::to_string(opt.crop) + " exceeds image size " + std::to_string(img.height()) +
                       "x" + std::to_string(img.width()));
    }
    const double scale = static_cast<double>(opt.crop) / static_cast<double>(std::min(img.height(), img.width()));
    const auto h = std::max<int64_t>(opt.crop, static_cast<int64_t>(std::ceil(img.height() * scale)));
    const auto w = std::max<int64_t>(opt.crop, static_cast<int64_t>(std::ceil(img.width() * scale)));
    t = torch::nn::functional::interpolate(
            t.unsqueeze(0), torch::nn::functional::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{h, w})
                                .mode(torch::kBilinear)
                                .align_corners(false))
            .squeeze(0)
            .clamp(0.0, 1.0);
  }
  std::uniform_int_distribution<int64_t> top(0, t.size(1) - opt.crop);
  std::uniform_int_distribution<int64_t> left(0, t.size(2) - opt.crop);
  rec.top = top(rng);
  rec.left = left(rng);
  auto crop = t.narrow(1, rec.top, opt.crop).narrow(2, rec.left, opt.crop);
  if (opt.horizontal_flip) {
    rec.flipped = (rng() & 1ULL) != 0;
    if (rec.flipped) crop = crop.flip({2});
  }
  return crop.to(torch::kFloat32);
}

}  // namespace

Batch UnpairedSampler::sample(const SampleOptions& options, uint64_t seed, uint64_t step) const {
  if (options.batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (options.crop < 1) throw ParameterError("crop must be >= 1");
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(step),
                    static_cast<uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<size_t> pick_hazy(0, hazy_.size() - 1);
  std::uniform_int_distribution<size_t> pick_clean(0, clean_.size() - 1);

  Batch batch;
  std::vector<torch::Tensor> hazy, clean;
  for (int64_t b = 0; b < options.batch_size; ++b) {
    const auto& h = hazy_[pick_hazy(rng)];
    CropRecord rec;
    hazy.push_back(take_crop(h.image, options, rng, rec));
    batch.hazy_ids.push_back(h.id);
    batch.hazy_crops.push_back(rec);
  }
  for (int64_t b = 0; b < options.batch_size; ++b) {
    const auto& c = clean_[pick_clean(rng)];
    CropRecord rec;
    clean.push_back(take_crop(c.image, options, rng, rec));
    batch.clean_ids.push_back(c.id);
    batch.clean_crops.push_back(rec);
  }
  batch.hazy = torch::stack(hazy);
  batch.clean = torch::stack(clean);
  return batch;
}

}  // namespace dcm::data
