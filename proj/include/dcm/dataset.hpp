#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "dcm/haze_model.hpp"
#include "dcm/image.hpp"

namespace dcm::data {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kManifestVersion = "dcm-dataset/1";

enum class Split { Train, Test };
Split parse_split(std::string_view name);
std::string_view to_string(Split split);

/// One dataset record. Synthetic entries always carry clean, depth and haze parameters.
struct ManifestEntry {
  std::string id;
  fs::path hazy;
  std::optional<fs::path> clean;
  std::optional<fs::path> depth;
  std::optional<double> depth_scale;  ///< metres-per-count of the 16-bit depth PNG
  std::optional<haze::HazeParams> params;
  std::optional<std::string> depth_kind;
};

/// Image available for unpaired sampling.
struct PoolItem {
  std::string id;
  fs::path path;
};

/// Dataset bookkeeping. Paths inside entries and pools are relative to `root` unless absolute.
/// The hazy and clean pools are what training samples from; for synthetic data they are built
/// from disjoint halves of the entries so no hazy image meets its own clean source.
struct DatasetManifest {
  fs::path root;
  Split split = Split::Train;
  std::vector<ManifestEntry> entries;
  uint64_t seed = 0;
  std::string version = kManifestVersion;
  std::vector<PoolItem> hazy_pool;
  std::vector<PoolItem> clean_pool;
  /// Files skipped while loading (not serialized).
  std::vector<std::string> warnings;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : root / p; }
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& doc, const fs::path& root);

/// Reads `<root>/manifest.json` and checks ids are unique and every referenced file exists.
DatasetManifest load_manifest(const fs::path& root);
void save_manifest(const DatasetManifest& manifest);

struct SynthOptions {
  int64_t count = 200;
  int64_t size = 64;
  double beta_min = 0.4;
  double beta_max = 2.0;
  double airlight_min = 0.7;
  double airlight_max = 1.0;
  double max_depth = 1.0;
  uint64_t seed = 0;
  Split split = Split::Train;

  void validate() const;
};

/// Procedural clean scene: gradient background, seeded shapes and value noise, in [0,1].
Image procedural_scene(int64_t size, uint64_t seed);

/// Writes clean/, depth/, hazy/ images and manifest.json under `out_root`. Deterministic per seed.
DatasetManifest build_synthetic_dataset(const SynthOptions& options, const fs::path& out_root);

/// Independent hazy and clean pools from two folders. Unreadable files are skipped and listed
/// in `warnings`; an empty pool raises DatasetError.
DatasetManifest load_unpaired(const fs::path& hazy_dir, const fs::path& clean_dir);

struct SampleOptions {
  int64_t batch_size = 2;
  int64_t crop = 64;
  bool horizontal_flip = true;
  /// Resize images smaller than the crop instead of rejecting them.
  bool allow_upscale = false;
};

struct CropRecord {
  int64_t top = 0;
  int64_t left = 0;
  bool flipped = false;
};

struct Batch {
  torch::Tensor hazy;   ///< [B, 3, crop, crop] float32 in [0,1]
  torch::Tensor clean;  ///< drawn independently of `hazy`
  std::vector<std::string> hazy_ids;
  std::vector<std::string> clean_ids;
  std::vector<CropRecord> hazy_crops;
  std::vector<CropRecord> clean_crops;
};

/// Holds decoded pool images and draws batches as a pure function of (seed, step).
class UnpairedSampler {
 public:
  explicit UnpairedSampler(const DatasetManifest& manifest);

  Batch sample(const SampleOptions& options, uint64_t seed, uint64_t step) const;

  size_t hazy_size() const { return hazy_.size(); }
  size_t clean_size() const { return clean_.size(); }

 private:
  struct Item {
    std::string id;
    Image image;
  };
  std::vector<Item> hazy_;
  std::vector<Item> clean_;
};

}  // namespace dcm::data
