#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "dcm/networks.hpp"

namespace dcm::archive {

/// Binary tensor container with a JSON manifest.
///
/// Layout: "DCMA" | u32 format version | u64 header length | header JSON | payload.
/// The header holds the caller's manifest, a tensor/blob index with payload offsets, and the
/// SHA-256 of the payload. Readers reject a hash or length mismatch with IntegrityError.
struct TensorArchive {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  std::map<std::string, std::string> blobs;  ///< opaque byte sections (e.g. optimizer state)

  const torch::Tensor& tensor(const std::string& name) const;
};

inline constexpr uint32_t kFormatVersion = 1;

std::string encode(const TensorArchive& archive);
TensorArchive decode(std::string_view bytes);

/// Atomic write (temp file + rename).
void write(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);

/// Appends `module`'s parameters and buffers under `prefix` + "." + name.
void add_module(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module);

/// Copies tensors stored under `prefix` into `module`. Every parameter/buffer must be present
/// with a matching shape, and no extra entries may exist under the prefix.
void load_module(const TensorArchive& archive, const std::string& prefix, torch::nn::Module& module);

/// Standalone generator weights: manifest records the architecture and toggle set.
void save_generator(const std::filesystem::path& path, const nn::Generator& generator);
/// Loads into an existing generator; rejects archives whose architecture differs, naming the
/// first differing toggle or field.
void load_generator(const std::filesystem::path& path, nn::Generator& generator);
/// Builds a generator from the archive's own manifest.
nn::Generator load_generator(const std::filesystem::path& path);

/// Throws IncompatibleError naming the first field where the two configs differ.
void require_same_architecture(const nn::GeneratorConfig& expected, const nn::GeneratorConfig& found,
                               const std::string& what);

}  // namespace dcm::archive
