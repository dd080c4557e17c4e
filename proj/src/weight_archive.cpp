#include "dcm/weight_archive.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "dcm/errors.hpp"
#include "dcm/image_io.hpp"

namespace dcm::archive {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'M', 'A'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, size_t offset) {
  if (offset + sizeof(T) > bytes.size()) throw IntegrityError("archive is truncated");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw ParameterError("archive: unsupported tensor dtype");
  }
}

torch::ScalarType dtype_from(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  throw IntegrityError("archive: unknown dtype '" + name + "'");
}

}  // namespace

const torch::Tensor& TensorArchive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IncompatibleError("archive has no tensor named '" + name + "'");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

std::string encode(const TensorArchive& archive) {
  std::string payload;
  auto index = nlohmann::json::array();
  for (const auto& [name, tensor] : archive.tensors) {
    auto t = tensor.detach().cpu().contiguous();
    const size_t nbytes = static_cast<size_t>(t.numel()) * t.element_size();
    index.push_back({{"name", name},
                     {"dtype", dtype_name(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", payload.size()},
                     {"nbytes", nbytes}});
    payload.append(static_cast<const char*>(t.data_ptr()), nbytes);
  }
  auto blob_index = nlohmann::json::array();
  for (const auto& [name, bytes] : archive.blobs) {
    blob_index.push_back({{"name", name}, {"offset", payload.size()}, {"nbytes", bytes.size()}});
    payload.append(bytes);
  }
  nlohmann::json header{{"manifest", archive.manifest},
                        {"tensors", index},
                        {"blobs", blob_index},
                        {"payload_bytes", payload.size()},
                        {"content_sha256", sha256_hex(payload)}};
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kFormatVersion);
  put<uint64_t>(out, header_text.size());
  out += header_text;
  out += payload;
  return out;
}

TensorArchive decode(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError("not a weight archive (bad magic or truncated header)");
  }
  const auto version = take<uint32_t>(bytes, 4);
  if (version != kFormatVersion) {
    throw IncompatibleError("archive format version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  }
  const auto header_len = take<uint64_t>(bytes, 8);
  const size_t header_begin = 16;
  if (header_begin + header_len > bytes.size()) throw IntegrityError("archive header is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_begin, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("archive header is corrupt: ") + e.what());
  }
  const auto payload = bytes.substr(header_begin + header_len);
  if (payload.size() != header.at("payload_bytes").get<size_t>()) {
    throw IntegrityError("archive payload is " + std::to_string(payload.size()) + " bytes, expected " +
                         std::to_string(header.at("payload_bytes").get<size_t>()));
  }
  if (sha256_hex(payload) != header.at("content_sha256").get<std::string>()) {
    throw IntegrityError("archive content hash mismatch");
  }

  TensorArchive archive;
  archive.manifest = header.at("manifest");
  for (const auto& entry : header.at("tensors")) {
    const auto offset = entry.at("offset").get<size_t>();
    const auto nbytes = entry.at("nbytes").get<size_t>();
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(entry.at("dtype"))));
    if (static_cast<size_t>(t.numel()) * t.element_size() != nbytes || offset + nbytes > payload.size()) {
      throw IntegrityError("archive tensor '" + entry.at("name").get<std::string>() + "' is inconsistent");
    }
    std::memcpy(t.data_ptr(), payload.data() + offset, nbytes);
    archive.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  for (const auto& entry : header.at("blobs")) {
    const auto offset = entry.at("offset").get<size_t>();
    const auto nbytes = entry.at("nbytes").get<size_t>();
    if (offset + nbytes > payload.size()) throw IntegrityError("archive blob is out of range");
    archive.blobs.emplace(entry.at("name").get<std::string>(), std::string(payload.substr(offset, nbytes)));
  }
  return archive;
}

void write(const std::filesystem::path& path, const TensorArchive& archive) {
  io::write_file_atomic(path, encode(archive));
}

TensorArchive read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

void add_module(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    archive.tensors.emplace_back(prefix + "." + item.key(), item.value().detach().clone());
  }
  for (const auto& item : module.named_buffers(/*recurse=*/true)) {
    archive.tensors.emplace_back(prefix + "." + item.key(), item.value().detach().clone());
  }
}

void load_module(const TensorArchive& archive, const std::string& prefix, torch::nn::Module& module) {
  const std::string head = prefix + ".";
  std::map<std::string, const torch::Tensor*> stored;
  for (const auto& [name, t] : archive.tensors) {
    if (name.rfind(head, 0) == 0) stored.emplace(name.substr(head.size()), &t);
  }
  std::set<std::string> used;
  torch::NoGradGuard guard;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    auto it = stored.find(key);
    if (it == stored.end()) throw IncompatibleError("archive is missing '" + head + key + "'");
    if (it->second->sizes() != target.sizes()) {
      throw IncompatibleError("archive tensor '" + head + key + "' has a different shape");
    }
    target.copy_(*it->second);
    used.insert(key);
  };
  for (auto& item : module.named_parameters(true)) assign(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) assign(item.key(), item.value());
  for (const auto& [key, _] : stored) {
    if (!used.count(key)) throw IncompatibleError("archive has unexpected tensor '" + head + key + "'");
  }
}

void require_same_architecture(const nn::GeneratorConfig& expected, const nn::GeneratorConfig& found,
                               const std::string& what) {
  const nlohmann::json a = expected;
  const nlohmann::json b = found;
  for (const auto& key : {"ddscm", "dfre", "ffm"}) {
    if (a["toggles"][key] != b["toggles"][key]) {
      throw IncompatibleError(what + ": toggle '" + key + "' differs (expected " + a["toggles"][key].dump() +
                              ", archive has " + b["toggles"][key].dump() + ")");
    }
  }
  for (const auto& [key, value] : a.items()) {
    if (key == "toggles" || key == "pad_to_multiple") continue;
    if (!b.contains(key) || b[key] != value) {
      throw IncompatibleError(what + ": architecture field '" + key + "' differs");
    }
  }
}

namespace {

constexpr const char* kGeneratorKind = "dcm-generator";

}  // namespace

void save_generator(const std::filesystem::path& path, const nn::Generator& generator) {
  TensorArchive archive;
  archive.manifest = {{"kind", kGeneratorKind}, {"generator", generator->config()}};
  add_module(archive, "generator", *generator);
  write(path, archive);
}

void load_generator(const std::filesystem::path& path, nn::Generator& generator) {
  auto archive = read(path);
  if (archive.manifest.value("kind", "") != kGeneratorKind) {
    throw IncompatibleError("'" + path.string() + "' is not a generator archive");
  }
  require_same_architecture(generator->config(), archive.manifest.at("generator").get<nn::GeneratorConfig>(),
                            path.string());
  load_module(archive, "generator", *generator);
}

nn::Generator load_generator(const std::filesystem::path& path) {
  auto archive = read(path);
  if (archive.manifest.value("kind", "") != kGeneratorKind) {
    throw IncompatibleError("'" + path.string() + "' is not a generator archive");
  }
  nn::Generator g(archive.manifest.at("generator").get<nn::GeneratorConfig>());
  load_module(archive, "generator", *g);
  return g;
}

}  // namespace dcm::archive
