#include "advcloak/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "advcloak/errors.hpp"

namespace advcloak {
namespace {

static_assert(std::endian::native == std::endian::little, "weight files assume little-endian hosts");

constexpr char kMagic[4] = {'A', 'C', 'K', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

std::string serialize(const std::vector<const Tensor*>& tensors) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, tensors.size());
  for (const Tensor* t : tensors) {
    put<std::uint64_t>(out, t->size());
    out.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(float));
  }
  return out;
}

}  // namespace

void write_weights(const std::filesystem::path& path, const std::vector<const Tensor*>& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = serialize(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void read_weights(const std::filesystem::path& path, const std::vector<Tensor*>& tensors) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("weights not found: " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  f.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!f || std::memcmp(magic, kMagic, 4) != 0 || version != kVersion) {
    throw std::runtime_error("not a weight file: " + path.string());
  }
  if (count != tensors.size()) {
    throw std::runtime_error("weight file " + path.string() + " holds " + std::to_string(count) +
                             " tensors, model expects " + std::to_string(tensors.size()));
  }
  for (Tensor* t : tensors) {
    std::uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (n != t->size()) throw std::runtime_error("tensor size mismatch in " + path.string());
    f.read(reinterpret_cast<char*>(t->data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
  if (!f) throw std::runtime_error("truncated weight file " + path.string());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string weights_hash(const std::vector<const Tensor*>& tensors) {
  return sha256_hex(serialize(tensors));
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("cannot hash missing file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return sha256_hex(ss.str());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingArtifact("file not found: " + path.string());
  return nlohmann::json::parse(f);
}

}  // namespace advcloak
