#pragma once
// Weight files: "ACKW" magic, u32 version, u64 tensor count, then per tensor
// u64 element count followed by little-endian float32 values. Each model
// writes its tensors in a fixed order; the JSON manifest next to the weights
// carries the architecture needed to rebuild before loading.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/tensor.hpp"

namespace advcloak {

void write_weights(const std::filesystem::path& path, const std::vector<const Tensor*>& tensors);
void read_weights(const std::filesystem::path& path, const std::vector<Tensor*>& tensors);

// Hex SHA-256 of the serialized tensors (identical to hashing the file).
std::string weights_hash(const std::vector<const Tensor*>& tensors);
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace advcloak
