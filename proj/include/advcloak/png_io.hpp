#pragma once

#include <filesystem>

#include "advcloak/imaging.hpp"

namespace advcloak {

// 8-bit PNG, gray or RGB. Decoding divides by 255; encoding stores
// round(v * 255).
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace advcloak
