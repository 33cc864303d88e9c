#pragma once
// Desk-scale identity dataset: procedural faces, face cropping, identity
// splits and target reservation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/imaging.hpp"

namespace advcloak {

// Pixel box, half-open: columns [x0, x1), rows [y0, y1).
struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  long area() const { return static_cast<long>(x1 - x0) * (y1 - y0); }
  bool operator==(const BoundingBox&) const = default;
};

struct LabeledImage {
  Image image;
  int identity_id = 0;
  int image_id = 0;
  // Ground-truth face box in the coordinates of the raw render the image was
  // cropped from.
  BoundingBox face_box;
};

struct NuisanceConfig {
  double lighting_range = 0.15;  // brightness scale drawn from [1-r, 1+r]
  int shift_range_px = 2;        // face offset drawn from [-s, s] in both axes
  double noise_sigma = 0.02;     // additive Gaussian pixel noise
};

struct SyntheticConfig {
  int num_identities = 40;
  int images_per_identity = 12;
  int image_size = 32;
  int channels = 3;
  NuisanceConfig nuisance;
  std::uint64_t seed = 7;

  void validate() const;
};

// Identity-level appearance, in face-box-normalized units.
struct IdentityParams {
  double face_rx, face_ry;
  std::array<double, 3> skin;
  std::array<double, 3> hair;
  double hairline;
  double eye_dx, eye_y, eye_r;
  std::array<double, 3> iris;
  double brow_gap, brow_thickness;
  double nose_len, nose_w;
  double mouth_y, mouth_w, mouth_h;
  std::array<double, 3> lips;

  std::vector<double> as_vector() const;
};

IdentityParams identity_parameters(const SyntheticConfig& cfg, int identity_id);

// Returns the crop of the largest box after clipping to the image. Equal
// areas are resolved by the smallest (x0, y0).
Image crop_largest_face(const Image& image, const std::vector<BoundingBox>& boxes);

std::vector<LabeledImage> generate_synthetic_identities(const SyntheticConfig& cfg);

enum class SplitMode { kByIdentity, kByImage };

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct DatasetSplits {
  std::vector<LabeledImage> train, val, test;
};

DatasetSplits split_dataset(const std::vector<LabeledImage>& data, SplitFractions fractions,
                            std::uint64_t seed, SplitMode mode = SplitMode::kByIdentity);

struct TargetReservation {
  std::vector<LabeledImage> targets;
  std::vector<LabeledImage> remainder;
};

TargetReservation reserve_target_images(const std::vector<LabeledImage>& data, int identity_id,
                                        int k);

// Deterministic Fisher-Yates driven by raw mt19937_64 output.
void deterministic_shuffle(std::vector<std::size_t>& items, std::uint64_t seed);

// Images grouped by identity, preserving order.
std::map<int, std::vector<const LabeledImage*>> group_by_identity(
    const std::vector<LabeledImage>& data);

// ---- on-disk layout: <dir>/<identity>_<image>.png + <dir>/manifest.json

struct DatasetOnDisk {
  SyntheticConfig config;
  SplitFractions fractions;
  SplitMode mode = SplitMode::kByIdentity;
  std::uint64_t split_seed = 0;
  std::vector<LabeledImage> images;
  std::map<std::pair<int, int>, std::string> split_of;  // (identity, image) -> split
  int target_identity = -1;

  DatasetSplits splits() const;
  std::vector<LabeledImage> by_split(const std::string& name) const;
};

nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);
void save_dataset(const std::filesystem::path& dir, const DatasetOnDisk& ds);
DatasetOnDisk load_dataset(const std::filesystem::path& dir);

}  // namespace advcloak
