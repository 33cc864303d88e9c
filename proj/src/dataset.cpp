#include "advcloak/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "advcloak/errors.hpp"
#include "advcloak/png_io.hpp"

namespace advcloak {

void SyntheticConfig::validate() const {
  if (num_identities < 2) throw InvalidArgument("synthetic config: need at least 2 identities");
  if (images_per_identity < 2) throw InvalidArgument("synthetic config: need at least 2 images per identity");
  if (image_size < 8) throw InvalidArgument("synthetic config: image_size must be >= 8");
  if (channels != 1 && channels != 3) throw InvalidArgument("synthetic config: channels must be 1 or 3");
  if (nuisance.lighting_range < 0.0 || nuisance.lighting_range >= 1.0) {
    throw InvalidArgument("synthetic config: lighting_range must be in [0,1)");
  }
  if (nuisance.shift_range_px < 0) throw InvalidArgument("synthetic config: negative shift range");
  if (nuisance.noise_sigma < 0.0) throw InvalidArgument("synthetic config: negative noise sigma");
}

std::vector<double> IdentityParams::as_vector() const {
  std::vector<double> v{face_rx, face_ry, hairline, eye_dx, eye_y, eye_r, brow_gap,
                        brow_thickness, nose_len, nose_w, mouth_y, mouth_w, mouth_h};
  for (const auto* arr : {&skin, &hair, &iris, &lips}) v.insert(v.end(), arr->begin(), arr->end());
  return v;
}

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), 0x5eedu};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  // 53-bit mantissa from raw output; independent of the standard library's
  // distribution implementation.
  const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + (hi - lo) * u;
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller on raw draws.
  double u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::array<double, 3> rgb(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

bool in_ellipse(double u, double v, double cu, double cv, double ru, double rv) {
  const double a = (u - cu) / ru, b = (v - cv) / rv;
  return a * a + b * b <= 1.0;
}

std::array<double, 3> shade(const IdentityParams& p, double u, double v, double bg_v) {
  std::array<double, 3> c{0.55 + 0.1 * bg_v, 0.57 + 0.1 * bg_v, 0.6 + 0.1 * bg_v};
  // hair: a slightly larger ellipse behind the face, visible above the hairline
  if (in_ellipse(u, v, 0.0, -0.08, p.face_rx * 1.12, p.face_ry * 1.08) && v < p.hairline + 0.15) {
    c = p.hair;
  }
  if (!in_ellipse(u, v, 0.0, 0.0, p.face_rx, p.face_ry)) return c;
  if (v < p.hairline) return p.hair;
  c = p.skin;
  const double ax = std::abs(u);
  // brows
  const double brow_v = p.eye_y - p.eye_r - p.brow_gap;
  if (std::abs(v - brow_v) < p.brow_thickness && std::abs(ax - p.eye_dx) < p.eye_r * 1.5) {
    return p.hair;
  }
  // eyes: sclera, iris, pupil
  if (in_ellipse(ax, v, p.eye_dx, p.eye_y, p.eye_r * 1.4, p.eye_r)) {
    const double d = std::hypot(ax - p.eye_dx, v - p.eye_y);
    if (d < p.eye_r * 0.35) return {0.05, 0.05, 0.05};
    if (d < p.eye_r * 0.8) return p.iris;
    return {0.95, 0.95, 0.93};
  }
  // nose: narrow darker wedge below the eyes
  const double nose_top = p.eye_y + 0.05;
  if (v > nose_top && v < nose_top + p.nose_len) {
    const double frac = (v - nose_top) / p.nose_len;
    if (ax < p.nose_w * (0.3 + 0.7 * frac)) {
      return {c[0] * 0.8, c[1] * 0.8, c[2] * 0.8};
    }
  }
  if (in_ellipse(u, v, 0.0, p.mouth_y, p.mouth_w, p.mouth_h)) return p.lips;
  return c;
}

}  // namespace

IdentityParams identity_parameters(const SyntheticConfig& cfg, int identity_id) {
  auto rng = make_rng(cfg.seed, 0x1d, static_cast<std::uint64_t>(identity_id));
  IdentityParams p{};
  p.face_rx = uniform(rng, 0.58, 0.86);
  p.face_ry = uniform(rng, 0.76, 0.96);
  const double tone = uniform(rng, 0.3, 0.92);
  p.skin = {std::clamp(tone + uniform(rng, -0.06, 0.06), 0.0, 1.0),
            std::clamp(tone * 0.8 + uniform(rng, -0.06, 0.06), 0.0, 1.0),
            std::clamp(tone * 0.65 + uniform(rng, -0.06, 0.06), 0.0, 1.0)};
  p.hair = rgb(rng, 0.03, 0.75);
  p.hairline = uniform(rng, -0.78, -0.35);
  p.eye_dx = uniform(rng, 0.2, 0.42);
  p.eye_y = uniform(rng, -0.28, -0.05);
  p.eye_r = uniform(rng, 0.07, 0.14);
  p.iris = rgb(rng, 0.05, 0.8);
  p.brow_gap = uniform(rng, 0.02, 0.1);
  p.brow_thickness = uniform(rng, 0.02, 0.06);
  p.nose_len = uniform(rng, 0.15, 0.4);
  p.nose_w = uniform(rng, 0.06, 0.16);
  p.mouth_y = uniform(rng, 0.38, 0.62);
  p.mouth_w = uniform(rng, 0.14, 0.4);
  p.mouth_h = uniform(rng, 0.04, 0.1);
  p.lips = {uniform(rng, 0.4, 0.9), uniform(rng, 0.1, 0.45), uniform(rng, 0.1, 0.45)};
  return p;
}

Image crop_largest_face(const Image& image, const std::vector<BoundingBox>& boxes) {
  if (boxes.empty()) throw InvalidArgument("crop_largest_face: no boxes");
  bool found = false;
  BoundingBox best{};
  for (const auto& b : boxes) {
    if (b.x0 >= b.x1 || b.y0 >= b.y1) throw InvalidArgument("crop_largest_face: degenerate box");
    BoundingBox c{std::max(b.x0, 0), std::max(b.y0, 0), std::min(b.x1, image.width),
                  std::min(b.y1, image.height)};
    if (c.x0 >= c.x1 || c.y0 >= c.y1) {
      throw InvalidArgument("crop_largest_face: box lies fully outside the image");
    }
    const bool better = !found || c.area() > best.area() ||
                        (c.area() == best.area() && std::pair(c.x0, c.y0) < std::pair(best.x0, best.y0));
    if (better) {
      best = c;
      found = true;
    }
  }
  Image out(best.y1 - best.y0, best.x1 - best.x0, image.channels);
  for (int y = best.y0; y < best.y1; ++y) {
    for (int x = best.x0; x < best.x1; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(y - best.y0, x - best.x0, c) = image.at(y, x, c);
    }
  }
  return out;
}

std::vector<LabeledImage> generate_synthetic_identities(const SyntheticConfig& cfg) {
  cfg.validate();
  const int size = cfg.image_size;
  const int canvas = size + size / 4;
  const int face_side = size + size / 8;
  const int face_off = (canvas - face_side) / 2;
  const BoundingBox face_box{face_off, face_off, face_off + face_side, face_off + face_side};
  const int blob = std::max(2, size / 6);
  const BoundingBox distractor{0, 0, blob, blob};
  const double centre = canvas / 2.0;
  const double half = face_side / 2.0;

  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(cfg.num_identities) * cfg.images_per_identity);
  for (int id = 0; id < cfg.num_identities; ++id) {
    const IdentityParams params = identity_parameters(cfg, id);
    for (int k = 0; k < cfg.images_per_identity; ++k) {
      auto rng = make_rng(cfg.seed, 0x100 + static_cast<std::uint64_t>(id),
                          static_cast<std::uint64_t>(k));
      const double light = uniform(rng, 1.0 - cfg.nuisance.lighting_range,
                                   1.0 + cfg.nuisance.lighting_range);
      const int s = cfg.nuisance.shift_range_px;
      const int dx = s == 0 ? 0 : static_cast<int>(rng() % static_cast<std::uint64_t>(2 * s + 1)) - s;
      const int dy = s == 0 ? 0 : static_cast<int>(rng() % static_cast<std::uint64_t>(2 * s + 1)) - s;
      const auto blob_color = rgb(rng, 0.2, 0.9);

      Image raw(canvas, canvas, cfg.channels);
      for (int y = 0; y < canvas; ++y) {
        for (int x = 0; x < canvas; ++x) {
          std::array<double, 3> acc{0.0, 0.0, 0.0};
          // 2x2 supersampling
          for (int sy = 0; sy < 2; ++sy) {
            for (int sx = 0; sx < 2; ++sx) {
              const double px = x + 0.25 + 0.5 * sx;
              const double py = y + 0.25 + 0.5 * sy;
              const double u = (px - centre - dx) / half;
              const double v = (py - centre - dy) / half;
              std::array<double, 3> c = shade(params, u, v, (py - centre) / centre);
              if (x < distractor.x1 && y < distractor.y1) c = blob_color;
              for (int i = 0; i < 3; ++i) acc[i] += 0.25 * c[i];
            }
          }
          if (cfg.channels == 3) {
            for (int c = 0; c < 3; ++c) raw.at(y, x, c) = acc[c];
          } else {
            raw.at(y, x, 0) = 0.299 * acc[0] + 0.587 * acc[1] + 0.114 * acc[2];
          }
        }
      }
      for (double& v : raw.data) {
        v = std::clamp(v * light + cfg.nuisance.noise_sigma * gaussian(rng), 0.0, 1.0);
      }
      Image face = crop_largest_face(raw, {distractor, face_box});
      LabeledImage li;
      li.image = resize_bilinear(face, size, size);
      li.identity_id = id;
      li.image_id = k;
      li.face_box = face_box;
      out.push_back(std::move(li));
    }
  }
  return out;
}

void deterministic_shuffle(std::vector<std::size_t>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

std::map<int, std::vector<const LabeledImage*>> group_by_identity(
    const std::vector<LabeledImage>& data) {
  std::map<int, std::vector<const LabeledImage*>> groups;
  for (const auto& li : data) groups[li.identity_id].push_back(&li);
  return groups;
}

DatasetSplits split_dataset(const std::vector<LabeledImage>& data, SplitFractions f,
                            std::uint64_t seed, SplitMode mode) {
  if (f.train < 0 || f.val < 0 || f.test < 0) throw InvalidArgument("split fractions must be >= 0");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw InvalidArgument("split fractions must sum to 1");
  }
  // Units are identities or images depending on mode.
  std::vector<int> unit_of(data.size());
  std::vector<int> unit_keys;
  if (mode == SplitMode::kByIdentity) {
    std::set<int> ids;
    for (const auto& li : data) ids.insert(li.identity_id);
    unit_keys.assign(ids.begin(), ids.end());
    for (std::size_t i = 0; i < data.size(); ++i) {
      unit_of[i] = static_cast<int>(std::lower_bound(unit_keys.begin(), unit_keys.end(),
                                                     data[i].identity_id) - unit_keys.begin());
    }
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      unit_keys.push_back(static_cast<int>(i));
      unit_of[i] = static_cast<int>(i);
    }
  }
  const std::size_t units = unit_keys.size();
  const std::array<double, 3> fr{f.train, f.val, f.test};
  const int nonzero = static_cast<int>(std::count_if(fr.begin(), fr.end(), [](double v) { return v > 0; }));
  if (static_cast<int>(units) < nonzero) {
    throw InvalidArgument("split_dataset: fewer units than non-empty splits");
  }
  std::array<std::size_t, 3> counts{};
  for (int s = 0; s < 3; ++s) {
    counts[s] = fr[s] > 0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fr[s] * units))) : 0;
  }
  // Reconcile rounding: adjust the largest split until the total matches.
  auto total = [&] { return counts[0] + counts[1] + counts[2]; };
  while (total() != units) {
    int s = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (total() > units) {
      --counts[s];
    } else {
      s = static_cast<int>(std::max_element(fr.begin(), fr.end()) - fr.begin());
      ++counts[s];
    }
  }
  std::vector<std::size_t> order(units);
  for (std::size_t i = 0; i < units; ++i) order[i] = i;
  deterministic_shuffle(order, seed);
  std::vector<int> split_of_unit(units);
  std::size_t pos = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < counts[s]; ++k) split_of_unit[order[pos++]] = s;
  }
  DatasetSplits out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    switch (split_of_unit[unit_of[i]]) {
      case 0: out.train.push_back(data[i]); break;
      case 1: out.val.push_back(data[i]); break;
      default: out.test.push_back(data[i]); break;
    }
  }
  return out;
}

TargetReservation reserve_target_images(const std::vector<LabeledImage>& data, int identity_id,
                                        int k) {
  if (k < 0) throw InvalidArgument("reserve_target_images: negative k");
  std::vector<int> ids;
  for (const auto& li : data) {
    if (li.identity_id == identity_id) ids.push_back(li.image_id);
  }
  if (static_cast<int>(ids.size()) < k) {
    throw InvalidArgument("reserve_target_images: identity has only " + std::to_string(ids.size()) +
                          " images, need " + std::to_string(k));
  }
  std::sort(ids.begin(), ids.end());
  const std::set<int> chosen(ids.begin(), ids.begin() + k);
  TargetReservation out;
  std::vector<const LabeledImage*> picked;
  for (const auto& li : data) {
    if (li.identity_id == identity_id && chosen.count(li.image_id)) {
      picked.push_back(&li);
    } else {
      out.remainder.push_back(li);
    }
  }
  std::sort(picked.begin(), picked.end(),
            [](const LabeledImage* a, const LabeledImage* b) { return a->image_id < b->image_id; });
  for (const auto* p : picked) out.targets.push_back(*p);
  return out;
}

// ------------------------------------------------------------ persistence

nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg) {
  return {{"num_identities", cfg.num_identities},
          {"images_per_identity", cfg.images_per_identity},
          {"image_size", cfg.image_size},
          {"channels", cfg.channels},
          {"nuisance",
           {{"lighting_range", cfg.nuisance.lighting_range},
            {"shift_range_px", cfg.nuisance.shift_range_px},
            {"noise_sigma", cfg.nuisance.noise_sigma}}},
          {"seed", cfg.seed}};
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  c.num_identities = j.at("num_identities").get<int>();
  c.images_per_identity = j.at("images_per_identity").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.channels = j.at("channels").get<int>();
  c.nuisance.lighting_range = j.at("nuisance").at("lighting_range").get<double>();
  c.nuisance.shift_range_px = j.at("nuisance").at("shift_range_px").get<int>();
  c.nuisance.noise_sigma = j.at("nuisance").at("noise_sigma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

std::string image_file_name(int identity, int image) {
  return std::to_string(identity) + "_" + std::to_string(image) + ".png";
}

}  // namespace

DatasetSplits DatasetOnDisk::splits() const {
  return {by_split("train"), by_split("val"), by_split("test")};
}

std::vector<LabeledImage> DatasetOnDisk::by_split(const std::string& name) const {
  std::vector<LabeledImage> out;
  for (const auto& li : images) {
    auto it = split_of.find({li.identity_id, li.image_id});
    if (it != split_of.end() && it->second == name) out.push_back(li);
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const DatasetOnDisk& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& li : ds.images) {
    const std::string file = image_file_name(li.identity_id, li.image_id);
    write_png(dir / file, li.image);
    auto it = ds.split_of.find({li.identity_id, li.image_id});
    entries.push_back({{"file", file},
                       {"identity_id", li.identity_id},
                       {"image_id", li.image_id},
                       {"box", {li.face_box.x0, li.face_box.y0, li.face_box.x1, li.face_box.y1}},
                       {"split", it == ds.split_of.end() ? "unassigned" : it->second}});
  }
  nlohmann::json manifest{
      {"synthetic_config", synthetic_config_to_json(ds.config)},
      {"split",
       {{"fractions", {ds.fractions.train, ds.fractions.val, ds.fractions.test}},
        {"mode", ds.mode == SplitMode::kByIdentity ? "by_identity" : "by_image"},
        {"seed", ds.split_seed}}},
      {"target_identity", ds.target_identity},
      {"images", entries}};
  std::ofstream f(dir / "manifest.json");
  f << manifest.dump(2) << "\n";
}

DatasetOnDisk load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) throw MissingArtifact("dataset manifest not found: " + manifest_path.string());
  const auto j = nlohmann::json::parse(f);
  DatasetOnDisk ds;
  ds.config = synthetic_config_from_json(j.at("synthetic_config"));
  const auto& fr = j.at("split").at("fractions");
  ds.fractions = {fr.at(0).get<double>(), fr.at(1).get<double>(), fr.at(2).get<double>()};
  ds.mode = j.at("split").at("mode").get<std::string>() == "by_image" ? SplitMode::kByImage
                                                                      : SplitMode::kByIdentity;
  ds.split_seed = j.at("split").at("seed").get<std::uint64_t>();
  ds.target_identity = j.at("target_identity").get<int>();
  for (const auto& e : j.at("images")) {
    LabeledImage li;
    li.image = read_png(dir / e.at("file").get<std::string>());
    li.identity_id = e.at("identity_id").get<int>();
    li.image_id = e.at("image_id").get<int>();
    const auto& b = e.at("box");
    li.face_box = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    ds.split_of[{li.identity_id, li.image_id}] = e.at("split").get<std::string>();
    ds.images.push_back(std::move(li));
  }
  return ds;
}

}  // namespace advcloak
