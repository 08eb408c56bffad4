#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "lfd/annotations.hpp"

namespace lfd {

/// Procedural face-like images with exact landmark ground truth. Every
/// landmark carries a small planted ring texture centered on it.
struct SynthOptions {
  int count = 100;
  int image_size = 192;
  std::uint64_t seed = 0;
  bool planted_noise_chin = false;  // white noise replaces the chin region
  bool gender_cue = false;          // stripes at the chin, orientation by gender
  double max_rotation_deg = 8.0;
  double pixel_noise = 3.0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Radius of the chin noise disk as a fraction of the face size.
inline constexpr double kChinNoiseRadius = 0.12;

struct SynthFace {
  std::string face_id;
  GrayImage image;
  LandmarkSet landmarks;
  Pose pose;
  int gender = 1;
  double face_size = 0.0;  // px
};

/// Face `index` of the corpus; depends only on (options, index).
SynthFace render_synthetic_face(const SynthOptions& options, std::size_t index);

Dataset synthetic_dataset(const SynthOptions& options, int threads = 1);

/// Writes images/<id>.pgm and annotations.json under `dir`.
AnnotationFile write_synthetic_corpus(const SynthOptions& options, const std::filesystem::path& dir, int threads = 1);

}  // namespace lfd
