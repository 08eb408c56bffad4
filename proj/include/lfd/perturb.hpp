#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lfd/landmarks.hpp"

namespace lfd {

enum class PerturbMode { Individual, Superposed };

struct PerturbSpec {
  PerturbMode mode = PerturbMode::Individual;
  double sigma_landmark = 0.10;  // fraction of face size
  double sigma_face = 0.10;      // Superposed only
  int replicas_per_face = 5;
  std::uint64_t seed = 0;

  static PerturbSpec individual(std::uint64_t seed = 0) { return {PerturbMode::Individual, 0.10, 0.0, 5, seed}; }
  static PerturbSpec superposed(std::uint64_t seed = 0) { return {PerturbMode::Superposed, 0.07, 0.10, 5, seed}; }

  /// Throws InvalidArgument.
  void validate() const;
};

struct IndividualReplica {
  LandmarkSet landmarks;
  std::array<double, kLandmarkCount> distance{};  // px, per landmark; 0 when absent
};

struct SuperposedReplica {
  LandmarkSet landmarks;
  double mae = 0.0;  // px, over the landmarks present in gt
};

/// Radial error |N(0, sigma)| in a uniformly random direction, drawn
/// independently per landmark and replica.
std::vector<IndividualReplica> perturb_individual(const LandmarkSet& gt, const PerturbSpec& spec,
                                                  double face_size);

/// One face-level displacement per replica plus independent per-landmark terms.
std::vector<SuperposedReplica> perturb_superposed(const LandmarkSet& gt, const PerturbSpec& spec,
                                                  double face_size);

/// Face size in source pixels implied by the inter-ocular distance
/// (canonical eyes are 40% of the face apart).
double face_size_from_eyes(const LandmarkSet& landmarks);

}  // namespace lfd
