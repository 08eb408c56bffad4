#include "lfd/perturb.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "lfd/error.hpp"
#include "lfd/metrics.hpp"
#include "lfd/random.hpp"

namespace lfd {

void PerturbSpec::validate() const {
  if (!(sigma_landmark >= 0.0) || !(sigma_face >= 0.0)) raise(ErrorCode::InvalidArgument, "perturbation sigmas must be >= 0");
  if (replicas_per_face < 1) raise(ErrorCode::InvalidArgument, "replicas_per_face must be >= 1");
}

namespace {

struct RadialSampler {
  Rng rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> angle{0.0, 2.0 * std::numbers::pi};

  Point2 draw(double sigma) {
    const double magnitude = std::abs(sigma * normal(rng));
    const double theta = angle(rng);
    return magnitude * Point2(std::cos(theta), std::sin(theta));
  }
};

void check_face_size(double face_size) {
  if (!(face_size > 0.0) || !std::isfinite(face_size)) raise(ErrorCode::InvalidArgument, "face_size must be > 0");
}

}  // namespace

std::vector<IndividualReplica> perturb_individual(const LandmarkSet& gt, const PerturbSpec& spec,
                                                  double face_size) {
  spec.validate();
  check_face_size(face_size);
  if (spec.mode != PerturbMode::Individual) raise(ErrorCode::InvalidArgument, "spec mode must be Individual");
  RadialSampler sampler{Rng(spec.seed)};
  const double sigma = spec.sigma_landmark * face_size;
  std::vector<IndividualReplica> out(static_cast<std::size_t>(spec.replicas_per_face));
  for (auto& replica : out) {
    for (Landmark lm : kAllLandmarks) {
      if (!gt.has(lm)) continue;
      const Point2 offset = sampler.draw(sigma);
      replica.landmarks.set(lm, gt.at(lm) + offset);
      replica.distance[static_cast<std::size_t>(lm)] = offset.norm();
    }
  }
  return out;
}

std::vector<SuperposedReplica> perturb_superposed(const LandmarkSet& gt, const PerturbSpec& spec,
                                                  double face_size) {
  spec.validate();
  check_face_size(face_size);
  if (spec.mode != PerturbMode::Superposed) raise(ErrorCode::InvalidArgument, "spec mode must be Superposed");
  if (gt.present().empty()) raise(ErrorCode::NoCommonLandmarks, "ground truth has no landmarks");
  RadialSampler sampler{Rng(spec.seed)};
  const double sigma_face = spec.sigma_face * face_size;
  const double sigma_lm = spec.sigma_landmark * face_size;
  std::vector<SuperposedReplica> out(static_cast<std::size_t>(spec.replicas_per_face));
  for (auto& replica : out) {
    const Point2 shift = sampler.draw(sigma_face);
    for (Landmark lm : kAllLandmarks) {
      if (!gt.has(lm)) continue;
      replica.landmarks.set(lm, gt.at(lm) + shift + sampler.draw(sigma_lm));
    }
    replica.mae = mae(replica.landmarks, gt);
  }
  return out;
}

double face_size_from_eyes(const LandmarkSet& landmarks) {
  const double d = (landmarks.at(Landmark::EyeR) - landmarks.at(Landmark::EyeL)).norm();
  if (!(d > 0.0)) raise(ErrorCode::CoincidentEyes, "eyes coincide");
  return d / 0.4;
}

}  // namespace lfd
