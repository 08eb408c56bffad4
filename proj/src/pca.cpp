#include <algorithm>

#include <Eigen/SVD>

#include "lfd/descriptors.hpp"
#include "lfd/error.hpp"

namespace lfd {

Eigen::MatrixXd PcaModel::project_rows(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean.transpose()) * components.transpose();
}

void PcaModel::update_fingerprint() {
  std::uint64_t h = fnv1a(mean.data(), sizeof(double) * mean.size());
  h = fnv1a(components.data(), sizeof(double) * components.size(), h);
  fingerprint = fnv1a(explained_variance.data(), sizeof(double) * explained_variance.size(), h);
}

PcaModel pca_fit(const Eigen::MatrixXd& samples, int target_dim) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n < 2) raise(ErrorCode::InvalidArgument, "PCA needs at least 2 samples");
  if (d < 1) raise(ErrorCode::DimensionMismatch, "PCA samples have zero dimension");
  if (target_dim < 1) raise(ErrorCode::InvalidArgument, "target_dim must be >= 1");
  if (!samples.allFinite()) raise(ErrorCode::NonFiniteInput, "non-finite PCA sample");

  PcaModel model;
  model.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - model.mean.transpose();
  const Eigen::Index k = std::min<Eigen::Index>({target_dim, d, n - 1});

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  model.components = svd.matrixV().leftCols(k).transpose();
  model.explained_variance =
      svd.singularValues().head(k).array().square() / static_cast<double>(n - 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    auto row = model.components.row(i);
    Eigen::Index arg = 0;
    row.cwiseAbs().maxCoeff(&arg);
    if (row(arg) < 0.0) row = -row;
  }
  model.update_fingerprint();
  return model;
}

PcaModel pca_fit(std::span<const FeatureVector> samples, int target_dim) {
  if (samples.empty()) raise(ErrorCode::InvalidArgument, "PCA needs at least 2 samples");
  const Eigen::Index d = samples.front().values.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].values.size() != d) raise(ErrorCode::DimensionMismatch, "inconsistent sample dimensions");
    x.row(static_cast<Eigen::Index>(i)) = samples[i].values.transpose();
  }
  return pca_fit(x, target_dim);
}

}  // namespace lfd
