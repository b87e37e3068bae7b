#include "densedyn/pca.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace densedyn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) v = -v;
}

}  // namespace

PcaResult pca(const Tensor& x, std::size_t n_components, const PcaOptions& options) {
  require_rank(x, 2, "pca input");
  const std::size_t p = x.dim(0), d = x.dim(1);
  if (p < 2) throw std::invalid_argument("pca: need at least 2 rows, got " + std::to_string(p));
  if (n_components == 0 || n_components > std::min(p, d)) {
    throw std::invalid_argument("pca: n_components=" + std::to_string(n_components) + " outside [1, " +
                                std::to_string(std::min(p, d)) + "]");
  }

  Eigen::Map<const RowMatrix> raw(x.data().data(), static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mean = raw.colwise().mean();
  const RowMatrix xc = raw.rowwise() - mean;
  const double denom = static_cast<double>(p - 1);

  PcaResult out;
  out.mean = Tensor({d});
  for (std::size_t j = 0; j < d; ++j) out.mean[j] = mean[static_cast<Eigen::Index>(j)];
  out.total_variance = xc.squaredNorm() / denom;

  // Descending eigenpairs of the smaller of the two Gram forms.
  const bool gram = d > p;
  const Eigen::MatrixXd m = gram ? Eigen::MatrixXd(xc * xc.transpose() / denom) : Eigen::MatrixXd(xc.transpose() * xc / denom);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca: eigendecomposition failed");
  const Eigen::VectorXd evals = solver.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = solver.eigenvectors().rowwise().reverse();

  const double top = evals.size() > 0 ? evals[0] : 0.0;
  const double tol = std::max(top, 0.0) * 1e-10;
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    if (top > 0.0 && evals[i] > tol) ++out.rank;
  }
  if (options.require_rank && n_components > out.rank) {
    throw std::invalid_argument("pca: n_components=" + std::to_string(n_components) + " exceeds data rank " +
                                std::to_string(out.rank));
  }

  out.axes = Tensor({n_components, d});
  out.scores = Tensor({p, n_components});
  for (std::size_t c = 0; c < n_components; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const bool live = c < out.rank;
    out.eigenvalues.push_back(live ? evals[ci] : 0.0);
    out.variance_explained.push_back(live && out.total_variance > 0.0 ? evals[ci] / out.total_variance : 0.0);
    if (!live) continue;
    Eigen::VectorXd axis = gram ? Eigen::VectorXd(xc.transpose() * evecs.col(ci)) : Eigen::VectorXd(evecs.col(ci));
    axis.normalize();
    fix_sign(axis);
    const Eigen::VectorXd s = xc * axis;
    for (std::size_t j = 0; j < d; ++j) out.axes[c * d + j] = axis[static_cast<Eigen::Index>(j)];
    for (std::size_t r = 0; r < p; ++r) out.scores[r * n_components + c] = s[static_cast<Eigen::Index>(r)];
  }
  return out;
}

}  // namespace densedyn
