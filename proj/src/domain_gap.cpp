#include "bmm/domain_gap.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "bmm/error.hpp"
#include "bmm/parallel.hpp"

namespace bmm {
namespace {

Eigen::MatrixXd sqrt_from_eigen(const Eigen::MatrixXd& vectors, const Eigen::VectorXd& values,
                                double shift) {
  Eigen::VectorXd root = (values.array() + shift).max(0.0).sqrt();
  return vectors * root.asDiagonal() * vectors.transpose();
}

std::string describe(const PreparedStats& s) {
  std::ostringstream os;
  os << "d=" << s.mean.size() << " trace=" << s.trace << " min_eig=" << s.min_eigenvalue;
  return os.str();
}

}  // namespace

ModeStats gaussian_stats(const FeatureMatrix& features, std::span<const std::size_t> rows) {
  if (rows.size() < 2) {
    throw InsufficientSamplesError("mode statistics need at least 2 rows, got " +
                                   std::to_string(rows.size()));
  }
  const auto d = static_cast<Eigen::Index>(features.d);
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd centered(m, d);
  for (Eigen::Index r = 0; r < m; ++r) {
    auto idx = rows[static_cast<std::size_t>(r)];
    if (idx >= features.n) throw ParameterError("row index " + std::to_string(idx) + " out of range");
    auto src = features.row(idx);
    for (Eigen::Index c = 0; c < d; ++c) centered(r, c) = src[static_cast<std::size_t>(c)];
  }
  ModeStats s;
  s.count = rows.size();
  s.mean = centered.colwise().sum().transpose() / static_cast<double>(m);
  centered.rowwise() -= s.mean.transpose();
  Eigen::MatrixXd raw = (centered.transpose() * centered) / static_cast<double>(m - 1);
  s.cov = 0.5 * (raw + raw.transpose());
  return s;
}

ModeStats gaussian_stats(const FeatureMatrix& features) {
  std::vector<std::size_t> all(features.n);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return gaussian_stats(features, all);
}

void validate(const ModeStats& stats) {
  if (stats.count < 2) throw ValidationError("mode stats need count >= 2");
  const auto d = stats.mean.size();
  if (d == 0 || stats.cov.rows() != d || stats.cov.cols() != d) {
    throw ValidationError("mode stats have inconsistent shapes");
  }
  if (!stats.mean.allFinite() || !stats.cov.allFinite()) {
    throw ValidationError("mode stats contain non-finite values");
  }
  if ((stats.cov - stats.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValidationError("covariance is not symmetric within 1e-9");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stats.cov, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-8) {
    throw ValidationError("covariance is not positive semidefinite");
  }
}

PreparedStats prepare(const ModeStats& stats, double eps) {
  if (!(eps > 0.0)) throw ParameterError("covariance epsilon must be positive");
  const auto d = stats.mean.size();
  if (d == 0 || stats.cov.rows() != d || stats.cov.cols() != d) {
    throw ValidationError("mode stats have inconsistent shapes");
  }
  PreparedStats p;
  p.mean = stats.mean;
  p.cov = stats.cov;
  p.trace = stats.cov.trace();
  p.eps = eps;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stats.cov);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite()) {
    throw NumericalError("eigendecomposition of a mode covariance failed (d=" +
                         std::to_string(d) + ")");
  }
  p.min_eigenvalue = es.eigenvalues().minCoeff();
  p.sqrt_cov = sqrt_from_eigen(es.eigenvectors(), es.eigenvalues(), 0.0);
  p.sqrt_cov_reg = sqrt_from_eigen(es.eigenvectors(), es.eigenvalues(), eps);
  return p;
}

double fid(const PreparedStats& a, const PreparedStats& b) {
  if (a.mean.size() != b.mean.size()) {
    throw ParameterError("fid dimension mismatch: " + std::to_string(a.mean.size()) + " vs " +
                         std::to_string(b.mean.size()));
  }
  const double eps = std::max(a.eps, b.eps);
  const bool regularize = a.min_eigenvalue < eps || b.min_eigenvalue < eps;
  const Eigen::MatrixXd& root_a = regularize ? a.sqrt_cov_reg : a.sqrt_cov;
  Eigen::MatrixXd inner = regularize
                              ? Eigen::MatrixXd(b.cov + eps * Eigen::MatrixXd::Identity(
                                                                b.cov.rows(), b.cov.cols()))
                              : b.cov;
  Eigen::MatrixXd product = root_a * inner * root_a;
  product = 0.5 * (product + product.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(product, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite()) {
    throw NumericalError("matrix square root failed after regularization (a: " + describe(a) +
                         "; b: " + describe(b) + ")");
  }
  double trace_root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  // Regularization shifts both covariances by eps I, trace terms included,
  // so fid(s, s) stays 0 and mean shifts stay exact.
  double traces = a.trace + b.trace;
  if (regularize) traces += 2.0 * eps * static_cast<double>(a.mean.size());
  double value = (a.mean - b.mean).squaredNorm() + traces - 2.0 * trace_root;
  if (!std::isfinite(value)) {
    throw NumericalError("non-finite fid (a: " + describe(a) + "; b: " + describe(b) + ")");
  }
  return std::max(0.0, value);
}

double fid(const ModeStats& a, const ModeStats& b, double eps) {
  return fid(prepare(a, eps), prepare(b, eps));
}

double trace_sqrt_product(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_a);
  Eigen::MatrixXd root = sqrt_from_eigen(es.eigenvectors(), es.eigenvalues(), 0.0);
  Eigen::MatrixXd product = root * cov_b * root;
  product = 0.5 * (product + product.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> inner(product, Eigen::EigenvaluesOnly);
  return inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

Eigen::MatrixXd cost_matrix(std::span<const ModeStats> targets,
                            std::span<const ModeStats> candidates, double eps) {
  const std::size_t l = targets.size();
  const std::size_t h = candidates.size();
  std::vector<PreparedStats> pt(l), pc(h);
  parallel_for(l, [&](std::size_t y) { pt[y] = prepare(targets[y], eps); });
  parallel_for(h, [&](std::size_t x) { pc[x] = prepare(candidates[x], eps); });
  for (std::size_t y = 0; y < l; ++y) {
    for (std::size_t x = 0; x < h; ++x) {
      if (pt[y].mean.size() != pc[x].mean.size()) {
        throw ParameterError("target mode " + std::to_string(y) + " and candidate " +
                             std::to_string(x) + " differ in dimension");
      }
    }
  }
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(h));
  parallel_for(l * h, [&](std::size_t e) {
    std::size_t y = e / h;
    std::size_t x = e % h;
    try {
      cost(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = fid(pt[y], pc[x]);
    } catch (const NumericalError& e) {
      throw NumericalError("target mode " + std::to_string(y) + ", candidate " +
                           std::to_string(x) + ": " + e.what());
    }
  });
  for (std::size_t y = 0; y < l; ++y) {
    for (std::size_t x = 0; x < h; ++x) {
      if (!std::isfinite(cost(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)))) {
        throw NumericalError("non-finite cost for target mode " + std::to_string(y) +
                             " and candidate " + std::to_string(x));
      }
    }
  }
  return cost;
}

Eigen::MatrixXd cost_matrix(const ModeTree& tree, std::span<const ModeStats> targets, double eps) {
  std::vector<ModeStats> candidates;
  candidates.reserve(tree.nodes.size());
  for (const auto& node : tree.nodes) candidates.push_back(node.stats);
  return cost_matrix(targets, candidates, eps);
}

void write_cost_csv(const Eigen::MatrixXd& cost, std::span<const std::size_t> node_ids,
                    const std::filesystem::path& path) {
  if (node_ids.size() != static_cast<std::size_t>(cost.cols())) {
    throw ParameterError("node id count differs from cost matrix columns");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.precision(17);
  out << "target";
  for (auto id : node_ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index y = 0; y < cost.rows(); ++y) {
    out << y;
    for (Eigen::Index x = 0; x < cost.cols(); ++x) out << ',' << cost(y, x);
    out << '\n';
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace bmm
