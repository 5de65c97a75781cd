#include "blufs/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

namespace blufs {

Eigen::MatrixXd pairwise_sq_dist(const Eigen::MatrixXd& points) {
  const Eigen::VectorXd sq = points.colwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * (points.transpose() * points);
  d2.colwise() += sq;
  d2.rowwise() += sq.transpose();
  d2 = d2.cwiseMax(0.0);
  d2.diagonal().setZero();
  return d2;
}

namespace {

// k nearest of each column, self excluded, distance ties by lower index.
std::vector<std::vector<Eigen::Index>> knn_lists(const Eigen::MatrixXd& d2,
                                                 int k) {
  const Eigen::Index n = d2.cols();
  std::vector<std::vector<Eigen::Index>> nbrs(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    order.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        if (d2(i, a) != d2(i, b)) return d2(i, a) < d2(i, b);
                        return a < b;
                      });
    nbrs[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + k);
  }
  return nbrs;
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double resolve_sigma(const Eigen::MatrixXd& d2,
                     const std::vector<std::vector<Eigen::Index>>& nbrs,
                     std::optional<double> sigma) {
  if (sigma) {
    if (*sigma <= 0.0) throw std::invalid_argument("sigma must be > 0");
    return *sigma;
  }
  std::vector<double> dists;
  dists.reserve(nbrs.size() * nbrs[0].size());
  for (std::size_t i = 0; i < nbrs.size(); ++i)
    for (const Eigen::Index j : nbrs[i])
      dists.push_back(std::sqrt(d2(static_cast<Eigen::Index>(i), j)));
  const double med = median_of(std::move(dists));
  if (med <= 0.0) {
    log_warn("build_similarity: median k-NN distance is 0 (duplicate data); "
             "falling back to sigma = 1");
    return 1.0;
  }
  return med;
}

}  // namespace

KnnGaussian build_knn_gaussian(const Eigen::MatrixXd& x, int k,
                               std::optional<double> sigma) {
  const Eigen::Index n = x.cols();
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (k >= n)
    throw std::invalid_argument("k = " + std::to_string(k) +
                                " must be smaller than n = " +
                                std::to_string(n));
  const Eigen::MatrixXd d2 = pairwise_sq_dist(x);
  const auto nbrs = knn_lists(d2, k);
  const double sig = resolve_sigma(d2, nbrs, sigma);
  const double inv = 1.0 / (2.0 * sig * sig);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n) * k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (const Eigen::Index j : nbrs[static_cast<std::size_t>(i)]) {
      const double w = std::exp(-d2(i, j) * inv);
      if (w > 0.0) trips.emplace_back(i, j, w);
    }
  KnnGaussian out;
  out.weights.resize(n, n);
  out.weights.setFromTriplets(trips.begin(), trips.end());
  out.weights.makeCompressed();
  out.k = k;
  out.sigma = sig;
  return out;
}

SimilarityGraph build_similarity(const Eigen::MatrixXd& x, int k,
                                 std::optional<double> sigma) {
  const Eigen::Index n = x.cols();
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (k >= n)
    throw std::invalid_argument("k = " + std::to_string(k) +
                                " must be smaller than n = " +
                                std::to_string(n));
  const Eigen::MatrixXd d2 = pairwise_sq_dist(x);
  const auto nbrs = knn_lists(d2, k);
  const double sig = resolve_sigma(d2, nbrs, sigma);
  const double inv = 1.0 / (2.0 * sig * sig);

  // Union symmetrization: deduplicate directed edges first, then emit both
  // orientations exactly once (setFromTriplets sums duplicates).
  std::set<std::pair<Eigen::Index, Eigen::Index>> edges;
  for (Eigen::Index i = 0; i < n; ++i)
    for (const Eigen::Index j : nbrs[static_cast<std::size_t>(i)])
      edges.emplace(std::min(i, j), std::max(i, j));

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * edges.size());
  for (const auto& [i, j] : edges) {
    const double w = std::exp(-d2(i, j) * inv);
    if (w > 0.0) {
      trips.emplace_back(i, j, w);
      trips.emplace_back(j, i, w);
    }
  }
  SimilarityGraph out;
  out.weights.resize(n, n);
  out.weights.setFromTriplets(trips.begin(), trips.end());
  out.weights.makeCompressed();
  out.k = k;
  out.sigma = sig;
  return out;
}

NormalizedAffinity normalize_affinity(const SimilarityGraph& graph) {
  const Eigen::Index n = graph.weights.rows();
  Eigen::VectorXd degrees = graph.weights * Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (degrees[i] <= 0.0)
      throw std::invalid_argument(
          "vertex " + std::to_string(i) +
          " is isolated (degree 0); increase k or sigma");

  const Eigen::VectorXd dinv = degrees.array().rsqrt();
  NormalizedAffinity out;
  out.s_hat = graph.weights;
  for (Eigen::Index col = 0; col < out.s_hat.outerSize(); ++col)
    for (SpMat::InnerIterator it(out.s_hat, col); it; ++it)
      it.valueRef() *= dinv[it.row()] * dinv[it.col()];
  out.degrees = std::move(degrees);
  return out;
}

SpMat NormalizedAffinity::laplacian() const {
  const Eigen::Index n = s_hat.rows();
  SpMat identity(n, n);
  identity.setIdentity();
  SpMat lap = identity - s_hat;
  lap.prune(0.0);
  return lap;
}

SpMat laplacian_of_p(const SpMatRow& p) {
  const Eigen::Index n = p.rows();
  SpMat pc = SpMat(p);
  SpMat sym = 0.5 * (pc + SpMat(pc.transpose()));
  const Eigen::VectorXd dbar = sym * Eigen::VectorXd::Ones(n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(sym.nonZeros()) + n);
  for (Eigen::Index col = 0; col < sym.outerSize(); ++col)
    for (SpMat::InnerIterator it(sym, col); it; ++it)
      trips.emplace_back(it.row(), it.col(), -it.value());
  for (Eigen::Index i = 0; i < n; ++i) trips.emplace_back(i, i, dbar[i]);
  SpMat lap(n, n);
  lap.setFromTriplets(trips.begin(), trips.end());
  lap.makeCompressed();
  return lap;
}

Eigen::MatrixXd laplacian_of_p(const Eigen::MatrixXd& p) {
  Eigen::MatrixXd sym = 0.5 * (p + p.transpose());
  Eigen::MatrixXd lap = -sym;
  lap.diagonal() += sym.rowwise().sum();
  return lap;
}

void save_triplets(const SpMat& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "i,j,value\n";
  char buf[64];
  for (Eigen::Index col = 0; col < m.outerSize(); ++col)
    for (SpMat::InnerIterator it(m, col); it; ++it) {
      std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g\n",
                    static_cast<long long>(it.row()),
                    static_cast<long long>(it.col()), it.value());
      out << buf;
    }
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace blufs
