#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <optional>
#include <string>

#include "blufs/common.hpp"

namespace blufs {

using SpMat = Eigen::SparseMatrix<double>;
using SpMatRow = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Directed k-NN Gaussian kernel weights: row i holds exactly the k nearest
/// neighbours of sample i (self excluded, ties by lower index).
struct KnnGaussian {
  SpMatRow weights;
  int k = 0;
  double sigma = 0.0;
};

/// Symmetric union k-NN similarity: S_ij = exp(-||x_i-x_j||^2 / (2 sigma^2))
/// whenever j is among i's k nearest or vice versa, S_ii = 0.
struct SimilarityGraph {
  SpMat weights;  // S, n x n
  int k = 0;
  double sigma = 0.0;
};

/// S_hat = D^{-1/2} S D^{-1/2} together with the degree vector.
struct NormalizedAffinity {
  SpMat s_hat;
  Eigen::VectorXd degrees;

  /// Normalized Laplacian L = I - S_hat.
  SpMat laplacian() const;
};

/// Dense pairwise squared Euclidean distances between columns of `points`.
Eigen::MatrixXd pairwise_sq_dist(const Eigen::MatrixXd& points);

/// k < n required. When sigma is unset it defaults to the median of all
/// retained k-NN distances (falls back to 1 with a warning if that median
/// is zero, i.e. duplicate-only data).
KnnGaussian build_knn_gaussian(const Eigen::MatrixXd& x, int k,
                               std::optional<double> sigma = {});
SimilarityGraph build_similarity(const Eigen::MatrixXd& x, int k,
                                 std::optional<double> sigma = {});

/// Fails with a hint to raise k if any vertex has degree 0.
NormalizedAffinity normalize_affinity(const SimilarityGraph& graph);

/// Graph Laplacian of the symmetrized matrix: with Pb = (P + P^T)/2 and
/// Db = diag(row sums of Pb), returns Db - Pb. For symmetric P this is the
/// usual D - P; for any nonnegative P it satisfies
///   sum_ij ||W^T x_i - W^T x_j||^2 P_ij = 2 tr(W^T X L X^T W).
SpMat laplacian_of_p(const SpMatRow& p);
Eigen::MatrixXd laplacian_of_p(const Eigen::MatrixXd& p);

/// Sparse triplet CSV (i,j,value) for debugging.
void save_triplets(const SpMat& m, const std::string& path);

}  // namespace blufs
