#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "blufs/dataset.hpp"
#include "blufs/selection.hpp"

namespace blufs {

enum class Metric { ACC, NMI, CLS_ACC };

const char* to_string(Metric m);

struct EvalRow {
  int feature_count = 0;
  Metric metric = Metric::ACC;
  double mean = 0.0;
  double stddev = 0.0;
  int repeats = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

/// Lloyd's k-means with k-means++ seeding. Columns of x are points.
/// Deterministic under seed; empty clusters are repaired by promoting the
/// point farthest from its centroid. Max 300 iterations or centroid
/// movement below 1e-6.
std::vector<int> kmeans(const Eigen::MatrixXd& x, int c, std::uint64_t seed);

/// Clustering accuracy under the best label matching (optimal assignment
/// on the contingency matrix).
double acc(const std::vector<int>& pred, const std::vector<int>& truth);

/// Mutual information normalized by max(H(a), H(b)), natural logs.
/// Both partitions constant -> 1; exactly one constant -> 0.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

/// k-NN test accuracy (Euclidean; distance ties by lower train index, vote
/// ties by smallest class label). Requires labels on both sets.
double knn_classify(const Dataset& train, const Dataset& test, int k);

using RankingProducer = std::function<FeatureRanking(const Dataset&)>;

/// For each feature count: reduce to the top-m ranked features, run k-means
/// once per seed, and record ACC and NMI mean +- std. The producer is
/// invoked once on the full dataset.
EvalReport protocol_cluster(const Dataset& ds, const RankingProducer& method,
                            const std::vector<int>& feature_counts,
                            const std::vector<std::uint64_t>& seeds,
                            int workers = 1);

/// Classification protocol: per feature count, `repeats` random
/// train/test splits scored with the k-NN classifier.
EvalReport protocol_classify(const Dataset& ds, const RankingProducer& method,
                             const std::vector<int>& feature_counts,
                             int repeats, std::uint64_t seed0,
                             double train_fraction, int knn_k,
                             int workers = 1);

/// CSV rows: feature_count,metric,mean,std,repeats.
void save_report_csv(const EvalReport& report, const std::string& path);

/// JSON document with run metadata alongside the rows.
void save_report_json(const EvalReport& report, const std::string& dataset_name,
                      const std::string& config_hash, const std::string& path);

}  // namespace blufs
