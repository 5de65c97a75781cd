#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "blufs/dataset.hpp"
#include "blufs/graph.hpp"
#include "blufs/solver.hpp"

namespace blufs {

/// Per-feature scores plus the ordered list of chosen feature indices
/// (best first).
struct FeatureRanking {
  Eigen::VectorXd scores;               // length d
  std::vector<Eigen::Index> selected;
};

/// Scores are the Euclidean row norms of W; selected is the support sorted
/// by descending score (ties by lower index). Warns when W is all zero.
FeatureRanking feature_ranking(const ProjectionMatrix& w);

/// Laplacian Score baseline over the same similarity graph: smaller score
/// means better locality preservation; `selected` holds the m best.
/// Constant features score +inf and are ranked last.
FeatureRanking lapscore(const Eigen::MatrixXd& x, const SimilarityGraph& s,
                        int m);

/// Keeps the top-m ranked feature rows (sample order untouched). Pads from
/// the best unselected scores with a warning when the ranking holds fewer
/// than m features.
Dataset reduce(const Dataset& ds, const FeatureRanking& ranking, int m);

/// CSV export: feature_index,feature_name,score,selected_flag.
void save_ranking(const FeatureRanking& ranking, const Dataset& ds,
                  const std::string& path);

}  // namespace blufs
