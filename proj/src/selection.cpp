#include "blufs/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace blufs {

FeatureRanking feature_ranking(const ProjectionMatrix& w) {
  FeatureRanking out;
  out.scores = w.weights.rowwise().norm();
  out.selected = w.support;
  std::sort(out.selected.begin(), out.selected.end(),
            [&](Eigen::Index a, Eigen::Index b) {
              if (out.scores[a] != out.scores[b])
                return out.scores[a] > out.scores[b];
              return a < b;
            });
  if (out.selected.empty())
    log_warn("feature_ranking: projection matrix is zero, nothing selected");
  return out;
}

FeatureRanking lapscore(const Eigen::MatrixXd& x, const SimilarityGraph& s,
                        int m) {
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  if (m < 1 || m > d)
    throw std::invalid_argument("lapscore: m must lie in [1, d]");

  const Eigen::VectorXd degrees = s.weights * Eigen::VectorXd::Ones(n);
  const double total_degree = degrees.sum();
  const Eigen::MatrixXd xt = x.transpose();  // n x d, feature per column

  FeatureRanking out;
  out.scores.resize(d);
  for (Eigen::Index r = 0; r < d; ++r) {
    // Degree-weighted centering, then Rayleigh quotient f~' L f~ / f~' D f~
    // with the unnormalized Laplacian L = D - S.
    Eigen::VectorXd f = xt.col(r);
    const double shift =
        total_degree > 0.0 ? f.dot(degrees) / total_degree : 0.0;
    f.array() -= shift;
    const double var = f.dot(degrees.cwiseProduct(f));
    if (var <= 0.0) {
      out.scores[r] = std::numeric_limits<double>::infinity();
      continue;
    }
    const double smooth = f.dot(s.weights * f);
    out.scores[r] = (var - smooth) / var;  // f'(D-S)f / f'Df
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (out.scores[a] != out.scores[b]) return out.scores[a] < out.scores[b];
    return a < b;
  });
  int finite = 0;
  for (const Eigen::Index r : order)
    if (std::isfinite(out.scores[r])) ++finite;
  if (m > finite)
    log_warn("lapscore: only " + std::to_string(finite) +
             " features have finite scores; filling to m with the rest");
  out.selected.assign(order.begin(), order.begin() + m);
  return out;
}

Dataset reduce(const Dataset& ds, const FeatureRanking& ranking, int m) {
  const Eigen::Index d = ds.dim();
  if (m < 1 || m > d)
    throw std::invalid_argument("reduce: m must lie in [1, d]");

  std::vector<Eigen::Index> chosen = ranking.selected;
  if (static_cast<int>(chosen.size()) > m) chosen.resize(m);
  if (static_cast<int>(chosen.size()) < m) {
    // Pad from the best-scored unselected features.
    std::vector<bool> used(static_cast<std::size_t>(d), false);
    for (const Eigen::Index r : chosen) used[static_cast<std::size_t>(r)] = true;
    std::vector<Eigen::Index> rest;
    for (Eigen::Index r = 0; r < d; ++r)
      if (!used[static_cast<std::size_t>(r)]) rest.push_back(r);
    std::sort(rest.begin(), rest.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (ranking.scores[a] != ranking.scores[b])
        return ranking.scores[a] > ranking.scores[b];
      return a < b;
    });
    log_warn("reduce: ranking holds " + std::to_string(chosen.size()) +
             " features, padding to " + std::to_string(m) +
             " from sub-threshold scores");
    for (const Eigen::Index r : rest) {
      if (static_cast<int>(chosen.size()) == m) break;
      chosen.push_back(r);
    }
  }

  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(chosen.size()), ds.size());
  for (std::size_t t = 0; t < chosen.size(); ++t)
    out.features.row(static_cast<Eigen::Index>(t)) =
        ds.features.row(chosen[t]);
  out.labels = ds.labels;
  out.class_count = ds.class_count;
  if (ds.feature_names) {
    std::vector<std::string> names;
    names.reserve(chosen.size());
    for (const Eigen::Index r : chosen)
      names.push_back((*ds.feature_names)[static_cast<std::size_t>(r)]);
    out.feature_names = std::move(names);
  }
  return out;
}

void save_ranking(const FeatureRanking& ranking, const Dataset& ds,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "feature_index,feature_name,score,selected_flag\n";
  std::vector<bool> selected(static_cast<std::size_t>(ranking.scores.size()),
                             false);
  for (const Eigen::Index r : ranking.selected)
    selected[static_cast<std::size_t>(r)] = true;
  char buf[96];
  for (Eigen::Index r = 0; r < ranking.scores.size(); ++r) {
    const std::string name =
        ds.feature_names ? (*ds.feature_names)[static_cast<std::size_t>(r)]
                         : "f" + std::to_string(r);
    std::snprintf(buf, sizeof(buf), ",%.17g,%d\n", ranking.scores[r],
                  selected[static_cast<std::size_t>(r)] ? 1 : 0);
    out << r << ',' << name << buf;
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace blufs
