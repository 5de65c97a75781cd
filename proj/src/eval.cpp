#include "blufs/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

namespace blufs {

const char* to_string(Metric m) {
  switch (m) {
    case Metric::ACC: return "ACC";
    case Metric::NMI: return "NMI";
    case Metric::CLS_ACC: return "CLS_ACC";
  }
  return "ACC";
}

namespace {

std::vector<int> compact_labels(const std::vector<int>& raw, int& count) {
  std::map<int, int> ids;
  for (const int v : raw) ids.emplace(v, 0);
  int next = 0;
  for (auto& [key, id] : ids) {
    (void)key;
    id = next++;
  }
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = ids[raw[i]];
  count = next;
  return out;
}

// Assignment problem on a square cost matrix (shortest augmenting paths
// with potentials); returns the minimum total cost.
double hungarian_min(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j)
    if (match[j] != 0) total += cost(match[j] - 1, j - 1);
  return total;
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  const double n = static_cast<double>(values.size());
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double acc = 0.0;
  for (const double v : values) acc += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(acc / n);
  return out;
}

}  // namespace

std::vector<int> kmeans(const Eigen::MatrixXd& x, int c, std::uint64_t seed) {
  const Eigen::Index n = x.cols();
  if (c < 1) throw std::invalid_argument("kmeans: c must be >= 1");
  if (c > n) throw std::invalid_argument("kmeans: c must be <= sample count");

  Rng rng(seed);
  Eigen::MatrixXd centroids(x.rows(), c);
  std::vector<bool> is_centroid(static_cast<std::size_t>(n), false);

  // k-means++ style seeding.
  {
    const Eigen::Index first = static_cast<Eigen::Index>(
        rng.below(static_cast<std::uint64_t>(n)));
    centroids.col(0) = x.col(first);
    is_centroid[static_cast<std::size_t>(first)] = true;
    Eigen::VectorXd d2 = (x.colwise() - centroids.col(0)).colwise()
                             .squaredNorm()
                             .transpose();
    for (int m = 1; m < c; ++m) {
      const double total = d2.sum();
      Eigen::Index pick = -1;
      if (total > 0.0) {
        const double r = rng.uniform01() * total;
        double cum = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          cum += d2[j];
          if (cum > r && d2[j] > 0.0) {
            pick = j;
            break;
          }
        }
        if (pick < 0)
          for (Eigen::Index j = n - 1; j >= 0; --j)
            if (d2[j] > 0.0) {
              pick = j;
              break;
            }
      }
      if (pick < 0) {
        // Duplicate-heavy data: take the lowest index not yet chosen.
        for (Eigen::Index j = 0; j < n; ++j)
          if (!is_centroid[static_cast<std::size_t>(j)]) {
            pick = j;
            break;
          }
      }
      centroids.col(m) = x.col(pick);
      is_centroid[static_cast<std::size_t>(pick)] = true;
      const Eigen::VectorXd dn = (x.colwise() - centroids.col(m))
                                     .colwise()
                                     .squaredNorm()
                                     .transpose();
      d2 = d2.cwiseMin(dn);
    }
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  Eigen::MatrixXd dist(n, c);
  for (int iter = 0; iter < 300; ++iter) {
    for (int m = 0; m < c; ++m)
      dist.col(m) = (x.colwise() - centroids.col(m))
                        .colwise()
                        .squaredNorm()
                        .transpose();
    std::vector<int> counts(static_cast<std::size_t>(c), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      int best = 0;
      for (int m = 1; m < c; ++m)
        if (dist(j, m) < dist(j, best)) best = m;
      assign[static_cast<std::size_t>(j)] = best;
      ++counts[static_cast<std::size_t>(best)];
    }
    // Repair empty clusters with the globally farthest point whose cluster
    // can spare it.
    for (int m = 0; m < c; ++m) {
      if (counts[static_cast<std::size_t>(m)] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const int owner = assign[static_cast<std::size_t>(j)];
        if (counts[static_cast<std::size_t>(owner)] < 2) continue;
        if (dist(j, owner) > far_d) {
          far_d = dist(j, owner);
          far = j;
        }
      }
      if (far < 0) continue;
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = m;
      ++counts[static_cast<std::size_t>(m)];
    }

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(x.rows(), c);
    for (Eigen::Index j = 0; j < n; ++j)
      next.col(assign[static_cast<std::size_t>(j)]) += x.col(j);
    for (int m = 0; m < c; ++m)
      if (counts[static_cast<std::size_t>(m)] > 0)
        next.col(m) /= static_cast<double>(counts[static_cast<std::size_t>(m)]);
      else
        next.col(m) = centroids.col(m);

    const double movement = (next - centroids).colwise().norm().maxCoeff();
    centroids = std::move(next);
    if (movement < 1e-6) break;
  }
  return assign;
}

double acc(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("acc: label vectors differ in length");
  if (pred.empty()) throw std::invalid_argument("acc: empty label vectors");
  int cp = 0, ct = 0;
  const std::vector<int> p = compact_labels(pred, cp);
  const std::vector<int> t = compact_labels(truth, ct);
  const int r = std::max(cp, ct);
  Eigen::MatrixXd contingency = Eigen::MatrixXd::Zero(r, r);
  for (std::size_t i = 0; i < p.size(); ++i)
    contingency(t[i], p[i]) += 1.0;
  const double matches = -hungarian_min(-contingency);
  return matches / static_cast<double>(pred.size());
}

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("nmi: label vectors differ in length");
  if (a.empty()) throw std::invalid_argument("nmi: empty label vectors");
  int ca = 0, cb = 0;
  const std::vector<int> la = compact_labels(a, ca);
  const std::vector<int> lb = compact_labels(b, cb);
  const double n = static_cast<double>(a.size());

  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(ca, cb);
  for (std::size_t i = 0; i < la.size(); ++i) joint(la[i], lb[i]) += 1.0;
  const Eigen::VectorXd pa = joint.rowwise().sum() / n;
  const Eigen::VectorXd pb = joint.colwise().sum().transpose() / n;

  auto entropy = [](const Eigen::VectorXd& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
  };
  const double ha = entropy(pa);
  const double hb = entropy(pb);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;

  // Identical partitions up to relabeling: the contingency matrix is a
  // partial permutation, MI equals both entropies, NMI is exactly 1.
  bool permutation_structure = true;
  for (Eigen::Index i = 0; i < joint.rows() && permutation_structure; ++i)
    if ((joint.row(i).array() != 0.0).count() > 1) permutation_structure = false;
  for (Eigen::Index j = 0; j < joint.cols() && permutation_structure; ++j)
    if ((joint.col(j).array() != 0.0).count() > 1) permutation_structure = false;
  if (permutation_structure) return 1.0;

  double mi = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j) {
      const double pij = joint(i, j) / n;
      if (pij > 0.0) mi += pij * std::log(pij / (pa[i] * pb[j]));
    }
  return std::clamp(mi / std::max(ha, hb), 0.0, 1.0);
}

double knn_classify(const Dataset& train, const Dataset& test, int k) {
  if (!train.labels || !test.labels)
    throw std::invalid_argument("knn_classify: both sets need labels");
  if (train.dim() != test.dim())
    throw std::invalid_argument("knn_classify: feature dimensions differ");
  const Eigen::Index ntr = train.size();
  if (k < 1 || k > ntr)
    throw std::invalid_argument("knn_classify: k must lie in [1, train size]");

  const int classes = std::max(train.class_count.value_or(0),
                               test.class_count.value_or(0));
  int correct = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ntr));
  for (Eigen::Index q = 0; q < test.size(); ++q) {
    const Eigen::VectorXd d2 = (train.features.colwise() -
                                test.features.col(q))
                                   .colwise()
                                   .squaredNorm()
                                   .transpose();
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Eigen::Index x, Eigen::Index y) {
                        if (d2[x] != d2[y]) return d2[x] < d2[y];
                        return x < y;
                      });
    std::vector<int> votes(static_cast<std::size_t>(classes), 0);
    for (int t = 0; t < k; ++t)
      ++votes[static_cast<std::size_t>(
          (*train.labels)[static_cast<std::size_t>(order[t])])];
    int winner = 0;
    for (int cls = 1; cls < classes; ++cls)
      if (votes[static_cast<std::size_t>(cls)] >
          votes[static_cast<std::size_t>(winner)])
        winner = cls;
    if (winner == (*test.labels)[static_cast<std::size_t>(q)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

EvalReport protocol_cluster(const Dataset& ds, const RankingProducer& method,
                            const std::vector<int>& feature_counts,
                            const std::vector<std::uint64_t>& seeds,
                            int workers) {
  if (!ds.labels || !ds.class_count)
    throw std::invalid_argument("protocol_cluster: dataset needs labels");
  if (feature_counts.empty() || seeds.empty())
    throw std::invalid_argument("protocol_cluster: empty grid");
  for (const int m : feature_counts)
    if (m < 1 || m > ds.dim())
      throw std::invalid_argument("protocol_cluster: feature count " +
                                  std::to_string(m) + " out of range");

  const FeatureRanking ranking = method(ds);
  std::vector<Dataset> reduced;
  reduced.reserve(feature_counts.size());
  for (const int m : feature_counts) reduced.push_back(reduce(ds, ranking, m));

  const int c = *ds.class_count;
  const int repeats = static_cast<int>(seeds.size());
  const int cells = static_cast<int>(feature_counts.size()) * repeats;
  std::vector<double> accs(static_cast<std::size_t>(cells));
  std::vector<double> nmis(static_cast<std::size_t>(cells));
  parallel_for(cells, workers, [&](int cell) {
    const int ci = cell / repeats;
    const int si = cell % repeats;
    const std::vector<int> labels =
        kmeans(reduced[static_cast<std::size_t>(ci)].features, c,
               seeds[static_cast<std::size_t>(si)]);
    accs[static_cast<std::size_t>(cell)] = acc(labels, *ds.labels);
    nmis[static_cast<std::size_t>(cell)] = nmi(labels, *ds.labels);
  });

  EvalReport report;
  for (std::size_t ci = 0; ci < feature_counts.size(); ++ci) {
    std::vector<double> a(accs.begin() + static_cast<long>(ci) * repeats,
                          accs.begin() + static_cast<long>(ci + 1) * repeats);
    std::vector<double> m(nmis.begin() + static_cast<long>(ci) * repeats,
                          nmis.begin() + static_cast<long>(ci + 1) * repeats);
    const MeanStd sa = mean_std(a);
    const MeanStd sm = mean_std(m);
    report.rows.push_back(
        {feature_counts[ci], Metric::ACC, sa.mean, sa.stddev, repeats});
    report.rows.push_back(
        {feature_counts[ci], Metric::NMI, sm.mean, sm.stddev, repeats});
  }
  return report;
}

EvalReport protocol_classify(const Dataset& ds, const RankingProducer& method,
                             const std::vector<int>& feature_counts,
                             int repeats, std::uint64_t seed0,
                             double train_fraction, int knn_k, int workers) {
  if (!ds.labels || !ds.class_count)
    throw std::invalid_argument("protocol_classify: dataset needs labels");
  if (feature_counts.empty() || repeats < 1)
    throw std::invalid_argument("protocol_classify: empty grid");
  for (const int m : feature_counts)
    if (m < 1 || m > ds.dim())
      throw std::invalid_argument("protocol_classify: feature count " +
                                  std::to_string(m) + " out of range");

  const FeatureRanking ranking = method(ds);
  std::vector<Dataset> reduced;
  reduced.reserve(feature_counts.size());
  for (const int m : feature_counts) reduced.push_back(reduce(ds, ranking, m));

  const int cells = static_cast<int>(feature_counts.size()) * repeats;
  std::vector<double> scores(static_cast<std::size_t>(cells));
  parallel_for(cells, workers, [&](int cell) {
    const int ci = cell / repeats;
    const int si = cell % repeats;
    const auto [train, test] =
        split(reduced[static_cast<std::size_t>(ci)], train_fraction,
              seed0 + static_cast<std::uint64_t>(si));
    scores[static_cast<std::size_t>(cell)] = knn_classify(train, test, knn_k);
  });

  EvalReport report;
  for (std::size_t ci = 0; ci < feature_counts.size(); ++ci) {
    std::vector<double> s(scores.begin() + static_cast<long>(ci) * repeats,
                          scores.begin() + static_cast<long>(ci + 1) * repeats);
    const MeanStd stats = mean_std(s);
    report.rows.push_back(
        {feature_counts[ci], Metric::CLS_ACC, stats.mean, stats.stddev,
         repeats});
  }
  return report;
}

void save_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "feature_count,metric,mean,std,repeats\n";
  char buf[96];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%.17g,%d\n", r.feature_count,
                  to_string(r.metric), r.mean, r.stddev, r.repeats);
    out << buf;
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void save_report_json(const EvalReport& report, const std::string& dataset_name,
                      const std::string& config_hash, const std::string& path) {
  nlohmann::json doc;
  doc["version"] = std::string(kVersion);
  doc["dataset"] = dataset_name;
  doc["config_hash"] = config_hash;
  doc["rows"] = nlohmann::json::array();
  for (const EvalRow& r : report.rows)
    doc["rows"].push_back({{"feature_count", r.feature_count},
                           {"metric", to_string(r.metric)},
                           {"mean", r.mean},
                           {"std", r.stddev},
                           {"repeats", r.repeats}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace blufs
