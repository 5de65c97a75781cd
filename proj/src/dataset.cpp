#include "blufs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace blufs {

namespace {

void format_value(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

const char* to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::TwoRings: return "two_rings";
    case SyntheticKind::TwoBananas: return "two_bananas";
    case SyntheticKind::GaussianBlobs: return "gaussian_blobs";
  }
  return "two_rings";
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "two_rings") return SyntheticKind::TwoRings;
  if (name == "two_bananas") return SyntheticKind::TwoBananas;
  if (name == "gaussian_blobs") return SyntheticKind::GaussianBlobs;
  throw ConfigError("unknown synthetic kind '" + name + "'");
}

void Dataset::validate() const {
  const Eigen::Index d = dim();
  const Eigen::Index n = size();
  if (d < 1) throw IoError("dataset has no features");
  if (n < 2) throw IoError("dataset needs at least 2 samples, got " +
                           std::to_string(n));
  if (!features.allFinite())
    throw IoError("dataset contains NaN or infinite feature values");
  if (feature_names && static_cast<Eigen::Index>(feature_names->size()) != d)
    throw IoError("feature_names length does not match feature count");
  if (labels) {
    if (static_cast<Eigen::Index>(labels->size()) != n)
      throw IoError("label vector length does not match sample count");
    if (!class_count)
      throw IoError("labels present but class_count missing");
    for (const int y : *labels)
      if (y < 0 || y >= *class_count)
        throw IoError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(*class_count) + ")");
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw IoError("'" + path + "' is empty (expected a header row)");
  line = strip_cr(line);
  const std::vector<std::string> header = split_fields(line);
  if (header.empty() || (header.size() == 1 && header[0].empty()))
    throw IoError("'" + path + "' has an empty header row");

  int label_col = -1;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "label") {
      if (label_col >= 0)
        throw IoError("'" + path + "' has more than one label column");
      label_col = static_cast<int>(c);
    } else {
      names.push_back(header[c]);
    }
  }
  const std::size_t d = names.size();
  if (d == 0) throw IoError("'" + path + "' has no feature columns");

  std::vector<std::vector<double>> rows;  // one entry per sample
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size())
      throw IoError("'" + path + "' row " + std::to_string(lineno) + " has " +
                    std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(header.size()));
    std::vector<double> values;
    values.reserve(d);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (static_cast<int>(c) == label_col) {
        char* end = nullptr;
        const long y = std::strtol(fields[c].c_str(), &end, 10);
        if (end == fields[c].c_str() || *end != '\0' || y < 0)
          throw IoError("'" + path + "' row " + std::to_string(lineno) +
                        ", column '" + header[c] +
                        "': invalid label '" + fields[c] + "'");
        labels.push_back(static_cast<int>(y));
      } else {
        char* end = nullptr;
        const double v = std::strtod(fields[c].c_str(), &end);
        if (end == fields[c].c_str() || *end != '\0')
          throw IoError("'" + path + "' row " + std::to_string(lineno) +
                        ", column '" + header[c] +
                        "': non-numeric value '" + fields[c] + "'");
        values.push_back(v);
      }
    }
    rows.push_back(std::move(values));
  }
  const std::size_t n = rows.size();
  if (n == 0) throw IoError("'" + path + "' has a header but no data rows");

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d; ++i)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[j][i];
  ds.feature_names = std::move(names);
  if (label_col >= 0) {
    ds.labels = std::move(labels);
    int cmax = 0;
    for (const int y : *ds.labels) cmax = std::max(cmax, y);
    ds.class_count = cmax + 1;
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  const Eigen::Index d = ds.dim();
  const Eigen::Index n = ds.size();

  std::string buf;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (i > 0) buf += ',';
    buf += ds.feature_names ? (*ds.feature_names)[i]
                            : "f" + std::to_string(i);
  }
  if (ds.labels) buf += ",label";
  buf += '\n';
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      if (i > 0) buf += ',';
      format_value(buf, ds.features(i, j));
    }
    if (ds.labels) {
      buf += ',';
      buf += std::to_string((*ds.labels)[j]);
    }
    buf += '\n';
  }
  out << buf;
  if (!out) throw IoError("failed writing '" + path + "'");
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.samples_per_class < 1)
    throw std::invalid_argument("samples_per_class must be >= 1");
  if (spec.noise_features < 0)
    throw std::invalid_argument("noise_features must be >= 0");
  if (spec.noise_sigma <= 0.0)
    throw std::invalid_argument("noise_sigma must be > 0");

  const int m = spec.samples_per_class;
  const int n = 2 * m;
  const int d = 2 + spec.noise_features;
  Rng rng(spec.seed);

  Dataset ds;
  ds.features.setZero(d, n);
  std::vector<int> labels(n);

  for (int cls = 0; cls < 2; ++cls) {
    for (int j = 0; j < m; ++j) {
      const int col = cls * m + j;
      double x = 0.0, y = 0.0;
      switch (spec.kind) {
        case SyntheticKind::TwoRings: {
          // Concentric rings, radii 1 and 3 with slight radial jitter.
          const double radius = (cls == 0) ? 1.0 : 3.0;
          const double angle = rng.uniform(0.0, 2.0 * M_PI);
          const double r = radius + 0.05 * rng.normal();
          x = r * std::cos(angle);
          y = r * std::sin(angle);
          break;
        }
        case SyntheticKind::TwoBananas: {
          // Interleaved crescents (two-moons layout).
          const double t = rng.uniform(0.0, M_PI);
          if (cls == 0) {
            x = std::cos(t);
            y = std::sin(t);
          } else {
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
          }
          x += 0.06 * rng.normal();
          y += 0.06 * rng.normal();
          break;
        }
        case SyntheticKind::GaussianBlobs: {
          // Diagonal separation so both coordinates carry class structure.
          const double center = (cls == 0) ? -2.0 : 2.0;
          x = center + 0.6 * rng.normal();
          y = center + 0.6 * rng.normal();
          break;
        }
      }
      ds.features(0, col) = x;
      ds.features(1, col) = y;
      for (int i = 2; i < d; ++i)
        ds.features(i, col) = spec.noise_sigma * rng.normal();
      labels[col] = cls;
    }
  }

  ds.labels = std::move(labels);
  ds.class_count = 2;
  std::vector<std::string> names(d);
  for (int i = 0; i < d; ++i) names[i] = "f" + std::to_string(i);
  ds.feature_names = std::move(names);
  ds.validate();
  return ds;
}

Dataset standardize(const Dataset& ds) {
  Dataset out = ds;
  const Eigen::Index n = ds.size();
  for (Eigen::Index i = 0; i < ds.dim(); ++i) {
    const double mean = ds.features.row(i).mean();
    Eigen::RowVectorXd centered =
        ds.features.row(i).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(n);
    if (var > 0.0)
      out.features.row(i) = centered / std::sqrt(var);
    else
      out.features.row(i).setZero();
  }
  return out;
}

Dataset rescale_unit(const Dataset& ds) {
  Dataset out = ds;
  for (Eigen::Index i = 0; i < ds.dim(); ++i) {
    const double lo = ds.features.row(i).minCoeff();
    const double hi = ds.features.row(i).maxCoeff();
    if (hi > lo)
      out.features.row(i) = (ds.features.row(i).array() - lo) / (hi - lo);
    else
      out.features.row(i).setZero();
  }
  return out;
}

Dataset take_samples(const Dataset& ds, const std::vector<Eigen::Index>& idx) {
  Dataset out;
  out.features.resize(ds.dim(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    out.features.col(static_cast<Eigen::Index>(j)) = ds.features.col(idx[j]);
  if (ds.labels) {
    std::vector<int> labels(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j)
      labels[j] = (*ds.labels)[static_cast<std::size_t>(idx[j])];
    out.labels = std::move(labels);
  }
  out.class_count = ds.class_count;
  out.feature_names = ds.feature_names;
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  if (!ds.labels) throw std::invalid_argument("split requires labels");

  const Eigen::Index n = ds.size();
  const int c = ds.class_count.value();
  const auto& labels = *ds.labels;
  const auto total_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));

  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(c));
  for (Eigen::Index j = 0; j < n; ++j)
    by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])]
        .push_back(j);

  const bool stratified = std::all_of(
      by_class.begin(), by_class.end(),
      [](const auto& g) { return g.empty() || g.size() >= 2; });

  Rng rng(seed);
  auto shuffle = [&rng](std::vector<Eigen::Index>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[rng.below(i)]);
  };

  std::vector<Eigen::Index> train_idx, test_idx;
  if (stratified) {
    // Per-class floor allocation, remainder distributed by largest
    // fractional part so the train size is exactly round(f * n).
    std::vector<std::size_t> take(by_class.size(), 0);
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < by_class.size(); ++g) {
      const double want = train_fraction * static_cast<double>(by_class[g].size());
      take[g] = static_cast<std::size_t>(std::floor(want));
      take[g] = std::min(take[g], by_class[g].size());
      assigned += take[g];
      rem.emplace_back(want - std::floor(want), g);
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::size_t extra = total_train > assigned ? total_train - assigned : 0;
    for (const auto& [frac, g] : rem) {
      if (extra == 0) break;
      (void)frac;
      if (take[g] < by_class[g].size()) {
        ++take[g];
        --extra;
      }
    }
    for (std::size_t g = 0; g < by_class.size(); ++g) {
      auto idx = by_class[g];
      shuffle(idx);
      for (std::size_t j = 0; j < idx.size(); ++j)
        (j < take[g] ? train_idx : test_idx).push_back(idx[j]);
    }
  } else {
    log_warn("split: some class has fewer than 2 members; unstratified fallback");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    shuffle(idx);
    for (std::size_t j = 0; j < idx.size(); ++j)
      (j < total_train ? train_idx : test_idx).push_back(idx[j]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {take_samples(ds, train_idx), take_samples(ds, test_idx)};
}

}  // namespace blufs
