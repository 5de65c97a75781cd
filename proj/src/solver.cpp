#include "blufs/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <vector>

namespace blufs {

const char* to_string(AblationCase c) {
  switch (c) {
    case AblationCase::Full: return "full";
    case AblationCase::FeatureOnly: return "feature_only";
    case AblationCase::ClusteringOnly: return "clustering_only";
    case AblationCase::NoGraph: return "no_graph";
  }
  return "full";
}

AblationCase ablation_from_string(const std::string& name) {
  if (name == "full") return AblationCase::Full;
  if (name == "feature_only") return AblationCase::FeatureOnly;
  if (name == "clustering_only") return AblationCase::ClusteringOnly;
  if (name == "no_graph") return AblationCase::NoGraph;
  throw ConfigError("unknown ablation case '" + name + "'");
}

double BlufsConfig::resolved_rho() const {
  if (rho) return *rho;
  return std::sqrt(static_cast<double>(clusters));
}

Eigen::Index BlufsConfig::effective_s(Eigen::Index d) const {
  if (ablation == AblationCase::ClusteringOnly) return d;
  return std::min<Eigen::Index>(s, d);
}

void BlufsConfig::validate(Eigen::Index n, Eigen::Index d) const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
  };
  if (lambda < 0) fail("lambda", "must be >= 0");
  if (alpha < 0) fail("alpha", "must be >= 0");
  if (beta < 0) fail("beta", "must be >= 0");
  if (mu <= 0) fail("mu", "must be > 0");
  if (s < 1) fail("s", "must be >= 1");
  if (s > d) fail("s", "must be <= feature count " + std::to_string(d));
  if (k < 1) fail("k", "must be >= 1");
  if (k >= n) fail("k", "must be < sample count " + std::to_string(n));
  if (clusters < 1) fail("clusters", "must be >= 1");
  if (clusters > n) fail("clusters", "must be <= sample count");
  if (tau1 <= 0) fail("tau1", "must be > 0");
  if (tau2 <= 0) fail("tau2", "must be > 0");
  if (tau3 <= 0) fail("tau3", "must be > 0");
  if (theta <= 0) fail("theta", "must be > 0");
  if (rho && *rho <= 0) fail("rho", "must be > 0");
  if (sigma && *sigma <= 0) fail("sigma", "must be > 0");
  if (outer_max_iter < 1) fail("outer_max_iter", "must be >= 1");
  if (outer_tol <= 0) fail("outer_tol", "must be > 0");
  if (inner_max_iter < 1) fail("inner_max_iter", "must be >= 1");
  if (inner_tol <= 0) fail("inner_tol", "must be > 0");
}

void AdaptiveGraph::validate() const {
  const Eigen::Index n = weights.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    int nnz = 0;
    double sum = 0.0;
    for (SpMatRow::InnerIterator it(weights, i); it; ++it) {
      if (it.value() < 0.0)
        throw NumericalError("adaptive graph row " + std::to_string(i) +
                             " has a negative entry");
      if (it.value() > 0.0) {
        ++nnz;
        sum += it.value();
      }
    }
    if (nnz > k)
      throw NumericalError("adaptive graph row " + std::to_string(i) +
                           " has " + std::to_string(nnz) +
                           " nonzeros, budget " + std::to_string(k));
    if (std::abs(sum - 1.0) > 1e-9)
      throw NumericalError("adaptive graph row " + std::to_string(i) +
                           " sums to " + std::to_string(sum));
  }
}

void ProjectionMatrix::validate(Eigen::Index budget) const {
  const Eigen::Index d = weights.rows();
  if (static_cast<Eigen::Index>(support.size()) > budget)
    throw NumericalError("projection support exceeds the row budget");
  std::vector<bool> in_support(static_cast<std::size_t>(d), false);
  Eigen::Index prev = -1;
  for (const Eigen::Index r : support) {
    if (r < 0 || r >= d || r <= prev)
      throw NumericalError("projection support is not ascending/unique");
    prev = r;
    in_support[static_cast<std::size_t>(r)] = true;
  }
  for (Eigen::Index r = 0; r < d; ++r) {
    const bool zero = (weights.row(r).array() == 0.0).all();
    if (in_support[static_cast<std::size_t>(r)] && zero)
      throw NumericalError("support row " + std::to_string(r) + " is zero");
    if (!in_support[static_cast<std::size_t>(r)] && !zero)
      throw NumericalError("row " + std::to_string(r) +
                           " outside the support is nonzero");
  }
}

double PseudoLabels::orth_residual() const {
  Eigen::MatrixXd g = y.transpose() * y;
  g.diagonal().array() -= 1.0;
  return g.norm();
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& z) {
  const Eigen::Index m = z.size();
  if (m == 0) return z;
  std::vector<double> u(z.data(), z.data() + m);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0;
  double eta = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double cand = (1.0 - cumsum) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] + cand > 0.0) eta = cand;
  }
  return (z.array() + eta).cwiseMax(0.0);
}

namespace {

// ||w^T x_i - w^T x_j||^2 for all pairs, computed directly from the
// projected points (rows of proj).
Eigen::MatrixXd projected_sq_dist(const Eigen::MatrixXd& proj) {
  const Eigen::Index n = proj.rows();
  Eigen::MatrixXd v(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d2 = (proj.row(i) - proj.row(j)).squaredNorm();
      v(i, j) = d2;
      v(j, i) = d2;
    }
  }
  return v;
}

double graph_term(const Eigen::MatrixXd& proj, const SpMat& lap) {
  // sum_ij ||W^T x_i - W^T x_j||^2 P_ij == 2 tr(proj^T L_P proj)
  return 2.0 * (proj.transpose() * (lap * proj)).trace();
}

double fit_term(const Eigen::MatrixXd& proj, const Eigen::MatrixXd& y) {
  return (proj - y).squaredNorm();
}

double spectral_term(const Eigen::MatrixXd& y, const NormalizedAffinity& aff) {
  return (y.transpose() * (aff.s_hat * y)).trace();
}

}  // namespace

double objective(const SolverState& state, const Eigen::MatrixXd& x,
                 const NormalizedAffinity& affinity, const BlufsConfig& cfg) {
  const Eigen::Index n = x.cols();
  const Eigen::MatrixXd& w = state.W.weights;
  const Eigen::MatrixXd& y = state.Y.y;
  if (w.rows() != x.rows() || y.rows() != n || y.cols() != w.cols() ||
      state.P.weights.rows() != n || state.P.weights.cols() != n)
    throw std::invalid_argument("objective: inconsistent dimensions");

  const Eigen::MatrixXd proj = x.transpose() * w;  // n x c
  double f = fit_term(proj, y) + cfg.lambda * w.squaredNorm() -
             cfg.alpha * spectral_term(y, affinity) +
             cfg.mu * state.P.weights.squaredNorm();
  if (cfg.beta != 0.0) {
    const SpMat lap = laplacian_of_p(state.P.weights);
    f += cfg.beta * graph_term(proj, lap);
  }
  return f;
}

AdaptiveGraph update_p(const SolverState& state, const Eigen::MatrixXd& x,
                       const BlufsConfig& cfg) {
  const Eigen::Index n = x.cols();
  const int k = cfg.k;
  const Eigen::MatrixXd proj = x.transpose() * state.W.weights;
  const Eigen::MatrixXd v = projected_sq_dist(proj);

  // Row subproblem: min over the simplex supported on the k smallest
  // projected distances of
  //   sum_j beta*V_ij p_j + (mu + tau1) p_j^2 - 2 tau1 p_j P^k_ij,
  // which is the Euclidean projection of z onto the simplex with
  //   z_j = (2 tau1 P^k_ij - beta V_ij) / (2 (mu + tau1)).
  const double denom = 2.0 * (cfg.mu + cfg.tau1);
  Eigen::VectorXd prev_row = Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(k));
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (SpMatRow::InnerIterator it(state.P.weights, i); it; ++it)
      prev_row[it.col()] = it.value();

    order.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    // Ties prefer the previous support so the degenerate W = 0 round keeps
    // the warm-start graph instead of an arbitrary index prefix.
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        if (v(i, a) != v(i, b)) return v(i, a) < v(i, b);
                        const bool pa = prev_row[a] > 0.0;
                        const bool pb = prev_row[b] > 0.0;
                        if (pa != pb) return pa;
                        return a < b;
                      });

    Eigen::VectorXd z(k);
    for (int t = 0; t < k; ++t) {
      const Eigen::Index j = order[static_cast<std::size_t>(t)];
      z[t] = (2.0 * cfg.tau1 * prev_row[j] - cfg.beta * v(i, j)) / denom;
    }
    Eigen::VectorXd p = project_to_simplex(z);
    const double sum = p.sum();
    if (sum > 0.0) p /= sum;
    for (int t = 0; t < k; ++t)
      if (p[t] > 0.0)
        trips.emplace_back(i, order[static_cast<std::size_t>(t)], p[t]);

    for (SpMatRow::InnerIterator it(state.P.weights, i); it; ++it)
      prev_row[it.col()] = 0.0;
  }

  AdaptiveGraph out;
  out.weights.resize(n, n);
  out.weights.setFromTriplets(trips.begin(), trips.end());
  out.weights.makeCompressed();
  out.k = k;
  return out;
}

ProjectionMatrix update_w(const SolverState& state, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& y, const BlufsConfig& cfg) {
  const Eigen::Index d = x.rows();
  const Eigen::MatrixXd& w_prev = state.W.weights;

  Eigen::MatrixXd a = x * x.transpose();
  a.diagonal().array() += cfg.lambda + cfg.tau2;
  if (cfg.beta != 0.0) {
    const SpMat lap = laplacian_of_p(state.P.weights);
    const Eigen::MatrixXd xl = x * lap;  // d x n
    // The graph term contributes 2 beta X L_P X^T to the gradient's
    // coefficient matrix (the double sum equals 2 tr(W^T X L_P X^T W)).
    a.noalias() += (2.0 * cfg.beta) * (xl * x.transpose());
  }
  const Eigen::MatrixXd rhs = x * y + cfg.tau2 * w_prev;

  Eigen::LLT<Eigen::MatrixXd> llt(a);
  Eigen::MatrixXd solved;
  if (llt.info() == Eigen::Success) {
    solved = llt.solve(rhs);
  } else {
    solved = Eigen::LDLT<Eigen::MatrixXd>(a).solve(rhs);
  }
  if (!solved.allFinite()) {
    const Eigen::VectorXd dd =
        Eigen::LDLT<Eigen::MatrixXd>(a).vectorD().cwiseAbs();
    throw NumericalError(
        "projection solve produced non-finite values; pivot range [" +
        std::to_string(dd.minCoeff()) + ", " + std::to_string(dd.maxCoeff()) +
        "]");
  }

  ProjectionMatrix out;
  out.weights = solved;
  const Eigen::Index budget = cfg.effective_s(d);
  if (budget < d) {
    // Keep the s rows of largest Euclidean norm (ties by lower index),
    // zero the rest exactly, then re-solve the system restricted to the
    // kept rows. Without the re-solve the truncated point can score worse
    // than the origin whenever the dropped rows carried coupled mass.
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), 0);
    const Eigen::VectorXd norms = out.weights.rowwise().norm();
    std::partial_sort(idx.begin(), idx.begin() + budget, idx.end(),
                      [&](Eigen::Index p, Eigen::Index q) {
                        if (norms[p] != norms[q]) return norms[p] > norms[q];
                        return p < q;
                      });
    std::vector<Eigen::Index> kept(idx.begin(), idx.begin() + budget);
    std::sort(kept.begin(), kept.end());
    Eigen::MatrixXd a_sub(budget, budget);
    Eigen::MatrixXd rhs_sub(budget, rhs.cols());
    for (Eigen::Index r = 0; r < budget; ++r) {
      rhs_sub.row(r) = rhs.row(kept[static_cast<std::size_t>(r)]);
      for (Eigen::Index s = 0; s < budget; ++s)
        a_sub(r, s) = a(kept[static_cast<std::size_t>(r)],
                        kept[static_cast<std::size_t>(s)]);
    }
    const Eigen::MatrixXd w_sub =
        Eigen::LLT<Eigen::MatrixXd>(a_sub).solve(rhs_sub);
    if (!w_sub.allFinite())
      throw NumericalError("restricted projection solve failed");
    out.weights.setZero();
    for (Eigen::Index r = 0; r < budget; ++r)
      out.weights.row(kept[static_cast<std::size_t>(r)]) = w_sub.row(r);
  }
  for (Eigen::Index r = 0; r < d; ++r)
    if (!(out.weights.row(r).array() == 0.0).all()) out.support.push_back(r);

  // Monotone acceptance: the hard row truncation is not the exact
  // constrained minimizer, so fall back to W^k whenever the truncated
  // point would increase the subproblem value. Keeps the block descent
  // inequality intact.
  auto subproblem_value = [&](const Eigen::MatrixXd& w) {
    return (w.transpose() * (a * w)).trace() -
           2.0 * (w.transpose() * rhs).trace();
  };
  const double g_new = subproblem_value(out.weights);
  const double g_old = subproblem_value(w_prev);
  if (g_new > g_old + 1e-12 * (1.0 + std::abs(g_old))) {
    log_debug("update_w: truncated solution rejected (" +
              std::to_string(g_new) + " > " + std::to_string(g_old) +
              "); keeping previous iterate");
    out.weights = w_prev;
    out.support = state.W.support;
  }
  return out;
}

Eigen::MatrixXd pseudo_label_gradient(const Eigen::MatrixXd& y,
                                      const Eigen::MatrixXd& target,
                                      const Eigen::MatrixXd& y_prev,
                                      const NormalizedAffinity& affinity,
                                      double alpha, double tau3) {
  return 2.0 * (y - target) - 2.0 * alpha * (affinity.s_hat * y) +
         2.0 * tau3 * (y - y_prev);
}

PseudoLabels update_y(const SolverState& state, const Eigen::MatrixXd& x,
                      const Eigen::MatrixXd& w,
                      const NormalizedAffinity& affinity,
                      const BlufsConfig& cfg) {
  const Eigen::MatrixXd target = x.transpose() * w;  // n x c
  const Eigen::MatrixXd& y_prev = state.Y.y;
  const double rho = cfg.resolved_rho();

  const auto grad_l = [&](const Eigen::MatrixXd& y) -> Eigen::MatrixXd {
    return pseudo_label_gradient(y, target, y_prev, affinity, cfg.alpha,
                                 cfg.tau3);
  };
  const auto l_value = [&](const Eigen::MatrixXd& y) {
    return fit_term(target, y) - cfg.alpha * spectral_term(y, affinity) +
           cfg.tau3 * (y - y_prev).squaredNorm();
  };
  // Penalized surrogate: l(Y) - <Lambda(Y), Y^T Y - I>/2 + theta/4 ||Y^T Y - I||^2
  const auto h_value = [&](const Eigen::MatrixXd& y,
                           const Eigen::MatrixXd& grad) {
    Eigen::MatrixXd gram = y.transpose() * y;
    gram.diagonal().array() -= 1.0;
    const Eigen::MatrixXd lambda_pen =
        0.5 * (y.transpose() * grad + grad.transpose() * y);
    return l_value(y) - 0.5 * lambda_pen.cwiseProduct(gram).sum() +
           0.25 * cfg.theta * gram.squaredNorm();
  };
  const auto direction = [&](const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& grad) -> Eigen::MatrixXd {
    const Eigen::MatrixXd lambda_pen =
        0.5 * (y.transpose() * grad + grad.transpose() * y);
    Eigen::MatrixXd gram = y.transpose() * y;
    gram.diagonal().array() -= 1.0;
    return grad - y * lambda_pen + cfg.theta * (y * gram);
  };

  Eigen::MatrixXd y = y_prev;
  Eigen::MatrixXd grad = grad_l(y);
  Eigen::MatrixXd dir = direction(y, grad);

  Eigen::MatrixXd best_y = y;
  double best_h = h_value(y, grad);
  bool stationary = false;

  double step = 1e-3;
  for (int t = 0; t < cfg.inner_max_iter; ++t) {
    if (dir.norm() / std::max(1.0, y.norm()) < cfg.inner_tol) {
      stationary = true;
      break;
    }

    Eigen::MatrixXd y_next = y - step * dir;
    const double norm = y_next.norm();
    if (norm > rho) y_next *= rho / norm;
    if (!y_next.allFinite())
      throw NumericalError("pseudo-label update produced non-finite values");

    const Eigen::MatrixXd grad_next = grad_l(y_next);
    const Eigen::MatrixXd dir_next = direction(y_next, grad_next);

    const double h = h_value(y_next, grad_next);
    if (h < best_h) {
      best_h = h;
      best_y = y_next;
    }

    // Barzilai-Borwein step from successive iterate/direction differences.
    const Eigen::MatrixXd dy = y_next - y;
    const Eigen::MatrixXd dd = dir_next - dir;
    const double dd_sq = dd.squaredNorm();
    if (dd_sq > 0.0) {
      const double raw = std::abs(dy.cwiseProduct(dd).sum()) / dd_sq;
      step = std::clamp(raw, 1e-10, 1e2);
    }
    y = std::move(y_next);
    grad = grad_next;
    dir = dir_next;
  }

  // A stationary finish is trusted as-is; otherwise fall back to the best
  // surrogate value seen (the warm start is among the candidates, so the
  // result can never be worse than Y^k in h).
  PseudoLabels out;
  out.y = stationary ? std::move(y) : std::move(best_y);
  return out;
}

namespace {

// Per-row monotone acceptance for the P block. The k-support restriction
// can evict the incumbent row from the feasible set, in which case the
// restricted minimizer may score worse on the row subproblem
//   sum_j beta V_ij p_j + (mu + tau1) p_j^2 - 2 tau1 p_j P_old_ij.
// Rows are independent, so keeping the better of {candidate, incumbent}
// per row preserves the sufficient-decrease inequality.
AdaptiveGraph accept_rows(const AdaptiveGraph& prev, const AdaptiveGraph& cand,
                          const Eigen::MatrixXd& v, const BlufsConfig& cfg) {
  const Eigen::Index n = v.rows();
  const double quad = cfg.mu + cfg.tau1;
  Eigen::VectorXd prev_row = Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(cand.weights.nonZeros()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (SpMatRow::InnerIterator it(prev.weights, i); it; ++it)
      prev_row[it.col()] = it.value();

    double g_old = 0.0;
    for (SpMatRow::InnerIterator it(prev.weights, i); it; ++it)
      g_old += it.value() * (cfg.beta * v(i, it.col()) +
                             (cfg.mu - cfg.tau1) * it.value());
    double g_new = 0.0;
    for (SpMatRow::InnerIterator it(cand.weights, i); it; ++it)
      g_new += it.value() *
               (cfg.beta * v(i, it.col()) + quad * it.value() -
                2.0 * cfg.tau1 * prev_row[it.col()]);

    const SpMatRow& source =
        g_new <= g_old + 1e-12 * (1.0 + std::abs(g_old)) ? cand.weights
                                                         : prev.weights;
    for (SpMatRow::InnerIterator it(source, i); it; ++it)
      trips.emplace_back(i, it.col(), it.value());

    for (SpMatRow::InnerIterator it(prev.weights, i); it; ++it)
      prev_row[it.col()] = 0.0;
  }
  AdaptiveGraph out;
  out.weights.resize(n, n);
  out.weights.setFromTriplets(trips.begin(), trips.end());
  out.weights.makeCompressed();
  out.k = cand.k;
  return out;
}

AdaptiveGraph initial_p(const Eigen::MatrixXd& x, const BlufsConfig& cfg) {
  const KnnGaussian knn = build_knn_gaussian(x, cfg.k, cfg.sigma);
  const Eigen::Index n = knn.weights.rows();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n) * cfg.k);
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    int cnt = 0;
    for (SpMatRow::InnerIterator it(knn.weights, i); it; ++it) {
      sum += it.value();
      ++cnt;
    }
    if (cnt == 0) {
      // All kernel weights underflowed; fall back to uniform over the
      // first k indices other than i.
      int placed = 0;
      for (Eigen::Index j = 0; j < n && placed < cfg.k; ++j)
        if (j != i) {
          trips.emplace_back(i, j, 1.0 / cfg.k);
          ++placed;
        }
      continue;
    }
    if (sum > 0.0) {
      for (SpMatRow::InnerIterator it(knn.weights, i); it; ++it)
        trips.emplace_back(i, it.col(), it.value() / sum);
    } else {
      for (SpMatRow::InnerIterator it(knn.weights, i); it; ++it)
        trips.emplace_back(i, it.col(), 1.0 / cnt);
    }
  }
  AdaptiveGraph out;
  out.weights.resize(n, n);
  out.weights.setFromTriplets(trips.begin(), trips.end());
  out.weights.makeCompressed();
  out.k = cfg.k;
  return out;
}

void fix_eigvec_signs(Eigen::MatrixXd& vecs) {
  for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < vecs.rows(); ++r)
      if (std::abs(vecs(r, c)) > best) {
        best = std::abs(vecs(r, c));
        arg = r;
      }
    if (vecs(arg, c) < 0.0) vecs.col(c) = -vecs.col(c);
  }
}

// Leading eigenvectors of the (symmetric) normalized affinity. Dense solve
// at small n, deterministic orthogonal iteration otherwise.
Eigen::MatrixXd top_eigenvectors(const SpMat& s_hat, int c,
                                 std::uint64_t seed) {
  const Eigen::Index n = s_hat.rows();
  if (n <= 2048) {
    const Eigen::MatrixXd dense(s_hat);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    Eigen::MatrixXd vecs = es.eigenvectors().rightCols(c).rowwise().reverse();
    fix_eigvec_signs(vecs);
    return vecs;
  }
  const int m = std::min<Eigen::Index>(n, c + 4);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Eigen::MatrixXd b(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) b(i, j) = rng.normal();
  Eigen::VectorXd ritz_prev = Eigen::VectorXd::Zero(m);
  for (int it = 0; it < 300; ++it) {
    Eigen::MatrixXd z = s_hat * b;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
    b = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
    Eigen::MatrixXd t = b.transpose() * (s_hat * b);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    const Eigen::VectorXd ritz = es.eigenvalues();
    if ((ritz - ritz_prev).cwiseAbs().maxCoeff() < 1e-12) {
      ritz_prev = ritz;
      break;
    }
    ritz_prev = ritz;
  }
  Eigen::MatrixXd t = b.transpose() * (s_hat * b);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  Eigen::MatrixXd vecs =
      (b * es.eigenvectors()).rightCols(c).rowwise().reverse();
  fix_eigvec_signs(vecs);
  return vecs;
}

double frob_sq(const SpMatRow& a, const SpMatRow& b) {
  return SpMatRow(a - b).squaredNorm();
}

}  // namespace

SolverState run_pam(const Eigen::MatrixXd& x,
                    const NormalizedAffinity& affinity,
                    const BlufsConfig& cfg) {
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  cfg.validate(n, d);
  const int c = cfg.clusters;
  const double rho = cfg.resolved_rho();
  const double tau_min = std::min({cfg.tau1, cfg.tau2, cfg.tau3});
  const Eigen::Index budget = cfg.effective_s(d);

  SolverState state;
  state.P = initial_p(x, cfg);
  state.W.weights = Eigen::MatrixXd::Zero(d, c);
  {
    // Spectral warm start scaled into the Frobenius ball.
    Eigen::MatrixXd y0 = top_eigenvectors(affinity.s_hat, c, cfg.seed);
    const double norm = y0.norm();
    const double want = std::min(std::sqrt(static_cast<double>(c)), rho);
    if (norm > 0.0) y0 *= want / norm;
    state.Y.y = std::move(y0);
  }

  double f_prev = objective(state, x, affinity, cfg);
  state.objective_history.push_back(f_prev);

  const bool freeze_y = cfg.ablation == AblationCase::FeatureOnly;

  for (int iter = 1; iter <= cfg.outer_max_iter; ++iter) {
    const double slack = 1e-8 * (1.0 + std::abs(f_prev));
    IterationRecord rec;
    rec.iter = iter;

    // --- P block ---
    const Eigen::MatrixXd proj_before = x.transpose() * state.W.weights;
    const auto p_terms = [&](const AdaptiveGraph& p) {
      double val = cfg.mu * p.weights.squaredNorm();
      if (cfg.beta != 0.0)
        val += cfg.beta * graph_term(proj_before, laplacian_of_p(p.weights));
      return val;
    };
    AdaptiveGraph p_next =
        accept_rows(state.P, update_p(state, x, cfg),
                    projected_sq_dist(proj_before), cfg);
    const double dp_sq = frob_sq(p_next.weights, state.P.weights);
    rec.p_drop = p_terms(state.P) - (p_terms(p_next) + cfg.tau1 * dp_sq);
    rec.p_violation = rec.p_drop < -slack;
    state.P = std::move(p_next);

    // --- W block ---
    const SpMat lap =
        cfg.beta != 0.0 ? laplacian_of_p(state.P.weights) : SpMat();
    const auto w_terms = [&](const Eigen::MatrixXd& w) {
      const Eigen::MatrixXd proj = x.transpose() * w;
      double val = fit_term(proj, state.Y.y) + cfg.lambda * w.squaredNorm();
      if (cfg.beta != 0.0) val += cfg.beta * graph_term(proj, lap);
      return val;
    };
    const double w_before = w_terms(state.W.weights);
    ProjectionMatrix w_next = update_w(state, x, state.Y.y, cfg);
    const double dw_sq = (w_next.weights - state.W.weights).squaredNorm();
    rec.w_drop = w_before - (w_terms(w_next.weights) + cfg.tau2 * dw_sq);
    rec.w_violation = rec.w_drop < -slack;
    state.W = std::move(w_next);

    // --- Y block ---
    double dy_sq = 0.0;
    if (!freeze_y) {
      const auto y_terms = [&](const Eigen::MatrixXd& y) {
        return fit_term(x.transpose() * state.W.weights, y) -
               cfg.alpha * spectral_term(y, affinity);
      };
      const double y_before = y_terms(state.Y.y);
      PseudoLabels y_next = update_y(state, x, state.W.weights, affinity, cfg);
      dy_sq = (y_next.y - state.Y.y).squaredNorm();
      rec.y_drop = y_before - (y_terms(y_next.y) + cfg.tau3 * dy_sq);
      rec.y_violation = rec.y_drop < -slack;
      state.Y = std::move(y_next);
    }

    const double f = objective(state, x, affinity, cfg);
    const double dq_sq = dp_sq + dw_sq + dy_sq;
    rec.objective = f;
    rec.orth_residual = state.Y.orth_residual();
    rec.dq_norm = std::sqrt(dq_sq);
    rec.support_size = static_cast<int>(state.W.support.size());
    rec.descent_violation = f + tau_min * dq_sq > f_prev + slack;
    if (rec.descent_violation)
      log_warn("outer iteration " + std::to_string(iter) +
               ": sufficient-decrease inequality violated (f " +
               std::to_string(f_prev) + " -> " + std::to_string(f) + ")");

    rec.feasible = true;
    try {
      state.P.validate();
      state.W.validate(budget);
      if (state.Y.y.norm() > rho + 1e-9)
        throw NumericalError("pseudo-labels left the Frobenius ball");
    } catch (const NumericalError& err) {
      rec.feasible = false;
      log(LogLevel::Error, std::string("iterate infeasible: ") + err.what());
    }

    state.objective_history.push_back(f);
    state.trace.push_back(rec);
    state.iter = iter;

    if (std::abs(f - f_prev) / std::max(std::abs(f_prev), 1.0) <
        cfg.outer_tol) {
      state.converged = true;
      f_prev = f;
      break;
    }
    f_prev = f;
  }
  return state;
}

BlufsConfig ablation_variant(const BlufsConfig& cfg, AblationCase variant) {
  BlufsConfig out = cfg;
  out.ablation = variant;
  switch (variant) {
    case AblationCase::Full:
      out.ablation = AblationCase::Full;
      break;
    case AblationCase::FeatureOnly:
      out.alpha = 0.0;  // pseudo-labels stay at the spectral warm start
      break;
    case AblationCase::ClusteringOnly:
      out.beta = 0.0;  // sparsity becomes post-hoc top-s scoring
      break;
    case AblationCase::NoGraph:
      out.beta = 0.0;
      break;
  }
  return out;
}

void save_trace(const SolverState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "iter,f,orth_residual,dq_norm,support_size\n";
  char buf[160];
  for (const IterationRecord& r : state.trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%d\n", r.iter,
                  r.objective, r.orth_residual, r.dq_norm, r.support_size);
    out << buf;
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace blufs
