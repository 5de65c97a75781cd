#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "blufs/graph.hpp"

namespace blufs {

/// Which terms of the bi-level model are active (degenerate variants used
/// by the ablation study).
enum class AblationCase { Full, FeatureOnly, ClusteringOnly, NoGraph };

const char* to_string(AblationCase c);
AblationCase ablation_from_string(const std::string& name);

struct BlufsConfig {
  double lambda = 1.0;  // ridge weight on W
  double alpha = 1.0;   // spectral (pseudo-label) term
  double beta = 1.0;    // adaptive-graph term
  double mu = 1.0;      // P regularizer
  int s = 0;            // feature budget (l2,0 bound), required
  int k = 10;           // neighbour count
  int clusters = 0;     // c, required at solve time
  double tau1 = 1e-2, tau2 = 1e-2, tau3 = 1e-2;  // proximal weights
  double theta = 1.0;                            // orthogonality penalty
  std::optional<double> rho;    // Frobenius ball radius, default sqrt(c)
  std::optional<double> sigma;  // graph bandwidth, auto when unset
  int outer_max_iter = 50;
  double outer_tol = 1e-4;
  int inner_max_iter = 100;
  double inner_tol = 1e-6;
  std::uint64_t seed = 0;
  AblationCase ablation = AblationCase::Full;

  double resolved_rho() const;
  /// The row budget actually enforced during iterations; the
  /// clustering-only variant defers sparsity to post-hoc scoring.
  Eigen::Index effective_s(Eigen::Index d) const;
  void validate(Eigen::Index n, Eigen::Index d) const;
};

/// Learned row-stochastic similarity over samples, at most k nonzeros and
/// unit sum per row, all entries nonnegative.
struct AdaptiveGraph {
  SpMatRow weights;
  int k = 0;

  void validate() const;
};

/// d x c projection with at most s nonzero rows; rows outside `support`
/// are exactly zero.
struct ProjectionMatrix {
  Eigen::MatrixXd weights;
  std::vector<Eigen::Index> support;  // ascending

  void validate(Eigen::Index budget) const;
};

/// Continuous pseudo-label matrix, n x c, confined to the Frobenius ball.
struct PseudoLabels {
  Eigen::MatrixXd y;

  /// ||Y^T Y - I||_F
  double orth_residual() const;
};

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double orth_residual = 0.0;
  double dq_norm = 0.0;  // ||Q^k - Q^{k-1}||_F
  int support_size = 0;
  // Per-block sufficient-decrease margins: subproblem value before the
  // block update minus (value after + tau * step^2). Negative beyond the
  // numerical slack means that block violated descent.
  double p_drop = 0.0, w_drop = 0.0, y_drop = 0.0;
  bool p_violation = false, w_violation = false, y_violation = false;
  bool descent_violation = false;
  bool feasible = true;
};

struct SolverState {
  AdaptiveGraph P;
  ProjectionMatrix W;
  PseudoLabels Y;
  int iter = 0;
  bool converged = false;
  std::vector<double> objective_history;  // f at init, then per outer iter
  std::vector<IterationRecord> trace;
};

/// Euclidean projection onto the probability simplex (exact, sort-based).
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& z);

/// Gradient of the smooth pseudo-label block objective
///   l(Y) = ||target - Y||_F^2 - alpha tr(Y^T S_hat Y) + tau3 ||Y - Y_prev||_F^2
/// where target = X^T W.
Eigen::MatrixXd pseudo_label_gradient(const Eigen::MatrixXd& y,
                                      const Eigen::MatrixXd& target,
                                      const Eigen::MatrixXd& y_prev,
                                      const NormalizedAffinity& affinity,
                                      double alpha, double tau3);

/// f(P, W, Y) of the full model; the graph term is evaluated through the
/// Laplacian trace identity.
double objective(const SolverState& state, const Eigen::MatrixXd& x,
                 const NormalizedAffinity& affinity, const BlufsConfig& cfg);

AdaptiveGraph update_p(const SolverState& state, const Eigen::MatrixXd& x,
                       const BlufsConfig& cfg);
ProjectionMatrix update_w(const SolverState& state, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& y, const BlufsConfig& cfg);
PseudoLabels update_y(const SolverState& state, const Eigen::MatrixXd& x,
                      const Eigen::MatrixXd& w,
                      const NormalizedAffinity& affinity,
                      const BlufsConfig& cfg);

/// Full proximal alternating minimization loop with descent monitoring and
/// per-iteration feasibility checks.
SolverState run_pam(const Eigen::MatrixXd& x,
                    const NormalizedAffinity& affinity,
                    const BlufsConfig& cfg);

BlufsConfig ablation_variant(const BlufsConfig& cfg, AblationCase variant);

/// Convergence trace CSV: iter,f,orth_residual,dq_norm,support_size.
void save_trace(const SolverState& state, const std::string& path);

}  // namespace blufs
