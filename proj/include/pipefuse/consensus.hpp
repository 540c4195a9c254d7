#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <utility>
#include <vector>

namespace pipefuse::consensus {

/// Undirected communication graph over agents 0..n-1. Self-loops and
/// out-of-range endpoints are rejected at construction; connectivity is
/// checked where it matters (metropolis_weights).
class CommGraph {
 public:
  CommGraph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges);

  static CommGraph complete(std::size_t n);
  static CommGraph path(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  /// Normalised (i < j), sorted, duplicate-free.
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }
  std::vector<std::size_t> degrees() const;
  bool is_connected() const;

 private:
  std::size_t n_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

struct ConsensusState {
  Eigen::VectorXd estimates;
  std::size_t iteration = 0;
};

/// W_ij = 1 / (1 + max(d_i, d_j)) on edges, W_ii = 1 - sum_j W_ij.
/// Throws Error(invalid_graph) for a disconnected graph.
Eigen::MatrixXd metropolis_weights(const CommGraph& graph);

ConsensusState consensus_step(const ConsensusState& state, const Eigen::MatrixXd& W);

/// Mean squared deviation of the estimates from their average. The
/// pairwise form (1/n^2) sum_ij (x_i - x_j)^2 is exactly twice this value.
double mse_dispersion(const ConsensusState& state);

struct ConsensusResult {
  Eigen::VectorXd estimates;
  std::size_t iterations = 0;
  std::vector<double> mse_history;  ///< entry k is the dispersion after k steps
  bool converged = false;
};

/// Iterates x <- W x until the dispersion drops below `tol` or `max_iter`
/// steps have run. Hitting `max_iter` is reported through `converged`, not
/// thrown.
ConsensusResult run_consensus(const ConsensusState& initial, const CommGraph& graph, double tol,
                              std::size_t max_iter);

/// `iteration,mse`
void write_mse_csv(std::ostream& out, const ConsensusResult& result);

}  // namespace pipefuse::consensus
