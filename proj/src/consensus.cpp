#include "pipefuse/consensus.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

#include "pipefuse/core.hpp"
#include "pipefuse/error.hpp"

namespace pipefuse::consensus {

CommGraph::CommGraph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges) : n_(n) {
  if (n == 0) throw Error(ErrorKind::invalid_graph, "graph needs at least one agent");
  for (auto [i, j] : edges) {
    if (i >= n || j >= n) {
      throw Error(ErrorKind::invalid_graph,
                  "edge (" + std::to_string(i) + ", " + std::to_string(j) + ") is out of range for n = " +
                      std::to_string(n));
    }
    if (i == j) throw Error(ErrorKind::invalid_graph, "self-loop at agent " + std::to_string(i));
    edges_.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

CommGraph CommGraph::complete(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return CommGraph(n, std::move(e));
}

CommGraph CommGraph::path(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return CommGraph(n, std::move(e));
}

std::vector<std::size_t> CommGraph::degrees() const {
  std::vector<std::size_t> d(n_, 0);
  for (auto [i, j] : edges_) {
    ++d[i];
    ++d[j];
  }
  return d;
}

bool CommGraph::is_connected() const {
  std::vector<std::vector<std::size_t>> adj(n_);
  for (auto [i, j] : edges_) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<bool> seen(n_, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == n_;
}

Eigen::MatrixXd metropolis_weights(const CommGraph& graph) {
  if (!graph.is_connected()) throw Error(ErrorKind::invalid_graph, "communication graph is disconnected");
  const auto n = static_cast<Eigen::Index>(graph.size());
  const auto deg = graph.degrees();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (auto [i, j] : graph.edges()) {
    const double w = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
    W(i, j) = w;
    W(j, i) = w;
  }
  for (Eigen::Index i = 0; i < n; ++i) W(i, i) = 1.0 - (W.row(i).sum() - W(i, i));
  return W;
}

ConsensusState consensus_step(const ConsensusState& state, const Eigen::MatrixXd& W) {
  if (W.rows() != W.cols() || W.cols() != state.estimates.size()) {
    throw std::invalid_argument("consensus_step: weight matrix does not match the estimate vector");
  }
  return ConsensusState{W * state.estimates, state.iteration + 1};
}

double mse_dispersion(const ConsensusState& state) {
  const auto& x = state.estimates;
  if (x.size() == 0) throw std::invalid_argument("mse_dispersion needs at least one estimate");
  const double mean = x.mean();
  return (x.array() - mean).square().mean();
}

ConsensusResult run_consensus(const ConsensusState& initial, const CommGraph& graph, double tol,
                              std::size_t max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("run_consensus: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("run_consensus: max_iter must be at least 1");
  if (static_cast<std::size_t>(initial.estimates.size()) != graph.size()) {
    throw std::invalid_argument("run_consensus: estimate count differs from graph size");
  }
  const Eigen::MatrixXd W = metropolis_weights(graph);

  ConsensusResult result;
  ConsensusState state{initial.estimates, 0};
  double mse = mse_dispersion(state);
  result.mse_history.push_back(mse);
  while (mse >= tol && state.iteration < max_iter) {
    state = consensus_step(state, W);
    mse = mse_dispersion(state);
    result.mse_history.push_back(mse);
  }
  result.estimates = std::move(state.estimates);
  result.iterations = state.iteration;
  result.converged = mse < tol;
  return result;
}

void write_mse_csv(std::ostream& out, const ConsensusResult& result) {
  out << "iteration,mse\n";
  for (std::size_t k = 0; k < result.mse_history.size(); ++k) {
    out << k << ',' << format_number(result.mse_history[k]) << '\n';
  }
}

}  // namespace pipefuse::consensus
