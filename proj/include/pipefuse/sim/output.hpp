#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pipefuse/sim/simulation.hpp"

namespace pipefuse::sim {

std::vector<std::string> metrics_columns();
std::vector<std::string> metrics_values(const RunMetrics& m, const ScenarioConfig& cfg);

void write_metrics_csv(std::ostream& out, const RunMetrics& m, const ScenarioConfig& cfg);
void write_stream_csv(std::ostream& out, const RunResult& run, const ClusterChannel& channel);
void write_consensus_csv(std::ostream& out, const std::vector<ConsensusQuery>& queries);
void write_detections_csv(std::ostream& out, const std::vector<Detection>& detections);
void write_summary(std::ostream& out, const RunResult& run, const std::vector<std::filesystem::path>& files);

/// Writes metrics.csv, one estimates_<cluster>_<kind>.csv per analog
/// cluster stream, consensus_mse.csv, detections.csv and summary.txt into
/// `dir`. Returns the paths written, summary last.
std::vector<std::filesystem::path> write_run_outputs(const std::filesystem::path& dir, const RunResult& run);

}  // namespace pipefuse::sim
