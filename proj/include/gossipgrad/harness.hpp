#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gossipgrad/config.hpp"
#include "gossipgrad/data.hpp"
#include "gossipgrad/protocol.hpp"
#include "gossipgrad/simnet.hpp"

namespace gossipgrad {

inline constexpr const char* kCsvHeader =
    "step,epoch,loss,val_acc,sim_time_s,exposed_comm_s,consensus_linf,updates_per_s";

struct MetricsRow {
  std::uint64_t step = 0;
  double epoch = 0.0;
  double loss = 0.0;
  std::optional<double> val_acc;  // only on validation steps
  double sim_time_s = 0.0;        // cumulative
  double exposed_comm_s = 0.0;    // this step
  double consensus_linf = 0.0;
  double updates_per_s = 0.0;     // steps / cumulative simulated time
};

struct RunSummary {
  ProtocolKind protocol = ProtocolKind::sgd_allreduce;
  std::size_t p = 0;
  std::uint64_t steps = 0;
  double lr = 0.0;
  double final_loss = 0.0;
  std::optional<double> final_val_acc;
  double sim_time_s = 0.0;
  double updates_per_s = 0.0;
  double efficiency_pct = 0.0;
  double final_consensus_linf = 0.0;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
  RunSummary summary;
};

/// Dataset named by the config: synthetic, or MNIST from mnist_dir.
/// Throws ConfigError when MNIST files are missing.
Dataset build_dataset(const RunConfig& config);

/// Everything a run needs before its first step.
struct Experiment {
  RunConfig config;
  Model model;
  Dataset data;
  Split split;
  ClusterState cluster;
  CostModel cost;
  StepShape shape;
  double lr = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t steps_per_epoch = 0;
};

Experiment prepare(const RunConfig& config);

/// Trains to completion. Writes the CSV to config.output when set.
/// Throws ConfigError for invalid configs; NumericError / InvariantError /
/// ProtocolError abort the run.
RunMetrics run(const RunConfig& config);

std::string to_csv(const RunMetrics& metrics);
void write_csv(const std::filesystem::path& path, const RunMetrics& metrics);
std::string summary_line(const RunSummary& summary);

struct ComparisonRow {
  std::string label;
  ProtocolKind protocol = ProtocolKind::sgd_allreduce;
  std::size_t p = 0;
  double updates_per_s = 0.0;
  double speedup = 0.0;  // updates/s relative to the first config
  std::optional<double> final_val_acc;
  std::optional<double> acc_delta_pp;  // percentage points vs the first config
};

/// Runs every config and normalizes to the first. Throws ConfigError when
/// configs differ in model, dataset, or seed.
std::vector<ComparisonRow> compare(const std::vector<RunConfig>& configs,
                                   const std::vector<std::string>& labels = {});

std::string comparison_table(const std::vector<ComparisonRow>& rows);

}  // namespace gossipgrad
