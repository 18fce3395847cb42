#include "gossipgrad/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gossipgrad/errors.hpp"
#include "gossipgrad/mnist.hpp"
#include "gossipgrad/rng.hpp"

namespace gossipgrad {

Dataset build_dataset(const RunConfig& config) {
  const auto& ds = config.dataset;
  if (ds.kind == "mnist") {
    auto mnist = load_mnist(ds.mnist_dir, ds.mnist_limit);
    if (!mnist) throw ConfigError(fmt::format("MNIST files not found in '{}'", ds.mnist_dir.string()));
    return std::move(*mnist);
  }
  return make_synthetic(parse_dataset_kind(ds.kind), ds.samples, ds.classes, config.seed, ds.synthetic);
}

Experiment prepare(const RunConfig& config) {
  config.validate();
  Experiment ex;
  ex.config = config;
  ex.model = config.model();
  ex.data = build_dataset(config);

  if (ex.model.front().fan_in != ex.data.features()) {
    throw ConfigError(fmt::format("model input width {} does not match dataset features {}",
                                  ex.model.front().fan_in, ex.data.features()));
  }
  if (ex.model.back().fan_out != ex.data.outputs()) {
    throw ConfigError(fmt::format("model output width {} does not match dataset outputs {}",
                                  ex.model.back().fan_out, ex.data.outputs()));
  }
  if (ex.data.one_hot != (config.output_activation == Activation::softmax)) {
    throw ConfigError("classification data needs a softmax output; regression data needs a non-softmax output");
  }

  ex.split = split_validation(ex.data.size(), config.validation_fraction, config.seed);
  const auto shards = shard(ex.split.train, config.p, config.seed);
  ShuffleRingState ring = make_ring(shards, config.batch_size);
  for (const auto& q : ring.queues) ex.steps_per_epoch = std::max<std::uint64_t>(ex.steps_per_epoch, q.size());

  std::optional<GossipSchedule> schedule;
  if (is_gossip(config.protocol)) schedule.emplace(config.topology, config.p, config.rotation(), config.seed);

  const ParameterBuffer initial = init_parameters(ex.model, config.seed);
  ex.cluster = make_cluster(ex.model, initial, std::move(ring), std::move(schedule), config.momentum,
                            config.protocol == ProtocolKind::sequential);
  if (config.init_jitter > 0.0) {
    for (auto& node : ex.cluster.nodes) {
      Rng rng(config.seed, Stream::jitter, node.rank);
      for (double& w : node.params.values) w += config.init_jitter * rng.normal();
    }
  }

  ex.lr = is_weak_scaled_baseline(config.protocol) ? weak_scale_lr(config.base_lr, config.p) : config.base_lr;
  ex.steps = config.steps ? *config.steps : *config.epochs * ex.steps_per_epoch;

  const std::size_t sample_bytes = config.sample_bytes.value_or(ex.data.features() * sizeof(double));
  ex.cost = make_cost_model(cost_preset(config.cost_preset), ex.model, config.batch_size, sample_bytes);
  if (config.compute_seconds) ex.cost.per_layer_compute = compute_with_total(ex.model, *config.compute_seconds);

  ex.shape = StepShape::for_model(ex.model, config.batch_size, config.overlap_with_next_forward);
  if (config.priced_parameters) {
    const double scale = *config.priced_parameters / static_cast<double>(ex.shape.total_parameters());
    for (auto& n : ex.shape.layer_parameters) {
      n = static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale));
    }
  }
  return ex;
}

RunMetrics run(const RunConfig& config) {
  Experiment ex = prepare(config);
  const bool classify = ex.data.one_hot && !ex.split.validation.empty();
  const Batch validation = ex.data.gather(ex.split.validation);

  spdlog::info("run: protocol={} p={} steps={} lr={} preset={}", to_string(config.protocol), config.p, ex.steps,
               ex.lr, config.cost_preset);

  RunMetrics metrics;
  metrics.rows.reserve(ex.steps);
  double sim_time = 0.0;
  double compute_total = 0.0;
  for (std::uint64_t s = 0; s < ex.steps; ++s) {
    const StepReport report = advance(ex.cluster, config.protocol, ex.data, ex.lr);
    const StepTiming timing = step_timing(config.protocol, ex.cost, ex.shape, config.p, s);
    sim_time += timing.step_wall_time;
    compute_total += timing.compute_time;

    MetricsRow row;
    row.step = s + 1;
    row.epoch = static_cast<double>(s + 1) / static_cast<double>(ex.steps_per_epoch);
    row.loss = report.loss;
    if (classify && (row.step % config.validation_every == 0 || row.step == ex.steps)) {
      const ForwardPass pass = forward(ex.model, ex.cluster.nodes[0].params, validation.inputs);
      row.val_acc = accuracy(pass.predictions(), validation.labels);
      spdlog::debug("step {}: loss={:.6f} val_acc={:.4f}", row.step, row.loss, *row.val_acc);
    }
    row.sim_time_s = sim_time;
    row.exposed_comm_s = timing.exposed_comm_time;
    row.consensus_linf = consensus_distance(ex.cluster);
    row.updates_per_s = sim_time > 0.0 ? static_cast<double>(row.step) / sim_time : 0.0;
    metrics.rows.push_back(row);
  }

  auto& sum = metrics.summary;
  sum.protocol = config.protocol;
  sum.p = config.p;
  sum.steps = ex.steps;
  sum.lr = ex.lr;
  sum.sim_time_s = sim_time;
  sum.updates_per_s = sim_time > 0.0 ? static_cast<double>(ex.steps) / sim_time : 0.0;
  sum.efficiency_pct = sim_time > 0.0 ? 100.0 * compute_total / sim_time : 100.0;
  if (!metrics.rows.empty()) {
    sum.final_loss = metrics.rows.back().loss;
    sum.final_val_acc = metrics.rows.back().val_acc;
    sum.final_consensus_linf = metrics.rows.back().consensus_linf;
  }
  if (!config.output.empty()) write_csv(config.output, metrics);
  spdlog::info("{}", summary_line(sum));
  return metrics;
}

std::string to_csv(const RunMetrics& metrics) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : metrics.rows) {
    out += fmt::format("{},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.step, r.epoch, r.loss,
                       r.val_acc ? fmt::format("{:.17g}", *r.val_acc) : std::string{}, r.sim_time_s,
                       r.exposed_comm_s, r.consensus_linf, r.updates_per_s);
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write {}", path.string()));
  out << to_csv(metrics);
}

std::string summary_line(const RunSummary& s) {
  return fmt::format(
      "summary protocol={} p={} steps={} lr={:.6g} final_loss={:.6g} final_val_acc={} sim_time_s={:.6g} "
      "updates_per_s={:.6g} efficiency_pct={:.4g} consensus_linf={:.6g}",
      to_string(s.protocol), s.p, s.steps, s.lr, s.final_loss,
      s.final_val_acc ? fmt::format("{:.4f}", *s.final_val_acc) : std::string("n/a"), s.sim_time_s,
      s.updates_per_s, s.efficiency_pct, s.final_consensus_linf);
}

std::vector<ComparisonRow> compare(const std::vector<RunConfig>& configs, const std::vector<std::string>& labels) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  const auto& first = configs.front();
  for (std::size_t i = 1; i < configs.size(); ++i) {
    const auto& c = configs[i];
    if (c.model() != first.model()) throw ConfigError(fmt::format("config {} uses a different model", i));
    if (!(c.dataset == first.dataset)) throw ConfigError(fmt::format("config {} uses a different dataset", i));
    if (c.seed != first.seed) throw ConfigError(fmt::format("config {} uses a different seed", i));
  }

  std::vector<ComparisonRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const RunMetrics m = run(configs[i]);
    ComparisonRow row;
    row.label = i < labels.size() ? labels[i] : fmt::format("config{}", i);
    row.protocol = configs[i].protocol;
    row.p = configs[i].p;
    row.updates_per_s = m.summary.updates_per_s;
    row.final_val_acc = m.summary.final_val_acc;
    rows.push_back(row);
  }
  const auto& base = rows.front();
  for (auto& row : rows) {
    row.speedup = base.updates_per_s > 0.0 ? row.updates_per_s / base.updates_per_s : 0.0;
    if (row.final_val_acc && base.final_val_acc) row.acc_delta_pp = 100.0 * (*row.final_val_acc - *base.final_val_acc);
  }
  return rows;
}

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::string out = "label,protocol,p,updates_per_s,speedup,final_val_acc,acc_delta_pp\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{:.6g},{:.4f},{},{}\n", r.label, to_string(r.protocol), r.p, r.updates_per_s,
                       r.speedup, r.final_val_acc ? fmt::format("{:.4f}", *r.final_val_acc) : std::string{},
                       r.acc_delta_pp ? fmt::format("{:.2f}", *r.acc_delta_pp) : std::string{});
  }
  return out;
}

}  // namespace gossipgrad
