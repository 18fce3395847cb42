#include "gossipgrad/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <fmt/format.h>

#include "gossipgrad/errors.hpp"
#include "gossipgrad/simnet.hpp"

namespace gossipgrad {

bool DatasetConfig::operator==(const DatasetConfig& o) const {
  const auto& a = synthetic;
  const auto& b = o.synthetic;
  return kind == o.kind && samples == o.samples && classes == o.classes && mnist_dir == o.mnist_dir &&
         mnist_limit == o.mnist_limit && a.features == b.features && a.cluster_std == b.cluster_std &&
         a.centroid_spacing == b.centroid_spacing && a.noise == b.noise && a.spiral_turns == b.spiral_turns &&
         a.outputs == b.outputs;
}

Model RunConfig::model() const {
  return make_mlp(layers, hidden_activation, output_activation);
}

bool RunConfig::rotation() const { return uses_rotation(protocol); }

void RunConfig::validate() const {
  if (!is_power_of_two(p)) throw ConfigError(fmt::format("p = {} is not a power of two", p));
  if ((is_gossip(protocol) || protocol == ProtocolKind::agd_every_logp) && p < 2) {
    throw ConfigError(fmt::format("protocol {} needs p >= 2", to_string(protocol)));
  }
  if (rotation_flag && *rotation_flag != rotation()) {
    throw ConfigError(fmt::format("rotation = {} contradicts protocol {}", *rotation_flag ? "on" : "off",
                                  to_string(protocol)));
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps.has_value() == epochs.has_value()) throw ConfigError("set exactly one of steps or epochs");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (validation_every < 1) throw ConfigError("validation_every must be >= 1");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) throw ConfigError("validation_fraction must be in [0, 1)");
  if (init_jitter < 0.0) throw ConfigError("init_jitter must be >= 0");
  if (init_jitter > 0.0 && (protocol == ProtocolKind::sgd_allreduce || protocol == ProtocolKind::agd)) {
    throw ConfigError(fmt::format("init_jitter needs identical replicas to be off for {}", to_string(protocol)));
  }
  if (priced_parameters && !(*priced_parameters > 0.0)) throw ConfigError("priced_parameters must be positive");
  if (compute_seconds && !(*compute_seconds >= 0.0)) throw ConfigError("compute_seconds must be >= 0");
  (void)gossipgrad::cost_preset(cost_preset);
  (void)model();
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: '{}' is not a valid number", key, value));
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "off" || value == "no" || value == "0") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, value));
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& value) {
  std::vector<std::size_t> widths;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, '-')) widths.push_back(parse_number<std::size_t>(key, trim(part)));
  if (widths.size() < 2) throw ConfigError(fmt::format("{}: need at least two widths, e.g. 2-16-2", key));
  return widths;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  bool in_run = false;
  bool saw_run = false;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line != "[run]") throw ConfigError(fmt::format("line {}: unknown section {}", line_no, line));
      if (saw_run) throw ConfigError(fmt::format("line {}: duplicate [run] section", line_no));
      in_run = saw_run = true;
      continue;
    }
    if (!in_run) throw ConfigError(fmt::format("line {}: key outside the [run] section", line_no));
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError(fmt::format("line {}: empty value for {}", line_no, key));

    auto& ds = cfg.dataset;
    if (key == "protocol") cfg.protocol = parse_protocol(value);
    else if (key == "topology") cfg.topology = parse_topology(value);
    else if (key == "rotation") cfg.rotation_flag = parse_bool(key, value);
    else if (key == "p") cfg.p = parse_number<std::size_t>(key, value);
    else if (key == "layers") cfg.layers = parse_widths(key, value);
    else if (key == "hidden_activation") cfg.hidden_activation = parse_activation(value);
    else if (key == "output_activation") cfg.output_activation = parse_activation(value);
    else if (key == "dataset") ds.kind = value;
    else if (key == "samples") ds.samples = parse_number<std::size_t>(key, value);
    else if (key == "classes") ds.classes = parse_number<std::size_t>(key, value);
    else if (key == "features") ds.synthetic.features = parse_number<std::size_t>(key, value);
    else if (key == "cluster_std") ds.synthetic.cluster_std = parse_number<double>(key, value);
    else if (key == "centroid_spacing") ds.synthetic.centroid_spacing = parse_number<double>(key, value);
    else if (key == "noise") ds.synthetic.noise = parse_number<double>(key, value);
    else if (key == "spiral_turns") ds.synthetic.spiral_turns = parse_number<double>(key, value);
    else if (key == "outputs") ds.synthetic.outputs = parse_number<std::size_t>(key, value);
    else if (key == "mnist_dir") ds.mnist_dir = value;
    else if (key == "mnist_limit") ds.mnist_limit = parse_number<std::size_t>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "base_lr") cfg.base_lr = parse_number<double>(key, value);
    else if (key == "momentum") cfg.momentum = parse_number<double>(key, value);
    else if (key == "steps") cfg.steps = parse_number<std::uint64_t>(key, value);
    else if (key == "epochs") cfg.epochs = parse_number<std::uint64_t>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "cost_preset") cfg.cost_preset = value;
    else if (key == "overlap_with_next_forward") cfg.overlap_with_next_forward = parse_bool(key, value);
    else if (key == "sample_bytes") cfg.sample_bytes = parse_number<std::size_t>(key, value);
    else if (key == "priced_parameters") cfg.priced_parameters = parse_number<double>(key, value);
    else if (key == "compute_seconds") cfg.compute_seconds = parse_number<double>(key, value);
    else if (key == "validation_fraction") cfg.validation_fraction = parse_number<double>(key, value);
    else if (key == "validation_every") cfg.validation_every = parse_number<std::uint64_t>(key, value);
    else if (key == "init_jitter") cfg.init_jitter = parse_number<double>(key, value);
    else if (key == "output") cfg.output = value;
    else throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
  }
  if (!saw_run) throw ConfigError("config has no [run] section");
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace gossipgrad
