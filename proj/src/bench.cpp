// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/bench.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetflow/feature_store.hpp"
#include "hetflow/model.hpp"

namespace hetflow {

void RunConfig::check() const {
  if (dataset.empty()) throw ConfigError("dataset", "must not be empty");
  if (layers < 1) throw ConfigError("layers", "must be >= 1");
  if (hidden < 1) throw ConfigError("hidden", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch-size", "must be >= 1");
  if (fanout.empty() || (fanout.size() != 1 && fanout.size() != layers)) {
    throw ConfigError("fanout", "give one value or one per layer");
  }
  for (const int f : fanout) {
    if (f < 1 && f != kAllNeighbors) throw ConfigError("fanout", "values must be >= 1 or -1");
  }
  if (workers < 0) throw ConfigError("workers", "must be >= 0");
  if (queue_depth < 1) throw ConfigError("queue-depth", "must be >= 1");
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (!(launch_overhead_us >= 0) || !std::isfinite(launch_overhead_us)) {
    throw ConfigError("launch-overhead-us", "must be a finite value >= 0");
  }
  if (num_classes < 1) throw ConfigError("classes", "must be >= 1");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("lr", "must be finite and >= 0");
}

std::vector<int> RunConfig::layer_fanout() const {
  return fanout.size() == 1 ? std::vector<int>(layers, fanout[0]) : fanout;
}

Dataset load_dataset(std::string_view spec) {
  constexpr std::string_view kPrefix = "synth:";
  if (spec.starts_with(kPrefix)) {
    std::string_view rest = spec.substr(kPrefix.size());
    std::uint32_t downscale = 1;
    if (const auto slash = rest.find('/'); slash != std::string_view::npos) {
      const auto num = rest.substr(slash + 1);
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), downscale);
      if (ec != std::errc() || ptr != num.data() + num.size() || downscale < 1) {
        throw ConfigError("dataset", "bad downscale factor in '" + std::string(spec) + "'");
      }
      rest = rest.substr(0, slash);
    }
    const auto preset = find_preset(rest, downscale);
    if (!preset) throw ConfigError("dataset", "unknown preset '" + std::string(rest) + "' (aifb, bgs, mutag, am)");
    return {preset->name, generate_synthetic(preset->spec), preset->target_type, preset->labeled};
  }
  const std::filesystem::path path(spec);
  if (!std::filesystem::exists(path)) throw ConfigError("dataset", "no such file '" + std::string(spec) + "'");
  Dataset d;
  d.name = path.filename().string();
  d.graph = load_graph(path);
  d.target_type = 0;
  d.labeled = d.graph.vertex_types.at(0).count;
  return d;
}

namespace {

template <typename T>
std::vector<EpochReport> train(const RunConfig& config, const Dataset& d) {
  const auto& g = d.graph;
  FeatureStore<T> features = random_features<T>(g, mix_seed(config.seed, 1), Layout::IndexMajor);
  LabelSet labels = make_labels(features, d.target_type, config.num_classes, mix_seed(config.seed, 2));
  auto targets = labeled_targets(g.vertex_types[d.target_type].count, d.labeled, mix_seed(config.seed, 3));

  TrainerConfig tc;
  tc.model = config.model;
  tc.layers = config.layers;
  tc.hidden = config.hidden;
  tc.num_classes = config.num_classes;
  tc.batch_size = config.batch_size;
  tc.fanout = config.layer_fanout();
  tc.plan = ExecutionPlan::for_mode(config.mode);
  tc.workers = config.workers;
  tc.pipeline.queue_depth = config.queue_depth;
  tc.launch_overhead = Nanos(static_cast<std::int64_t>(std::llround(config.launch_overhead_us * 1000.0)));
  tc.learning_rate = config.learning_rate;
  tc.seed = config.seed;
  Trainer<T> trainer(g, std::move(features), std::move(labels), std::move(targets), tc);

  std::vector<EpochReport> epochs;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    try {
      epochs.push_back(trainer.run_epoch(e));
    } catch (const NumericError& err) {
      throw RunError("epoch " + std::to_string(e) + " (numeric)", err.what());
    } catch (const PipelineStall& err) {
      throw RunError("epoch " + std::to_string(e) + " (pipeline)", err.what());
    } catch (const Error& err) {
      throw RunError("epoch " + std::to_string(e), err.what());
    }
  }
  return epochs;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double ms(Nanos d) { return static_cast<double>(d.count()) / 1e6; }

}  // namespace

RunResult run(const RunConfig& config) {
  config.check();
  Dataset d;
  try {
    d = load_dataset(config.dataset);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    throw RunError("dataset", err.what());
  }
  RunResult r;
  r.config = config;
  r.dataset = d.name;
  r.vertices = d.graph.num_vertices();
  r.edges = d.graph.num_edges();
  r.types = d.graph.num_types();
  r.relations = d.graph.num_relations();
  r.epochs = config.fp64 ? train<double>(config, d) : train<float>(config, d);
  return r;
}

const std::vector<std::string>& timing_columns() {
  static const std::vector<std::string> cols = {"wall_ms", "host_ms", "device_ms", "transfer_ms", "host_device_ratio"};
  return cols;
}

std::string format_csv(const RunResult& result) {
  std::ostringstream out;
  out << "dataset,model,mode,precision,seed,epoch,batches,seeds,edges,loss,kernels";
  for (std::size_t s = 0; s < kStageCount; ++s) out << ",kernels_" << stage_name(static_cast<Stage>(s));
  for (const auto& c : timing_columns()) out << ',' << c;
  out << '\n';
  const auto& cfg = result.config;
  for (const auto& e : result.epochs) {
    std::size_t seeds = 0;
    std::size_t edges = 0;
    for (const auto& b : e.batches) {
      seeds += b.seeds;
      edges += b.edges;
    }
    out << result.dataset << ',' << model_name(cfg.model) << ',' << mode_name(cfg.mode) << ','
        << (cfg.fp64 ? "fp64" : "fp32") << ',' << cfg.seed << ',' << e.epoch << ',' << e.batches.size() << ','
        << seeds << ',' << edges << ',' << format_double(e.loss) << ',' << e.totals.kernels;
    for (std::size_t s = 0; s < kStageCount; ++s) out << ',' << e.totals.count[s];
    out << ',' << ms(e.wall) << ',' << ms(e.host) << ',' << ms(e.device) << ',' << ms(e.transfer) << ','
        << e.host_device_ratio() << '\n';
  }
  return out.str();
}

nlohmann::json summary_json(const RunResult& result) {
  const auto& cfg = result.config;
  nlohmann::json j;
  j["config"] = {{"dataset", cfg.dataset},
                 {"model", model_name(cfg.model)},
                 {"layers", cfg.layers},
                 {"hidden", cfg.hidden},
                 {"batch_size", cfg.batch_size},
                 {"fanout", cfg.layer_fanout()},
                 {"mode", mode_name(cfg.mode)},
                 {"workers", cfg.workers},
                 {"queue_depth", cfg.queue_depth},
                 {"epochs", cfg.epochs},
                 {"seed", cfg.seed},
                 {"launch_overhead_us", cfg.launch_overhead_us},
                 {"fp64", cfg.fp64},
                 {"num_classes", cfg.num_classes},
                 {"learning_rate", cfg.learning_rate}};
  j["dataset"] = {{"name", result.dataset},
                  {"vertices", result.vertices},
                  {"edges", result.edges},
                  {"types", result.types},
                  {"relations", result.relations}};
  auto& epochs = j["epochs"] = nlohmann::json::array();
  std::int64_t wall = 0;
  for (const auto& e : result.epochs) {
    nlohmann::json stages;
    for (std::size_t s = 0; s < kStageCount; ++s) stages[stage_name(static_cast<Stage>(s))] = e.totals.count[s];
    std::vector<double> losses;
    for (const auto& b : e.batches) losses.push_back(b.loss);
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"batch_losses", losses},
                      {"batches", e.batches.size()},
                      {"kernels", e.totals.kernels},
                      {"kernels_by_stage", stages},
                      {"wall_ns", e.wall.count()},
                      {"host_ns", e.host.count()},
                      {"sample_ns", e.sample.count()},
                      {"collect_ns", e.collect.count()},
                      {"select_ns", e.select.count()},
                      {"device_ns", e.device.count()},
                      {"transfer_ns", e.transfer.count()},
                      {"overhead_ns", e.totals.overhead.count()},
                      {"host_device_ratio", e.host_device_ratio()}});
    wall += e.wall.count();
  }
  const TraceReport tr = trace_report(result.epochs);
  j["totals"] = {{"kernels", tr.totals.kernels},
                 {"wall_ns", wall},
                 {"host_ns", tr.host.count()},
                 {"device_ns", tr.device.count()},
                 {"host_device_ratio", tr.host_device_ratio}};
  return j;
}

void write_outputs(const RunResult& result) {
  const auto& cfg = result.config;
  if (!cfg.out.empty()) {
    const std::filesystem::path csv_path(cfg.out);
    std::ofstream csv(csv_path);
    if (!csv) throw RunError("output", "cannot write " + cfg.out);
    csv << format_csv(result);
    auto json_path = csv_path;
    json_path.replace_extension(".json");
    if (json_path == csv_path) json_path += ".json";
    std::ofstream js(json_path);
    if (!js) throw RunError("output", "cannot write " + json_path.string());
    js << summary_json(result).dump(2) << '\n';
  }
  if (!cfg.trace_out.empty()) {
    std::ofstream tr(cfg.trace_out);
    if (!tr) throw RunError("output", "cannot write " + cfg.trace_out);
    for (const auto& e : result.epochs) export_trace(tr, e.trace->records(), e.epoch);
  }
}

Comparison compare(const nlohmann::json& a, const nlohmann::json& b, double loss_tolerance) {
  try {
    for (const char* key : {"dataset", "model", "layers", "hidden", "batch_size", "fanout", "epochs", "seed"}) {
      if (a.at("config").at(key) != b.at("config").at(key)) {
        throw ConfigError(key, "reports differ (" + a.at("config").at(key).dump() + " vs " + b.at("config").at(key).dump() + ")");
      }
    }
    const auto& ea = a.at("epochs");
    const auto& eb = b.at("epochs");
    if (ea.size() != eb.size()) throw ConfigError("epochs", "reports have different epoch counts");
    Comparison c;
    const double wall_a = a.at("totals").at("wall_ns").get<double>();
    const double wall_b = b.at("totals").at("wall_ns").get<double>();
    c.speedup = wall_b > 0 ? wall_a / wall_b : 0.0;
    c.reduction_ratio = reduction_ratio(a.at("totals").at("kernels").get<std::size_t>(),
                                        b.at("totals").at("kernels").get<std::size_t>());
    c.host_device_a = a.at("totals").at("host_device_ratio").get<double>();
    c.host_device_b = b.at("totals").at("host_device_ratio").get<double>();
    for (std::size_t i = 0; i < ea.size(); ++i) {
      const double d = std::abs(ea[i].at("loss").get<double>() - eb[i].at("loss").get<double>());
      if (!(d <= c.loss_divergence)) c.loss_divergence = d;
    }
    c.semantic_mismatch = !(c.loss_divergence <= loss_tolerance);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("report", std::string("malformed summary: ") + e.what());
  }
}

std::string format_comparison(const Comparison& c) {
  std::ostringstream out;
  out << "metric,value\n"
      << "speedup," << c.speedup << '\n'
      << "kernel_reduction_ratio," << c.reduction_ratio << '\n'
      << "host_device_ratio_a," << c.host_device_a << '\n'
      << "host_device_ratio_b," << c.host_device_b << '\n'
      << "loss_divergence," << c.loss_divergence << '\n'
      << "semantic_mismatch," << (c.semantic_mismatch ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace hetflow
