// SPDX-License-Identifier: Apache-2.0
#include "fedapta/commands.hpp"

#include "fedapta/config.hpp"
#include "fedapta/error.hpp"
#include "fedapta/report.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

namespace fs = std::filesystem;

namespace fedapta {

FederationConfig load_config(const CommandOptions& opts) {
  if (opts.config.empty()) throw ConfigError("", 0, "--config is required");
  FederationConfig cfg = parse_config(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  return cfg;
}

namespace {

// Files produced by one command. Unless committed, everything written is
// removed again, together with the output directory if this command created it.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw ConfigError("", 0, "--out is required");
    std::error_code ec;
    if (!fs::exists(dir_, ec)) {
      if (!fs::create_directories(dir_, ec) || ec)
        throw ConfigError("", 0, "cannot create output directory " + dir_.string());
      created_dir_ = true;
    } else if (!fs::is_directory(dir_, ec)) {
      throw ConfigError("", 0, "output path " + dir_.string() + " is not a directory");
    }
    const fs::path probe = dir_ / ".fedapta-write-test";
    {
      std::ofstream out(probe);
      if (!out) {
        cleanup_dir();
        throw ConfigError("", 0, "output directory " + dir_.string() + " is not writable");
      }
    }
    fs::remove(probe, ec);
  }
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    cleanup_dir();
  }

  fs::path add(const std::string& name) {
    files_.push_back(dir_ / name);
    return files_.back();
  }
  std::ofstream open(const std::string& name, std::ios::openmode mode = std::ios::out) {
    const fs::path p = add(name);
    std::ofstream out(p, mode);
    if (!out) fail(ErrorKind::Input, "cannot open " + p.string() + " for writing");
    return out;
  }
  const std::vector<fs::path>& files() const { return files_; }
  void commit() { committed_ = true; }

 private:
  void cleanup_dir() {
    std::error_code ec;
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

  fs::path dir_;
  std::vector<fs::path> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

void check_stream(const std::ofstream& out, const std::string& what) {
  if (!out) fail(ErrorKind::Input, "failed writing " + what);
}

void check_ratios(const std::vector<double>& ratios) {
  if (ratios.empty()) throw ConfigError("ratios", 0, "needs at least one value");
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("ratios", 0, "values must lie in [0, 1]");
}

template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Config ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int cmd_validate_config(const CommandOptions& opts, std::ostream& out, std::ostream& log) {
  return guarded(log, [&] {
    const auto cfg = load_config(opts);
    out << emit_config(cfg);
    return kExitOk;
  });
}

int cmd_run(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const auto cfg = load_config(opts);
    OutputSet outputs(opts.out);
    const std::string run_id = "run-" + std::to_string(cfg.seed);

    auto rounds = outputs.open("rounds.csv", std::ios::out | std::ios::binary);
    auto clusters = outputs.open("clusters.csv", std::ios::out | std::ios::binary);
    write_rounds_header(rounds);
    write_clusters_header(clusters);

    Federation fed(cfg);
    for (int r = 0; r < cfg.rounds; ++r) {
      const RoundReport report = fed.run_round();
      write_rounds_rows(rounds, rows_from_report(report, run_id));
      write_clusters_rows(clusters, report);
      log << "round " << report.round << ": clusters=" << report.assignment.num_clusters << " ari="
          << format_shortest(report.ari) << " mean_accuracy=" << format_shortest(report.mean_task_accuracy()) << '\n';
    }
    rounds.close();
    clusters.close();
    check_stream(rounds, "rounds.csv");
    check_stream(clusters, "clusters.csv");

    nlohmann::json models = nlohmann::json::array();
    for (const auto& [label, model] : fed.task_models()) {
      const auto path = outputs.add("model_task" + std::to_string(label) + ".fapt");
      write_model(path, *model);
      models.push_back(path.string());
    }

    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["seed"] = cfg.seed;
    manifest["config"] = emit_config(cfg);
    manifest["outputs"] = {{"rounds", (opts.out / "rounds.csv").string()},
                           {"clusters", (opts.out / "clusters.csv").string()},
                           {"models", models}};
    auto out = outputs.open("manifest.json");
    out << manifest.dump(2) << '\n';
    out.close();
    check_stream(out, "manifest.json");
    outputs.commit();
    return kExitOk;
  });
}

std::vector<SweepRow> sweep_prune(const FederationConfig& base, const std::vector<double>& ratios) {
  check_ratios(ratios);
  std::vector<SweepRow> rows;
  for (double ratio : ratios) {
    FederationConfig cfg = base;
    cfg.ratio_policy = RatioPolicy::Cycle;
    cfg.ratio_cycle = {ratio};
    cfg.explicit_ratios.clear();
    const auto result = run_federation(cfg);
    const auto& last = result.reports.back();
    double params = 0.0;
    for (const auto& d : last.devices) params += static_cast<double>(d.candidate_params);
    rows.push_back({ratio, last.mean_task_accuracy(), params / static_cast<double>(last.devices.size())});
  }
  return rows;
}

int cmd_sweep_prune(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    check_ratios(opts.ratios);
    const auto cfg = load_config(opts);
    OutputSet outputs(opts.out);
    const auto rows = sweep_prune(cfg, opts.ratios);
    auto out = outputs.open("sweep.csv", std::ios::out | std::ios::binary);
    out << "ratio,accuracy,candidate_params\n";
    for (const auto& r : rows) {
      out << format_double(r.ratio) << ',' << format_double(r.accuracy) << ',' << format_double(r.candidate_params)
          << '\n';
      log << "ratio " << r.ratio << ": accuracy=" << r.accuracy << " candidate_params=" << r.candidate_params << '\n';
    }
    out.close();
    check_stream(out, "sweep.csv");
    outputs.commit();
    return kExitOk;
  });
}

std::vector<Metric> parse_metric_list(const std::vector<std::string>& names) {
  if (names.empty()) return {Metric::L1, Metric::L2, Metric::Inner, Metric::Cosine};
  std::vector<Metric> out;
  for (const auto& n : names) {
    try {
      const Metric m = parse_metric(n);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    } catch (const Error& e) {
      throw ConfigError("metrics", 0, e.what());
    }
  }
  return out;
}

MetricStudy metric_study(const FederationConfig& base, const std::vector<Metric>& metrics) {
  if (metrics.empty()) throw ConfigError("metrics", 0, "needs at least one metric");
  if (base.devices_per_task < 2) throw ConfigError("devices_per_task", 0, "metric study needs at least 2 per task");
  if (base.num_tasks < 2) throw ConfigError("tasks", 0, "metric study needs at least 2 tasks");
  FederationConfig cfg = base;
  cfg.rounds = 1;
  Federation fed(cfg);
  fed.run_round();
  const auto& deltas = fed.last_deltas();
  const auto& d0 = deltas.at(0).values;

  MetricStudy study;
  for (Metric m : metrics) {
    auto score = [&](const Vector& v) {
      const double raw = similarity(d0, v, m);
      return is_distance_metric(m) ? 1.0 / (1.0 + raw) : raw;
    };
    const double self = score(d0);
    double within = -std::numeric_limits<double>::infinity();
    double cross = std::numeric_limits<double>::infinity();
    for (const auto& delta : deltas) {
      const double value = self == 0.0 ? 0.0 : score(delta.values) / self;
      study.values.push_back({m, delta.device, value});
      if (delta.device == deltas.front().device) continue;
      // Distance metrics are compared on raw distances, similarities on 1 - s.
      const double apart = is_distance_metric(m) ? similarity(d0, delta.values, m) : 1.0 - value;
      if (cfg.ground_truth_task(delta.device) == cfg.ground_truth_task(deltas.front().device))
        within = std::max(within, apart);
      else
        cross = std::min(cross, apart);
    }
    double separation = 0.0;
    if (within > 0.0) separation = cross / within;
    else if (cross > within) separation = std::numeric_limits<double>::infinity();
    study.separation.emplace_back(m, separation);
  }
  return study;
}

int cmd_metric_study(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const auto metrics = parse_metric_list(opts.metrics);
    const auto cfg = load_config(opts);
    OutputSet outputs(opts.out);
    const auto study = metric_study(cfg, metrics);
    auto values = outputs.open("metrics_study.csv", std::ios::out | std::ios::binary);
    values << "metric,device,value\n";
    for (const auto& v : study.values)
      values << metric_name(v.metric) << ',' << v.device << ',' << format_double(v.value) << '\n';
    values.close();
    check_stream(values, "metrics_study.csv");
    auto sep = outputs.open("metrics_separation.csv", std::ios::out | std::ios::binary);
    sep << "metric,separation\n";
    for (const auto& [m, s] : study.separation) {
      sep << metric_name(m) << ',' << format_double(s) << '\n';
      log << metric_name(m) << ": separation=" << format_shortest(s) << '\n';
    }
    sep.close();
    check_stream(sep, "metrics_separation.csv");
    outputs.commit();
    return kExitOk;
  });
}

}  // namespace fedapta
