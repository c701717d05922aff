// SPDX-License-Identifier: Apache-2.0
#include "fedapta/federation.hpp"

#include "fedapta/error.hpp"
#include "fedapta/seed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace fedapta {

std::string_view mode_name(Mode m) noexcept {
  switch (m) {
    case Mode::FedApta: return "fedapta";
    case Mode::FedAvgAll: return "fedavg_all";
    case Mode::NoCluster: return "no_cluster";
    case Mode::OverlapOnly: return "overlap_only";
  }
  return "?";
}

std::string_view policy_name(RatioPolicy p) noexcept { return p == RatioPolicy::Cycle ? "cycle" : "explicit"; }
std::string_view partition_name(PartitionKind p) noexcept { return p == PartitionKind::Lda ? "lda" : "iid"; }

std::vector<LayerSpec> FederationConfig::model_specs() const {
  std::vector<LayerSpec> specs;
  if (conv_channels.empty()) {
    specs = mlp_specs(task.dim, hidden, task.n_classes);
  } else {
    const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(task.dim))));
    if (side * side != task.dim) throw ConfigError("dim", 0, "conv models need a square input dimension");
    specs = cnn_specs(side, conv_channels, conv_kernel, hidden, task.n_classes);
  }
  freeze_input_layers(specs, freeze_fraction);
  return specs;
}

void FederationConfig::validate() const {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(key, 0, what);
  };
  require(rounds >= 1, "rounds", "must be at least 1");
  require(num_tasks >= 1, "tasks", "must be at least 1");
  require(devices_per_task >= 1, "devices_per_task", "must be at least 1");
  require(task.n_classes >= 2, "n_classes", "must be at least 2");
  require(task.dim >= 2, "dim", "must be at least 2");
  require(task.samples_per_class >= 1, "samples_per_class", "must be at least 1");
  require(task.separation >= 0.0, "separation", "must be non-negative");
  require(alpha > 0.0 && std::isfinite(alpha), "alpha", "must be positive");
  require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction", "must lie in (0, 1)");
  require(!ratio_cycle.empty(), "ratios", "needs at least one value");
  for (double r : ratio_cycle) require(r >= 0.0 && r <= 1.0, "ratios", "values must lie in [0, 1]");
  for (const auto& [d, r] : explicit_ratios) {
    require(d >= 0 && d < num_devices(), "explicit_ratios", "device " + std::to_string(d) + " does not exist");
    require(r >= 0.0 && r <= 1.0, "explicit_ratios", "values must lie in [0, 1]");
  }
  require(train.learning_rate > 0.0, "learning_rate", "must be positive");
  require(train.lr_decay > 0.0 && train.lr_decay <= 1.0, "lr_decay", "must lie in (0, 1]");
  require(train.weight_decay >= 0.0, "weight_decay", "must be non-negative");
  require(train.local_epochs >= 1, "local_epochs", "must be at least 1");
  require(train.batch_size >= 1, "batch_size", "must be at least 1");
  for (Index h : hidden) require(h >= 1, "hidden_layers", "widths must be positive");
  for (Index c : conv_channels) require(c >= 1, "conv_channels", "widths must be positive");
  require(conv_kernel >= 1, "conv_kernel", "must be at least 1");
  require(freeze_fraction >= 0.0 && freeze_fraction < 1.0, "freeze_fraction", "must lie in [0, 1)");
  require(spread >= 0.0, "spread", "must be non-negative");
  require(hdbscan.min_cluster_size >= 2, "min_cluster_size", "must be at least 2");
  require(hdbscan.min_samples >= 1, "min_samples", "must be at least 1");
  require(last_k_dense >= 1, "last_k_dense", "must be at least 1");

  std::vector<LayerSpec> specs;
  try {
    specs = model_specs();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("hidden_layers", 0, e.what());
  }
  const auto candidates = std::count_if(specs.begin(), specs.end(), [](const LayerSpec& s) { return s.candidate; });
  require(candidates >= 1, "freeze_fraction", "leaves no prunable layer");
  const auto dense = std::count_if(specs.begin(), specs.end(), [](const LayerSpec& s) { return s.kind == LayerKind::Dense; });
  require(last_k_dense <= dense, "last_k_dense", "exceeds the number of dense layers");
  if (ratio_policy == RatioPolicy::Explicit) {
    std::vector<Index> ids(static_cast<std::size_t>(num_devices()));
    std::iota(ids.begin(), ids.end(), Index{0});
    assign_ratios(*this, ids);
  }
}

std::map<Index, double> assign_ratios(const FederationConfig& cfg, std::span<const Index> devices) {
  std::map<Index, double> out;
  for (Index d : devices) {
    if (cfg.ratio_policy == RatioPolicy::Explicit) {
      const auto it = cfg.explicit_ratios.find(d);
      if (it == cfg.explicit_ratios.end())
        throw ConfigError("explicit_ratios", 0, "no pruning ratio given for device " + std::to_string(d));
      out[d] = it->second;
    } else {
      const auto slot = static_cast<std::size_t>(d % cfg.devices_per_task) % cfg.ratio_cycle.size();
      out[d] = cfg.ratio_cycle[slot];
    }
  }
  return out;
}

double RoundReport::mean_task_accuracy() const {
  if (task_accuracy.empty()) return 0.0;
  return std::accumulate(task_accuracy.begin(), task_accuracy.end(), 0.0) / static_cast<double>(task_accuracy.size());
}

Federation::Federation(FederationConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::vector<Index> ids(static_cast<std::size_t>(cfg_.num_devices()));
  std::iota(ids.begin(), ids.end(), Index{0});
  const auto ratios = assign_ratios(cfg_, ids);
  const std::uint64_t data_seed = derive_seed(cfg_.seed, {0x64617461});

  for (int t = 0; t < cfg_.num_tasks; ++t) {
    const Dataset full = gen_task(t, cfg_.task.n_classes, cfg_.task.dim, cfg_.task.samples_per_class,
                                  cfg_.task.separation, data_seed);
    auto split = split_holdout(full, cfg_.test_fraction, data_seed);
    const auto part_seed = derive_seed(cfg_.seed, {0x70617274, static_cast<std::uint64_t>(t)});
    if (split.train.size() < cfg_.devices_per_task)
      throw ConfigError("samples_per_class", 0, "too few training samples to give every device one");
    const PartitionPlan plan = cfg_.partition == PartitionKind::Lda
                                   ? lda_partition(split.train, cfg_.devices_per_task, cfg_.alpha, part_seed)
                                   : iid_partition(split.train, cfg_.devices_per_task, part_seed);
    for (int j = 0; j < cfg_.devices_per_task; ++j) {
      DeviceState dev;
      dev.id = static_cast<Index>(devices_.size());
      dev.ground_truth_task = t;
      dev.data = subset(split.train, plan.assignments[static_cast<std::size_t>(j)]);
      dev.ratio = ratios.at(dev.id);
      devices_.push_back(std::move(dev));
    }
    tests_.push_back(std::move(split.test));
  }
  const auto specs = cfg_.model_specs();
  models_[0] = std::make_shared<const ModelWeights>(init_model(specs, derive_seed(cfg_.seed, {0x696e6974})));
}

const ModelWeights& Federation::received_model(Index device) const {
  return *models_.at(devices_.at(static_cast<std::size_t>(device)).received_id);
}

namespace {

[[noreturn]] void rethrow_with_context(const Error& e, int round, Index device) {
  std::string where = "round " + std::to_string(round);
  if (device >= 0) where += ", device " + std::to_string(device);
  throw Error(e.kind(), where + ": " + e.what());
}

}  // namespace

RoundReport Federation::run_round() {
  const int r = ++round_;
  const bool prune = cfg_.mode != Mode::FedAvgAll;
  const bool cluster = cfg_.mode == Mode::FedApta || cfg_.mode == Mode::OverlapOnly;
  const std::size_t n = devices_.size();

  RoundReport report;
  report.round = r;
  report.devices.resize(n);
  std::vector<Upload> uploads(n);

  // Device side: prune, train with the mask held fixed, upload.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& dev = devices_[i];
    try {
      const ModelWeights& received = *models_.at(dev.received_id);
      PruneMask mask = full_mask(received);
      if (prune) {
        const auto plan = allocate_ratios(layer_importance(received), dev.ratio, cfg_.spread);
        mask = build_mask(received, plan);
      }
      const ModelWeights start = apply_mask(received, mask);
      TrainConfig tc = cfg_.train;
      tc.seed = derive_seed(cfg_.seed, {0x747261696e, static_cast<std::uint64_t>(dev.id), static_cast<std::uint64_t>(r)});
      tc.epoch_offset = static_cast<std::int64_t>(r - 1) * tc.local_epochs;
      StepHook hook;
      if (!mask.all_ones()) hook = [&mask](ModelWeights& m) { apply_mask_in_place(m, mask); };
      ModelWeights trained = train_local(start, dev.data, tc, hook);

      auto& m = report.devices[i];
      m.device = dev.id;
      m.ground_truth_task = dev.ground_truth_task;
      m.reference_id = dev.received_id;
      m.achieved_ratio = mask.achieved_ratio;
      m.candidate_params = retained_candidate_params(received, mask);
      const auto local = evaluate(trained, dev.data);
      m.loss = local.loss;
      m.train_accuracy = local.accuracy;
      for (const auto& bits : mask.channels) m.mask_hex.push_back(mask_to_hex(bits));

      uploads[i] = Upload{dev.id, std::move(trained), std::move(mask), dev.data.size(), dev.received_id};
    } catch (const Error& e) {
      rethrow_with_context(e, r, dev.id);
    }
  }

  // Server side: recover, cluster, aggregate per cluster, distribute.
  std::vector<ModelWeights> recovered(n);
  last_deltas_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    try {
      const ModelWeights& reference = *models_.at(uploads[i].reference_id);
      recovered[i] = recover(uploads[i], reference);
      last_deltas_.push_back(compute_delta(uploads[i].device, recovered[i], reference, cfg_.last_k_dense));
    } catch (const Error& e) {
      rethrow_with_context(e, r, uploads[i].device);
    }
  }

  try {
    if (cluster && n >= 2) {
      report.assignment = hdbscan(distance_matrix(last_deltas_), cfg_.hdbscan);
    } else {
      report.assignment.labels.assign(n, 0);
      report.assignment.from_noise.assign(n, 0);
      report.assignment.num_clusters = 1;
    }

    const auto groups = report.assignment.members();
    std::vector<std::shared_ptr<const ModelWeights>> cluster_models;
    task_models_.clear();
    for (std::size_t c = 0; c < groups.size(); ++c) {
      ModelWeights merged;
      if (cfg_.mode == Mode::OverlapOnly) {
        std::vector<Upload> members;
        std::vector<const ModelWeights*> refs;
        for (Index i : groups[c]) {
          members.push_back(uploads[static_cast<std::size_t>(i)]);
          refs.push_back(models_.at(uploads[static_cast<std::size_t>(i)].reference_id).get());
        }
        merged = aggregate_overlap(members, refs);
      } else {
        std::vector<Contribution> members;
        for (Index i : groups[c])
          members.push_back({i, &recovered[static_cast<std::size_t>(i)], uploads[static_cast<std::size_t>(i)].data_size});
        merged = aggregate(std::move(members));
      }
      const std::int64_t id = next_model_id_++;
      auto model = std::make_shared<const ModelWeights>(std::move(merged));
      models_[id] = model;
      cluster_models.push_back(model);
      task_models_.emplace_back(static_cast<int>(c), model);

      ClusterMetrics cm;
      cm.label = static_cast<int>(c);
      cm.members = groups[c];
      cm.model_id = id;
      std::vector<int> votes(static_cast<std::size_t>(cfg_.num_tasks), 0);
      for (Index i : groups[c]) ++votes[static_cast<std::size_t>(devices_[static_cast<std::size_t>(i)].ground_truth_task)];
      cm.matched_task = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
      cm.test_accuracy = evaluate(*model, tests_[static_cast<std::size_t>(cm.matched_task)]).accuracy;
      report.clusters.push_back(std::move(cm));
    }

    for (std::size_t i = 0; i < n; ++i) {
      const int label = report.assignment.labels[i];
      devices_[i].task_label = label;
      devices_[i].received_id = report.clusters[static_cast<std::size_t>(label)].model_id;
      report.devices[i].task_label = label;
    }
    // Drop models no device will start from next round.
    std::set<std::int64_t> live;
    for (const auto& d : devices_) live.insert(d.received_id);
    for (auto it = models_.begin(); it != models_.end();) {
      if (it->first != 0 && !live.count(it->first)) it = models_.erase(it);
      else ++it;
    }

    // Per ground-truth task: mean test accuracy of the models its devices now hold.
    report.task_accuracy.assign(static_cast<std::size_t>(cfg_.num_tasks), 0.0);
    std::map<std::pair<int, std::int64_t>, double> cache;
    std::vector<int> counts(static_cast<std::size_t>(cfg_.num_tasks), 0);
    for (const auto& d : devices_) {
      const auto key = std::make_pair(d.ground_truth_task, d.received_id);
      auto it = cache.find(key);
      if (it == cache.end())
        it = cache.emplace(key, evaluate(*models_.at(d.received_id), tests_[static_cast<std::size_t>(d.ground_truth_task)]).accuracy).first;
      report.task_accuracy[static_cast<std::size_t>(d.ground_truth_task)] += it->second;
      ++counts[static_cast<std::size_t>(d.ground_truth_task)];
    }
    for (std::size_t t = 0; t < counts.size(); ++t) report.task_accuracy[t] /= counts[t];

    std::vector<int> truth;
    for (const auto& d : devices_) truth.push_back(d.ground_truth_task);
    report.ari = adjusted_rand_index(report.assignment.labels, truth);
  } catch (const Error& e) {
    rethrow_with_context(e, r, -1);
  }
  return report;
}

FederationResult run_federation(const FederationConfig& cfg) {
  Federation fed(cfg);
  FederationResult result;
  for (int r = 0; r < cfg.rounds; ++r) result.reports.push_back(fed.run_round());
  result.task_models = fed.task_models();
  return result;
}

}  // namespace fedapta
