// SPDX-License-Identifier: Apache-2.0
// Acceptance checks A1-A9. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.
#include "helpers.hpp"
#include "oracles.hpp"

#include "fedapta/commands.hpp"
#include "fedapta/config.hpp"
#include "fedapta/hdbscan.hpp"
#include "fedapta/pruning.hpp"
#include "fedapta/recovery.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>

using namespace fedapta;
using namespace fedapta::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

FederationConfig acceptance_config() { return parse_config(FEDAPTA_TEST_DATA_DIR "/acceptance.cfg"); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

Outcome a1_allocation() {
  std::mt19937_64 rng(20240601);
  int bad = 0;
  std::string first;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_allocation(rng);
    const auto problem = check_allocation(inst, allocate_ratios(inst.profiles, inst.target, inst.spread).ratios);
    if (!problem.empty() && bad++ == 0) first = "trial " + std::to_string(trial) + ": " + problem;
  }
  return {bad == 0, std::to_string(1000 - bad) + "/1000 instances feasible" + (first.empty() ? "" : "; " + first)};
}

Outcome a2_param_scaling() {
  const auto model = init_model(reference_specs(), 20240601);
  const auto profiles = layer_importance(model);
  double slack = 0.0;
  for (const auto& p : profiles) slack += static_cast<double>(p.params) / static_cast<double>(p.channels);
  const auto total = static_cast<double>(param_count(model, true));
  bool ok = true;
  std::ostringstream d;
  d << "total " << total << ", slack " << slack << ";";
  for (double rho : {0.2, 0.4, 0.6, 0.8}) {
    const auto kept = static_cast<double>(retained_candidate_params(model, build_mask(model, allocate_ratios(profiles, rho, 0.5))));
    const double err = std::abs(kept - (1.0 - rho) * total);
    ok &= err <= slack;
    d << " rho=" << rho << " kept " << kept << " (off " << err << ")";
  }
  return {ok, d.str()};
}

Outcome a3_recovery() {
  std::mt19937_64 rng(3);
  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto w = init_model(reference_specs(), rng());
    const auto g = init_model(reference_specs(), rng());
    auto mask = full_mask(w);
    for (std::size_t k = 0; k < w.specs.size(); ++k)
      if (w.specs[k].candidate)
        for (auto& b : mask.channels[k]) b = static_cast<std::uint8_t>(rng() & 1);
    const Upload up{0, apply_mask(w, mask), mask, 1, 0};
    const auto r = recover(up, g);
    const auto m = expand_mask(w, mask);
    bool same = true;
    for (std::size_t k = 0; k < w.layers.size(); ++k) {
      const Vector ew = w.layers[k].weight.flat().cwiseProduct(m.layers[k].weight.flat()) +
                        g.layers[k].weight.flat().cwiseProduct((1.0 - m.layers[k].weight.flat().array()).matrix());
      const Vector eb = w.layers[k].bias.flat().cwiseProduct(m.layers[k].bias.flat()) +
                        g.layers[k].bias.flat().cwiseProduct((1.0 - m.layers[k].bias.flat().array()).matrix());
      same &= r.layers[k].weight.flat() == ew && r.layers[k].bias.flat() == eb;
    }
    same &= bitwise_equal(recover(up, w), w);
    bad += !same;
  }
  return {bad == 0, std::to_string(100 - bad) + "/100 exact"};
}

Outcome a4_clustering() {
  auto cfg = acceptance_config();
  cfg.num_tasks = 5;
  cfg.devices_per_task = 4;
  cfg.rounds = 1;
  const double fixed = run_federation(cfg).reports[0].ari;
  double sum = 0.0;
  const std::uint64_t base = cfg.seed;
  for (std::uint64_t s = 0; s < 10; ++s) {
    cfg.seed = base + s;
    sum += run_federation(cfg).reports[0].ari;
  }
  const double mean = sum / 10.0;
  return {fixed == 1.0 && mean >= 0.9, "ARI at acceptance seed " + fmt(fixed) + ", mean over 10 seeds " + fmt(mean)};
}

Outcome a5_hdbscan() {
  std::mt19937_64 rng(55);
  int mst_ok = 0, block_ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 7;
    const auto d = random_distances(n, rng);
    double w = 0.0;
    for (const auto& e : prim_mst(d)) w += e.weight;
    mst_ok += std::abs(w - brute_force_mst_weight(d)) <= 1e-12 * std::max(1.0, w);
  }
  for (int trial = 0; trial < 50; ++trial) {
    HdbscanParams params;
    params.min_cluster_size = 2 + trial % 2;
    const int blocks = std::uniform_int_distribution<int>(2, 12 / params.min_cluster_size >= 4 ? 4 : 3)(rng);
    std::vector<int> of;
    int spare = 12 - blocks * params.min_cluster_size;
    for (int b = 0; b < blocks; ++b) {
      const int extra = std::uniform_int_distribution<int>(0, spare)(rng);
      spare -= extra;
      of.insert(of.end(), static_cast<std::size_t>(params.min_cluster_size + extra), b);
    }
    std::shuffle(of.begin(), of.end(), rng);
    const double within = std::uniform_real_distribution<double>(0.01, 0.2)(rng);
    const auto d = block_matrix(of, within, within * std::uniform_real_distribution<double>(1.5, 20.0)(rng), rng);
    block_ok += adjusted_rand_index(hdbscan(d, params).labels, of) == 1.0;
  }
  return {mst_ok == 50 && block_ok == 50,
          "MST " + std::to_string(mst_ok) + "/50, blocks " + std::to_string(block_ok) + "/50"};
}

Outcome a6_gradients() {
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    std::mt19937_64 rng(600 + trial);
    auto model = init_model(mlp_specs(6, std::vector<Index>{8, 5}, 4), 700 + trial);
    std::normal_distribution<double> g(0.0, 0.1);
    for (auto& l : model.layers)
      for (Index i = 0; i < l.bias.size(); ++i) l.bias.flat()(i) = g(rng);
    const RowMatrix x = random_batch(9, 6, rng);
    worst = std::max(worst, max_fd_error(model, x, random_labels(9, 4, rng)));
  }
  std::ostringstream d;
  d << "worst relative error " << worst << " over 10 models";
  return {worst <= 1e-4, d.str()};
}

Outcome a7_directional() {
  const auto cfg = acceptance_config();
  const auto fed = run_federation(cfg).reports.back();
  auto c = cfg;
  c.mode = Mode::NoCluster;
  const auto nc = run_federation(c).reports.back();
  const bool i = fed.task_accuracy[0] >= nc.task_accuracy[0] && fed.task_accuracy[1] >= nc.task_accuracy[1];

  c = cfg;
  c.ratio_cycle = {0.8};
  const double f8 = run_federation(c).reports.back().mean_task_accuracy();
  c.mode = Mode::OverlapOnly;
  const double o8 = run_federation(c).reports.back().mean_task_accuracy();
  const bool ii = f8 >= o8;

  const auto sweep = sweep_prune(cfg, {0.2, 0.4, 0.6, 0.8});
  const bool iii = sweep[3].accuracy >= 0.9 * sweep[0].accuracy;

  std::ostringstream d;
  d << "(i) " << (i ? "ok" : "FAIL") << " fedapta " << fmt(fed.task_accuracy[0]) << "/" << fmt(fed.task_accuracy[1])
    << " vs no_cluster " << fmt(nc.task_accuracy[0]) << "/" << fmt(nc.task_accuracy[1]) << "; (ii) " << (ii ? "ok" : "FAIL")
    << " fedapta " << fmt(f8) << " vs overlap_only " << fmt(o8) << " at 0.8; (iii) " << (iii ? "ok" : "FAIL")
    << " acc(0.8) " << fmt(sweep[3].accuracy) << " vs 0.9 x acc(0.2) " << fmt(0.9 * sweep[0].accuracy);
  return {i && ii && iii, d.str()};
}

Outcome a8_metrics() {
  const auto study = metric_study(acceptance_config(), parse_metric_list({}));
  double cosine = 0.0, best_other = -INFINITY;
  std::ostringstream d;
  for (const auto& [m, s] : study.separation) {
    d << metric_name(m) << " " << fmt(s) << " ";
    if (m == Metric::Cosine) cosine = s;
    else best_other = std::max(best_other, s);
  }
  return {cosine > best_other, d.str()};
}

Outcome a9_determinism() {
  const auto root = fs::temp_directory_path() / ("fedapta-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::string csv[2];
  int codes[2];
  for (int k = 0; k < 2; ++k) {
    const auto out = root / ("run" + std::to_string(k));
    const std::string cmd = std::string("\"") + FEDAPTA_CLI_PATH + "\" run --config \"" FEDAPTA_TEST_DATA_DIR
                            "/acceptance.cfg\" --out \"" + out.string() + "\" 2>/dev/null";
    codes[k] = std::system(cmd.c_str());
    std::ifstream in(out / "rounds.csv", std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    csv[k] = s.str();
  }
  fs::remove_all(root);
  const bool ok = codes[0] == 0 && codes[1] == 0 && !csv[0].empty() && csv[0] == csv[1];
  return {ok, "exit codes " + std::to_string(codes[0]) + "," + std::to_string(codes[1]) + "; rounds.csv " +
                  std::to_string(csv[0].size()) + " bytes, " + (csv[0] == csv[1] ? "identical" : "different")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks = {
      {"A1", a1_allocation}, {"A2", a2_param_scaling}, {"A3", a3_recovery},
      {"A4", a4_clustering}, {"A5", a5_hdbscan},       {"A6", a6_gradients},
      {"A7", a7_directional}, {"A8", a8_metrics},      {"A9", a9_determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s %s  %s  [%.1fs]\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
