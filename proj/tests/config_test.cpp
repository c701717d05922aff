// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "helpers.hpp"

#include "fedapta/config.hpp"

#include <random>
#include <string>

using namespace fedapta;
using namespace fedapta::testing;

namespace {

ConfigError parse_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a config error for: " << text);
  return ConfigError("", 0, "");
}

// Random valid configuration touching every field.
FederationConfig random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  FederationConfig c;
  c.train.learning_rate = 0.01 + unit(rng);
  c.train.lr_decay = 0.5 + 0.5 * unit(rng);
  c.train.weight_decay = unit(rng) * 1e-2;
  c.train.local_epochs = pick(1, 9);
  c.train.batch_size = pick(1, 128);
  c.hidden.clear();
  for (int i = pick(1, 3); i > 0; --i) c.hidden.push_back(pick(1, 64));
  c.freeze_fraction = unit(rng) < 0.5 ? 0.0 : 0.3 * unit(rng);
  c.rounds = pick(1, 200);
  c.num_tasks = pick(1, 6);
  c.devices_per_task = pick(1, 12);
  c.task.n_classes = pick(2, 10);
  c.task.dim = pick(2, 40);
  c.task.samples_per_class = pick(1, 300);
  c.task.separation = 10 * unit(rng);
  c.partition = unit(rng) < 0.5 ? PartitionKind::Lda : PartitionKind::Iid;
  c.alpha = 0.01 + 5 * unit(rng);
  c.test_fraction = 0.05 + 0.5 * unit(rng);
  c.ratio_cycle.clear();
  for (int i = pick(1, 5); i > 0; --i) c.ratio_cycle.push_back(unit(rng));
  if (unit(rng) < 0.3) {
    c.ratio_policy = RatioPolicy::Explicit;
    for (Index d = 0; d < c.num_devices(); ++d) c.explicit_ratios[d] = unit(rng);
  }
  const Mode modes[] = {Mode::FedApta, Mode::FedAvgAll, Mode::NoCluster, Mode::OverlapOnly};
  c.mode = modes[pick(0, 3)];
  c.seed = rng();
  c.spread = unit(rng);
  c.hdbscan.min_cluster_size = pick(2, 5);
  c.hdbscan.min_samples = pick(1, 5);
  c.last_k_dense = pick(1, static_cast<int>(c.hidden.size()) + 1);
  return c;
}

}  // namespace

TEST_CASE("empty text gives the defaults") {
  const auto c = parse_config_text("");
  CHECK(c == FederationConfig{});
  CHECK(c.train.learning_rate == 0.1);
  CHECK(c.train.lr_decay == 0.998);
  CHECK(c.train.weight_decay == 0.001);
  CHECK(c.train.local_epochs == 5);
  CHECK(c.rounds == 100);
  CHECK(c.ratio_cycle == std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8});
  CHECK(c.hdbscan.min_cluster_size == 2);
  CHECK(c.hdbscan.min_samples == 2);
  CHECK(c.last_k_dense == 1);
  CHECK(parse_config_text("# only a comment\n\n   \n") == c);
}

TEST_CASE("values are read into their fields") {
  const auto c = parse_config_text(
      "[training]\nlearning_rate = 0.05\nhidden_layers = 10, 20\n"
      "[federation]\nmode = no_cluster\nexplicit_ratios = 0:0.3, 1:0.5\nratio_policy = explicit\n"
      "tasks = 1\ndevices_per_task = 2\nseed = 18446744073709551615\npartition = iid\n"
      "[pruning]\nspread = 0.25\n[clustering]\nmin_samples = 3  # trailing comment\n");
  CHECK(c.train.learning_rate == 0.05);
  CHECK(c.hidden == std::vector<Index>{10, 20});
  CHECK(c.mode == Mode::NoCluster);
  CHECK(c.explicit_ratios.at(1) == 0.5);
  CHECK(c.seed == 18446744073709551615ULL);
  CHECK(c.partition == PartitionKind::Iid);
  CHECK(c.spread == 0.25);
  CHECK(c.hdbscan.min_samples == 3);
}

TEST_CASE("errors name the key and line") {
  auto e = parse_error("[federation]\nalpha = -1\n");
  CHECK(e.key() == "alpha");
  CHECK(e.line() == 2);

  e = parse_error("[federation]\nmode = fedapta\nmode = fedavg_all\n");
  CHECK(e.key() == "mode");
  CHECK(e.line() == 3);
  CHECK(std::string(e.what()).find("line 2") != std::string::npos);

  e = parse_error("[training]\nmomentum = 0.9\n");
  CHECK(e.key() == "momentum");
  CHECK(e.line() == 2);

  e = parse_error("[federation]\nrounds = ten\n");
  CHECK(e.key() == "rounds");

  e = parse_error("[federation]\nrounds = 3.5\n");
  CHECK(e.key() == "rounds");

  e = parse_error("[federation]\nmode = fedprox\n");
  CHECK(e.key() == "mode");

  e = parse_error("rounds = 3\n");
  CHECK(e.line() == 1);

  e = parse_error("[network]\n");
  CHECK(e.line() == 1);

  e = parse_error("[federation]\nrounds\n");
  CHECK(e.line() == 2);

  e = parse_error("\n\n[clustering]\nlast_k_dense = 5\n");
  CHECK(e.key() == "last_k_dense");
  CHECK(e.line() == 4);
}

TEST_CASE("emit then parse reproduces the config") {
  CHECK(parse_config_text(emit_config(FederationConfig{})) == FederationConfig{});
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_config(rng);
    REQUIRE_NOTHROW(c.validate());
    const auto text = emit_config(c);
    const auto back = parse_config_text(text);
    CHECK(back == c);
    CHECK(emit_config(back) == text);
  }
}

TEST_CASE("the acceptance config parses") {
  const auto c = parse_config(FEDAPTA_TEST_DATA_DIR "/acceptance.cfg");
  CHECK(c.num_tasks == 2);
  CHECK(c.devices_per_task == 3);
  CHECK(c.rounds == 10);
  CHECK(error_kind_of([] { parse_config(FEDAPTA_TEST_DATA_DIR "/missing.cfg"); }) == ErrorKind::Config);
}

TEST_CASE("float formatting round-trips") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(std::uniform_real_distribution<double>(-1.0, 1.0)(rng), static_cast<int>(rng() % 200) - 100);
    CHECK(std::stod(format_double(v)) == v);
    CHECK(std::stod(format_shortest(v)) == v);
  }
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_shortest(0.1) == "0.1");
}

TEST_CASE("number lists") {
  CHECK(parse_number_list("", "ratios").empty());
  CHECK(parse_number_list("  ", "ratios").empty());
  CHECK(parse_number_list("0.2, 0.8", "ratios") == std::vector<double>{0.2, 0.8});
  for (const char* bad : {"0.2,,0.4", "abc", "0.2,", "1e"}) {
    try {
      parse_number_list(bad, "ratios");
      FAIL("expected an error for " << bad);
    } catch (const ConfigError& e) {
      CHECK(e.key() == "ratios");
    }
  }
}
