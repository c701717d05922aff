// SPDX-License-Identifier: Apache-2.0
#include "fedapta/pruning.hpp"

#include "fedapta/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedapta {

Index PruneMask::pruned_channels(Index layer) const {
  const auto& c = channels.at(static_cast<std::size_t>(layer));
  return static_cast<Index>(std::count(c.begin(), c.end(), std::uint8_t{0}));
}

bool PruneMask::all_ones() const {
  return std::all_of(channels.begin(), channels.end(), [](const auto& c) {
    return std::all_of(c.begin(), c.end(), [](std::uint8_t v) { return v == 1; });
  });
}

Vector channel_l1_norms(const LayerParams& layer) { return layer.weight.rows().cwiseAbs().rowwise().sum(); }

std::vector<LayerProfile> layer_importance(const ModelWeights& model) {
  std::vector<LayerProfile> profiles;
  for (std::size_t k = 0; k < model.specs.size(); ++k) {
    const auto& s = model.specs[k];
    if (!s.candidate) continue;
    const auto& w = model.layers[k].weight;
    LayerProfile p;
    p.layer = static_cast<Index>(k);
    p.params = w.size() + model.layers[k].bias.size();
    p.channels = s.out_channels;
    p.importance = w.flat().cwiseAbs().sum() / static_cast<double>(w.size());
    profiles.push_back(p);
  }
  if (profiles.empty()) fail(ErrorKind::Config, "model has no candidate layers to prune");
  return profiles;
}

double budget_tolerance(std::span<const LayerProfile> profiles) {
  double total = 0.0;
  for (const auto& p : profiles) total += static_cast<double>(p.params);
  return 1e-9 * total;
}

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

RatioPlan allocate_ratios(std::span<const LayerProfile> profiles, double target, double spread) {
  if (profiles.empty()) fail(ErrorKind::Input, "allocate_ratios needs at least one layer");
  if (!(target >= 0.0 && target <= 1.0)) fail(ErrorKind::Input, "target ratio must lie in [0, 1]");
  if (!(spread >= 0.0)) fail(ErrorKind::Input, "spread must be non-negative");

  const std::size_t n = profiles.size();
  RatioPlan plan;
  plan.target = target;
  plan.spread = spread;
  plan.sorted_order.resize(n);
  std::iota(plan.sorted_order.begin(), plan.sorted_order.end(), std::size_t{0});
  std::stable_sort(plan.sorted_order.begin(), plan.sorted_order.end(), [&](std::size_t a, std::size_t b) {
    return profiles[a].importance > profiles[b].importance;
  });
  for (const auto& p : profiles) plan.layers.push_back(p.layer);

  double i_max = -INFINITY, i_min = INFINITY, total = 0.0;
  for (const auto& p : profiles) {
    i_max = std::max(i_max, p.importance);
    i_min = std::min(i_min, p.importance);
    total += static_cast<double>(p.params);
  }
  // s_k in [0, 1]: 0 for the most important layer, 1 for the least.
  std::vector<double> s(n, 0.0);
  if (i_max > i_min)
    for (std::size_t k = 0; k < n; ++k) s[k] = (i_max - profiles[k].importance) / (i_max - i_min);
  double s_mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) s_mean += static_cast<double>(profiles[k].params) * s[k];
  s_mean /= total;

  std::vector<double> offset(n);
  for (std::size_t k = 0; k < n; ++k) offset[k] = spread * (s[k] - s_mean);

  const double budget = target * total;
  const double eps = 1e-9 * total;
  auto ratios_at = [&](double mu) {
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) r[k] = clamp01(mu + offset[k]);
    return r;
  };
  auto spent = [&](const std::vector<double>& r) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += static_cast<double>(profiles[k].params) * r[k];
    return sum;
  };

  if (target == 0.0 || target == 1.0) {
    plan.mu = target;
    plan.ratios.assign(n, target);
    return plan;
  }

  double lo = -spread - 1.0, hi = spread + 2.0;
  double mu = 0.5 * (lo + hi);
  std::vector<double> r = ratios_at(mu);
  for (int it = 0; it < 200 && std::abs(spent(r) - budget) > eps; ++it) {
    if (spent(r) < budget) lo = mu;
    else hi = mu;
    mu = 0.5 * (lo + hi);
    r = ratios_at(mu);
  }

  // The budget is linear in mu on the current set of unclamped layers; solve
  // that piece exactly and keep it if the clamp pattern is unchanged.
  double free_params = 0.0, fixed = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double raw = mu + offset[k];
    const auto nk = static_cast<double>(profiles[k].params);
    if (raw <= 0.0) continue;
    if (raw >= 1.0) fixed += nk;
    else {
      free_params += nk;
      fixed += nk * offset[k];
    }
  }
  if (free_params > 0.0) {
    const double exact_mu = (budget - fixed) / free_params;
    auto refined = ratios_at(exact_mu);
    bool same_pattern = true;
    for (std::size_t k = 0; k < n; ++k) {
      const double a = mu + offset[k], b = exact_mu + offset[k];
      same_pattern &= (a <= 0.0) == (b <= 0.0) && (a >= 1.0) == (b >= 1.0);
    }
    if (same_pattern && std::abs(spent(refined) - budget) <= std::abs(spent(r) - budget)) {
      mu = exact_mu;
      r = std::move(refined);
    }
  }
  if (std::abs(spent(r) - budget) > eps)
    fail(ErrorKind::Internal, "ratio allocation failed to close the parameter budget");

  plan.mu = mu;
  plan.ratios = std::move(r);
  return plan;
}

PruneMask full_mask(const ModelWeights& model) {
  PruneMask mask;
  for (const auto& s : model.specs) mask.channels.emplace_back(static_cast<std::size_t>(s.out_channels), 1);
  return mask;
}

PruneMask build_mask(const ModelWeights& model, const RatioPlan& plan) {
  if (plan.layers.size() != plan.ratios.size()) fail(ErrorKind::Spec, "ratio plan is internally inconsistent");
  PruneMask mask = full_mask(model);
  Index pruned_params = 0, candidate_params = 0;
  for (std::size_t k = 0; k < model.specs.size(); ++k)
    if (model.specs[k].candidate) candidate_params += model.specs[k].param_count();

  std::vector<char> covered(model.specs.size(), 0);
  for (std::size_t j = 0; j < plan.layers.size(); ++j) {
    const Index layer = plan.layers[j];
    if (layer < 0 || layer >= model.num_layers() || !model.specs[static_cast<std::size_t>(layer)].candidate)
      fail(ErrorKind::Spec, "ratio plan refers to layer " + std::to_string(layer) + " which is not a candidate");
    const auto& s = model.specs[static_cast<std::size_t>(layer)];
    covered[static_cast<std::size_t>(layer)] = 1;
    const double rho = plan.ratios[j];
    const Index c = s.out_channels;
    auto m = static_cast<Index>(std::floor(rho * static_cast<double>(c) + 0.5));
    if (rho < 1.0) m = std::min(m, c - 1);
    m = std::clamp<Index>(m, 0, c);

    const Vector norms = channel_l1_norms(model.layers[static_cast<std::size_t>(layer)]);
    std::vector<Index> order(static_cast<std::size_t>(c));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return norms(a) < norms(b); });
    auto& bits = mask.channels[static_cast<std::size_t>(layer)];
    for (Index i = 0; i < m; ++i) bits[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 0;
    pruned_params += m * s.channel_footprint();
  }
  for (std::size_t k = 0; k < model.specs.size(); ++k)
    if (model.specs[k].candidate && !covered[k])
      fail(ErrorKind::Spec, "ratio plan does not cover candidate layer " + std::to_string(k));
  mask.achieved_ratio =
      candidate_params == 0 ? 0.0 : static_cast<double>(pruned_params) / static_cast<double>(candidate_params);
  return mask;
}

namespace {

void check_mask_shape(const ModelWeights& model, const PruneMask& mask) {
  if (mask.channels.size() != model.layers.size()) fail(ErrorKind::Spec, "mask/model layer count mismatch");
  for (std::size_t k = 0; k < mask.channels.size(); ++k)
    if (static_cast<Index>(mask.channels[k].size()) != model.layers[k].weight.leading())
      fail(ErrorKind::Spec, "mask channel count mismatch at layer " + std::to_string(k));
}

}  // namespace

ModelWeights expand_mask(const ModelWeights& model, const PruneMask& mask) {
  check_mask_shape(model, mask);
  ModelWeights out = zeros_like(model);
  for (std::size_t k = 0; k < out.layers.size(); ++k) {
    auto w = out.layers[k].weight.rows();
    auto& b = out.layers[k].bias.flat();
    for (std::size_t c = 0; c < mask.channels[k].size(); ++c) {
      const double keep = mask.channels[k][c];
      w.row(static_cast<Index>(c)).setConstant(keep);
      b(static_cast<Index>(c)) = keep;
    }
  }
  return out;
}

ModelWeights apply_mask(const ModelWeights& model, const PruneMask& mask) {
  ModelWeights out = model;
  apply_mask_in_place(out, mask);
  return out;
}

void apply_mask_in_place(ModelWeights& out, const PruneMask& mask) {
  check_mask_shape(out, mask);
  for (std::size_t k = 0; k < out.layers.size(); ++k) {
    auto w = out.layers[k].weight.rows();
    auto& b = out.layers[k].bias.flat();
    for (std::size_t c = 0; c < mask.channels[k].size(); ++c) {
      if (mask.channels[k][c]) continue;
      w.row(static_cast<Index>(c)).setZero();
      b(static_cast<Index>(c)) = 0.0;
    }
  }
}

Index retained_candidate_params(const ModelWeights& model, const PruneMask& mask) {
  check_mask_shape(model, mask);
  Index kept = 0;
  for (std::size_t k = 0; k < model.specs.size(); ++k) {
    if (!model.specs[k].candidate) continue;
    const auto& c = mask.channels[k];
    kept += static_cast<Index>(std::count(c.begin(), c.end(), std::uint8_t{1})) * model.specs[k].channel_footprint();
  }
  return kept;
}

std::string mask_to_hex(std::span<const std::uint8_t> channels) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < channels.size(); i += 4) {
    int nibble = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      nibble <<= 1;
      if (i + b < channels.size() && channels[i + b]) nibble |= 1;
    }
    out.push_back(kDigits[nibble]);
  }
  return out;
}

std::vector<std::uint8_t> mask_from_hex(const std::string& hex, Index channels) {
  const auto n = static_cast<std::size_t>(channels);
  if (hex.size() != (n + 3) / 4) fail(ErrorKind::Format, "mask hex length does not match channel count");
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < hex.size(); ++i) {
    const char ch = hex[i];
    int v = 0;
    if (ch >= '0' && ch <= '9') v = ch - '0';
    else if (ch >= 'a' && ch <= 'f') v = ch - 'a' + 10;
    else if (ch >= 'A' && ch <= 'F') v = ch - 'A' + 10;
    else fail(ErrorKind::Format, "invalid hex digit in mask");
    for (std::size_t b = 0; b < 4; ++b) {
      const bool bit = (v >> (3 - b)) & 1;
      if (i * 4 + b < n) out[i * 4 + b] = bit;
      else if (bit) fail(ErrorKind::Format, "mask padding bits must be zero");
    }
  }
  return out;
}

}  // namespace fedapta
