// SPDX-License-Identifier: Apache-2.0
#include "fedapta/recovery.hpp"

#include "fedapta/error.hpp"

#include <algorithm>
#include <string>

namespace fedapta {

void check_upload(const Upload& upload) {
  const auto& m = upload.model;
  if (upload.mask.channels.size() != m.layers.size()) fail(ErrorKind::Spec, "upload mask/model layer mismatch");
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto w = m.layers[k].weight.rows();
    const auto& b = m.layers[k].bias.flat();
    const auto& bits = upload.mask.channels[k];
    if (static_cast<Index>(bits.size()) != w.rows()) fail(ErrorKind::Spec, "upload mask channel mismatch");
    for (std::size_t c = 0; c < bits.size(); ++c) {
      if (bits[c]) continue;
      const auto row = static_cast<Index>(c);
      if ((w.row(row).array() != 0.0).any() || b(row) != 0.0)
        fail(ErrorKind::Integrity, "device " + std::to_string(upload.device) + " layer " + std::to_string(k) +
                                       " channel " + std::to_string(c) + " is masked out but non-zero");
    }
  }
}

ModelWeights recover(const Upload& upload, const ModelWeights& reference) {
  if (!upload.model.congruent(reference)) fail(ErrorKind::Spec, "upload and reference model shapes differ");
  check_upload(upload);
  ModelWeights out = upload.model;
  for (std::size_t k = 0; k < out.layers.size(); ++k) {
    auto w = out.layers[k].weight.rows();
    auto& b = out.layers[k].bias.flat();
    const auto rw = reference.layers[k].weight.rows();
    const auto& rb = reference.layers[k].bias.flat();
    const auto& bits = upload.mask.channels[k];
    for (std::size_t c = 0; c < bits.size(); ++c) {
      if (bits[c]) continue;
      const auto row = static_cast<Index>(c);
      w.row(row) = rw.row(row);
      b(row) = rb(row);
    }
  }
  return out;
}

namespace {

void weighted_into(Vector& out, const std::vector<const Vector*>& xs, const std::vector<double>& weights) {
  const Vector& anchor = *xs.front();
  out = anchor;
  Vector lo = anchor, hi = anchor;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    out.noalias() += weights[i] * (*xs[i] - anchor);
    lo = lo.cwiseMin(*xs[i]);
    hi = hi.cwiseMax(*xs[i]);
  }
  out = out.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

ModelWeights aggregate(std::vector<Contribution> members) {
  if (members.empty()) fail(ErrorKind::Internal, "cannot aggregate an empty cluster");
  std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) { return a.device < b.device; });
  double total = 0.0;
  for (const auto& m : members) {
    if (m.data_size < 1) fail(ErrorKind::Input, "contribution with non-positive data size");
    if (!m.model->congruent(*members.front().model)) fail(ErrorKind::Spec, "cluster members have different shapes");
    total += static_cast<double>(m.data_size);
  }
  std::vector<double> weights;
  for (const auto& m : members) weights.push_back(static_cast<double>(m.data_size) / total);

  ModelWeights out = *members.front().model;
  std::vector<const Vector*> xs(members.size());
  for (std::size_t k = 0; k < out.layers.size(); ++k) {
    for (std::size_t i = 0; i < members.size(); ++i) xs[i] = &members[i].model->layers[k].weight.flat();
    weighted_into(out.layers[k].weight.flat(), xs, weights);
    for (std::size_t i = 0; i < members.size(); ++i) xs[i] = &members[i].model->layers[k].bias.flat();
    weighted_into(out.layers[k].bias.flat(), xs, weights);
  }
  return out;
}

ModelWeights aggregate_overlap(std::span<const Upload> uploads, std::span<const ModelWeights* const> references) {
  if (uploads.empty()) fail(ErrorKind::Internal, "cannot aggregate an empty cluster");
  if (uploads.size() != references.size()) fail(ErrorKind::Internal, "one reference model per upload required");
  std::vector<Contribution> trained, refs;
  for (std::size_t i = 0; i < uploads.size(); ++i) {
    check_upload(uploads[i]);
    trained.push_back({uploads[i].device, &uploads[i].model, uploads[i].data_size});
    refs.push_back({uploads[i].device, references[i], uploads[i].data_size});
  }
  ModelWeights out = aggregate(refs);
  const ModelWeights avg = aggregate(trained);
  for (std::size_t k = 0; k < out.layers.size(); ++k) {
    auto w = out.layers[k].weight.rows();
    auto& b = out.layers[k].bias.flat();
    for (Index c = 0; c < w.rows(); ++c) {
      const bool shared = std::all_of(uploads.begin(), uploads.end(), [&](const Upload& u) {
        return u.mask.channels[k][static_cast<std::size_t>(c)] != 0;
      });
      if (!shared) continue;
      w.row(c) = avg.layers[k].weight.rows().row(c);
      b(c) = avg.layers[k].bias.flat()(c);
    }
  }
  return out;
}

}  // namespace fedapta
