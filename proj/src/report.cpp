// SPDX-License-Identifier: Apache-2.0
#include "fedapta/report.hpp"

#include "fedapta/config.hpp"
#include "fedapta/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

namespace fedapta {

bool is_metric_name(std::string_view name) noexcept {
  return std::find(kMetricNames.begin(), kMetricNames.end(), name) != kMetricNames.end();
}

std::vector<MetricRow> rows_from_report(const RoundReport& report, const std::string& run_id) {
  std::vector<MetricRow> rows;
  auto add = [&](Index device, int label, std::string_view metric, double value) {
    rows.push_back({run_id, report.round, device, label, std::string(metric), value});
  };
  for (const auto& d : report.devices) {
    add(d.device, d.task_label, "loss", d.loss);
    add(d.device, d.task_label, "train_accuracy", d.train_accuracy);
    add(d.device, d.task_label, "achieved_ratio", d.achieved_ratio);
    add(d.device, d.task_label, "candidate_params", static_cast<double>(d.candidate_params));
    add(d.device, d.task_label, "reference_model_id", static_cast<double>(d.reference_id));
  }
  for (const auto& c : report.clusters) add(-1, c.label, "cluster_test_accuracy", c.test_accuracy);
  for (std::size_t t = 0; t < report.task_accuracy.size(); ++t)
    add(-1, static_cast<int>(t), "task_accuracy", report.task_accuracy[t]);
  add(-1, -1, "ari", report.ari);
  add(-1, -1, "num_clusters", report.assignment.num_clusters);
  return rows;
}

void write_rounds_header(std::ostream& out) { out << kRoundsHeader << '\n'; }

void write_rounds_rows(std::ostream& out, const std::vector<MetricRow>& rows) {
  for (const auto& r : rows)
    out << r.run_id << ',' << r.round << ',' << r.device_id << ',' << r.task_label << ',' << r.metric << ','
        << format_double(r.value) << '\n';
}

void write_clusters_header(std::ostream& out) { out << kClustersHeader << '\n'; }

void write_clusters_rows(std::ostream& out, const RoundReport& report) {
  for (std::size_t i = 0; i < report.assignment.labels.size(); ++i)
    out << report.round << ',' << i << ',' << report.assignment.labels[i] << '\n';
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) throw FormatError(bytes_.size(), std::string("truncated ") + what);
    char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_;
};

}  // namespace

std::string encode_model(const ModelWeights& model) {
  std::string out = "FAPT";
  put<std::uint32_t>(out, kModelFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.specs.size()));
  for (const auto& s : model.specs) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.kind));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.in_channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.out_channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.kernel));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.in_height));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.in_width));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.activation));
    put<std::uint32_t>(out, (s.trainable ? 1u : 0u) | (s.candidate ? 2u : 0u));
  }
  for (const auto& layer : model.layers) {
    for (Index i = 0; i < layer.weight.size(); ++i) put<double>(out, layer.weight.flat()(i));
    for (Index i = 0; i < layer.bias.size(); ++i) put<double>(out, layer.bias.flat()(i));
  }
  return out;
}

ModelWeights decode_model(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "FAPT") throw FormatError(0, "missing FAPT magic");
  Reader in(bytes, 4);
  auto offset = [&] { return in.pos(); };
  const auto version = in.get<std::uint32_t>("version");
  if (version != kModelFileVersion) throw FormatError(4, "unsupported model file version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>("layer count");
  if (count == 0 || count > 4096) throw FormatError(8, "implausible layer count " + std::to_string(count));

  ModelWeights model;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto at = offset();
    LayerSpec s;
    s.index = static_cast<Index>(k);
    const auto kind = in.get<std::uint32_t>("layer header");
    if (kind > 1) throw FormatError(at, "unknown layer kind");
    s.kind = static_cast<LayerKind>(kind);
    s.in_channels = in.get<std::uint32_t>("layer header");
    s.out_channels = in.get<std::uint32_t>("layer header");
    s.kernel = in.get<std::uint32_t>("layer header");
    s.in_height = in.get<std::uint32_t>("layer header");
    s.in_width = in.get<std::uint32_t>("layer header");
    const auto act = in.get<std::uint32_t>("layer header");
    if (act > 1) throw FormatError(at, "unknown activation");
    s.activation = static_cast<Activation>(act);
    const auto flags = in.get<std::uint32_t>("layer header");
    if (flags > 3) throw FormatError(at, "unknown layer flags");
    s.trainable = flags & 1u;
    s.candidate = flags & 2u;
    model.specs.push_back(s);
  }
  try {
    validate_specs(model.specs);
  } catch (const Error& e) {
    throw FormatError(offset(), std::string("inconsistent layer headers: ") + e.what());
  }
  for (const auto& s : model.specs) {
    LayerParams p{Tensor(s.weight_shape()), Tensor({s.out_channels})};
    for (Index i = 0; i < p.weight.size(); ++i) p.weight.flat()(i) = in.get<double>("weights");
    for (Index i = 0; i < p.bias.size(); ++i) p.bias.flat()(i) = in.get<double>("biases");
    model.layers.push_back(std::move(p));
  }
  if (!in.done()) throw FormatError(offset(), "trailing bytes after model payload");
  return model;
}

void write_model(const std::filesystem::path& path, const ModelWeights& model) {
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = encode_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Input, "cannot write model file " + path.string());
}

ModelWeights read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Input, "cannot read model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_model(ss.str());
}

}  // namespace fedapta
