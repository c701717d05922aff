// SPDX-License-Identifier: Apache-2.0
#include "fedapta/config.hpp"

#include "fedapta/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace fedapta {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_shortest(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(FederationConfig&, std::string_view)> set;
  std::function<std::string(const FederationConfig&)> get;
};

template <typename T>
T parse_number(std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || ptr != end) throw ConfigError("", 0, "cannot parse '" + std::string(v) + "'");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) out += format_shortest(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(std::string_view v) {
  std::vector<T> out;
  for (auto item : split_list(v)) out.push_back(parse_number<T>(item));
  return out;
}

#define FEDAPTA_NUMBER(section, key, member, type)                                            \
  Field {                                                                                      \
    section, key, [](FederationConfig& c, std::string_view v) { c.member = parse_number<type>(v); }, \
        [](const FederationConfig& c) {                                                        \
          if constexpr (std::is_floating_point_v<type>) return format_shortest(c.member);     \
          else return std::to_string(c.member);                                                \
        }                                                                                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      FEDAPTA_NUMBER("training", "learning_rate", train.learning_rate, double),
      FEDAPTA_NUMBER("training", "lr_decay", train.lr_decay, double),
      FEDAPTA_NUMBER("training", "weight_decay", train.weight_decay, double),
      FEDAPTA_NUMBER("training", "local_epochs", train.local_epochs, int),
      FEDAPTA_NUMBER("training", "batch_size", train.batch_size, int),
      Field{"training", "hidden_layers", [](FederationConfig& c, std::string_view v) { c.hidden = parse_list<Index>(v); },
            [](const FederationConfig& c) { return join(c.hidden); }},
      Field{"training", "conv_channels",
            [](FederationConfig& c, std::string_view v) { c.conv_channels = parse_list<Index>(v); },
            [](const FederationConfig& c) { return join(c.conv_channels); }},
      FEDAPTA_NUMBER("training", "conv_kernel", conv_kernel, Index),
      FEDAPTA_NUMBER("training", "freeze_fraction", freeze_fraction, double),

      FEDAPTA_NUMBER("federation", "rounds", rounds, int),
      FEDAPTA_NUMBER("federation", "tasks", num_tasks, int),
      FEDAPTA_NUMBER("federation", "devices_per_task", devices_per_task, int),
      FEDAPTA_NUMBER("federation", "n_classes", task.n_classes, int),
      FEDAPTA_NUMBER("federation", "dim", task.dim, Index),
      FEDAPTA_NUMBER("federation", "samples_per_class", task.samples_per_class, Index),
      FEDAPTA_NUMBER("federation", "separation", task.separation, double),
      Field{"federation", "partition",
            [](FederationConfig& c, std::string_view v) {
              if (v == "lda") c.partition = PartitionKind::Lda;
              else if (v == "iid") c.partition = PartitionKind::Iid;
              else throw ConfigError("", 0, "expected lda or iid");
            },
            [](const FederationConfig& c) { return std::string(partition_name(c.partition)); }},
      FEDAPTA_NUMBER("federation", "alpha", alpha, double),
      FEDAPTA_NUMBER("federation", "test_fraction", test_fraction, double),
      Field{"federation", "ratio_policy",
            [](FederationConfig& c, std::string_view v) {
              if (v == "cycle") c.ratio_policy = RatioPolicy::Cycle;
              else if (v == "explicit") c.ratio_policy = RatioPolicy::Explicit;
              else throw ConfigError("", 0, "expected cycle or explicit");
            },
            [](const FederationConfig& c) { return std::string(policy_name(c.ratio_policy)); }},
      Field{"federation", "ratios", [](FederationConfig& c, std::string_view v) { c.ratio_cycle = parse_list<double>(v); },
            [](const FederationConfig& c) { return join(c.ratio_cycle); }},
      Field{"federation", "explicit_ratios",
            [](FederationConfig& c, std::string_view v) {
              c.explicit_ratios.clear();
              for (auto item : split_list(v)) {
                const auto colon = item.find(':');
                if (colon == std::string_view::npos) throw ConfigError("", 0, "expected device:ratio pairs");
                const auto device = parse_number<Index>(trim(item.substr(0, colon)));
                if (!c.explicit_ratios.emplace(device, parse_number<double>(trim(item.substr(colon + 1)))).second)
                  throw ConfigError("", 0, "device " + std::to_string(device) + " listed twice");
              }
            },
            [](const FederationConfig& c) {
              std::string out;
              for (const auto& [d, r] : c.explicit_ratios) {
                if (!out.empty()) out += ", ";
                out += std::to_string(d) + ":" + format_shortest(r);
              }
              return out;
            }},
      Field{"federation", "mode",
            [](FederationConfig& c, std::string_view v) {
              for (Mode m : {Mode::FedApta, Mode::FedAvgAll, Mode::NoCluster, Mode::OverlapOnly})
                if (mode_name(m) == v) {
                  c.mode = m;
                  return;
                }
              throw ConfigError("", 0, "expected fedapta, fedavg_all, no_cluster or overlap_only");
            },
            [](const FederationConfig& c) { return std::string(mode_name(c.mode)); }},
      FEDAPTA_NUMBER("federation", "seed", seed, std::uint64_t),

      FEDAPTA_NUMBER("pruning", "spread", spread, double),

      FEDAPTA_NUMBER("clustering", "min_cluster_size", hdbscan.min_cluster_size, int),
      FEDAPTA_NUMBER("clustering", "min_samples", hdbscan.min_samples, int),
      FEDAPTA_NUMBER("clustering", "last_k_dense", last_k_dense, int),
  };
  return table;
}

#undef FEDAPTA_NUMBER

}  // namespace

std::vector<double> parse_number_list(std::string_view text, const std::string& key) {
  try {
    return parse_list<double>(text);
  } catch (const ConfigError& e) {
    throw ConfigError(key, 0, e.what());
  }
}

FederationConfig parse_config_text(std::string_view text) {
  FederationConfig cfg;
  std::map<std::string, int> seen;  // key -> line
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", line_no, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "training" && section != "federation" && section != "pruning" && section != "clustering")
        throw ConfigError("", line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("", line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(key, line_no, "key appears before any [section]");
    const auto& table = fields();
    const auto field = std::find_if(table.begin(), table.end(),
                                    [&](const Field& f) { return f.section == section && f.key == key; });
    if (field == table.end()) throw ConfigError(key, line_no, "unknown key in [" + section + "]");
    if (const auto [it, fresh] = seen.emplace(key, line_no); !fresh)
      throw ConfigError(key, line_no, "duplicate key (first set on line " + std::to_string(it->second) + ")");
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key, line_no, e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    const auto it = seen.find(e.key());
    std::string what = e.what();
    if (const auto q = what.find("': "); q != std::string::npos) what = what.substr(q + 3);
    throw ConfigError(e.key(), it == seen.end() ? 0 : it->second, what);
  }
  return cfg;
}

FederationConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string emit_config(const FederationConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace fedapta
