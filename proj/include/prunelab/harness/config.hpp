#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prunelab/error.hpp"
#include "prunelab/harness/data_sources.hpp"
#include "prunelab/models.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/sanity.hpp"
#include "prunelab/schedules.hpp"
#include "prunelab/tickets.hpp"
#include "prunelab/training.hpp"

namespace prunelab {

using Json = nlohmann::json;

inline constexpr const char* kOutputDirEnv = "PRUNELAB_OUTPUT_DIR";

struct PipelineSpec {
  TicketKind kind = TicketKind::random;
  ScheduleKind schedule = ScheduleKind::smart;
  std::optional<ArchFamily> family{};
  std::string label{};

  // Row key: the explicit label, else the kind plus any non-default schedule.
  std::string name() const {
    if (!label.empty()) return label;
    std::string n(to_string(kind));
    if (schedule != ScheduleKind::smart) n += "-" + std::string(to_string(schedule));
    return n;
  }

  friend bool operator==(const PipelineSpec&, const PipelineSpec&) = default;
};

struct ExperimentConfig {
  std::string preset = "mlp-4";
  DataSource dataset = SyntheticBlobs{};
  std::vector<PipelineSpec> pipelines;
  std::vector<double> sparsities;
  std::vector<SanityCheck> checks = {SanityCheck::none};
  std::vector<RngSeed> seeds;
  ArchFamily family = ArchFamily::plain_stack;
  TrainConfig train;
  TrainConfig pretrain;
  int rewind_epoch = 0;
  double round_fraction = 0.2;
  bool preserve_output = false;
  bool fresh_retrain_seed = true;
  std::string output_dir = "results";
  unsigned workers = 1;

  void validate() const {
    require(!pipelines.empty(), ErrorKind::schema, "config needs at least one pipeline");
    require(!sparsities.empty(), ErrorKind::schema, "config needs at least one sparsity");
    require(!checks.empty(), ErrorKind::schema, "config needs at least one check");
    require(!seeds.empty(), ErrorKind::schema, "config needs at least one seed");
    for (double p : sparsities)
      require(p > 0.0 && p < 1.0, ErrorKind::schema, "sparsities must lie in (0, 1)");
    require(workers >= 1, ErrorKind::schema, "workers must be at least 1");
    require(round_fraction > 0.0 && round_fraction < 1.0, ErrorKind::schema,
            "round_fraction must lie in (0, 1)");
    require(rewind_epoch >= 0, ErrorKind::schema, "rewind_epoch must be nonnegative");
    train.validate();
    pretrain.validate();
    (void)preset_specs(preset);
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string require_string(const Json& j, const char* what) {
  require(j.is_string(), ErrorKind::schema, std::string(what) + " must be a string");
  return j.get<std::string>();
}

inline double require_number(const Json& j, const char* what) {
  require(j.is_number(), ErrorKind::schema, std::string(what) + " must be a number");
  return j.get<double>();
}

inline std::uint64_t require_unsigned(const Json& j, const char* what) {
  require(j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0),
          ErrorKind::schema, std::string(what) + " must be a nonnegative integer");
  return j.get<std::uint64_t>();
}

inline std::int64_t require_integer(const Json& j, const char* what) {
  require(j.is_number_integer(), ErrorKind::schema, std::string(what) + " must be an integer");
  return j.get<std::int64_t>();
}

inline bool require_bool(const Json& j, const char* what) {
  require(j.is_boolean(), ErrorKind::schema, std::string(what) + " must be a boolean");
  return j.get<bool>();
}

inline void reject_unknown(const Json& j, std::initializer_list<std::string_view> known,
                           const char* where) {
  require(j.is_object(), ErrorKind::schema, std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    require(ok, ErrorKind::schema, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T translate_usage(auto&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::usage) fail(ErrorKind::schema, e.what());
    throw;
  }
}

}  // namespace detail

inline Json train_to_json(const TrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"initial_lr", c.initial_lr},
              {"lr_drop_factor", c.lr_drop_factor},
              {"lr_drop_points", c.lr_drop_points},
              {"weight_decay", c.weight_decay},
              {"momentum", c.momentum},
              {"seed", c.seed}};
}

inline TrainConfig train_from_json(const Json& j, TrainConfig c = {}) {
  detail::reject_unknown(j,
                         {"epochs", "batch_size", "initial_lr", "lr_drop_factor", "lr_drop_points",
                          "weight_decay", "momentum", "seed"},
                         "train config");
  if (j.contains("epochs")) c.epochs = static_cast<int>(detail::require_integer(j["epochs"], "epochs"));
  if (j.contains("batch_size"))
    c.batch_size = detail::require_unsigned(j["batch_size"], "batch_size");
  if (j.contains("initial_lr")) c.initial_lr = detail::require_number(j["initial_lr"], "initial_lr");
  if (j.contains("lr_drop_factor"))
    c.lr_drop_factor = detail::require_number(j["lr_drop_factor"], "lr_drop_factor");
  if (j.contains("lr_drop_points")) {
    require(j["lr_drop_points"].is_array(), ErrorKind::schema, "lr_drop_points must be an array");
    c.lr_drop_points.clear();
    for (const auto& x : j["lr_drop_points"])
      c.lr_drop_points.push_back(detail::require_number(x, "lr_drop_points"));
  }
  if (j.contains("weight_decay"))
    c.weight_decay = detail::require_number(j["weight_decay"], "weight_decay");
  if (j.contains("momentum")) c.momentum = detail::require_number(j["momentum"], "momentum");
  if (j.contains("seed")) c.seed = detail::require_unsigned(j["seed"], "seed");
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::schema, e.what());
  }
  return c;
}

// "blobs:k=3,d=16,n=600,seed=7[,spread=0.35]", "idx:img,lbl[,test-img,test-lbl]", "csv:path".
inline DataSource parse_data_spec(std::string_view spec) {
  const auto colon = spec.find(':');
  require(colon != std::string_view::npos, ErrorKind::usage,
          "data source '" + std::string(spec) + "' must look like kind:args");
  const std::string kind(spec.substr(0, colon));
  const std::string args(spec.substr(colon + 1));
  std::vector<std::string> parts;
  std::stringstream ss(args);
  for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
  if (kind == "blobs") {
    SyntheticBlobs b;
    for (const auto& p : parts) {
      const auto eq = p.find('=');
      require(eq != std::string::npos, ErrorKind::usage, "blobs argument '" + p + "' needs key=value");
      const std::string key = p.substr(0, eq), value = p.substr(eq + 1);
      try {
        std::size_t used = 0;
        if (key == "k") b.k = std::stoi(value, &used);
        else if (key == "d") b.d = std::stoul(value, &used);
        else if (key == "n") b.n = std::stoul(value, &used);
        else if (key == "seed") b.seed = std::stoull(value, &used);
        else if (key == "spread") b.spread = std::stod(value, &used);
        else fail(ErrorKind::usage, "unknown blobs key '" + key + "'");
        require(used == value.size(), ErrorKind::usage, "bad value for blobs key '" + key + "'");
      } catch (const std::logic_error&) {
        fail(ErrorKind::usage, "bad value for blobs key '" + key + "'");
      }
    }
    return b;
  }
  if (kind == "idx") {
    require(parts.size() == 2 || parts.size() == 4, ErrorKind::usage,
            "idx source takes 2 or 4 comma-separated paths");
    IdxFiles f{parts[0], parts[1], std::nullopt, std::nullopt, std::nullopt};
    if (parts.size() == 4) {
      f.test_images = parts[2];
      f.test_labels = parts[3];
    }
    return f;
  }
  if (kind == "csv") {
    require(!args.empty(), ErrorKind::usage, "csv source needs a path");
    return CsvFile{args, std::nullopt};
  }
  fail(ErrorKind::usage, "unknown data source kind '" + kind + "'");
}

inline Json data_to_json(const DataSource& src) {
  if (const auto* b = std::get_if<SyntheticBlobs>(&src))
    return Json{{"kind", "blobs"}, {"k", b->k}, {"d", b->d}, {"n", b->n}, {"seed", b->seed},
                {"spread", b->spread}};
  if (const auto* f = std::get_if<IdxFiles>(&src)) {
    Json j{{"kind", "idx"}, {"train_images", f->train_images.string()},
           {"train_labels", f->train_labels.string()}};
    if (f->test_images) j["test_images"] = f->test_images->string();
    if (f->test_labels) j["test_labels"] = f->test_labels->string();
    if (f->class_count) j["class_count"] = *f->class_count;
    return j;
  }
  const auto& c = std::get<CsvFile>(src);
  Json j{{"kind", "csv"}, {"path", c.path.string()}};
  if (c.class_count) j["class_count"] = *c.class_count;
  return j;
}

inline DataSource data_from_json(const Json& j) {
  if (j.is_string())
    return detail::translate_usage<DataSource>([&] { return parse_data_spec(j.get<std::string>()); });
  require(j.is_object() && j.contains("kind"), ErrorKind::schema, "dataset needs a 'kind'");
  const std::string kind = detail::require_string(j["kind"], "dataset kind");
  if (kind == "blobs") {
    detail::reject_unknown(j, {"kind", "k", "d", "n", "seed", "spread"}, "dataset");
    SyntheticBlobs b;
    if (j.contains("k")) b.k = static_cast<int>(detail::require_unsigned(j["k"], "k"));
    if (j.contains("d")) b.d = detail::require_unsigned(j["d"], "d");
    if (j.contains("n")) b.n = detail::require_unsigned(j["n"], "n");
    if (j.contains("seed")) b.seed = detail::require_unsigned(j["seed"], "seed");
    if (j.contains("spread")) b.spread = detail::require_number(j["spread"], "spread");
    return b;
  }
  if (kind == "idx") {
    detail::reject_unknown(
        j, {"kind", "train_images", "train_labels", "test_images", "test_labels", "class_count"},
        "dataset");
    require(j.contains("train_images") && j.contains("train_labels"), ErrorKind::schema,
            "idx dataset needs train_images and train_labels");
    IdxFiles f;
    f.train_images = detail::require_string(j["train_images"], "train_images");
    f.train_labels = detail::require_string(j["train_labels"], "train_labels");
    if (j.contains("test_images")) f.test_images = detail::require_string(j["test_images"], "test_images");
    if (j.contains("test_labels")) f.test_labels = detail::require_string(j["test_labels"], "test_labels");
    require(f.test_images.has_value() == f.test_labels.has_value(), ErrorKind::schema,
            "idx test_images and test_labels come together");
    if (j.contains("class_count"))
      f.class_count = static_cast<int>(detail::require_unsigned(j["class_count"], "class_count"));
    return f;
  }
  if (kind == "csv") {
    detail::reject_unknown(j, {"kind", "path", "class_count"}, "dataset");
    require(j.contains("path"), ErrorKind::schema, "csv dataset needs a path");
    CsvFile c{detail::require_string(j["path"], "path"), std::nullopt};
    if (j.contains("class_count"))
      c.class_count = static_cast<int>(detail::require_unsigned(j["class_count"], "class_count"));
    return c;
  }
  fail(ErrorKind::schema, "unknown dataset kind '" + kind + "'");
}

inline Json pipeline_to_json(const PipelineSpec& p) {
  Json j{{"kind", std::string(to_string(p.kind))}, {"schedule", std::string(to_string(p.schedule))}};
  if (p.family) j["family"] = std::string(to_string(*p.family));
  if (!p.label.empty()) j["label"] = p.label;
  return j;
}

inline PipelineSpec pipeline_from_json(const Json& j) {
  return detail::translate_usage<PipelineSpec>([&] {
    PipelineSpec p;
    if (j.is_string()) {
      p.kind = parse_ticket_kind(j.get<std::string>());
      return p;
    }
    detail::reject_unknown(j, {"kind", "schedule", "family", "label"}, "pipeline");
    require(j.contains("kind"), ErrorKind::schema, "pipeline needs a 'kind'");
    p.kind = parse_ticket_kind(detail::require_string(j["kind"], "pipeline kind"));
    if (j.contains("schedule"))
      p.schedule = parse_schedule_kind(detail::require_string(j["schedule"], "schedule"));
    if (j.contains("family")) p.family = parse_family(detail::require_string(j["family"], "family"));
    if (j.contains("label")) p.label = detail::require_string(j["label"], "label");
    return p;
  });
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json pipelines = Json::array();
  for (const auto& p : c.pipelines) pipelines.push_back(pipeline_to_json(p));
  Json checks = Json::array();
  for (auto k : c.checks) checks.push_back(std::string(to_string(k)));
  return Json{{"preset", c.preset},
              {"dataset", data_to_json(c.dataset)},
              {"pipelines", pipelines},
              {"sparsities", c.sparsities},
              {"checks", checks},
              {"seeds", c.seeds},
              {"family", std::string(to_string(c.family))},
              {"train", train_to_json(c.train)},
              {"pretrain", train_to_json(c.pretrain)},
              {"rewind_epoch", c.rewind_epoch},
              {"round_fraction", c.round_fraction},
              {"preserve_output", c.preserve_output},
              {"fresh_retrain_seed", c.fresh_retrain_seed},
              {"output_dir", c.output_dir},
              {"workers", c.workers}};
}

inline ExperimentConfig config_from_json(const Json& j) {
  detail::reject_unknown(j,
                         {"preset", "dataset", "pipelines", "sparsities", "checks", "seeds", "family",
                          "train", "pretrain", "rewind_epoch", "round_fraction", "preserve_output",
                          "fresh_retrain_seed", "output_dir", "workers"},
                         "config");
  for (const char* key : {"pipelines", "sparsities", "seeds"})
    require(j.contains(key) && j[key].is_array(), ErrorKind::schema,
            std::string("config needs a '") + key + "' array");
  ExperimentConfig c;
  if (j.contains("preset")) c.preset = detail::require_string(j["preset"], "preset");
  if (j.contains("dataset")) c.dataset = data_from_json(j["dataset"]);
  for (const auto& p : j["pipelines"]) c.pipelines.push_back(pipeline_from_json(p));
  for (const auto& p : j["sparsities"]) c.sparsities.push_back(detail::require_number(p, "sparsity"));
  for (const auto& s : j["seeds"]) c.seeds.push_back(detail::require_unsigned(s, "seed"));
  if (j.contains("checks")) {
    require(j["checks"].is_array(), ErrorKind::schema, "checks must be an array");
    c.checks.clear();
    for (const auto& k : j["checks"]) {
      const std::string name = detail::require_string(k, "check");
      c.checks.push_back(detail::translate_usage<SanityCheck>([&] { return parse_check(name); }));
    }
  }
  if (j.contains("family"))
    c.family = detail::translate_usage<ArchFamily>(
        [&] { return parse_family(detail::require_string(j["family"], "family")); });
  if (j.contains("train")) c.train = train_from_json(j["train"]);
  if (j.contains("pretrain")) c.pretrain = train_from_json(j["pretrain"]);
  if (j.contains("rewind_epoch"))
    c.rewind_epoch = static_cast<int>(detail::require_integer(j["rewind_epoch"], "rewind_epoch"));
  if (j.contains("round_fraction"))
    c.round_fraction = detail::require_number(j["round_fraction"], "round_fraction");
  if (j.contains("preserve_output"))
    c.preserve_output = detail::require_bool(j["preserve_output"], "preserve_output");
  if (j.contains("fresh_retrain_seed"))
    c.fresh_retrain_seed = detail::require_bool(j["fresh_retrain_seed"], "fresh_retrain_seed");
  if (j.contains("output_dir")) c.output_dir = detail::require_string(j["output_dir"], "output_dir");
  if (j.contains("workers"))
    c.workers = static_cast<unsigned>(detail::require_unsigned(j["workers"], "workers"));
  detail::translate_usage<int>([&] {
    c.validate();
    return 0;
  });
  return c;
}

inline std::string emit_config(const ExperimentConfig& c) { return config_to_json(c).dump(2) + "\n"; }

inline ExperimentConfig parse_config(std::string_view text, const std::string& name = "config") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::parse, name + ": " + e.what() + " (byte " + std::to_string(e.byte) + ")");
  }
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    fail(e.kind(), name + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

// FNV-1a of the canonical (sorted-key) dump, ignoring where and how fast it runs.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  Json j = config_to_json(c);
  j.erase("output_dir");
  j.erase("workers");
  return fnv1a64(j.dump());
}

inline std::string hash_hex(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return s;
}

inline std::filesystem::path effective_output_dir(const ExperimentConfig& c) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return c.output_dir;
}

}  // namespace prunelab
