#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/sanity.hpp"
#include "prunelab/tickets.hpp"
#include "prunelab/harness/config.hpp"
#include "prunelab/harness/data_sources.hpp"
#include "prunelab/harness/report.hpp"

namespace prunelab {

struct GridCell {
  std::size_t index = 0;
  std::size_t pipeline = 0;
  double sparsity = 0.0;
  SanityCheck check = SanityCheck::none;
  RngSeed seed = 0;
};

// Pipeline-major, seed innermost. The position in this list is the cell key.
inline std::vector<GridCell> experiment_grid(const ExperimentConfig& cfg) {
  std::vector<GridCell> cells;
  for (std::size_t p = 0; p < cfg.pipelines.size(); ++p)
    for (double s : cfg.sparsities)
      for (SanityCheck c : cfg.checks)
        for (RngSeed seed : cfg.seeds) cells.push_back({cells.size(), p, s, c, seed});
  return cells;
}

struct RunOptions {
  // Stop (as if interrupted) after this many newly executed cells.
  std::optional<std::size_t> stop_after;
  std::function<void(const ResultRow&)> on_row;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::size_t executed = 0;
  std::size_t reused = 0;
  bool complete = false;
  std::filesystem::path cells_file;
};

inline ResultRow run_cell(const ExperimentConfig& cfg, const std::vector<LayerSpec>& specs,
                          const DataSplit& data, const GridCell& cell) {
  const PipelineSpec& pipe = cfg.pipelines[cell.pipeline];
  ResultRow row;
  row.pipeline = pipe.name();
  row.check = std::string(to_string(cell.check));
  row.sparsity = cell.sparsity;
  row.seed = cell.seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    TicketRequest r;
    r.kind = pipe.kind;
    r.specs = specs;
    r.target_sparsity = cell.sparsity;
    r.seed = cell.seed;
    r.family = pipe.family.value_or(cfg.family);
    r.schedule = pipe.schedule;
    r.pretrain = cfg.pretrain;
    r.rewind_epoch = cfg.rewind_epoch;
    r.round_fraction = cfg.round_fraction;
    r.preserve_output = cfg.preserve_output;
    const Ticket t = make_checked_ticket(r, cell.check, data.train);
    row.ratios = keep_ratios(t.mask);
    row.collapse = has_empty_layer(t.mask);
    const TrainResult run = retrain(t, data, cfg.train, cfg.fresh_retrain_seed);
    row.accuracy = run.best_test_accuracy();
  } catch (const Error& e) {
    row.failure = std::string(to_string(e.kind())) + ": " + e.what();
    row.accuracy = 0.0;
  } catch (const std::exception& e) {
    row.failure = std::string("internal: ") + e.what();
    row.accuracy = 0.0;
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

namespace detail {

inline Json row_to_json(const ResultRow& r) {
  Json j{{"pipeline", r.pipeline}, {"check", r.check}, {"sparsity", r.sparsity},
         {"accuracy", r.accuracy}, {"ratios", r.ratios}, {"seconds", r.seconds},
         {"collapse", r.collapse}};
  j["seed"] = r.seed ? Json(*r.seed) : Json();
  if (r.failure) j["failed"] = *r.failure;
  return j;
}

inline ResultRow row_from_json(const Json& j) {
  ResultRow r;
  r.pipeline = j.at("pipeline").get<std::string>();
  r.check = j.at("check").get<std::string>();
  r.sparsity = j.at("sparsity").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.ratios = j.at("ratios").get<std::vector<double>>();
  r.seconds = j.at("seconds").get<double>();
  r.collapse = j.at("collapse").get<bool>();
  if (!j.at("seed").is_null()) r.seed = j.at("seed").get<RngSeed>();
  if (j.contains("failed")) r.failure = j.at("failed").get<std::string>();
  return r;
}

// Completed cells from an earlier run. A torn final line (interrupted write)
// is ignored; entries whose key does not match this grid are ignored.
inline std::map<std::size_t, ResultRow> read_cells(const std::filesystem::path& path,
                                                    const std::string& hash,
                                                    const std::vector<GridCell>& grid,
                                                    const ExperimentConfig& cfg) {
  std::map<std::size_t, ResultRow> done;
  std::ifstream in(path);
  if (!in) return done;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
      if (j.at("hash").get<std::string>() != hash) continue;
      const auto index = j.at("index").get<std::size_t>();
      if (index >= grid.size()) continue;
      ResultRow row = row_from_json(j.at("row"));
      const GridCell& c = grid[index];
      if (row.pipeline != cfg.pipelines[c.pipeline].name() || row.sparsity != c.sparsity ||
          row.check != to_string(c.check) || row.seed != c.seed)
        continue;
      done[index] = std::move(row);
    } catch (const Json::exception&) {
      continue;
    }
  }
  return done;
}

}  // namespace detail

// Mean and sample std over the successful seeds of each (pipeline, check, sparsity).
inline std::vector<ResultRow> summarize(const std::vector<ResultRow>& detail_rows) {
  std::vector<ResultRow> out;
  std::map<std::tuple<std::string, std::string, double>, std::size_t> slot;
  std::vector<std::vector<const ResultRow*>> groups;
  for (const auto& r : detail_rows) {
    if (r.summary) continue;
    const auto key = std::make_tuple(r.pipeline, r.check, r.sparsity);
    auto [it, fresh] = slot.try_emplace(key, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(&r);
  }
  for (const auto& g : groups) {
    ResultRow s;
    s.pipeline = g.front()->pipeline;
    s.check = g.front()->check;
    s.sparsity = g.front()->sparsity;
    s.summary = true;
    std::vector<double> acc;
    std::vector<double> ratio_sum;
    std::size_t with_ratios = 0;
    for (const ResultRow* r : g) {
      s.seconds += r->seconds;
      if (r->failed()) continue;
      acc.push_back(r->accuracy);
      s.collapse = s.collapse || r->collapse;
      if (ratio_sum.empty()) ratio_sum.assign(r->ratios.size(), 0.0);
      if (r->ratios.size() == ratio_sum.size()) {
        for (std::size_t i = 0; i < ratio_sum.size(); ++i) ratio_sum[i] += r->ratios[i];
        ++with_ratios;
      }
    }
    s.count = acc.size();
    if (acc.empty()) {
      s.failure = "all seeds failed";
    } else {
      s.accuracy = mean_of(acc);
      s.stddev = sample_stddev(acc);
      for (double& x : ratio_sum) x /= static_cast<double>(with_ratios);
      s.ratios = std::move(ratio_sum);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Runs every grid cell not already recorded under this config's hash in
// <out>/cells-<hash>.jsonl, appending each finished cell as one line.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {}) {
  cfg.validate();
  const DataSplit data = load_dataset(cfg.dataset);
  const std::vector<LayerSpec> specs =
      preset_specs(cfg.preset, data.train.sample_shape, data.train.class_count);
  const std::vector<GridCell> grid = experiment_grid(cfg);
  const std::string hash = hash_hex(config_hash(cfg));
  const std::filesystem::path dir = effective_output_dir(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create output directory " + dir.string());

  ExperimentResult result;
  result.cells_file = dir / ("cells-" + hash + ".jsonl");
  std::map<std::size_t, ResultRow> done = detail::read_cells(result.cells_file, hash, grid, cfg);
  result.reused = done.size();

  std::vector<std::size_t> todo;
  for (const auto& c : grid)
    if (!done.count(c.index)) todo.push_back(c.index);
  if (options.stop_after && *options.stop_after < todo.size()) todo.resize(*options.stop_after);

  std::ofstream sink(result.cells_file, std::ios::app);
  require(sink.good(), ErrorKind::io, "cannot write " + result.cells_file.string());
  std::mutex writer;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < todo.size(); k = next++) {
      const GridCell& cell = grid[todo[k]];
      ResultRow row = run_cell(cfg, specs, data, cell);
      std::lock_guard<std::mutex> lock(writer);
      sink << Json{{"hash", hash}, {"index", cell.index}, {"row", detail::row_to_json(row)}}.dump()
           << '\n';
      sink.flush();
      if (options.on_row) options.on_row(row);
      done[cell.index] = std::move(row);
      ++result.executed;
    }
  };
  const unsigned workers = std::min<unsigned>(cfg.workers, static_cast<unsigned>(std::max<std::size_t>(todo.size(), 1)));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  require(sink.good(), ErrorKind::io, "failed writing " + result.cells_file.string());

  for (const auto& [index, row] : done) result.rows.push_back(row);
  result.complete = done.size() == grid.size();
  if (result.complete) {
    auto summary = summarize(result.rows);
    result.rows.insert(result.rows.end(), summary.begin(), summary.end());
  }
  return result;
}

}  // namespace prunelab
