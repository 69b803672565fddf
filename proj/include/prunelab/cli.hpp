#pragma once

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/sanity.hpp"
#include "prunelab/schedules.hpp"
#include "prunelab/tickets.hpp"
#include "prunelab/harness/config.hpp"
#include "prunelab/harness/data_sources.hpp"
#include "prunelab/harness/experiment.hpp"
#include "prunelab/harness/report.hpp"

namespace prunelab {

// Matches the preset default geometry (1x8x8 inputs, 10 classes).
inline constexpr const char* kDefaultCliData = "blobs:k=10,d=64,n=600,seed=0";

namespace detail {

inline std::string ratio_line(const std::vector<double>& ratios) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < ratios.size(); ++i) s << (i ? " " : "") << ratios[i];
  return s.str();
}

}  // namespace detail

// Exit codes: 0 success, 1 library error ("error: <kind>: <message>" on err),
// 2 usage error (same line followed by usage text).
inline int cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lottery-ticket pruning laboratory", "prunelab"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  std::string config_path;
  unsigned workers = 0;
  std::string output_dir;
  auto* run = app.add_subcommand("run", "Run an experiment grid from a JSON config");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--workers", workers, "Override the worker count");
  run->add_option("--output-dir", output_dir, "Override the output directory");

  std::string kind_name, preset = "mlp-4", family_name = "plain", schedule_name = "smart";
  std::string data_spec, ticket_out = "ticket.json";
  double sparsity = 0.9, round_fraction = 0.2;
  RngSeed seed = 0;
  int epochs = -1, rewind_epoch = 0;
  bool preserve_output = false;
  auto* ticket = app.add_subcommand("ticket", "Construct one ticket and save it as JSON");
  ticket->add_option("kind", kind_name, "Ticket kind")->required();
  ticket->add_option("--preset", preset, "Architecture preset (mlp-4, conv-5)");
  ticket->add_option("--sparsity", sparsity, "Target sparsity");
  ticket->add_option("--seed", seed, "Seed");
  ticket->add_option("--family", family_name, "Architecture family (plain, fast)");
  ticket->add_option("--schedule", schedule_name, "Keep-ratio schedule for random tickets");
  ticket->add_option("--data", data_spec, "Data source (blobs:..., idx:..., csv:...)");
  ticket->add_option("--out", ticket_out, "Output ticket file");
  ticket->add_option("--epochs", epochs, "Pretraining epochs");
  ticket->add_option("--rewind-epoch", rewind_epoch, "Weight-rewinding checkpoint epoch");
  ticket->add_option("--round-fraction", round_fraction, "IMP per-round pruning fraction");
  ticket->add_flag("--preserve-output", preserve_output, "Keep the output layer dense");

  std::string ticket_path, check_name, check_out;
  RngSeed check_seed = 0;
  auto* check = app.add_subcommand("check", "Apply a structural sanity check to a ticket file");
  check->add_option("ticket-file", ticket_path, "Ticket file")->required();
  check->add_option("check-name", check_name, "rearrange or shuffle-weights")->required();
  check->add_option("--seed", check_seed, "Check seed");
  check->add_option("--out", check_out, "Output ticket file");

  std::string ratio_preset, ratio_family;
  double ratio_sparsity = 0.0;
  std::string ratio_schedule = "smart";
  auto* ratios = app.add_subcommand("ratios", "Print a layerwise keep-ratio schedule");
  ratios->add_option("preset", ratio_preset, "Architecture preset")->required();
  ratios->add_option("sparsity", ratio_sparsity, "Target sparsity")->required();
  ratios->add_option("family", ratio_family, "Architecture family (plain, fast)")->required();
  ratios->add_option("--schedule", ratio_schedule, "Schedule kind");

  std::string rows_path, format_name, report_out;
  auto* report = app.add_subcommand("report", "Format a results CSV");
  report->add_option("rows-file", rows_path, "Results CSV")->required();
  report->add_option("--format", format_name, "csv or markdown")->required();
  report->add_option("--out", report_out, "Output file (default: stdout)");

  auto usage = [&](const std::string& msg) {
    err << "error: usage: " << msg << "\n" << app.help();
    return 2;
  };

  if (argc > 1 && argv[1][0] != '-') {
    bool known = false;
    for (const CLI::App* sub : app.get_subcommands({})) known = known || sub->get_name() == argv[1];
    if (!known) return usage("unknown subcommand '" + std::string(argv[1]) + "'");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return usage(e.what());
  }

  try {
    if (run->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      if (workers) cfg.workers = workers;
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      const std::string hash = hash_hex(config_hash(cfg));
      RunOptions opts;
      opts.on_row = [&](const ResultRow& r) {
        err << r.pipeline << " " << r.check << " p=" << r.sparsity << " seed=" << *r.seed << " -> "
            << (r.failed() ? "failed (" + *r.failure + ")" : std::to_string(r.accuracy)) << "\n";
      };
      const ExperimentResult res = run_experiment(cfg, opts);
      const auto dir = effective_output_dir(cfg);
      const auto csv = dir / ("results-" + hash + ".csv");
      emit_report(res.rows, ReportFormat::csv, csv);
      emit_report(res.rows, ReportFormat::markdown, dir / ("results-" + hash + ".md"));
      out << csv.string() << "\n";
      out << "executed " << res.executed << " reused " << res.reused << "\n";
      return 0;
    }
    if (ticket->parsed()) {
      TicketRequest r;
      r.kind = parse_ticket_kind(kind_name);
      r.target_sparsity = sparsity;
      r.seed = seed;
      r.family = parse_family(family_name);
      r.schedule = parse_schedule_kind(schedule_name);
      r.rewind_epoch = rewind_epoch;
      r.round_fraction = round_fraction;
      r.preserve_output = preserve_output;
      if (epochs >= 0) r.pretrain.epochs = epochs;
      const DataSplit data = load_dataset(parse_data_spec(data_spec.empty() ? kDefaultCliData : data_spec));
      r.specs = preset_specs(preset, data.train.sample_shape, data.train.class_count);
      const Ticket t = make_ticket(r, data.train);
      save_ticket(ticket_out, t);
      out << ticket_out << "\n";
      out << "sparsity " << prunelab::sparsity(t.mask) << "\n";
      out << "ratios " << detail::ratio_line(keep_ratios(t.mask)) << "\n";
      return 0;
    }
    if (check->parsed()) {
      const SanityCheck kind = parse_check(check_name);
      if (!is_structural_check(kind)) return usage(check_name + " is not a structural check");
      const Ticket t = apply_structural_check(load_ticket(ticket_path), kind, check_seed);
      std::filesystem::path dest = check_out;
      if (dest.empty()) {
        const std::filesystem::path src = ticket_path;
        dest = src.parent_path() / (src.stem().string() + "-" + check_name + ".json");
      }
      save_ticket(dest, t);
      out << dest.string() << "\n";
      return 0;
    }
    if (ratios->parsed()) {
      const auto specs = preset_specs(ratio_preset);
      const auto sizes = layer_sizes(specs);
      const KeepRatioSchedule s =
          ablation_schedule(parse_schedule_kind(ratio_schedule), sizes, ratio_sparsity, parse_family(ratio_family));
      out << "layer weights quota ratio\n";
      for (std::size_t l = 0; l < sizes.size(); ++l) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%zu %zu %zu %.6f\n", l + 1, sizes[l], s.quotas[l], s.ratios[l]);
        out << buf;
      }
      char buf[128];
      std::snprintf(buf, sizeof buf, "retained %zu/%zu = %.6f\n", s.total_quota(), total_weights(sizes),
                    static_cast<double>(s.total_quota()) / static_cast<double>(total_weights(sizes)));
      out << buf;
      return 0;
    }
    if (report->parsed()) {
      const ReportFormat format = parse_report_format(format_name);
      const auto rows = load_rows(rows_path);
      if (report_out.empty())
        out << format_report(rows, format);
      else
        emit_report(rows, format, report_out);
      return 0;
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::usage) return usage(e.what());
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return usage("no subcommand");
}

}  // namespace prunelab
