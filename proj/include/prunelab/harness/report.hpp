#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/tickets.hpp"
#include "prunelab/harness/config.hpp"

namespace prunelab {

// One retrained cell, or (seed empty, summary set) the aggregate over seeds.
// Accuracy is the best-epoch test accuracy in percent.
struct ResultRow {
  std::string pipeline;
  std::string check;
  double sparsity = 0.0;
  std::optional<RngSeed> seed;
  double accuracy = 0.0;
  std::vector<double> ratios;
  double seconds = 0.0;
  bool collapse = false;
  bool summary = false;
  double stddev = 0.0;
  std::size_t count = 0;
  std::optional<std::string> failure;

  bool failed() const { return failure.has_value(); }

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline constexpr std::string_view kCsvHeader = "pipeline,check,sparsity,seed,accuracy,ratios,seconds,flags";

namespace detail {

// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  require(r.ec == std::errc() && r.ptr == s.data() + s.size(), ErrorKind::parse,
          where + ": malformed number '" + std::string(s) + "'");
  return x;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// RFC 4180 records; quoted fields may span lines.
inline std::vector<std::vector<std::string>> split_csv(std::string_view text, const std::string& name) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      require(field.empty(), ErrorKind::parse, name + ": stray quote at byte " + std::to_string(i));
      quoted = any = true;
    } else if (c == ',') {
      rec.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        rec.push_back(std::move(field));
        records.push_back(std::move(rec));
      }
      rec.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  require(!quoted, ErrorKind::parse, name + ": unterminated quote");
  if (any || !field.empty()) {
    rec.push_back(std::move(field));
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::string join_ratios(const std::vector<double>& ratios) {
  std::string s;
  for (std::size_t i = 0; i < ratios.size(); ++i) s += (i ? ";" : "") + format_double(ratios[i]);
  return s;
}

// ';'-separated tokens; "failed=" is always last and owns the rest of the field.
inline std::string format_flags(const ResultRow& r) {
  std::vector<std::string> tokens;
  if (r.collapse) tokens.emplace_back("collapse");
  if (r.summary) {
    tokens.emplace_back("summary");
    tokens.push_back("std=" + format_double(r.stddev));
    tokens.push_back("n=" + std::to_string(r.count));
  }
  if (r.failure) tokens.push_back("failed=" + *r.failure);
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) s += (i ? ";" : "") + tokens[i];
  return s;
}

inline void parse_flags(std::string_view flags, ResultRow& r, const std::string& where) {
  while (!flags.empty()) {
    if (flags.starts_with("failed=")) {
      r.failure = std::string(flags.substr(7));
      return;
    }
    const auto semi = flags.find(';');
    const std::string_view tok = flags.substr(0, semi);
    if (tok == "collapse") r.collapse = true;
    else if (tok == "summary") r.summary = true;
    else if (tok.starts_with("std=")) r.stddev = parse_double(tok.substr(4), where);
    else if (tok.starts_with("n=")) r.count = static_cast<std::size_t>(parse_double(tok.substr(2), where));
    else fail(ErrorKind::parse, where + ": unknown flag '" + std::string(tok) + "'");
    if (semi == std::string_view::npos) break;
    flags.remove_prefix(semi + 1);
  }
}

inline std::string format_cell(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean, sd);
  return buf;
}

}  // namespace detail

inline std::string format_csv(const std::vector<ResultRow>& rows) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += detail::csv_field(r.pipeline) + ',' + detail::csv_field(r.check) + ',' +
           detail::format_double(r.sparsity) + ',' + (r.seed ? std::to_string(*r.seed) : "*") + ',' +
           detail::format_double(r.accuracy) + ',' + detail::join_ratios(r.ratios) + ',' +
           detail::format_double(r.seconds) + ',' + detail::csv_field(detail::format_flags(r)) + '\n';
  }
  return out;
}

inline std::vector<ResultRow> parse_csv(std::string_view text, const std::string& name = "rows") {
  const auto records = detail::split_csv(text, name);
  require(!records.empty(), ErrorKind::parse, name + ": missing header");
  std::string header;
  for (std::size_t i = 0; i < records[0].size(); ++i) header += (i ? "," : "") + records[0][i];
  require(header == kCsvHeader, ErrorKind::schema, name + ": unexpected header '" + header + "'");
  std::vector<ResultRow> rows;
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& f = records[k];
    const std::string where = name + " record " + std::to_string(k);
    require(f.size() == 8, ErrorKind::parse, where + ": expected 8 fields");
    ResultRow r;
    r.pipeline = f[0];
    r.check = f[1];
    r.sparsity = detail::parse_double(f[2], where);
    if (f[3] != "*") {
      std::uint64_t s = 0;
      const auto res = std::from_chars(f[3].data(), f[3].data() + f[3].size(), s);
      require(res.ec == std::errc() && res.ptr == f[3].data() + f[3].size(), ErrorKind::parse,
              where + ": malformed seed '" + f[3] + "'");
      r.seed = s;
    }
    r.accuracy = detail::parse_double(f[4], where);
    require(r.accuracy >= 0.0 && r.accuracy <= 100.0, ErrorKind::schema,
            where + ": accuracy outside [0, 100]");
    std::string_view ratios = f[5];
    while (!ratios.empty()) {
      const auto semi = ratios.find(';');
      r.ratios.push_back(detail::parse_double(ratios.substr(0, semi), where));
      if (semi == std::string_view::npos) break;
      ratios.remove_prefix(semi + 1);
    }
    r.seconds = detail::parse_double(f[6], where);
    detail::parse_flags(f[7], r, where);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Per-seed best accuracies averaged; one table per pipeline, checks by sparsity.
inline std::string format_markdown(const std::vector<ResultRow>& rows) {
  std::vector<std::string> pipelines;
  std::map<std::string, std::vector<std::string>> checks;
  std::map<std::string, std::vector<double>> sparsities;
  struct Cell {
    std::vector<double> acc;
    bool collapse = false;
  };
  std::map<std::tuple<std::string, std::string, double>, Cell> cells;
  auto remember = [](auto& v, const auto& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const auto& r : rows) {
    if (r.summary) continue;
    remember(pipelines, r.pipeline);
    remember(checks[r.pipeline], r.check);
    remember(sparsities[r.pipeline], r.sparsity);
    Cell& c = cells[{r.pipeline, r.check, r.sparsity}];
    if (r.failed()) continue;
    c.acc.push_back(r.accuracy);
    c.collapse = c.collapse || r.collapse;
  }
  std::string out = "Best-epoch test accuracy (%), mean±std over seeds.\n";
  for (const auto& p : pipelines) {
    out += "\n### " + p + "\n\n| check |";
    for (double s : sparsities[p]) out += " p=" + detail::format_double(s) + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < sparsities[p].size(); ++i) out += "---|";
    out += '\n';
    for (const auto& c : checks[p]) {
      out += "| " + c + " |";
      for (double s : sparsities[p]) {
        const auto it = cells.find({p, c, s});
        if (it == cells.end() || it->second.acc.empty()) {
          out += " failed |";
          continue;
        }
        std::string cell = detail::format_cell(mean_of(it->second.acc), sample_stddev(it->second.acc));
        if (it->second.collapse) cell = "*" + cell + "*";
        out += " " + cell + " |";
      }
      out += '\n';
    }
  }
  return out;
}

enum class ReportFormat { csv, markdown };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  fail(ErrorKind::usage, "unknown report format '" + std::string(s) + "'");
}

inline std::string format_report(const std::vector<ResultRow>& rows, ReportFormat format) {
  require(!rows.empty(), ErrorKind::domain, "no rows to report");
  return format == ReportFormat::csv ? format_csv(rows) : format_markdown(rows);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write " + path.string());
  out << text;
  out.flush();
  require(out.good(), ErrorKind::io, "failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void emit_report(const std::vector<ResultRow>& rows, ReportFormat format,
                        const std::filesystem::path& path) {
  write_text(path, format_report(rows, format));
}

inline std::vector<ResultRow> load_rows(const std::filesystem::path& path) {
  return parse_csv(read_text(path), path.string());
}

// ---- ticket files (JSON) ----

inline Json specs_to_json(const std::vector<LayerSpec>& specs) {
  Json a = Json::array();
  for (const auto& s : specs) {
    Json j{{"kind", s.kind == LayerKind::conv ? "conv" : "dense"},
           {"fan_in", s.fan_in},
           {"fan_out", s.fan_out},
           {"output", s.is_output}};
    if (s.kernel) j["kernel"] = {s.kernel->h, s.kernel->w};
    a.push_back(j);
  }
  return a;
}

inline std::vector<LayerSpec> specs_from_json(const Json& a) {
  require(a.is_array(), ErrorKind::schema, "specs must be an array");
  std::vector<LayerSpec> specs;
  for (const auto& j : a) {
    detail::reject_unknown(j, {"kind", "fan_in", "fan_out", "output", "kernel"}, "layer spec");
    LayerSpec s;
    const std::string kind = detail::require_string(j.at("kind"), "layer kind");
    require(kind == "dense" || kind == "conv", ErrorKind::schema, "unknown layer kind '" + kind + "'");
    s.kind = kind == "conv" ? LayerKind::conv : LayerKind::dense;
    s.fan_in = detail::require_unsigned(j.at("fan_in"), "fan_in");
    s.fan_out = detail::require_unsigned(j.at("fan_out"), "fan_out");
    s.is_output = detail::require_bool(j.at("output"), "output");
    if (s.kind == LayerKind::conv) {
      const Json& k = j.at("kernel");
      require(k.is_array() && k.size() == 2, ErrorKind::schema, "conv kernel must be [h, w]");
      s.kernel = KernelSize{detail::require_unsigned(k[0], "kernel"), detail::require_unsigned(k[1], "kernel")};
    }
    specs.push_back(s);
  }
  return specs;
}

inline Json checkpoint_to_json(const Checkpoint& c) {
  return Json{{"epoch", c.epoch}, {"weights", c.weights.weights}, {"rng_state", c.rng_state}};
}

inline Json ticket_to_json(const Ticket& t) {
  const Provenance& p = t.provenance;
  Json prov{{"kind", std::string(to_string(p.kind))},
            {"criterion", p.criterion},
            {"schedule", p.schedule},
            {"family", std::string(to_string(p.family))},
            {"checks", p.checks},
            {"check_seeds", p.check_seeds},
            {"seed", p.seed},
            {"target_sparsity", p.target_sparsity},
            {"preserve_output", p.preserve_output},
            {"scoring_batch", p.scoring_batch},
            {"schedule_offset", p.schedule_offset},
            {"round_fraction", p.round_fraction},
            {"round_sparsities", p.round_sparsities}};
  prov["pretrain"] = p.pretrain ? train_to_json(*p.pretrain) : Json();
  Json ckpts = Json::array();
  for (const auto& c : p.checkpoints) ckpts.push_back(checkpoint_to_json(c));
  prov["checkpoints"] = ckpts;
  Json mask = Json::array();
  for (const auto& l : t.mask.layers) {
    std::string bits(l.size(), '0');
    for (std::size_t i = 0; i < l.size(); ++i) bits[i] = l[i] ? '1' : '0';
    mask.push_back(bits);
  }
  return Json{{"format", "prunelab-ticket"},
              {"version", 1},
              {"specs", specs_to_json(t.weights.specs)},
              {"mask", mask},
              {"weights", t.weights.weights},
              {"provenance", prov}};
}

inline LayerVectors layer_vectors_from_json(const Json& j, const char* what) {
  require(j.is_array(), ErrorKind::schema, std::string(what) + " must be an array of arrays");
  LayerVectors v;
  for (const auto& l : j) {
    require(l.is_array(), ErrorKind::schema, std::string(what) + " must be an array of arrays");
    std::vector<double> xs;
    for (const auto& x : l) xs.push_back(detail::require_number(x, what));
    v.push_back(std::move(xs));
  }
  return v;
}

inline Ticket ticket_from_json(const Json& j) {
  return detail::translate_usage<Ticket>([&] {
    require(j.is_object() && j.value("format", "") == "prunelab-ticket", ErrorKind::schema,
            "not a ticket file");
    Ticket t;
    t.weights.specs = specs_from_json(j.at("specs"));
    t.weights.weights = layer_vectors_from_json(j.at("weights"), "weights");
    t.weights.validate();
    for (const auto& bits : j.at("mask")) {
      const std::string s = detail::require_string(bits, "mask layer");
      std::vector<std::uint8_t> layer(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        require(s[i] == '0' || s[i] == '1', ErrorKind::schema, "mask bits must be 0 or 1");
        layer[i] = s[i] == '1';
      }
      t.mask.layers.push_back(std::move(layer));
    }
    require_aligned(t.mask, t.weights.sizes(), "ticket file");
    const Json& p = j.at("provenance");
    Provenance& pv = t.provenance;
    pv.kind = parse_ticket_kind(detail::require_string(p.at("kind"), "kind"));
    pv.criterion = detail::require_string(p.at("criterion"), "criterion");
    pv.schedule = detail::require_string(p.at("schedule"), "schedule");
    pv.family = parse_family(detail::require_string(p.at("family"), "family"));
    for (const auto& c : p.at("checks")) pv.checks.push_back(detail::require_string(c, "check"));
    for (const auto& c : p.at("check_seeds")) pv.check_seeds.push_back(detail::require_unsigned(c, "check seed"));
    pv.seed = detail::require_unsigned(p.at("seed"), "seed");
    pv.target_sparsity = detail::require_number(p.at("target_sparsity"), "target_sparsity");
    pv.preserve_output = detail::require_bool(p.at("preserve_output"), "preserve_output");
    for (const auto& i : p.at("scoring_batch")) pv.scoring_batch.push_back(detail::require_unsigned(i, "scoring batch"));
    pv.schedule_offset = static_cast<int>(detail::require_integer(p.at("schedule_offset"), "schedule_offset"));
    pv.round_fraction = detail::require_number(p.at("round_fraction"), "round_fraction");
    for (const auto& s : p.at("round_sparsities")) pv.round_sparsities.push_back(detail::require_number(s, "round sparsity"));
    if (!p.at("pretrain").is_null()) pv.pretrain = train_from_json(p.at("pretrain"));
    for (const auto& c : p.at("checkpoints")) {
      Checkpoint ck;
      ck.epoch = static_cast<int>(detail::require_integer(c.at("epoch"), "checkpoint epoch"));
      ck.weights.specs = t.weights.specs;
      ck.weights.weights = layer_vectors_from_json(c.at("weights"), "checkpoint weights");
      ck.weights.validate();
      ck.rng_state = detail::require_string(c.at("rng_state"), "rng_state");
      pv.checkpoints.push_back(std::move(ck));
    }
    return t;
  });
}

inline void save_ticket(const std::filesystem::path& path, const Ticket& t) {
  write_text(path, ticket_to_json(t).dump() + "\n");
}

inline Ticket load_ticket(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what() + " (byte " + std::to_string(e.byte) + ")");
  }
  try {
    return ticket_from_json(j);
  } catch (const Json::exception& e) {
    fail(ErrorKind::schema, path.string() + ": " + e.what());
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace prunelab
