#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "aornet/harness/train.hpp"

namespace aornet::harness {

// Sweeps one configuration axis, trains value x seed runs off a shared base
// config, and reports the best-checkpoint metrics per value. Axes:
//   o_max          — object slots per frame (relation budget rederived)
//   tau            — alignment softmax temperature
//   relation_depth — relation encoder layer count
//   modules        — base | +CoA | +CoA+MoT (model depth)
//   modality       — sensor set, '+'-joined ("RGB", "RGB+IR+Depth", ...)

struct AblationRun {
  std::uint64_t seed = 0;
  fs::path run_dir;
  EvalReport report;  // best-val epoch of that run
};

struct AblationRow {
  std::string value;
  std::vector<AblationRun> runs;
  double top1 = 0.0, top5 = 0.0, mean1 = 0.0;  // means over seeds
};

struct AblationTable {
  std::string axis;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  json to_json() const {
    json rws = json::array();
    for (const auto& r : rows) {
      json runs = json::array();
      for (const auto& run : r.runs)
        runs.push_back({{"seed", run.seed},
                        {"dir", run.run_dir.string()},
                        {"top1", run.report.top1},
                        {"top5", run.report.top5},
                        {"mean1", run.report.mean1}});
      rws.push_back({{"value", r.value},
                     {"top1", r.top1},
                     {"top5", r.top5},
                     {"mean1", r.mean1},
                     {"runs", runs}});
    }
    return json{{"axis", axis}, {"seeds", seeds}, {"rows", rws}};
  }

  std::string to_markdown() const {
    char buf[64];
    std::string md = "| " + axis + " | Top-1 | Top-5 | Mean-1 |\n|---|---|---|---|\n";
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f | %.2f |\n", r.value.c_str(), r.top1,
                    r.top5, r.mean1);
      md += buf;
    }
    return md;
  }
};

namespace detail {

inline int parse_int(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ValidationError(what + " must be an integer, got \"" + s + "\"");
  }
  if (pos != s.size()) throw ValidationError(what + " must be an integer, got \"" + s + "\"");
  return v;
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ValidationError(what + " must be a number, got \"" + s + "\"");
  }
  if (pos != s.size()) throw ValidationError(what + " must be a number, got \"" + s + "\"");
  return v;
}

inline std::vector<std::string> split_plus(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == '+') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Directory-safe name for an axis value ("+CoA+MoT" -> "CoA-MoT").
inline std::string value_slug(const std::string& v) {
  std::string s;
  for (char c : v) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_')
      s.push_back(c);
    else if (!s.empty() && s.back() != '-')
      s.push_back('-');
  }
  while (!s.empty() && s.back() == '-') s.pop_back();
  return s.empty() ? "value" : s;
}

inline std::string module_variant(const std::string& v) {
  if (v == "base" || v == "Base") return "base";
  if (v == "+CoA" || v == "coa") return "coa";
  if (v == "+CoA+MoT" || v == "full") return "full";
  throw ValidationError("modules axis takes base, +CoA, or +CoA+MoT; got \"" + v + "\"");
}

}  // namespace detail

// One axis value applied onto a copy of the base config.
inline TrainConfig apply_axis(const TrainConfig& base, const std::string& axis,
                              const std::string& value) {
  TrainConfig c = base;
  if (axis == "o_max") {
    c.model.coa.o_max = detail::parse_int(value, "o_max");
    c.model.coa.r_max = 0;  // keep the 2*(o_max-1) coupling instead of a stale fixed budget
  } else if (axis == "tau") {
    c.model.align.tau = detail::parse_double(value, "tau");
  } else if (axis == "relation_depth") {
    c.model.coa.relation_layers = detail::parse_int(value, "relation_depth");
  } else if (axis == "modules") {
    c.model.variant = detail::module_variant(value);
  } else if (axis == "modality") {
    c.model.modalities = detail::split_plus(value);
  } else {
    throw ValidationError("unknown ablation axis \"" + axis +
                          "\" (o_max, tau, relation_depth, modules, modality)");
  }
  return c;
}

inline AblationTable run_ablation(const TrainConfig& base, const std::string& axis,
                                  const std::vector<std::string>& values,
                                  const std::vector<std::uint64_t>& seeds,
                                  const fs::path& out_dir) {
  require(!values.empty(), "ablation needs at least one axis value");
  require(!seeds.empty(), "ablation needs at least one seed");
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = i + 1; j < values.size(); ++j)
      require(values[i] != values[j], "duplicate ablation value: " + values[i]);

  AblationTable table;
  table.axis = axis;
  table.seeds = seeds;
  fs::create_directories(out_dir);

  for (const auto& value : values) {
    TrainConfig vc = apply_axis(base, axis, value);
    AblationRow row;
    row.value = value;
    for (std::uint64_t seed : seeds) {
      TrainConfig rc = vc;
      rc.seed = seed;
      rc.out_dir = (out_dir / detail::value_slug(value) / ("seed-" + std::to_string(seed))).string();
      TrainResult res = train(rc);
      row.runs.push_back({seed, res.out_dir, res.best_report});
      row.top1 += res.best_report.top1;
      row.top5 += res.best_report.top5;
      row.mean1 += res.best_report.mean1;
    }
    row.top1 /= double(seeds.size());
    row.top5 /= double(seeds.size());
    row.mean1 /= double(seeds.size());
    table.rows.push_back(std::move(row));
  }

  data::write_json_file(out_dir / "ablation.json", table.to_json());
  std::ofstream md(out_dir / "ablation.md");
  require(md.good(), "cannot write ablation table under " + out_dir.string());
  md << table.to_markdown();
  return table;
}

}  // namespace aornet::harness
