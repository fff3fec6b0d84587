#include "gsdtta/report.hpp"

#include "gsdtta/config.hpp"
#include "gsdtta/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#ifndef GSDTTA_VERSION
#define GSDTTA_VERSION "unknown"
#endif

namespace gsdtta {

std::string version_string() { return GSDTTA_VERSION; }

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

nlohmann::ordered_json report_json(const StreamReport& report, const AdaptConfig& cfg) {
  nlohmann::ordered_json j;
  j["version"] = version_string();
  j["seed"] = cfg.seed;
  j["config"] = to_json(cfg);
  auto& groups = j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : report.groups) {
    groups.push_back({{"name", g.name},
                      {"count", g.count},
                      {"source_correct", g.source_correct},
                      {"adapted_correct", g.adapted_correct},
                      {"source_accuracy", g.source_accuracy()},
                      {"adapted_accuracy", g.adapted_accuracy()}});
  }
  j["mean"] = {{"source_accuracy", report.mean_source_accuracy()},
               {"adapted_accuracy", report.mean_adapted_accuracy()}};
  auto& batches = j["batches"] = nlohmann::ordered_json::array();
  for (const auto& b : report.batches) {
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const auto& s : b.steps) {
      steps.push_back({{"step", s.step},
                       {"phase", s.input_phase ? "input" : "model"},
                       {"l_pl", s.parts.pl},
                       {"l_ent", s.parts.ent},
                       {"l_div", s.parts.div},
                       {"l_cd", s.parts.cd},
                       {"total", s.total},
                       {"label_agreement", s.label_agreement},
                       {"zero_norm_terms", s.zero_norm_terms}});
    }
    batches.push_back({{"group", b.group},
                       {"index", b.index},
                       {"size", b.size},
                       {"input_steps", b.input_steps},
                       {"model_steps", b.model_steps},
                       {"delta_norm", b.delta_norm},
                       {"steps", std::move(steps)}});
  }
  return j;
}

std::string diagnostics_csv(const StreamReport& report) {
  std::ostringstream os;
  os << "batch,group,step,phase,l_pl,l_ent,l_div,l_cd,label_agreement\n";
  for (const auto& b : report.batches) {
    for (const auto& s : b.steps) {
      os << b.index << ',' << b.group << ',' << s.step << ',' << (s.input_phase ? "input" : "model") << ','
         << format_real(s.parts.pl) << ',' << format_real(s.parts.ent) << ',' << format_real(s.parts.div) << ','
         << format_real(s.parts.cd) << ',';
      if (s.label_agreement >= 0.0) os << format_real(s.label_agreement);
      os << '\n';
    }
  }
  return os.str();
}

std::string accuracy_csv(const StreamReport& report) {
  std::ostringstream os;
  os << "group,count,source_only,adapted\n";
  int total = 0;
  for (const auto& g : report.groups) {
    os << g.name << ',' << g.count << ',' << format_real(g.source_accuracy()) << ','
       << format_real(g.adapted_accuracy()) << '\n';
    total += g.count;
  }
  os << "mean," << total << ',' << format_real(report.mean_source_accuracy()) << ','
     << format_real(report.mean_adapted_accuracy()) << '\n';
  return os.str();
}

std::string accuracy_markdown(const StreamReport& report) {
  std::ostringstream os;
  os << "| corruption | clouds | source-only (%) | adapted (%) |\n|---|---:|---:|---:|\n";
  int total = 0;
  for (const auto& g : report.groups) {
    os << "| " << g.name << " | " << g.count << " | " << percent(g.source_accuracy()) << " | "
       << percent(g.adapted_accuracy()) << " |\n";
    total += g.count;
  }
  os << "| **mean** | " << total << " | " << percent(report.mean_source_accuracy()) << " | "
     << percent(report.mean_adapted_accuracy()) << " |\n";
  return os.str();
}

std::string ablation_csv(const AblationTable& table) {
  std::ostringstream os;
  os << "variant";
  for (const auto& g : table.groups) os << ',' << g;
  os << ",mean\n";
  for (const auto& row : table.rows) {
    os << row.variant;
    for (double a : row.group_accuracy) os << ',' << format_real(a);
    os << ',' << format_real(row.mean) << '\n';
  }
  return os.str();
}

std::string ablation_markdown(const AblationTable& table) {
  std::ostringstream os;
  os << "| variant |";
  for (const auto& g : table.groups) os << ' ' << g << " |";
  os << " mean |\n|---|";
  for (std::size_t i = 0; i <= table.groups.size(); ++i) os << "---:|";
  os << '\n';
  for (const auto& row : table.rows) {
    os << "| " << row.variant << " |";
    for (double a : row.group_accuracy) os << ' ' << percent(a) << " |";
    os << ' ' << percent(row.mean) << " |\n";
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace gsdtta
