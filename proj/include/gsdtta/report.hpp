#pragma once

#include "gsdtta/adapt.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace gsdtta {

/// `git describe` of the source tree at build time.
std::string version_string();

/// Machine-readable adaptation report: config echo, per-group accuracy,
/// per-batch losses.
nlohmann::ordered_json report_json(const StreamReport& report, const AdaptConfig& cfg);

/// batch,group,step,phase,l_pl,l_ent,l_div,l_cd,label_agreement
std::string diagnostics_csv(const StreamReport& report);

/// group,count,source_only,adapted with a final mean row.
std::string accuracy_csv(const StreamReport& report);
std::string accuracy_markdown(const StreamReport& report);

/// variant,<group...>,mean
std::string ablation_csv(const AblationTable& table);
std::string ablation_markdown(const AblationTable& table);

/// Writes `text` to `path`, throwing IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& text);

/// Fixed-format real for tables (%.17g).
std::string format_real(double v);

}  // namespace gsdtta
