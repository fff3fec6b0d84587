#pragma once

#include "gsdtta/adapt.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gsdtta {

/// Keys accepted in an adaptation config, in echo order.
const std::vector<std::string>& adapt_config_keys();

/// Sets one key from its textual value. Unknown keys and malformed values
/// throw UsageError.
void set_config_value(AdaptConfig& cfg, std::string_view key, std::string_view value);

/// Parses either a JSON object or flat `key = value` lines ('#' starts a
/// comment) on top of `base`. The result is validated.
AdaptConfig parse_adapt_config(std::string_view text, const AdaptConfig& base = {});
AdaptConfig load_adapt_config(const std::filesystem::path& path, const AdaptConfig& base = {});

nlohmann::ordered_json to_json(const AdaptConfig& cfg);

std::string to_string(LabelRule rule);
std::string to_string(LabelRefresh refresh);
std::string to_string(WeightKernel kernel);

}  // namespace gsdtta
