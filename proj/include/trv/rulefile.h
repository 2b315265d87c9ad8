#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "trv/ir.h"

namespace trv {

// Parses one rule document. Errors carry the JSON pointer of the offending node.
RewriteRule parse_rule(const nlohmann::json& doc);

// Reads and parses a rule file; syntax errors report line and column.
RewriteRule load_rule_file(const std::string& path);

// Rule files under a directory (sorted), or the path itself if it is a file.
std::vector<std::string> rule_files(const std::string& path);

}  // namespace trv
