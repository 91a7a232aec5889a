#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dvsnet {

/// Ordered key=value settings. Later assignments override earlier ones.
using KeyValues = std::map<std::string, std::string>;

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<text>");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

/// Shortest decimal text that round-trips the double.
std::string format_double(double v);

double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<int> parse_int_list(const std::string& key, const std::string& value);

}  // namespace dvsnet
