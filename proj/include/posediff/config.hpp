#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace posediff {

// Flat `key = value` files, '#' comments. Unknown keys are rejected against
// the caller's documented key set.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);

void reject_unknown_keys(const std::map<std::string, std::string>& kv,
                         const std::set<std::string>& allowed, const std::string& context);

// Lowest-priority seed default, from POSEDIFF_SEED when set.
uint64_t env_seed_default();

}  // namespace posediff
