#include "posediff/config.hpp"

#include <cstdlib>
#include <fstream>

#include "posediff/errors.hpp"

namespace posediff {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::ConfigError, "cannot open config file " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::ConfigError,
                 path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(ErrorCode::ConfigError, path.string() + ": empty key");
        if (kv.count(key))
            fail(ErrorCode::ConfigError, path.string() + ": duplicate key " + key);
        kv[key] = value;
    }
    return kv;
}

void reject_unknown_keys(const std::map<std::string, std::string>& kv,
                         const std::set<std::string>& allowed, const std::string& context) {
    for (const auto& [k, _] : kv)
        if (!allowed.count(k))
            fail(ErrorCode::ConfigError, context + ": unknown config key '" + k + "'");
}

uint64_t env_seed_default() {
    const char* v = std::getenv("POSEDIFF_SEED");
    if (!v || !*v) return 0;
    return std::strtoull(v, nullptr, 10);
}

}  // namespace posediff
