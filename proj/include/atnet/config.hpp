#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace atnet {

/// Bad key, malformed value or missing required setting. Maps to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ConfigType { integer, unsigned_integer, real, boolean, text };

/// Flat key=value run configuration. Every key has a built-in default and a type.
class RunConfig {
public:
    /// Built-in defaults.
    RunConfig();

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    /// Sets key from its text form. Throws UsageError on unknown key or type mismatch.
    void set(const std::string& key, const std::string& value);

    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::filesystem::path get_path(const std::string& key) const { return get_string(key); }

    /// "key=value" lines in key order; parsing it back reproduces this config.
    std::string serialize() const;
    void write(const std::filesystem::path& path) const;

    bool operator==(const RunConfig&) const = default;

private:
    struct Entry {
        ConfigType type;
        std::string value;
        bool operator==(const Entry&) const = default;
    };
    const Entry& entry(const std::string& key, ConfigType type) const;

    std::map<std::string, Entry> values_;
};

/// Parses flat key=value text ('#' starts a comment line). Throws UsageError with the
/// line number on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

/// Precedence: overrides > config file > defaults. An empty path means no file.
RunConfig resolve_config(const std::filesystem::path& config_file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

inline constexpr const char* kResolvedConfigName = "resolved_config.txt";

}  // namespace atnet
