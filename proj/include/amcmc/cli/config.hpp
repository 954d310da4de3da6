#pragma once

// Flat key=value config with [sections]. Keys are addressed as
// "section.key"; keys before the first section header live in "run".

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace amcmc::cli {

/// Bad config syntax, unknown key or badly typed value. Maps to exit code 2.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class Config {
  public:
    static Config parse(std::string_view text, const std::string& source = "<config>");
    static Config load(const std::filesystem::path& path);

    /// key must be "section.key".
    void set(const std::string& key, const std::string& value);
    /// Parses "section.key=value".
    void set_assignment(std::string_view assignment);
    bool has(const std::string& key) const;

    // Typed getters; the default is recorded as the effective value.
    std::string get_string(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    std::int64_t get_int(const std::string& key, std::int64_t def) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<std::int64_t> get_int_list(const std::string& key, const std::vector<std::int64_t>& def) const;
    std::vector<std::string> get_string_list(const std::string& key, const std::vector<std::string>& def) const;
    std::optional<std::string> get_optional(const std::string& key) const;

    /// Keys read so far with their resolved values, in config-file syntax.
    std::string effective() const;

    /// Throws ConfigError for keys in unknown sections, and for unread keys
    /// in sections that were consulted.
    void check_unknown(const std::vector<std::string>& known_sections) const;

  private:
    std::string raw(const std::string& key, const std::string& def) const;

    std::map<std::string, std::string> values_;
    mutable std::map<std::string, std::string> resolved_;
};

}  // namespace amcmc::cli
