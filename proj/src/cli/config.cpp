#include "amcmc/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "amcmc/io.hpp"

namespace amcmc::cli {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

void check_key(const std::string& key) {
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) {
        throw ConfigError("config key '" + key + "' must have the form section.key");
    }
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& source) {
    Config c;
    std::string section = "run";
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        if (body.front() == '[') {
            if (body.back() != ']' || body.size() < 3) throw ConfigError(where + ": malformed section header");
            section = trim(std::string_view(body).substr(1, body.size() - 2));
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty() || key.find('.') != std::string::npos) throw ConfigError(where + ": bad key '" + key + "'");
        const std::string full = section + "." + key;
        if (c.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
        c.values_[full] = trim(std::string_view(body).substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) {
    check_key(key);
    values_[key] = value;
}

void Config::set_assignment(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::raw(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    const std::string v = it == values_.end() ? def : it->second;
    resolved_[key] = v;
    return v;
}

std::optional<std::string> Config::get_optional(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) {
        resolved_[key] = "";
        return std::nullopt;
    }
    resolved_[key] = it->second;
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& def) const { return raw(key, def); }

double Config::get_double(const std::string& key, double def) const {
    const std::string v = raw(key, format_double(def));
    double out = 0.0;
    if (!parse_number(v, out)) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t def) const {
    const std::string v = raw(key, std::to_string(def));
    std::int64_t out = 0;
    if (!parse_number(v, out)) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    return out;
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t def) const {
    const std::string v = raw(key, std::to_string(def));
    std::uint64_t out = 0;
    if (!parse_number(v, out)) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool Config::get_bool(const std::string& key, bool def) const {
    const std::string v = raw(key, def ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::int64_t> Config::get_int_list(const std::string& key, const std::vector<std::int64_t>& def) const {
    std::string d;
    for (std::size_t k = 0; k < def.size(); ++k) d += (k ? "," : "") + std::to_string(def[k]);
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(raw(key, d))) {
        std::int64_t v = 0;
        if (!parse_number(item, v)) throw ConfigError("config key '" + key + "': '" + item + "' is not an integer");
        out.push_back(v);
    }
    return out;
}

std::vector<std::string> Config::get_string_list(const std::string& key, const std::vector<std::string>& def) const {
    std::string d;
    for (std::size_t k = 0; k < def.size(); ++k) d += (k ? "," : "") + def[k];
    return split_list(raw(key, d));
}

std::string Config::effective() const {
    std::ostringstream out;
    std::string section;
    for (const auto& [key, value] : resolved_) {
        const auto dot = key.find('.');
        const std::string s = key.substr(0, dot);
        if (s != section) {
            out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
            section = s;
        }
        out << key.substr(dot + 1) << " = " << value << '\n';
    }
    return out.str();
}

void Config::check_unknown(const std::vector<std::string>& known_sections) const {
    for (const auto& [key, value] : values_) {
        const std::string section = key.substr(0, key.find('.'));
        if (std::find(known_sections.begin(), known_sections.end(), section) == known_sections.end()) {
            throw ConfigError("unknown config section in key '" + key + "'");
        }
        if (resolved_.count(key)) continue;
        // only sections this command consulted can be judged
        const auto it = resolved_.lower_bound(section + ".");
        if (it != resolved_.end() && it->first.starts_with(section + ".")) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
}

}  // namespace amcmc::cli
