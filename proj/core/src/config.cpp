#include "memento/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "memento/errors.hpp"

namespace memento {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
    if (key.empty()) return false;
    for (char c : key) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
        if (!ok) return false;
    }
    // Dots separate sections; empty sections like "a..b" or ".a" are typos.
    if (key.front() == '.' || key.back() == '.') return false;
    if (key.find("..") != std::string::npos) return false;
    return true;
}

}  // namespace

Config Config::parse_text(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(origin + ":" + std::to_string(lineno) +
                                  ": expected key=value, got \"" + t + "\"");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (!valid_key(key)) {
            throw ValidationError(origin + ":" + std::to_string(lineno) + ": bad key \"" + key + "\"");
        }
        if (cfg.find(key) != nullptr) {
            throw ValidationError(origin + ":" + std::to_string(lineno) + ": duplicate key \"" + key + "\"");
        }
        cfg.entries_.push_back({key, value, false});
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
}

void Config::apply_override(const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ValidationError("override must be key=value, got \"" + assignment + "\"");
    }
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    if (!valid_key(key)) throw ValidationError("override has bad key \"" + key + "\"");
    if (Entry* e = find(key)) {
        e->value = value;
    } else {
        entries_.push_back({key, value, false});
    }
}

Config::Entry* Config::find(const std::string& key) {
    for (auto& e : entries_) {
        if (e.key == key) return &e;
    }
    return nullptr;
}

const Config::Entry* Config::find(const std::string& key) const {
    for (const auto& e : entries_) {
        if (e.key == key) return &e;
    }
    return nullptr;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

void Config::note(const std::string& key, const std::string& value) {
    for (auto& kv : resolved_) {
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    }
    resolved_.emplace_back(key, value);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) {
    Entry* e = find(key);
    const std::string v = e ? (e->consumed = true, e->value) : fallback;
    note(key, v);
    return v;
}

std::string Config::require_string(const std::string& key) {
    Entry* e = find(key);
    if (e == nullptr) throw ValidationError("missing required config key \"" + key + "\"");
    e->consumed = true;
    note(key, e->value);
    return e->value;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) {
    Entry* e = find(key);
    int64_t v = fallback;
    if (e != nullptr) {
        e->consumed = true;
        errno = 0;
        char* end = nullptr;
        const long long parsed = std::strtoll(e->value.c_str(), &end, 10);
        if (e->value.empty() || *end != '\0' || errno == ERANGE) {
            throw ValidationError("config key \"" + key + "\": expected integer, got \"" + e->value + "\"");
        }
        v = parsed;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    note(key, buf);
    return v;
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) {
    Entry* e = find(key);
    uint64_t v = fallback;
    if (e != nullptr) {
        e->consumed = true;
        errno = 0;
        char* end = nullptr;
        const unsigned long long parsed = std::strtoull(e->value.c_str(), &end, 10);
        if (e->value.empty() || e->value[0] == '-' || *end != '\0' || errno == ERANGE) {
            throw ValidationError("config key \"" + key + "\": expected unsigned integer, got \"" + e->value + "\"");
        }
        v = parsed;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(v));
    note(key, buf);
    return v;
}

double Config::get_double(const std::string& key, double fallback) {
    Entry* e = find(key);
    double v = fallback;
    if (e != nullptr) {
        e->consumed = true;
        errno = 0;
        char* end = nullptr;
        const double parsed = std::strtod(e->value.c_str(), &end);
        if (e->value.empty() || *end != '\0' || errno == ERANGE) {
            throw ValidationError("config key \"" + key + "\": expected number, got \"" + e->value + "\"");
        }
        v = parsed;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    note(key, buf);
    return v;
}

bool Config::get_bool(const std::string& key, bool fallback) {
    Entry* e = find(key);
    bool v = fallback;
    if (e != nullptr) {
        e->consumed = true;
        if (e->value == "true" || e->value == "1") {
            v = true;
        } else if (e->value == "false" || e->value == "0") {
            v = false;
        } else {
            throw ValidationError("config key \"" + key + "\": expected true/false, got \"" + e->value + "\"");
        }
    }
    note(key, v ? "true" : "false");
    return v;
}

void Config::reject_unknown() const {
    for (const auto& e : entries_) {
        if (!e.consumed) {
            throw ValidationError("unknown config key \"" + e.key + "\" in " + origin_);
        }
    }
}

std::string Config::resolved_text() const {
    std::vector<std::pair<std::string, std::string>> rows = resolved_;
    std::sort(rows.begin(), rows.end());
    std::string out;
    for (const auto& kv : rows) {
        out += kv.first;
        out += '=';
        out += kv.second;
        out += '\n';
    }
    return out;
}

}  // namespace memento
