#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace memento {

// Flat key=value configuration with dotted section prefixes
// (train.budget=200). Typed getters record every value they resolve,
// defaults included, so a run can snapshot exactly what it used and reject
// keys nothing consumed.
class Config {
  public:
    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text, const std::string& origin = "<text>");

    // "key=value"; replaces or adds.
    void apply_override(const std::string& assignment);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback);
    std::string require_string(const std::string& key);
    int64_t get_int(const std::string& key, int64_t fallback);
    uint64_t get_u64(const std::string& key, uint64_t fallback);
    double get_double(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);

    // Every present key must have been consumed by a getter; the first
    // unconsumed one is named in the error.
    void reject_unknown() const;

    // Sorted key=value lines of everything resolved (consumed or defaulted).
    std::string resolved_text() const;

  private:
    struct Entry {
        std::string key;
        std::string value;
        bool consumed = false;
    };
    Entry* find(const std::string& key);
    const Entry* find(const std::string& key) const;
    void note(const std::string& key, const std::string& value);

    std::string origin_;
    std::vector<Entry> entries_;
    std::vector<std::pair<std::string, std::string>> resolved_;
};

}  // namespace memento
