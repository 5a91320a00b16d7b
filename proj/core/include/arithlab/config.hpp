#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace arithlab {

// Flat key=value experiment configuration. Keys are validated against a
// schema: unknown keys are rejected up front.
class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::string& path);
    static KeyValueConfig from_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    void apply_override(const std::string& assignment);  // "key=value"
    void merge(const KeyValueConfig& other);             // other wins

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_flag(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma separated
    std::vector<long long> get_int_list(const std::string& key) const;

    // Throws std::invalid_argument listing every unknown key.
    void validate_keys(const std::set<std::string>& schema) const;

    std::string echo_text() const;  // fully resolved, sorted key=value lines

private:
    std::map<std::string, std::string> values_;
};

}  // namespace arithlab
