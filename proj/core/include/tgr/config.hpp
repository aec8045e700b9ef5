#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace tgr {

/// Flat "key = value" settings. Lines starting with '#' and blank lines are
/// ignored; a trailing "# ..." after a value is a comment. Later keys win.
class KeyValueConfig {
public:
    static KeyValueConfig parse_text(const std::string& text, const std::string& source = "<config>");
    static KeyValueConfig parse_file(const std::string& path);

    /// Applies "key=value"; throws ValidationError when there is no '='.
    void set_assignment(const std::string& assignment);
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

    /// Throws ValidationError naming the first key outside `known`.
    void require_known(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    /// Sorted "key = value" lines.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
};

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

} // namespace tgr
