#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cunet/data.hpp"
#include "cunet/model.hpp"

namespace cunet {

/// Flat `key = value` text. Blank lines and `#` comments are ignored; later
/// keys override earlier ones.
class KeyValues {
public:
    static KeyValues parse(const std::string& text);
    static KeyValues load(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool contains(const std::string& key) const { return values_.contains(key); }
    std::optional<std::string> get(const std::string& key) const;

    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;

    /// Throws ConfigError naming the first key not in `known`.
    void require_known(const std::vector<std::string>& known) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    std::string str() const;

private:
    std::map<std::string, std::string> values_;
};

/// Model keys: in_channels, base_channels, depth, classes ("2,4"), seed.
CUNetConfig model_config_from(const KeyValues& kv, const std::string& prefix = "");
KeyValues model_config_to_kv(const CUNetConfig& cfg);
std::vector<std::string> model_config_keys();

/// Synthesis keys: count, size, seed, q_tumor.
struct SynthConfig {
    std::size_t count = 100;
    PhantomOptions phantom;
    std::uint64_t seed = 0;
};
SynthConfig synth_config_from(const KeyValues& kv);
std::vector<std::string> synth_config_keys();

}  // namespace cunet
