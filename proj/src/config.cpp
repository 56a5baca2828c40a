#include "cunet/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "binary_io.hpp"
#include "cunet/errors.hpp"

namespace cunet {

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
    return v;
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        kv.values_[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) { return parse(io::read_file(path)); }

std::optional<std::string> KeyValues::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? parse_number<double>(key, *v) : fallback;
}

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const {
    const auto v = get(key);
    return v ? parse_number<std::size_t>(key, *v) : fallback;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto v = get(key);
    return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

void KeyValues::require_known(const std::vector<std::string>& known) const {
    for (const auto& [key, value] : values_)
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config key '" + key + "'");
}

std::string KeyValues::str() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
    return out;
}

std::vector<std::string> model_config_keys() { return {"in_channels", "base_channels", "depth", "classes", "seed"}; }

CUNetConfig model_config_from(const KeyValues& kv, const std::string& prefix) {
    CUNetConfig cfg;
    cfg.in_channels = kv.get_size(prefix + "in_channels", cfg.in_channels);
    cfg.base_channels = kv.get_size(prefix + "base_channels", cfg.base_channels);
    cfg.depth = kv.get_size(prefix + "depth", cfg.depth);
    cfg.seed = kv.get_u64(prefix + "seed", cfg.seed);
    if (const auto classes = kv.get(prefix + "classes")) {
        const auto comma = classes->find(',');
        if (comma == std::string::npos) throw ConfigError("classes must be '<branch1>,<branch2>'");
        cfg.branch1_classes = parse_number<std::size_t>("classes", trim(classes->substr(0, comma)));
        cfg.branch2_classes = parse_number<std::size_t>("classes", trim(classes->substr(comma + 1)));
    }
    cfg.validate();
    return cfg;
}

KeyValues model_config_to_kv(const CUNetConfig& cfg) {
    KeyValues kv;
    kv.set("in_channels", std::to_string(cfg.in_channels));
    kv.set("base_channels", std::to_string(cfg.base_channels));
    kv.set("depth", std::to_string(cfg.depth));
    kv.set("classes", std::to_string(cfg.branch1_classes) + "," + std::to_string(cfg.branch2_classes));
    kv.set("seed", std::to_string(cfg.seed));
    return kv;
}

std::vector<std::string> synth_config_keys() { return {"count", "size", "seed", "q_tumor"}; }

SynthConfig synth_config_from(const KeyValues& kv) {
    SynthConfig cfg;
    cfg.count = kv.get_size("count", cfg.count);
    cfg.phantom.size = kv.get_size("size", cfg.phantom.size);
    cfg.seed = kv.get_u64("seed", cfg.seed);
    cfg.phantom.q_tumor = kv.get_double("q_tumor", cfg.phantom.q_tumor);
    if (cfg.count == 0) throw ConfigError("count must be positive");
    if (!(cfg.phantom.q_tumor >= 0.0 && cfg.phantom.q_tumor <= 1.0)) throw ConfigError("q_tumor must lie in [0,1]");
    return cfg;
}

}  // namespace cunet
