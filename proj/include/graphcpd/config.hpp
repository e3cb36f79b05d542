#pragma once

// Flat "key = value" configuration files. '#' starts a comment. Keys are
// case sensitive (lambda and Lambda are different rates).

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "graphcpd/detector.hpp"
#include "graphcpd/eval.hpp"
#include "graphcpd/superpixel.hpp"
#include "graphcpd/types.hpp"

namespace graphcpd {

inline const std::set<std::string, std::less<>>& known_config_keys() {
    static const std::set<std::string, std::less<>> keys{
        // detector
        "lambda", "Lambda", "gamma", "alpha", "sigma2", "burn_in",
        // baseline
        "cva_tau",
        // superpixels
        "slic_step", "slic_compactness", "slic_iters",
        // scenario
        "preset", "height", "width", "bands", "frames", "change_frame", "snr_db", "change_magnitude", "changed_segments",
        "events", "event_duration", "scene_seed"};
    return keys;
}

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text, std::string_view source = "<config>") {
        KeyValueConfig cfg;
        std::istringstream in{std::string(text)};
        std::string line;
        for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto body = trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string_view::npos)
                throw ParameterError(std::string(source) + ":" + std::to_string(lineno) + ": expected key = value");
            cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.string());
    }

    /// Adds or replaces a key; unknown keys are rejected.
    void set(std::string_view key, std::string_view value) {
        if (!known_config_keys().contains(key)) throw ParameterError("unknown config key \"" + std::string(key) + "\"");
        if (value.empty()) throw ParameterError("config key \"" + std::string(key) + "\" has no value");
        values_[std::string(key)] = std::string(value);
    }

    /// Applies a "key=value" override.
    void apply_override(std::string_view assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos) throw ParameterError("override \"" + std::string(assignment) + "\" is not key=value");
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    [[nodiscard]] bool has(std::string_view key) const { return values_.find(std::string(key)) != values_.end(); }
    [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

    [[nodiscard]] std::string text(std::string_view key) const { return values_.at(std::string(key)); }

    [[nodiscard]] double real(std::string_view key) const {
        const auto& s = values_.at(std::string(key));
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ParameterError("config key \"" + std::string(key) + "\" is not a number: " + s);
        return v;
    }

    [[nodiscard]] std::uint64_t integer(std::string_view key) const {
        const auto& s = values_.at(std::string(key));
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ParameterError("config key \"" + std::string(key) + "\" is not a non-negative integer: " + s);
        return v;
    }

    void read(std::string_view key, double& out) const {
        if (has(key)) out = real(key);
    }
    void read(std::string_view key, std::size_t& out) const {
        if (has(key)) out = static_cast<std::size_t>(integer(key));
    }

    [[nodiscard]] std::string serialize() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

private:
    static std::string_view trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

/// Detector settings; sigma2 stays at `base` unless the key is present.
inline DetectorConfig detector_config(const KeyValueConfig& kv, DetectorConfig base = {}) {
    kv.read("lambda", base.lambda);
    kv.read("Lambda", base.Lambda);
    kv.read("gamma", base.gamma);
    kv.read("alpha", base.alpha);
    kv.read("sigma2", base.sigma2);
    kv.read("burn_in", base.burn_in);
    return base;
}

inline SuperpixelParams superpixel_params(const KeyValueConfig& kv, SuperpixelParams base = {}) {
    kv.read("slic_step", base.step);
    kv.read("slic_compactness", base.compactness);
    kv.read("slic_iters", base.iterations);
    return base;
}

/// Preset first ("example1" by default, or "example2"), then explicit keys.
inline Scenario scenario_config(const KeyValueConfig& kv) {
    Scenario s = example1_scenario();
    if (kv.has("preset")) {
        const auto p = kv.text("preset");
        if (p == "example2")
            s = example2_scenario();
        else if (p != "example1")
            throw ParameterError("unknown preset \"" + p + "\" (expected example1 or example2)");
    }
    kv.read("height", s.grid.height);
    kv.read("width", s.grid.width);
    kv.read("bands", s.bands);
    kv.read("frames", s.frames);
    kv.read("change_frame", s.change_frame);
    kv.read("snr_db", s.snr_db);
    if (kv.has("sigma2")) s.sigma2 = kv.real("sigma2");
    kv.read("change_magnitude", s.change_magnitude);
    kv.read("changed_segments", s.changed_segments);
    kv.read("events", s.events);
    kv.read("event_duration", s.event_duration);
    if (kv.has("scene_seed")) s.scene_seed = kv.integer("scene_seed");
    s.detector = detector_config(kv, s.detector);
    s.slic = superpixel_params(kv, s.slic);
    return s;
}

}  // namespace graphcpd
