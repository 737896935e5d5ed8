#pragma once

// Flat `key = value` run configuration. Blank lines and `#` comments are
// ignored; unknown keys and malformed values are rejected with the key named.
// Lists are comma separated.

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "robult/errors.hpp"
#include "robult/synthdata.hpp"
#include "robult/training.hpp"

namespace robult {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct ConfigField {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T v{};
    is >> v;
    if (!is || !is.eof()) throw ConfigError(key + ": cannot parse '" + text + "'");
    return v;
}

inline std::size_t parse_count(const std::string& key, const std::string& text) {
    if (!text.empty() && text[0] == '-') throw ConfigError(key + ": must be nonnegative, got '" + text + "'");
    return parse_number<std::size_t>(key, text);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

inline std::string fmt(double v) { return format_double(v); }
inline std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + f(xs[i]);
    return out;
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& s : split(text, ',')) out.push_back(trim(s));
    return out;
}

// Keys in echo order.
inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
    using R = RunConfig;
    static const std::vector<std::pair<std::string, ConfigField>> fields = [] {
        std::vector<std::pair<std::string, ConfigField>> f;
        auto count = [&](const char* key, std::size_t R::*m) {
            f.push_back({key, {[key, m](R& c, const std::string& v) { c.*m = parse_count(key, v); },
                               [m](const R& c) { return std::to_string(c.*m); }}});
        };
        auto real = [&](const char* key, double R::*m) {
            f.push_back({key, {[key, m](R& c, const std::string& v) { c.*m = parse_number<double>(key, v); },
                               [m](const R& c) { return fmt(c.*m); }}});
        };
        auto flag = [&](const char* key, bool AblationSwitches::*m) {
            f.push_back({key, {[key, m](R& c, const std::string& v) { c.ablation.*m = parse_bool(key, v); },
                               [m](const R& c) { return fmt(c.ablation.*m); }}});
        };

        count("epochs", &R::epochs);
        count("batch_size", &R::batch_size);
        real("learning_rate", &R::learning_rate);
        real("temperature", &R::temperature);
        f.push_back({"kernel",
                     {[](R& c, const std::string& v) {
                          if (v == "rbf") c.kernel = KernelKind::rbf;
                          else if (v == "l1") c.kernel = KernelKind::l1;
                          else if (v == "l2") c.kernel = KernelKind::l2;
                          else throw ConfigError("kernel: expected rbf, l1 or l2, got '" + v + "'");
                      },
                      [](const R& c) { return std::string(to_string(c.kernel)); }}});
        f.push_back({"gamma",
                     {[](R& c, const std::string& v) {
                          if (v == "auto") c.gamma.reset();
                          else c.gamma = parse_number<double>("gamma", v);
                      },
                      [](const R& c) { return c.gamma ? fmt(*c.gamma) : std::string("auto"); }}});
        f.push_back({"weight_filter",
                     {[](R& c, const std::string& v) { c.weight_filter = parse_bool("weight_filter", v); },
                      [](const R& c) { return fmt(c.weight_filter); }}});
        real("label_ratio", &R::label_ratio);
        f.push_back({"seed",
                     {[](R& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                      [](const R& c) { return std::to_string(c.seed); }}});
        f.push_back({"task",
                     {[](R& c, const std::string& v) {
                          if (v == "classification") c.data.task = TaskKind::classification;
                          else if (v == "regression") c.data.task = TaskKind::regression;
                          else throw ConfigError("task: expected classification or regression, got '" + v + "'");
                      },
                      [](const R& c) { return std::string(to_string(c.data.task)); }}});
        count("latent_dim", &R::latent_dim);
        flag("drop_sup", &AblationSwitches::drop_sup);
        flag("drop_rec", &AblationSwitches::drop_rec);
        flag("drop_lb", &AblationSwitches::drop_lb);
        flag("drop_ulb", &AblationSwitches::drop_ulb);
        flag("uniform_weights", &AblationSwitches::uniform_weights);
        flag("drop_pseudo", &AblationSwitches::drop_pseudo);
        flag("drop_unique_branches", &AblationSwitches::drop_unique_branches);
        flag("algorithm1_toggle_reading", &AblationSwitches::algorithm1_toggle_reading);
        real("weight_sup", &R::weight_sup);
        real("weight_rec", &R::weight_rec);
        real("weight_pu", &R::weight_pu);

        f.push_back({"n_samples",
                     {[](R& c, const std::string& v) { c.data.n = parse_count("n_samples", v); },
                      [](const R& c) { return std::to_string(c.data.n); }}});
        f.push_back({"raw_dims",
                     {[](R& c, const std::string& v) {
                          c.data.raw_dims.clear();
                          for (const auto& s : split_list(v)) c.data.raw_dims.push_back(parse_count("raw_dims", s));
                      },
                      [](const R& c) { return join(c.data.raw_dims, [](std::size_t d) { return std::to_string(d); }); }}});
        f.push_back({"classes",
                     {[](R& c, const std::string& v) { c.data.classes = parse_count("classes", v); },
                      [](const R& c) { return std::to_string(c.data.classes); }}});
        f.push_back({"alpha",
                     {[](R& c, const std::string& v) { c.data.alpha = parse_number<double>("alpha", v); },
                      [](const R& c) { return fmt(c.data.alpha); }}});
        f.push_back({"beta",
                     {[](R& c, const std::string& v) {
                          c.data.beta.clear();
                          for (const auto& s : split_list(v)) c.data.beta.push_back(parse_number<double>("beta", s));
                      },
                      [](const R& c) { return join(c.data.beta, [](double b) { return fmt(b); }); }}});
        f.push_back({"synergy",
                     {[](R& c, const std::string& v) { c.data.synergy = parse_bool("synergy", v); },
                      [](const R& c) { return fmt(c.data.synergy); }}});
        f.push_back({"noise",
                     {[](R& c, const std::string& v) { c.data.noise = parse_number<double>("noise", v); },
                      [](const R& c) { return fmt(c.data.noise); }}});
        f.push_back({"shared_dim",
                     {[](R& c, const std::string& v) { c.data.shared_dim = parse_count("shared_dim", v); },
                      [](const R& c) { return std::to_string(c.data.shared_dim); }}});
        f.push_back({"unique_dim",
                     {[](R& c, const std::string& v) { c.data.unique_dim = parse_count("unique_dim", v); },
                      [](const R& c) { return std::to_string(c.data.unique_dim); }}});
        f.push_back({"unique_label_weight",
                     {[](R& c, const std::string& v) {
                          c.data.unique_label_weight = parse_number<double>("unique_label_weight", v);
                      },
                      [](const R& c) { return fmt(c.data.unique_label_weight); }}});
        f.push_back({"data_seed",
                     {[](R& c, const std::string& v) { c.data.seed = parse_number<std::uint64_t>("data_seed", v); },
                      [](const R& c) { return std::to_string(c.data.seed); }}});
        f.push_back({"dataset",
                     {[](R& c, const std::string& v) { c.dataset_path = v; },
                      [](const R& c) { return c.dataset_path; }}});
        real("test_fraction", &R::test_fraction);
        count("mi_bins", &R::mi_bins);
        count("probe_epochs", &R::probe_epochs);
        real("probe_learning_rate", &R::probe_learning_rate);
        return f;
    }();
    return fields;
}

}  // namespace detail

/// Applies one key; throws ConfigError naming the key on failure.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& [name, field] : detail::config_fields()) {
        if (name == key) {
            try {
                field.set(cfg, value);
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                throw ConfigError(key + ": " + e.what());
            }
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

/// Parses key = value lines on top of the defaults, then validates.
inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" + t + "'");
        }
        set_config_value(base, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    base.validate();
    return base;
}

inline RunConfig parse_config_string(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

/// Fully resolved configuration, one `key = value` per line, fixed key order.
inline std::string config_to_string(const RunConfig& cfg) {
    std::string out;
    for (const auto& [name, field] : detail::config_fields()) out += name + " = " + field.get(cfg) + "\n";
    return out;
}

/// The same lines, each prefixed with "# ", as used for report headers.
inline std::string config_echo(const RunConfig& cfg) {
    std::string out;
    for (const auto& [name, field] : detail::config_fields()) out += "# " + name + " = " + field.get(cfg) + "\n";
    return out;
}

/// Recovers the configuration from the leading "# " lines of a report.
inline RunConfig config_from_report(std::istream& is) {
    std::string text, line;
    while (std::getline(is, line) && line.rfind("# ", 0) == 0) text += line.substr(2) + "\n";
    return parse_config_string(text);
}

/// RB_SEED, when set, overrides the configured seed.
inline void apply_environment(RunConfig& cfg) {
    if (const char* s = std::getenv("RB_SEED"); s && *s) {
        cfg.seed = detail::parse_number<std::uint64_t>("RB_SEED", s);
    }
}

}  // namespace robult
