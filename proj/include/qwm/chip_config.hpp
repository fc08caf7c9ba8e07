#pragma once

// Parameters of one atom-chip work-meter run and their flat key = value file
// format. Lengths in m, times in s, momenta in kg m/s, gradients in T/m;
// beta_E and energy_ratio are dimensionless.
//
//   # comment
//   beta_E = 0.58
//   energy_ratio = 0.56
//   ...
//
// Unknown keys and malformed values are rejected with the line number.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "qwm/ancilla_meter.hpp"
#include "qwm/errors.hpp"

namespace qwm {

struct ImagingConfig {
    double pixel_size = 1e-6;
    double optical_blur = 5e-6; // Gaussian standard deviation of the optical resolution
    bool detection_noise = false; // per-bin Poisson noise on top of atom-number sampling
    bool operator==(const ImagingConfig&) const = default;
};

struct ExperimentConfig {
    double beta_E = 0.58;
    double energy_ratio = 0.56;
    std::uint64_t atom_count = 100000;
    double z0 = 91e-6;
    double t1 = 2.4e-3;
    double tau = 40e-6;
    double t2 = 3.1e-3;
    double tau_tilde = 300e-6;
    double tof = 18.2e-3;
    double b_gradient = 9.5; // 95 G/mm
    double g_F = 0.5;
    double delta_p = 0.0;       // 0: mu_B g_F B' tau
    double delta_p_tilde = 0.0; // 0: -energy_ratio * delta_p
    double ratio_tolerance = 1e-6;
    double sigma = 2e-6;
    double mass = constants::rb87_mass;
    double gravity = constants::standard_gravity;
    ImagingConfig imaging;
    double kick_jitter = 1e-3; // fractional shot-to-shot kick fluctuation
    double z0_jitter = 1.2e-6; // shot-to-shot initial position fluctuation
    double rf_pulse_area = std::numbers::pi / 2.0;
    double rf_axis_phase = 0.0;
    bool coherent_initial_state = true;
    bool exact_fractions = false; // expected image instead of sampled atoms
    std::uint64_t seed = 1;

    bool operator==(const ExperimentConfig&) const = default;

    double kick() const { return delta_p != 0.0 ? delta_p : constants::bohr_magneton * g_F * b_gradient * tau; }
    double kick_tilde() const { return delta_p_tilde != 0.0 ? delta_p_tilde : -energy_ratio * kick(); }

    // Gradient pulses act as instantaneous kicks at their midpoints. t2 runs from
    // the start of the first pulse to the start of the second; tof from the end of
    // the second pulse to imaging.
    double first_kick_time() const { return t1 + 0.5 * tau; }
    double second_kick_time() const { return t1 + t2 + 0.5 * tau_tilde; }
    double imaging_time() const { return t1 + t2 + tau_tilde + tof; }
    double time_between_kicks() const { return second_kick_time() - first_kick_time(); }
    double time_after_second_kick() const { return imaging_time() - second_kick_time(); }

    /// Coupling lambda = delta_p / E, stored positive.
    double lambda() const { return kick(); }

    /// Quiet variant: no blur, jitter or detection noise.
    ExperimentConfig noiseless() const {
        ExperimentConfig c = *this;
        c.imaging.optical_blur = 0.0;
        c.imaging.detection_noise = false;
        c.kick_jitter = 0.0;
        c.z0_jitter = 0.0;
        return c;
    }

    void validate() const {
        auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
        if (atom_count == 0) fail("atom_count must be positive");
        if (!std::isfinite(beta_E) || beta_E < 0.0) fail("beta_E must be finite and >= 0");
        if (!(energy_ratio > 0.0)) fail("energy_ratio must be positive");
        for (double t : {t1, tau, t2, tau_tilde, tof})
            if (!(t >= 0.0)) fail("times must be non-negative");
        if (t2 < tau) fail("second pulse starts before the first one ends");
        if (!(sigma > 0.0)) fail("sigma must be positive");
        if (!(mass > 0.0)) fail("mass must be positive");
        if (!(imaging.pixel_size > 0.0)) fail("pixel_size must be positive");
        if (imaging.optical_blur < 0.0 || kick_jitter < 0.0 || z0_jitter < 0.0) fail("noise scales must be >= 0");
        if (!(kick() > 0.0)) fail("first kick must point along +z");
        const double r = kick_tilde() / kick();
        if (!(r < 0.0)) fail("the two kicks must have opposite signs");
        if (std::abs(-r - energy_ratio) > ratio_tolerance * energy_ratio)
            fail("|delta_p_tilde / delta_p| = " + std::to_string(-r) + " disagrees with energy_ratio");
    }
};

namespace detail {

struct ConfigField {
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ConfigError("not a number: '" + s + "'");
    }
    if (used != s.size()) throw ConfigError("trailing characters in number: '" + s + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("not a non-negative integer: '" + s + "'");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw ConfigError("integer out of range: '" + s + "'");
    }
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("not a boolean: '" + s + "'");
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline const std::vector<ConfigField>& config_fields() {
    using C = ExperimentConfig;
    auto dbl = [](const char* key, double C::*member) {
        return ConfigField{key, [member](const C& c) { return format_double(c.*member); },
                           [member](C& c, const std::string& v) { c.*member = parse_double(v); }};
    };
    auto u64 = [](const char* key, std::uint64_t C::*member) {
        return ConfigField{key, [member](const C& c) { return std::to_string(c.*member); },
                           [member](C& c, const std::string& v) { c.*member = parse_u64(v); }};
    };
    auto boolean = [](const char* key, bool C::*member) {
        return ConfigField{key, [member](const C& c) { return std::string(c.*member ? "true" : "false"); },
                           [member](C& c, const std::string& v) { c.*member = parse_bool(v); }};
    };
    static const std::vector<ConfigField> fields = {
        dbl("beta_E", &C::beta_E),
        dbl("energy_ratio", &C::energy_ratio),
        u64("atom_count", &C::atom_count),
        dbl("z0", &C::z0),
        dbl("t1", &C::t1),
        dbl("tau", &C::tau),
        dbl("t2", &C::t2),
        dbl("tau_tilde", &C::tau_tilde),
        dbl("tof", &C::tof),
        dbl("b_gradient", &C::b_gradient),
        dbl("g_F", &C::g_F),
        dbl("delta_p", &C::delta_p),
        dbl("delta_p_tilde", &C::delta_p_tilde),
        dbl("ratio_tolerance", &C::ratio_tolerance),
        dbl("sigma", &C::sigma),
        dbl("mass", &C::mass),
        dbl("gravity", &C::gravity),
        ConfigField{"pixel_size", [](const C& c) { return format_double(c.imaging.pixel_size); },
                    [](C& c, const std::string& v) { c.imaging.pixel_size = parse_double(v); }},
        ConfigField{"optical_blur", [](const C& c) { return format_double(c.imaging.optical_blur); },
                    [](C& c, const std::string& v) { c.imaging.optical_blur = parse_double(v); }},
        ConfigField{"detection_noise", [](const C& c) { return std::string(c.imaging.detection_noise ? "true" : "false"); },
                    [](C& c, const std::string& v) { c.imaging.detection_noise = parse_bool(v); }},
        dbl("kick_jitter", &C::kick_jitter),
        dbl("z0_jitter", &C::z0_jitter),
        dbl("rf_pulse_area", &C::rf_pulse_area),
        dbl("rf_axis_phase", &C::rf_axis_phase),
        boolean("coherent_initial_state", &C::coherent_initial_state),
        boolean("exact_fractions", &C::exact_fractions),
        u64("seed", &C::seed),
    };
    return fields;
}

} // namespace detail

/// Canonical form: every key in fixed order, doubles with 17 significant digits.
inline std::string serialize_config(const ExperimentConfig& config) {
    std::ostringstream os;
    for (const auto& f : detail::config_fields()) os << f.key << " = " << f.get(config) << '\n';
    return os.str();
}

/// Parses key = value text on top of the defaults. `source` labels error messages.
inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>") {
    ExperimentConfig config;
    std::map<std::string, int> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const auto& fields = detail::config_fields();
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == key; });
        if (it == fields.end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (auto prev = seen.find(key); prev != seen.end())
            throw ConfigError(where + "duplicate key '" + key + "' (first on line " + std::to_string(prev->second) + ")");
        seen[key] = line_no;
        try {
            it->set(config, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    return config;
}

inline ExperimentConfig parse_config_string(const std::string& text, const std::string& source = "<config>") {
    std::istringstream in(text);
    return parse_config(in, source);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    ExperimentConfig c = parse_config(in, path);
    c.validate();
    return c;
}

} // namespace qwm
