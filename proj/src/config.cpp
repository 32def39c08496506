#include "atnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "atnet/image.hpp"

namespace atnet {

namespace {

struct Default {
    const char* key;
    ConfigType type;
    const char* value;
};

// Training defaults follow the published protocol (S=10, lambda_p=0.002, lr=2e-4, batch 10).
constexpr Default kDefaults[] = {
    {"seed", ConfigType::unsigned_integer, "0"},
    {"threads", ConfigType::integer, "0"},
    {"S", ConfigType::integer, "10"},
    {"lambda_p", ConfigType::real, "0.002"},
    {"lr", ConfigType::real, "0.0002"},
    {"beta1", ConfigType::real, "0.9"},
    {"beta2", ConfigType::real, "0.999"},
    {"eps", ConfigType::real, "1e-08"},
    {"batch", ConfigType::integer, "10"},
    {"iters_prior", ConfigType::unsigned_integer, "200000"},
    {"iters_restore", ConfigType::unsigned_integer, "1500000"},
    {"checkpoint_every", ConfigType::unsigned_integer, "0"},
    {"log_wall_time", ConfigType::boolean, "false"},
    {"dropout_rate", ConfigType::real, "0.1"},
    {"prior_channels", ConfigType::integer, "3"},
    {"upsample", ConfigType::text, "bilinear"},
    {"cache_priors", ConfigType::boolean, "true"},
    {"n_warp_centers", ConfigType::integer, "32"},
    {"warp_strength_lo", ConfigType::real, "0.5"},
    {"warp_strength_hi", ConfigType::real, "4"},
    {"warp_falloff_lo", ConfigType::real, "8"},
    {"warp_falloff_hi", ConfigType::real, "24"},
    {"psf_sigma_lo", ConfigType::real, "0.5"},
    {"psf_sigma_hi", ConfigType::real, "3"},
    {"noise_sigma", ConfigType::real, "0.01"},
    {"warp_first", ConfigType::boolean, "false"},
    {"pairs_per_image", ConfigType::integer, "1"},
    {"feature_weights", ConfigType::text, ""},
    {"feature_seed", ConfigType::unsigned_integer, "20211"},
    {"embedding_weights", ConfigType::text, ""},
    {"embedding_seed", ConfigType::unsigned_integer, "7"},
    {"save_prior", ConfigType::boolean, "false"},
    {"input", ConfigType::text, ""},
    {"output", ConfigType::text, ""},
    {"manifest", ConfigType::text, ""},
    {"atnet1_ckpt", ConfigType::text, ""},
    {"atnet_ckpt", ConfigType::text, ""},
    {"gallery", ConfigType::text, ""},
    {"probes", ConfigType::text, ""},
    {"resume", ConfigType::text, ""},
};

const char* type_name(ConfigType t) {
    switch (t) {
        case ConfigType::integer: return "an integer";
        case ConfigType::unsigned_integer: return "a non-negative integer";
        case ConfigType::real: return "a number";
        case ConfigType::boolean: return "true or false";
        case ConfigType::text: return "text";
    }
    return "?";
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if constexpr (std::is_floating_point_v<T>) {
        if (*first == '+') ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_bool(const std::string& s, bool& out) {
    if (s == "true" || s == "1") {
        out = true;
        return true;
    }
    if (s == "false" || s == "0") {
        out = false;
        return true;
    }
    return false;
}

bool valid_for(ConfigType type, const std::string& v) {
    std::int64_t i;
    std::uint64_t u;
    double d;
    bool b;
    switch (type) {
        case ConfigType::integer: return parse_number(v, i);
        case ConfigType::unsigned_integer: return parse_number(v, u);
        case ConfigType::real: return parse_number(v, d) && std::isfinite(d);
        case ConfigType::boolean: return parse_bool(v, b);
        case ConfigType::text: return v.find('\n') == std::string::npos;
    }
    return false;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& d : kDefaults) values_[d.key] = {d.type, d.value};
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    if (!valid_for(it->second.type, value))
        throw UsageError("config key '" + key + "' expects " + type_name(it->second.type) + ", got '" + value + "'");
    it->second.value = value;
}

const RunConfig::Entry& RunConfig::entry(const std::string& key, ConfigType type) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    if (it->second.type != type) throw std::logic_error("config key '" + key + "' read with the wrong type");
    return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    std::int64_t v = 0;
    parse_number(entry(key, ConfigType::integer).value, v);
    return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    std::uint64_t v = 0;
    parse_number(entry(key, ConfigType::unsigned_integer).value, v);
    return v;
}

double RunConfig::get_double(const std::string& key) const {
    double v = 0;
    parse_number(entry(key, ConfigType::real).value, v);
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    bool v = false;
    parse_bool(entry(key, ConfigType::boolean).value, v);
    return v;
}

std::string RunConfig::get_string(const std::string& key) const { return entry(key, ConfigType::text).value; }

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [key, e] : values_) {
        std::string v = e.value;
        if (e.type == ConfigType::real) {
            // Normalized so that the text round-trips to the identical double.
            double d = 0;
            parse_number(v, d);
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", d);
            v = buf;
        }
        out += key + "=" + v + "\n";
    }
    return out;
}

void RunConfig::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    out << serialize();
    if (!out) throw IoError("cannot write " + path.string());
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError("config line " + std::to_string(n) + ": expected key=value, got '" + t + "'");
        out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return out;
}

RunConfig resolve_config(const std::filesystem::path& config_file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    if (!config_file.empty()) {
        std::ifstream in(config_file, std::ios::binary);
        if (!in) throw UsageError("cannot read config file " + config_file.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        for (const auto& [k, v] : parse_config_text(ss.str())) cfg.set(k, v);
    }
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    return cfg;
}

}  // namespace atnet
