#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssep/probe.hpp"

namespace ssep::cli {

using json = nlohmann::json;

inline constexpr int schema_version = 1;
inline constexpr const char* env_prefix = "SSEP_";

// Exit status contract.
enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_config = 2, exit_guard = 3, exit_verify = 4 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    struct Model {
        double rho = 0.5;
        std::int64_t L = 2048;
        double T = 1.0;
        std::vector<double> grid{100.0, 400.0};
        std::string observable = "both";  // current | tagged | both
        std::string initial = "conditioned";
        double safety = 10.0;
    } model;
    struct Probe {
        std::size_t replicas = 1000;
        std::optional<std::uint64_t> master_seed;
        double a_N = 1.0;
        std::int64_t N = 1;
        unsigned threads = 0;
        std::vector<double> tail_levels = default_tail_levels();
    } probe;
    struct Numerics {
        double xi_cutoff = 0.0;  // 0: 40 / sqrt(min time)
        double xi_step = 0.0;    // 0: cutoff / 2^14
        double du = 0.05;
        double dt = 0.05;
        double U = 0.0;  // 0: 5 sqrt(T)
    } numerics;
    struct Query {
        std::vector<double> times{1.0};
        std::vector<double> alphas{1.0};
        std::string mode = "raw";  // raw | current | tagged
    } query;
    struct Io {
        std::string out_dir = "ssep_out";
        std::string format = "csv";  // csv | jsonl
    } io;
};

// Keys accepted in each section; anything else is rejected.
inline const std::map<std::string, std::set<std::string>>& config_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"model", {"rho", "L", "T", "grid", "observable", "initial", "safety"}},
        {"probe", {"replicas", "master_seed", "a_N", "N", "threads", "tail_levels"}},
        {"numerics", {"xi_cutoff", "xi_step", "du", "dt", "U"}},
        {"query", {"times", "alphas", "mode"}},
        {"io", {"out_dir", "format"}},
    };
    return keys;
}

inline bool is_list_key(const std::string& key) {
    return key == "grid" || key == "tail_levels" || key == "times" || key == "alphas";
}

// Structural check of a raw document: schema version, known sections, known keys.
inline void check_document(const json& doc, const std::string& origin) {
    if (!doc.is_object()) throw ConfigError(origin + ": top level must be an object");
    if (!doc.contains("schema_version")) throw ConfigError(origin + ": missing schema_version");
    if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != schema_version)
        throw ConfigError(origin + ": unsupported schema_version (expected " + std::to_string(schema_version) + ")");
    for (const auto& [section, body] : doc.items()) {
        if (section == "schema_version") continue;
        const auto it = config_keys().find(section);
        if (it == config_keys().end()) throw ConfigError(origin + ": unknown section '" + section + "'");
        if (!body.is_object()) throw ConfigError(origin + ": section '" + section + "' must be an object");
        for (const auto& [key, value] : body.items())
            if (!it->second.count(key)) throw ConfigError(origin + ": unknown key '" + section + "." + key + "'");
    }
}

inline json load_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in, nullptr, true, true);  // comments allowed
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    check_document(doc, path);
    return doc;
}

// Scalar text from the environment or a flag: JSON when it parses, a string otherwise;
// list keys also accept comma-separated numbers.
inline json parse_override_value(const std::string& key, const std::string& text) {
    try {
        json v = json::parse(text);
        if (is_list_key(key) && v.is_number()) return json::array({v});
        return v;
    } catch (const json::parse_error&) {
    }
    if (is_list_key(key)) {
        json arr = json::array();
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                arr.push_back(json::parse(item));
            } catch (const json::parse_error&) {
                throw ConfigError("cannot parse list value '" + text + "' for '" + key + "'");
            }
        }
        return arr;
    }
    return text;
}

// SSEP_<SECTION>_<KEY>=value, e.g. SSEP_PROBE_MASTER_SEED=7 or SSEP_MODEL_GRID=100,400.
inline void apply_environment(json& doc, char** envp) {
    if (!envp) return;
    for (char** e = envp; *e; ++e) {
        const std::string entry(*e);
        if (entry.rfind(env_prefix, 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(std::string(env_prefix).size(), eq - std::string(env_prefix).size());
        const std::string value = entry.substr(eq + 1);
        for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        bool matched = false;
        for (const auto& [section, keys] : config_keys()) {
            if (name.rfind(section + "_", 0) != 0) continue;
            const std::string rest = name.substr(section.size() + 1);
            for (const auto& key : keys) {
                std::string lower = key;
                for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
                if (lower == rest) {
                    doc[section][key] = parse_override_value(key, value);
                    matched = true;
                }
            }
        }
        if (!matched) throw ConfigError("unknown environment override '" + entry.substr(0, eq) + "'");
    }
}

namespace detail {

template <class T>
void read(const json& doc, const std::string& section, const std::string& key, T& out) {
    if (!doc.contains(section) || !doc[section].contains(key)) return;
    const json& v = doc[section][key];
    try {
        if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
            if (v.is_null()) {
                out.reset();
                return;
            }
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
                throw ConfigError("'" + section + "." + key + "' must be a nonnegative integer");
            out = v.get<std::uint64_t>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("'" + section + "." + key + "' must be an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (v.get<std::int64_t>() < 0) throw ConfigError("'" + section + "." + key + "' must be nonnegative");
            out = v.get<T>();
        } else {
            out = v.get<T>();
        }
    } catch (const json::exception& e) {
        throw ConfigError("'" + section + "." + key + "' has the wrong type: " + e.what());
    }
}

}  // namespace detail

inline RunConfig config_from_document(const json& doc) {
    check_document(doc, "config");
    RunConfig c;
    using detail::read;
    read(doc, "model", "rho", c.model.rho);
    read(doc, "model", "L", c.model.L);
    read(doc, "model", "T", c.model.T);
    read(doc, "model", "grid", c.model.grid);
    read(doc, "model", "observable", c.model.observable);
    read(doc, "model", "initial", c.model.initial);
    read(doc, "model", "safety", c.model.safety);
    read(doc, "probe", "replicas", c.probe.replicas);
    read(doc, "probe", "master_seed", c.probe.master_seed);
    read(doc, "probe", "a_N", c.probe.a_N);
    read(doc, "probe", "N", c.probe.N);
    read(doc, "probe", "threads", c.probe.threads);
    read(doc, "probe", "tail_levels", c.probe.tail_levels);
    read(doc, "numerics", "xi_cutoff", c.numerics.xi_cutoff);
    read(doc, "numerics", "xi_step", c.numerics.xi_step);
    read(doc, "numerics", "du", c.numerics.du);
    read(doc, "numerics", "dt", c.numerics.dt);
    read(doc, "numerics", "U", c.numerics.U);
    read(doc, "query", "times", c.query.times);
    read(doc, "query", "alphas", c.query.alphas);
    read(doc, "query", "mode", c.query.mode);
    read(doc, "io", "out_dir", c.io.out_dir);
    read(doc, "io", "format", c.io.format);

    auto one_of = [](const std::string& v, std::initializer_list<const char*> allowed, const std::string& what) {
        for (const char* a : allowed)
            if (v == a) return;
        throw ConfigError("invalid value '" + v + "' for " + what);
    };
    one_of(c.model.observable, {"current", "tagged", "both"}, "model.observable");
    one_of(c.model.initial, {"conditioned", "bernoulli"}, "model.initial");
    one_of(c.query.mode, {"raw", "current", "tagged"}, "query.mode");
    one_of(c.io.format, {"csv", "jsonl"}, "io.format");
    if (c.model.initial == "bernoulli" && c.model.observable != "current")
        throw ConfigError("model.initial = bernoulli only supports observable = current");
    if (!(c.model.T > 0.0)) throw ConfigError("model.T must be positive");
    if (c.numerics.xi_cutoff < 0.0 || c.numerics.xi_step < 0.0 || c.numerics.U < 0.0)
        throw ConfigError("numerics values must be nonnegative");
    if (!(c.numerics.du > 0.0) || !(c.numerics.dt > 0.0)) throw ConfigError("numerics.du and numerics.dt must be positive");
    if (c.io.out_dir.empty()) throw ConfigError("io.out_dir must not be empty");
    return c;
}

inline json default_document() { return json{{"schema_version", schema_version}}; }

// The effective document: defaults, then file, then environment, then flags.
inline json resolve_document(const std::optional<std::string>& path, char** envp, const json& flag_overrides) {
    json doc = path ? load_document(*path) : default_document();
    apply_environment(doc, envp);
    doc.merge_patch(flag_overrides);
    check_document(doc, "resolved config");
    return doc;
}

inline ProbeConfig probe_config(const RunConfig& c) {
    ProbeConfig p;
    p.rho = c.model.rho;
    p.N = c.probe.N;
    p.a_N = c.probe.a_N;
    p.grid = c.model.grid;
    p.replicas = c.probe.replicas;
    p.master_seed = c.probe.master_seed.value_or(0);
    p.L = c.model.L;
    p.safety = c.model.safety;
    p.threads = c.probe.threads;
    p.initial = c.model.initial == "bernoulli" ? InitialLaw::bernoulli : InitialLaw::conditioned;
    return p;
}

// Canonical echo of a resolved config, written into reports. The output
// directory and thread count are left out: neither changes any result, and
// echoing them would make otherwise identical runs differ byte-wise.
inline json to_json(const RunConfig& c) {
    json j;
    j["schema_version"] = schema_version;
    j["model"] = {{"rho", c.model.rho}, {"L", c.model.L}, {"T", c.model.T}, {"grid", c.model.grid},
                  {"observable", c.model.observable}, {"initial", c.model.initial}, {"safety", c.model.safety}};
    j["probe"] = {{"replicas", c.probe.replicas}, {"a_N", c.probe.a_N}, {"N", c.probe.N},
                  {"tail_levels", c.probe.tail_levels}};
    j["probe"]["master_seed"] = c.probe.master_seed ? json(*c.probe.master_seed) : json(nullptr);
    j["numerics"] = {{"xi_cutoff", c.numerics.xi_cutoff}, {"xi_step", c.numerics.xi_step}, {"du", c.numerics.du},
                     {"dt", c.numerics.dt}, {"U", c.numerics.U}};
    j["query"] = {{"times", c.query.times}, {"alphas", c.query.alphas}, {"mode", c.query.mode}};
    j["io"] = {{"format", c.io.format}};
    return j;
}

}  // namespace ssep::cli
