#include "styleddg/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace styleddg {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad number '" + v + "'");
    }
}

long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': bad boolean '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(static_cast<int>(parse_int(key, item)));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::vector<std::pair<int, int>> parse_edges(const std::string& key, const std::string& v) {
    std::vector<std::pair<int, int>> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto dash = item.find('-');
        if (dash == std::string::npos)
            throw ConfigError("config key '" + key + "': edge must look like 0-1");
        out.emplace_back(static_cast<int>(parse_int(key, trim(item.substr(0, dash)))),
                         static_cast<int>(parse_int(key, trim(item.substr(dash + 1)))));
    }
    return out;
}

std::string fmt_edges(const std::vector<std::pair<int, int>>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + std::to_string(v[i].first) + "-" + std::to_string(v[i].second);
    return out;
}

struct Key {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& key_table() {
    static const std::vector<Key> table = {
        {"graph",
         [](RunConfig& c, const std::string& v) { c.graph = graph_kind_from_string(v); },
         [](const RunConfig& c) { return std::string(to_string(c.graph)); }},
        {"m", [](RunConfig& c, const std::string& v) { c.m = (int)parse_int("m", v); },
         [](const RunConfig& c) { return std::to_string(c.m); }},
        {"radius",
         [](RunConfig& c, const std::string& v) { c.radius = parse_double("radius", v); },
         [](const RunConfig& c) { return fmt_double(c.radius); }},
        {"edges",
         [](RunConfig& c, const std::string& v) { c.custom_edges = parse_edges("edges", v); },
         [](const RunConfig& c) { return fmt_edges(c.custom_edges); }},
        {"seed",
         [](RunConfig& c, const std::string& v) {
             c.seed = static_cast<std::uint64_t>(parse_int("seed", v));
         },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        {"mode",
         [](RunConfig& c, const std::string& v) { c.mode = style_mode_from_string(v); },
         [](const RunConfig& c) { return std::string(to_string(c.mode)); }},
        {"batch", [](RunConfig& c, const std::string& v) { c.batch = (int)parse_int("batch", v); },
         [](const RunConfig& c) { return std::to_string(c.batch); }},
        {"iters", [](RunConfig& c, const std::string& v) { c.iters = (int)parse_int("iters", v); },
         [](const RunConfig& c) { return std::to_string(c.iters); }},
        {"lr", [](RunConfig& c, const std::string& v) { c.lr = parse_double("lr", v); },
         [](const RunConfig& c) { return fmt_double(c.lr); }},
        {"schedule",
         [](RunConfig& c, const std::string& v) { c.sched = lr_schedule_from_string(v); },
         [](const RunConfig& c) { return std::string(to_string(c.sched)); }},
        {"threads",
         [](RunConfig& c, const std::string& v) { c.threads = (int)parse_int("threads", v); },
         [](const RunConfig& c) { return std::to_string(c.threads); }},
        {"distinct_init",
         [](RunConfig& c, const std::string& v) { c.distinct_init = parse_bool("distinct_init", v); },
         [](const RunConfig& c) { return std::string(c.distinct_init ? "true" : "false"); }},
        {"probe_batch",
         [](RunConfig& c, const std::string& v) { c.probe_batch = (int)parse_int("probe_batch", v); },
         [](const RunConfig& c) { return std::to_string(c.probe_batch); }},
        {"probe_grad",
         [](RunConfig& c, const std::string& v) { c.probe_grad = parse_bool("probe_grad", v); },
         [](const RunConfig& c) { return std::string(c.probe_grad ? "true" : "false"); }},
        {"dsu_per_instance",
         [](RunConfig& c, const std::string& v) {
             c.dsu_per_instance = parse_bool("dsu_per_instance", v);
         },
         [](const RunConfig& c) { return std::string(c.dsu_per_instance ? "true" : "false"); }},
        {"model.blocks",
         [](RunConfig& c, const std::string& v) { c.model.blocks = parse_int_list("model.blocks", v); },
         [](const RunConfig& c) { return fmt_int_list(c.model.blocks); }},
        {"model.kernel",
         [](RunConfig& c, const std::string& v) { c.model.kernel = (int)parse_int("model.kernel", v); },
         [](const RunConfig& c) { return std::to_string(c.model.kernel); }},
        {"model.pool",
         [](RunConfig& c, const std::string& v) { c.model.pool = (int)parse_int("model.pool", v); },
         [](const RunConfig& c) { return std::to_string(c.model.pool); }},
        {"model.hooks",
         [](RunConfig& c, const std::string& v) { c.model.hooks = parse_int_list("model.hooks", v); },
         [](const RunConfig& c) { return fmt_int_list(c.model.hooks); }},
        {"model.init_scale",
         [](RunConfig& c, const std::string& v) {
             c.model.init_scale = parse_double("model.init_scale", v);
         },
         [](const RunConfig& c) { return fmt_double(c.model.init_scale); }},
        {"style.p_layer",
         [](RunConfig& c, const std::string& v) { c.style.p_layer = parse_double("style.p_layer", v); },
         [](const RunConfig& c) { return fmt_double(c.style.p_layer); }},
        {"style.alpha_explore",
         [](RunConfig& c, const std::string& v) {
             c.style.alpha_explore = parse_double("style.alpha_explore", v);
         },
         [](const RunConfig& c) { return fmt_double(c.style.alpha_explore); }},
        {"style.beta_a",
         [](RunConfig& c, const std::string& v) { c.style.beta_a = parse_double("style.beta_a", v); },
         [](const RunConfig& c) { return fmt_double(c.style.beta_a); }},
        {"style.beta_b",
         [](RunConfig& c, const std::string& v) { c.style.beta_b = parse_double("style.beta_b", v); },
         [](const RunConfig& c) { return fmt_double(c.style.beta_b); }},
        {"style.eps_var",
         [](RunConfig& c, const std::string& v) { c.style.eps_var = parse_double("style.eps_var", v); },
         [](const RunConfig& c) { return fmt_double(c.style.eps_var); }},
        {"style.lambda_fixed",
         [](RunConfig& c, const std::string& v) {
             c.style.lambda_fixed = parse_double("style.lambda_fixed", v);
         },
         [](const RunConfig& c) { return fmt_double(c.style.lambda_fixed); }},
        {"style.eps_scale",
         [](RunConfig& c, const std::string& v) { c.style.eps_scale = parse_double("style.eps_scale", v); },
         [](const RunConfig& c) { return fmt_double(c.style.eps_scale); }},
        {"data.domains",
         [](RunConfig& c, const std::string& v) { c.data.domains = (int)parse_int("data.domains", v); },
         [](const RunConfig& c) { return std::to_string(c.data.domains); }},
        {"data.classes",
         [](RunConfig& c, const std::string& v) { c.data.classes = (int)parse_int("data.classes", v); },
         [](const RunConfig& c) { return std::to_string(c.data.classes); }},
        {"data.train_per_domain",
         [](RunConfig& c, const std::string& v) {
             c.data.train_per_domain = (int)parse_int("data.train_per_domain", v);
         },
         [](const RunConfig& c) { return std::to_string(c.data.train_per_domain); }},
        {"data.test_per_domain",
         [](RunConfig& c, const std::string& v) {
             c.data.test_per_domain = (int)parse_int("data.test_per_domain", v);
         },
         [](const RunConfig& c) { return std::to_string(c.data.test_per_domain); }},
        {"data.channels",
         [](RunConfig& c, const std::string& v) { c.data.channels = (int)parse_int("data.channels", v); },
         [](const RunConfig& c) { return std::to_string(c.data.channels); }},
        {"data.height",
         [](RunConfig& c, const std::string& v) { c.data.height = (int)parse_int("data.height", v); },
         [](const RunConfig& c) { return std::to_string(c.data.height); }},
        {"data.width",
         [](RunConfig& c, const std::string& v) { c.data.width = (int)parse_int("data.width", v); },
         [](const RunConfig& c) { return std::to_string(c.data.width); }},
        {"data.style_gap",
         [](RunConfig& c, const std::string& v) { c.data.style_gap = parse_double("data.style_gap", v); },
         [](const RunConfig& c) { return fmt_double(c.data.style_gap); }},
        {"data.noise_amp",
         [](RunConfig& c, const std::string& v) { c.data.noise_amp = parse_double("data.noise_amp", v); },
         [](const RunConfig& c) { return fmt_double(c.data.noise_amp); }},
        {"data.label_noise",
         [](RunConfig& c, const std::string& v) {
             c.data.label_noise = parse_double("data.label_noise", v);
         },
         [](const RunConfig& c) { return fmt_double(c.data.label_noise); }},
        {"data.shortcut",
         [](RunConfig& c, const std::string& v) { c.data.shortcut = parse_double("data.shortcut", v); },
         [](const RunConfig& c) { return fmt_double(c.data.shortcut); }},
        {"target",
         [](RunConfig& c, const std::string& v) { c.target_domain = (int)parse_int("target", v); },
         [](const RunConfig& c) { return std::to_string(c.target_domain); }},
    };
    return table;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& val) {
    for (const auto& k : key_table())
        if (k.name == key) {
            k.set(cfg, val);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

void finalize(RunConfig& cfg) { sync_model_to_data(cfg); }

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    finalize(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key=value, got '" + assignment + "'");
    std::string key = trim(assignment.substr(0, eq));
    std::string val = trim(assignment.substr(eq + 1));
    set_key(cfg, key, val);
    finalize(cfg);
}

std::string config_to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : key_table()) {
        if (k.name == "edges" && cfg.custom_edges.empty()) continue;
        out += k.name + " = " + k.get(cfg) + "\n";
    }
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
}

}  // namespace styleddg
