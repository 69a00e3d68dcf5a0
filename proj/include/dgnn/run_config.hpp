#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgnn/core.hpp"
#include "dgnn/trainer.hpp"

namespace dgnn {

/// Expected statistics and default hyperparameters for a named dataset.
struct DatasetProfile {
    std::string name;
    int nodes, features, classes, edges;
    double homophily;
    double homophily_tol = 0.01;
    double lambda, alpha, beta;
    int layers;
    double dropout, lr;
};

inline const std::vector<DatasetProfile>& dataset_profiles() {
    static const std::vector<DatasetProfile> profiles = {
        {"cora", 2708, 1433, 7, 5429, 0.809, 0.01, 1.0, 2.0, 0.02, 2, 0.25, 0.002},
        {"citeseer", 3327, 3703, 6, 4732, 0.721, 0.01, 2.0, 0.5, 0.01, 3, 0.15, 0.003},
        {"chameleon", 2277, 2325, 5, 36101, 0.233, 0.01, 1.0, 2.5, 0.01, 2, 0.02, 0.05},
        {"squirrel", 5201, 2089, 5, 217073, 0.203, 0.01, 1.0, 2.5, 0.01, 2, 0.0, 0.02},
    };
    return profiles;
}

inline const DatasetProfile& find_profile(const std::string& name) {
    for (const auto& p : dataset_profiles()) {
        if (p.name == name) return p;
    }
    throw std::invalid_argument("unknown profile '" + name + "' (expected cora, citeseer, chameleon or squirrel)");
}

/// Resolved run configuration: profile defaults, then config-file entries,
/// then command-line overrides. Unknown keys are hard errors.
struct RunConfig {
    std::string dataset;  // dataset directory
    std::string profile;
    DgnnHyperparams hp;
    TrainConfig tc;
    std::vector<unsigned> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::string ablation;  // "", "A1", "A2", "A3"
    int jobs = 1;
    std::string out_dir = "out";

    DgnnHyperparams resolved_hp() const {
        if (ablation.empty()) return hp;
        if (ablation == "A1") return ablation_config(AblationVariant::A1, hp);
        if (ablation == "A2") return ablation_config(AblationVariant::A2, hp);
        if (ablation == "A3") return ablation_config(AblationVariant::A3, hp);
        throw std::invalid_argument("unknown ablation '" + ablation + "' (expected A1, A2 or A3)");
    }
};

namespace config_detail {

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad number '" + v + "'");
    }
}

inline long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        long d = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad integer '" + v + "'");
    }
}

}  // namespace config_detail

/// "10" means seeds 1..10; "3,7,21" is an explicit list.
inline std::vector<unsigned> parse_seeds(const std::string& value) {
    std::vector<unsigned> seeds;
    if (value.find(',') == std::string::npos) {
        long count = config_detail::parse_int("seeds", value);
        if (count < 1) throw std::invalid_argument("seeds: count must be >= 1");
        for (long s = 1; s <= count; ++s) seeds.push_back(static_cast<unsigned>(s));
        return seeds;
    }
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        seeds.push_back(static_cast<unsigned>(config_detail::parse_int("seeds", tok)));
    }
    if (seeds.empty()) throw std::invalid_argument("seeds: empty list");
    return seeds;
}

/// Applies one key = value setting; throws on unknown keys or bad values.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    using config_detail::parse_double;
    using config_detail::parse_int;
    if (key == "dataset") {
        cfg.dataset = value;
    } else if (key == "profile") {
        cfg.profile = value;
    } else if (key == "lambda") {
        cfg.hp.lambda = parse_double(key, value);
    } else if (key == "alpha") {
        cfg.hp.alpha = parse_double(key, value);
    } else if (key == "beta") {
        cfg.hp.beta = parse_double(key, value);
    } else if (key == "epsilon") {
        cfg.hp.epsilon = parse_double(key, value);
    } else if (key == "layers") {
        cfg.hp.layers = static_cast<int>(parse_int(key, value));
    } else if (key == "mode") {
        if (value == "network") {
            cfg.hp.mode = DgnnMode::network;
        } else if (value == "analytic") {
            cfg.hp.mode = DgnnMode::analytic;
        } else {
            throw std::invalid_argument("config key 'mode': expected network or analytic");
        }
    } else if (key == "k") {
        cfg.tc.semantic_k = static_cast<int>(parse_int(key, value));
    } else if (key == "lr") {
        cfg.tc.lr = parse_double(key, value);
    } else if (key == "dropout") {
        cfg.tc.dropout = parse_double(key, value);
    } else if (key == "epochs") {
        cfg.tc.max_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "patience") {
        cfg.tc.patience = static_cast<int>(parse_int(key, value));
    } else if (key == "weight_decay") {
        cfg.tc.weight_decay = parse_double(key, value);
    } else if (key == "warmup") {
        cfg.tc.warmup_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "normalize_features") {
        long v = parse_int(key, value);
        if (v != 0 && v != 1) throw std::invalid_argument("config key 'normalize_features': expected 0 or 1");
        cfg.tc.normalize_features = (v == 1);
    } else if (key == "mem_budget") {
        cfg.tc.memory_budget = static_cast<std::size_t>(parse_int(key, value)) << 20;  // MiB
    } else if (key == "seeds") {
        cfg.seeds = parse_seeds(value);
    } else if (key == "ablation") {
        cfg.ablation = value;
    } else if (key == "jobs") {
        cfg.jobs = static_cast<int>(parse_int(key, value));
    } else if (key == "out") {
        cfg.out_dir = value;
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

inline void apply_profile(RunConfig& cfg, const std::string& name) {
    const DatasetProfile& p = find_profile(name);
    cfg.profile = name;
    cfg.hp.lambda = p.lambda;
    cfg.hp.alpha = p.alpha;
    cfg.hp.beta = p.beta;
    cfg.hp.layers = p.layers;
    cfg.tc.dropout = p.dropout;
    cfg.tc.lr = p.lr;
    if (cfg.dataset.empty()) cfg.dataset = "data/" + name;
}

/// Flat `key = value` file, '#' comments, unknown keys rejected.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::map<std::string, std::string> entries;
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string body = trim(line);
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        }
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty key or value");
        }
        entries[key] = value;
    }
    return entries;
}

/// Canonical text form of the resolved configuration; re-running from this
/// file reproduces the run byte-for-byte.
inline std::string serialize_config(const RunConfig& cfg) {
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    std::string out;
    if (!cfg.dataset.empty()) out += "dataset = " + cfg.dataset + "\n";
    if (!cfg.profile.empty()) out += "profile = " + cfg.profile + "\n";
    out += "lambda = " + num(cfg.hp.lambda) + "\n";
    out += "alpha = " + num(cfg.hp.alpha) + "\n";
    out += "beta = " + num(cfg.hp.beta) + "\n";
    out += "epsilon = " + num(cfg.hp.epsilon) + "\n";
    out += "layers = " + std::to_string(cfg.hp.layers) + "\n";
    out += std::string("mode = ") + (cfg.hp.mode == DgnnMode::network ? "network" : "analytic") + "\n";
    out += "k = " + std::to_string(cfg.tc.semantic_k) + "\n";
    out += "lr = " + num(cfg.tc.lr) + "\n";
    out += "dropout = " + num(cfg.tc.dropout) + "\n";
    out += "epochs = " + std::to_string(cfg.tc.max_epochs) + "\n";
    out += "patience = " + std::to_string(cfg.tc.patience) + "\n";
    out += "weight_decay = " + num(cfg.tc.weight_decay) + "\n";
    out += "warmup = " + std::to_string(cfg.tc.warmup_epochs) + "\n";
    out += std::string("normalize_features = ") + (cfg.tc.normalize_features ? "1" : "0") + "\n";
    out += "mem_budget = " + std::to_string(cfg.tc.memory_budget >> 20) + "\n";
    out += "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        out += (i ? "," : "") + std::to_string(cfg.seeds[i]);
    }
    out += "\n";
    if (!cfg.ablation.empty()) out += "ablation = " + cfg.ablation + "\n";
    out += "jobs = " + std::to_string(cfg.jobs) + "\n";
    out += "out = " + cfg.out_dir + "\n";
    return out;
}

}  // namespace dgnn
