#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "tcs/bev.hpp"
#include "tcs/model.hpp"
#include "tcs/train.hpp"

namespace tcs {

// Everything a training run needs, with the stock defaults (k=64, p=0.1,
// alpha=0.99, batch 32, f(x)=x, Adam 5e-5).
struct RunConfig {
    BevConfig bev;
    LossConfig loss;
    TrainConfig train;
    ModelConfig model;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw SchemaError("config: key '" + key + "' wants a boolean, got '" + v + "'");
}

}  // namespace detail

// Plain "key = value" text; '#' starts a comment. Unknown keys are rejected
// so typos cannot silently fall back to defaults.
inline RunConfig parse_run_config(std::istream& is, RunConfig cfg = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw SchemaError("config: expected 'key = value' at line " +
                              std::to_string(line_no));
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        try {
            if (key == "k") cfg.bev.k = cfg.model.k = std::stoi(value);
            else if (key == "p") cfg.bev.p = std::stod(value);
            else if (key == "sigma_gt") cfg.bev.sigma_gt = std::stod(value);
            else if (key == "alpha") cfg.loss.alpha = std::stod(value);
            else if (key == "weight_fn") cfg.loss.weight_fn = parse_weight_fn(value);
            else if (key == "batch_size") cfg.train.batch_size = std::stoi(value);
            else if (key == "epochs") cfg.train.epochs = std::stoi(value);
            else if (key == "lr") cfg.train.lr = std::stod(value);
            else if (key == "seed") cfg.train.seed = std::stoull(value);
            else if (key == "aug_rot") cfg.train.aug_rot = detail::parse_bool(value, key);
            else if (key == "aug_flip") cfg.train.aug_flip = detail::parse_bool(value, key);
            else if (key == "aug_speed") cfg.train.aug_speed = detail::parse_bool(value, key);
            else if (key == "residuals") cfg.model.residual = detail::parse_bool(value, key);
            else if (key == "input_skip") cfg.model.input_skip = detail::parse_bool(value, key);
            else if (key == "c1") cfg.model.c1 = std::stoi(value);
            else if (key == "c2") cfg.model.c2 = std::stoi(value);
            else throw SchemaError("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw SchemaError("config: bad value for '" + key + "' at line " +
                              std::to_string(line_no));
        } catch (const std::out_of_range&) {
            throw SchemaError("config: value out of range for '" + key + "' at line " +
                              std::to_string(line_no));
        }
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open " + path);
    return parse_run_config(is);
}

inline std::string config_echo(const RunConfig& cfg) {
    std::ostringstream os;
    os << "k = " << cfg.bev.k << '\n'
       << "p = " << cfg.bev.p << '\n'
       << "sigma_gt = " << cfg.bev.sigma_gt << '\n'
       << "alpha = " << cfg.loss.alpha << '\n'
       << "weight_fn = " << weight_fn_name(cfg.loss.weight_fn) << '\n'
       << "batch_size = " << cfg.train.batch_size << '\n'
       << "epochs = " << cfg.train.epochs << '\n'
       << "lr = " << cfg.train.lr << '\n'
       << "seed = " << cfg.train.seed << '\n'
       << "aug_rot = " << (cfg.train.aug_rot ? "true" : "false") << '\n'
       << "aug_flip = " << (cfg.train.aug_flip ? "true" : "false") << '\n'
       << "aug_speed = " << (cfg.train.aug_speed ? "true" : "false") << '\n'
       << "residuals = " << (cfg.model.residual ? "true" : "false") << '\n'
       << "input_skip = " << (cfg.model.input_skip ? "true" : "false") << '\n'
       << "c1 = " << cfg.model.c1 << '\n'
       << "c2 = " << cfg.model.c2 << '\n';
    return os.str();
}

}  // namespace tcs
