#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "report.hpp"

namespace degen {

enum class Command { Solve, Control, Sweep, VerifyCarleman, VerifyTrace, VerifyHardy, TraceConstants };

inline const std::vector<std::pair<Command, std::string>>& command_names()
{
    static const std::vector<std::pair<Command, std::string>> names{
        {Command::Solve, "solve"},
        {Command::Control, "control"},
        {Command::Sweep, "sweep"},
        {Command::VerifyCarleman, "verify-carleman"},
        {Command::VerifyTrace, "verify-trace"},
        {Command::VerifyHardy, "verify-hardy"},
        {Command::TraceConstants, "trace-constants"},
    };
    return names;
}

inline std::string to_string(Command c)
{
    for (const auto& [k, n] : command_names())
        if (k == c) return n;
    return "?";
}

inline Command parse_command(const std::string& s)
{
    for (const auto& [k, n] : command_names())
        if (n == s) return k;
    throw std::invalid_argument("unknown command " + s);
}

struct RunConfig {
    Command command = Command::Solve;
    double alpha = 0.5;
    double T = 1.0;
    double s = 1.0;
    double epsilon = 0.25;
    std::vector<double> eps_list{0.4, 0.2, 0.1};
    std::vector<double> s_list{0.5, 1.0};
    int nx = 64;
    int nt = 64;
    double grading = 1.0;
    std::uint64_t seed = 42;
    int samples = 0;  // 0: per-command default
    std::string solver = "direct";
    double rel_tol = 1e-10;
    int max_iter = 20000;
    std::string out = "reports";
    std::vector<std::string> format{"csv", "json"};
};

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<double> parse_number_list(const std::string& s)
{
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        std::size_t pos = 0;
        double v = std::stod(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("malformed number list: " + s);
        out.push_back(v);
    }
    return out;
}

inline void validate(const RunConfig& c)
{
    if (!(c.alpha > 0.0 && c.alpha < 2.0)) throw std::invalid_argument("alpha out of (0,2)");
    if (!(c.T > 0.0)) throw std::invalid_argument("T must be positive");
    if (!(c.s > 0.0)) throw std::invalid_argument("s must be positive");
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw std::invalid_argument("epsilon out of (0,1)");
    if (c.eps_list.empty()) throw std::invalid_argument("eps_list is empty");
    for (std::size_t k = 0; k < c.eps_list.size(); ++k) {
        if (!(c.eps_list[k] > 0.0 && c.eps_list[k] < 1.0)) throw std::invalid_argument("eps_list entries out of (0,1)");
        if (k && !(c.eps_list[k] < c.eps_list[k - 1])) throw std::invalid_argument("eps_list must be strictly decreasing");
    }
    if (c.s_list.empty()) throw std::invalid_argument("s_list is empty");
    for (double v : c.s_list)
        if (!(v > 0.0)) throw std::invalid_argument("s_list entries must be positive");
    if (c.nx < 4 || c.nx > 4096) throw std::invalid_argument("nx out of [4,4096]");
    if (c.nt < 1 || c.nt > 65536) throw std::invalid_argument("nt out of [1,65536]");
    if (!(c.grading >= 1.0 && c.grading <= 4.0)) throw std::invalid_argument("grading out of [1,4]");
    if (c.samples < 0 || c.samples > 100000) throw std::invalid_argument("samples out of [0,100000]");
    if (c.solver != "direct" && c.solver != "cg") throw std::invalid_argument("solver must be direct or cg");
    if (!(c.rel_tol > 0.0 && c.rel_tol < 1.0)) throw std::invalid_argument("rel_tol out of (0,1)");
    if (c.max_iter < 1) throw std::invalid_argument("max_iter must be positive");
    if (c.out.empty()) throw std::invalid_argument("out must be a directory path");
    static const std::set<std::string> fmts{"csv", "json", "svg"};
    for (const auto& f : c.format)
        if (!fmts.count(f)) throw std::invalid_argument("unknown format " + f);
}

inline Json to_json(const RunConfig& c)
{
    Json j;
    j["command"] = to_string(c.command);
    j["alpha"] = c.alpha;
    j["T"] = c.T;
    j["s"] = c.s;
    j["epsilon"] = c.epsilon;
    j["eps_list"] = c.eps_list;
    j["s_list"] = c.s_list;
    j["nx"] = c.nx;
    j["nt"] = c.nt;
    j["grading"] = c.grading;
    j["seed"] = c.seed;
    j["samples"] = c.samples;
    j["solver"] = c.solver;
    j["rel_tol"] = c.rel_tol;
    j["max_iter"] = c.max_iter;
    j["out"] = c.out;
    j["format"] = c.format;
    return j;
}

// Applies the keys of j onto c; unknown keys and wrong types are errors.
inline void apply_json(RunConfig& c, const Json& j)
{
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    auto num = [](const Json& v, const std::string& k) {
        if (!v.is_number()) throw std::invalid_argument("config key " + k + " must be a number");
        return v.get<double>();
    };
    auto integer = [](const Json& v, const std::string& k) {
        if (!v.is_number_integer()) throw std::invalid_argument("config key " + k + " must be an integer");
        return v.get<long long>();
    };
    auto nums = [&](const Json& v, const std::string& k) {
        if (!v.is_array()) throw std::invalid_argument("config key " + k + " must be an array");
        std::vector<double> out;
        for (const auto& x : v) out.push_back(num(x, k));
        return out;
    };
    auto str = [](const Json& v, const std::string& k) {
        if (!v.is_string()) throw std::invalid_argument("config key " + k + " must be a string");
        return v.get<std::string>();
    };
    for (const auto& [k, v] : j.items()) {
        if (k == "command") c.command = parse_command(str(v, k));
        else if (k == "alpha") c.alpha = num(v, k);
        else if (k == "T") c.T = num(v, k);
        else if (k == "s") c.s = num(v, k);
        else if (k == "epsilon") c.epsilon = num(v, k);
        else if (k == "eps_list") c.eps_list = nums(v, k);
        else if (k == "s_list") c.s_list = nums(v, k);
        else if (k == "nx") c.nx = int(integer(v, k));
        else if (k == "nt") c.nt = int(integer(v, k));
        else if (k == "grading") c.grading = num(v, k);
        else if (k == "seed") {
            if (!v.is_number_unsigned()) throw std::invalid_argument("config key seed must be a nonnegative integer");
            c.seed = v.get<std::uint64_t>();
        }
        else if (k == "samples") c.samples = int(integer(v, k));
        else if (k == "solver") c.solver = str(v, k);
        else if (k == "rel_tol") c.rel_tol = num(v, k);
        else if (k == "max_iter") c.max_iter = int(integer(v, k));
        else if (k == "out") c.out = str(v, k);
        else if (k == "format") {
            if (v.is_string()) c.format = split_list(v.get<std::string>());
            else if (v.is_array()) {
                c.format.clear();
                for (const auto& x : v) c.format.push_back(str(x, k));
            } else throw std::invalid_argument("config key format must be a string or array");
        }
        else throw std::invalid_argument("unknown config key " + k);
    }
}

// File keys first, then flag overrides, then validation.
inline RunConfig config_from_text(const std::string& text, const std::function<void(RunConfig&)>& overrides = {})
{
    RunConfig c;
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
        Json j;
        try {
            j = Json::parse(text);
        } catch (const Json::parse_error& e) {
            throw std::invalid_argument(std::string("malformed config: ") + e.what());
        }
        apply_json(c, j);
    }
    if (overrides) overrides(c);
    validate(c);
    return c;
}

inline RunConfig load_config(const std::string& path, const std::function<void(RunConfig&)>& overrides = {})
{
    if (path.empty()) return config_from_text("", overrides);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot read config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_text(ss.str(), overrides);
}

}  // namespace degen
