#pragma once

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "seqdiag/design.hpp"
#include "seqdiag/error.hpp"
#include "seqdiag/models.hpp"
#include "seqdiag/montecarlo.hpp"
#include "seqdiag/statistics.hpp"

namespace seqdiag {

// Run configuration read from an INI-style key tree:
//
//   [model]      kind = gaussian_mean_shift | multichannel_single | multichannel_simultaneous
//                thetas, channels, pre_mean, pre_sd, post_mean, post_sd
//   [procedure]  variants = adaptive, matrix, min_cusum, vector, generalized:15
//                b, h (explicit thresholds for evaluate / misid-sweep)
//   [grid]       b_step, b_max, h_start, h_step, h_max, nu
//   [mc]         paths, horizon, seed, workers, false_alarm_fraction, exploit_symmetry
//   [design]     alpha, r, selection = lexicographic | misid_optimal, conservative
//   [demo]       change_point, length, truth, window, fixed_n
//   [output]     dir
//
// `auto` is accepted for b_max, h_max and demo.truth.
struct RunConfig {
    struct Model {
        std::string kind = "multichannel_simultaneous";
        std::vector<double> thetas{1.0, 2.0};
        std::size_t channels = 2;
        double pre_mean = 0.0;
        double pre_sd = 1.0;
        double post_mean = 1.0;
        double post_sd = 1.0;

        bool operator==(const Model&) const = default;
    } model;

    struct Procedure {
        std::vector<Scheme> variants{Scheme{Variant::adaptive, 0}};
        std::optional<double> b;
        std::optional<double> h;

        bool operator==(const Procedure&) const = default;
    } procedure;

    struct Grid {
        double b_step = 0.01;
        std::optional<double> b_max;
        double h_start = 0.05;
        double h_step = 0.05;
        std::optional<double> h_max;
        std::vector<std::size_t> nu{0, 10, 20, 30, 40, 50};

        bool operator==(const Grid&) const = default;
    } grid;

    struct MC {
        std::size_t paths = 50000;
        std::size_t horizon = default_horizon;
        std::optional<std::uint64_t> seed;
        std::size_t workers = 1;
        double false_alarm_fraction = 0.1;
        bool exploit_symmetry = false;

        bool operator==(const MC&) const = default;
    } mc;

    struct Design {
        double alpha = 0.01;
        std::vector<double> r{2.0};
        std::string selection = "lexicographic";
        bool conservative = false;

        bool operator==(const Design&) const = default;
    } design;

    struct Demo {
        std::size_t change_point = 50;
        std::size_t length = 100;
        std::optional<std::size_t> truth;  // 1-based; defaults to the last alternative
        std::size_t window = 15;
        std::size_t fixed_n = 75;

        bool operator==(const Demo&) const = default;
    } demo;

    std::string output_dir = "out";

    // Sections that were present in the parsed text.
    std::set<std::string> sections;

    bool operator==(const RunConfig& o) const {
        return model == o.model && procedure == o.procedure && grid == o.grid && mc == o.mc && design == o.design &&
               demo == o.demo && output_dir == o.output_dir;
    }

    // The fields that determine results; worker count and output location
    // are cleared.
    RunConfig reproducible_part() const {
        RunConfig c = *this;
        c.mc.workers = 1;
        c.output_dir = "out";
        return c;
    }

    MCConfig mc_config() const {
        MCConfig m;
        m.paths = mc.paths;
        m.horizon = mc.horizon;
        m.seed = mc.seed.value_or(0);
        m.workers = mc.workers;
        m.false_alarm_fraction = mc.false_alarm_fraction;
        m.exploit_symmetry = mc.exploit_symmetry;
        return m;
    }

    ChangeModel build_model() const {
        if (model.kind == "gaussian_mean_shift") return gaussian_mean_shift(model.thetas);
        if (model.kind == "multichannel_single" || model.kind == "multichannel_simultaneous") {
            return gaussian_multichannel(model.channels, model.pre_mean, model.pre_sd, model.post_mean, model.post_sd,
                                         model.kind == "multichannel_simultaneous");
        }
        throw ConfigError("model.kind: unknown model constructor '" + model.kind + "'");
    }

    ThresholdGrid threshold_grid(std::size_t K) const {
        ThresholdGrid g = ThresholdGrid::defaults(design.alpha, K);
        g.b_step = grid.b_step;
        g.h_start = grid.h_start;
        g.h_step = grid.h_step;
        if (grid.b_max) g.b_max = *grid.b_max;
        g.h_max = grid.h_max.value_or(g.b_max);
        return g;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Drops a trailing "; comment" or "# comment" (the marker must follow whitespace).
inline std::string strip_comment(const std::string& s) {
    for (std::size_t k = 1; k < s.size(); ++k) {
        if ((s[k] == ';' || s[k] == '#') && (s[k - 1] == ' ' || s[k - 1] == '\t')) return trim(s.substr(0, k));
    }
    return trim(s);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double to_double(const std::string& field, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(field + ": expected a number, got '" + v + "'");
    }
}

inline std::uint64_t to_unsigned(const std::string& field, const std::string& v) {
    try {
        if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
        std::size_t used = 0;
        const auto u = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError(field + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& field, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(field + ": expected true or false, got '" + v + "'");
}

inline Scheme parse_scheme(const std::string& token) {
    const auto colon = token.find(':');
    if (colon == std::string::npos) {
        const Variant v = parse_variant(token);
        if (v == Variant::generalized) throw ConfigError("procedure.variants: generalized needs a window, e.g. generalized:15");
        return Scheme{v, 0};
    }
    const Variant v = parse_variant(token.substr(0, colon));
    if (v != Variant::generalized) throw ConfigError("procedure.variants: only generalized takes a window");
    const auto m = to_unsigned("procedure.variants", token.substr(colon + 1));
    if (m == 0) throw ConfigError("procedure.variants: generalized window must be >= 1");
    return Scheme{v, static_cast<std::size_t>(m)};
}

inline std::string scheme_token(const Scheme& s) {
    std::string out(to_string(s.variant));
    if (s.variant == Variant::generalized) out += ":" + std::to_string(s.window);
    return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) out += ", ";
        out += fmt(v[k]);
    }
    return out;
}

} // namespace detail

inline RunConfig parse_config(std::istream& in) {
    namespace pt = boost::property_tree;
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    pt::ptree tree;
    try {
        std::istringstream body(text);
        pt::read_ini(body, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config syntax error at line " + std::to_string(e.line()) + ": " + e.message());
    }

    RunConfig c;
    const std::set<std::string> known_sections{"model", "procedure", "grid", "mc", "design", "demo", "output"};
    // The INI reader drops sections without keys, so headers are collected from the text.
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        line = detail::strip_comment(line);
        if (line.size() < 2 || line.front() != '[' || line.back() != ']') continue;
        const std::string section = detail::trim(line.substr(1, line.size() - 2));
        if (!known_sections.count(section)) throw ConfigError("unknown section [" + section + "]");
        c.sections.insert(section);
    }
    for (const auto& [section, body] : tree) {
        for (const auto& [key, value] : body) {
            const std::string field = section + "." + key;
            const std::string v = detail::strip_comment(value.data());
            auto num = [&] { return detail::to_double(field, v); };
            auto uns = [&] { return static_cast<std::size_t>(detail::to_unsigned(field, v)); };
            auto opt_num = [&]() -> std::optional<double> {
                if (v == "auto") return std::nullopt;
                return num();
            };
            bool handled = true;
            if (section == "model") {
                if (key == "kind") c.model.kind = v;
                else if (key == "thetas") {
                    c.model.thetas.clear();
                    for (const auto& t : detail::split_list(v)) c.model.thetas.push_back(detail::to_double(field, t));
                } else if (key == "channels") c.model.channels = uns();
                else if (key == "pre_mean") c.model.pre_mean = num();
                else if (key == "pre_sd") c.model.pre_sd = num();
                else if (key == "post_mean") c.model.post_mean = num();
                else if (key == "post_sd") c.model.post_sd = num();
                else handled = false;
            } else if (section == "procedure") {
                if (key == "variants") {
                    c.procedure.variants.clear();
                    for (const auto& t : detail::split_list(v)) c.procedure.variants.push_back(detail::parse_scheme(t));
                } else if (key == "b") c.procedure.b = opt_num();
                else if (key == "h") c.procedure.h = opt_num();
                else handled = false;
            } else if (section == "grid") {
                if (key == "b_step") c.grid.b_step = num();
                else if (key == "b_max") c.grid.b_max = opt_num();
                else if (key == "h_start") c.grid.h_start = num();
                else if (key == "h_step") c.grid.h_step = num();
                else if (key == "h_max") c.grid.h_max = opt_num();
                else if (key == "nu") {
                    c.grid.nu.clear();
                    for (const auto& t : detail::split_list(v)) {
                        c.grid.nu.push_back(static_cast<std::size_t>(detail::to_unsigned(field, t)));
                    }
                } else handled = false;
            } else if (section == "mc") {
                if (key == "paths") c.mc.paths = uns();
                else if (key == "horizon") c.mc.horizon = uns();
                else if (key == "seed") c.mc.seed = detail::to_unsigned(field, v);
                else if (key == "workers") c.mc.workers = uns();
                else if (key == "false_alarm_fraction") c.mc.false_alarm_fraction = num();
                else if (key == "exploit_symmetry") c.mc.exploit_symmetry = detail::to_bool(field, v);
                else handled = false;
            } else if (section == "design") {
                if (key == "alpha") c.design.alpha = num();
                else if (key == "r") {
                    c.design.r.clear();
                    for (const auto& t : detail::split_list(v)) c.design.r.push_back(detail::to_double(field, t));
                } else if (key == "selection") c.design.selection = v;
                else if (key == "conservative") c.design.conservative = detail::to_bool(field, v);
                else handled = false;
            } else if (section == "demo") {
                if (key == "change_point") c.demo.change_point = uns();
                else if (key == "length") c.demo.length = uns();
                else if (key == "truth") c.demo.truth = v == "auto" ? std::nullopt : std::optional<std::size_t>(uns());
                else if (key == "window") c.demo.window = uns();
                else if (key == "fixed_n") c.demo.fixed_n = uns();
                else handled = false;
            } else if (section == "output") {
                if (key == "dir") c.output_dir = v;
                else handled = false;
            }
            if (!handled) throw ConfigError("unknown field " + field);
        }
    }
    return c;
}

inline RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

// Canonical text with every field explicit. Parsing it back yields an equal
// configuration.
inline std::string to_config_text(const RunConfig& c) {
    auto num = [](double v) { return format_double(v); };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string("auto"); };
    std::ostringstream o;
    o << "[model]\n"
      << "kind = " << c.model.kind << '\n'
      << "thetas = " << detail::join(c.model.thetas, num) << '\n'
      << "channels = " << c.model.channels << '\n'
      << "pre_mean = " << num(c.model.pre_mean) << '\n'
      << "pre_sd = " << num(c.model.pre_sd) << '\n'
      << "post_mean = " << num(c.model.post_mean) << '\n'
      << "post_sd = " << num(c.model.post_sd) << "\n\n";
    o << "[procedure]\n"
      << "variants = " << detail::join(c.procedure.variants, detail::scheme_token) << '\n'
      << "b = " << opt(c.procedure.b) << '\n'
      << "h = " << opt(c.procedure.h) << "\n\n";
    o << "[grid]\n"
      << "b_step = " << num(c.grid.b_step) << '\n'
      << "b_max = " << opt(c.grid.b_max) << '\n'
      << "h_start = " << num(c.grid.h_start) << '\n'
      << "h_step = " << num(c.grid.h_step) << '\n'
      << "h_max = " << opt(c.grid.h_max) << '\n'
      << "nu = " << detail::join(c.grid.nu, [](std::size_t v) { return std::to_string(v); }) << "\n\n";
    o << "[mc]\n"
      << "paths = " << c.mc.paths << '\n'
      << "horizon = " << c.mc.horizon << '\n';
    if (c.mc.seed) o << "seed = " << *c.mc.seed << '\n';
    o << "workers = " << c.mc.workers << '\n'
      << "false_alarm_fraction = " << num(c.mc.false_alarm_fraction) << '\n'
      << "exploit_symmetry = " << (c.mc.exploit_symmetry ? "true" : "false") << "\n\n";
    o << "[design]\n"
      << "alpha = " << num(c.design.alpha) << '\n'
      << "r = " << detail::join(c.design.r, num) << '\n'
      << "selection = " << c.design.selection << '\n'
      << "conservative = " << (c.design.conservative ? "true" : "false") << "\n\n";
    o << "[demo]\n"
      << "change_point = " << c.demo.change_point << '\n'
      << "length = " << c.demo.length << '\n'
      << "truth = " << (c.demo.truth ? std::to_string(*c.demo.truth) : std::string("auto")) << '\n'
      << "window = " << c.demo.window << '\n'
      << "fixed_n = " << c.demo.fixed_n << "\n\n";
    o << "[output]\n"
      << "dir = " << c.output_dir << '\n';
    return o.str();
}

enum class Command { calibrate, design, evaluate, misid_sweep, demo_paths };

inline std::string_view to_string(Command c) {
    switch (c) {
    case Command::calibrate: return "calibrate";
    case Command::design: return "design";
    case Command::evaluate: return "evaluate";
    case Command::misid_sweep: return "misid-sweep";
    case Command::demo_paths: return "demo-paths";
    }
    return "?";
}

// Checks that the sections a command reads are present and every value is
// in range.
inline void validate_for(const RunConfig& c, Command cmd) {
    auto require = [&](const char* section) {
        if (!c.sections.count(section)) {
            throw ConfigError("missing required section [" + std::string(section) + "] for " +
                              std::string(to_string(cmd)));
        }
    };
    require("model");
    if (c.model.kind == "gaussian_mean_shift") {
        if (c.model.thetas.empty()) throw ConfigError("model.thetas: at least one value required");
    } else if (c.model.kind == "multichannel_single" || c.model.kind == "multichannel_simultaneous") {
        if (c.model.channels == 0) throw ConfigError("model.channels must be >= 1");
    } else {
        throw ConfigError("model.kind: unknown model constructor '" + c.model.kind + "'");
    }

    if (cmd == Command::demo_paths) {
        require("demo");
        if (c.model.kind != "gaussian_mean_shift") throw ConfigError("model.kind: demo-paths needs gaussian_mean_shift");
        if (c.demo.length == 0) throw ConfigError("demo.length must be >= 1");
        if (c.demo.window == 0) throw ConfigError("demo.window must be >= 1");
        if (c.demo.fixed_n == 0 || c.demo.fixed_n > c.demo.length) {
            throw ConfigError("demo.fixed_n must lie in [1, demo.length]");
        }
        if (c.demo.truth && (*c.demo.truth == 0 || *c.demo.truth > c.model.thetas.size())) {
            throw ConfigError("demo.truth must lie in [1, K]");
        }
        if (!c.mc.seed) throw ConfigError("mc.seed is required (set it in [mc] or pass --seed)");
        return;
    }

    require("mc");
    if (!c.mc.seed) throw ConfigError("mc.seed is required (set it in [mc] or pass --seed)");
    if (c.mc.paths == 0) throw ConfigError("mc.paths must be >= 1");
    if (c.mc.horizon == 0) throw ConfigError("mc.horizon must be >= 1");
    if (c.mc.workers == 0) throw ConfigError("mc.workers must be >= 1");
    if (!(c.mc.false_alarm_fraction > 0.0) || c.mc.false_alarm_fraction > 1.0) {
        throw ConfigError("mc.false_alarm_fraction must lie in (0, 1]");
    }
    if (!(c.design.alpha > 0.0 && c.design.alpha < 1.0)) throw ConfigError("design.alpha must lie in (0, 1)");

    if (cmd == Command::calibrate) {
        require("design");
        return;
    }

    require("procedure");
    if (c.procedure.variants.empty()) throw ConfigError("procedure.variants: at least one variant required");
    const bool explicit_thresholds = c.procedure.b.has_value() && c.procedure.h.has_value();
    if (c.procedure.b.has_value() != c.procedure.h.has_value()) {
        throw ConfigError("procedure.b and procedure.h must be given together");
    }
    if (explicit_thresholds && (*c.procedure.b < 0.0 || *c.procedure.h < 0.0)) {
        throw ConfigError("procedure.b and procedure.h must be >= 0");
    }
    if (cmd == Command::evaluate && !explicit_thresholds) {
        throw ConfigError("procedure.b and procedure.h are required for evaluate");
    }
    const bool designs = cmd == Command::design || (cmd == Command::misid_sweep && !explicit_thresholds);
    if (designs) {
        require("design");
        require("grid");
        if (c.design.r.empty()) throw ConfigError("design.r: at least one value required");
        for (double r : c.design.r) {
            if (!(r > 1.0)) throw ConfigError("design.r: every delay factor must be > 1, got " + format_double(r));
        }
        if (c.design.selection != "lexicographic" && c.design.selection != "misid_optimal") {
            throw ConfigError("design.selection must be lexicographic or misid_optimal");
        }
        if (!(c.grid.b_step > 0.0) || !(c.grid.h_step > 0.0)) throw ConfigError("grid steps must be > 0");
    }
    if (cmd == Command::misid_sweep || cmd == Command::evaluate) {
        if (c.grid.nu.empty()) throw ConfigError("grid.nu: at least one change-point required");
    }
}

} // namespace seqdiag
