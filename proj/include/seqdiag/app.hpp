#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seqdiag/config.hpp"
#include "seqdiag/design.hpp"
#include "seqdiag/montecarlo.hpp"
#include "seqdiag/procedures.hpp"
#include "seqdiag/statistics.hpp"

namespace seqdiag {

inline constexpr int schema_version = 1;
inline constexpr const char* toolkit_version = "0.1.0";

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_validation = 2,
    exit_infeasible = 3,
    exit_unreliable = 4,
};

using Json = nlohmann::ordered_json;

struct Report {
    std::string command;
    Json json;
    std::vector<std::pair<std::string, std::string>> csv;  // file name, contents
    int exit_code = exit_ok;

    void raise(int code) {
        // Infeasibility outranks an unreliable estimate.
        if (exit_code == exit_ok || (code == exit_infeasible && exit_code == exit_unreliable)) exit_code = code;
    }
};

namespace detail {

inline Json to_json(const Estimate& e) {
    Json j;
    j["estimate"] = e.value;
    j["se"] = e.se;
    j["n"] = e.n;
    j["censored"] = e.censored;
    j["lower_bound"] = e.lower_bound();
    j["unreliable"] = e.unreliable;
    return j;
}

inline Json to_json(const MisidEstimate& m) {
    Json j;
    j["estimate"] = m.probability;
    j["se"] = m.se;
    j["n"] = m.retained;
    j["false_alarms"] = m.false_alarms;
    j["censored"] = m.censored;
    j["paths"] = m.paths;
    j["low_power"] = m.low_power;
    return j;
}

inline Json model_json(const ChangeModel& model) {
    Json j;
    j["name"] = model.name();
    j["K"] = model.K();
    j["dim"] = model.dim();
    const KLTable kl = kl_table(model);
    j["kl_closed_form"] = kl.closed_form;
    j["kl_to_pre"] = kl.I;
    Json istar = Json::array();
    for (double v : kl.Istar) istar.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
    j["kl_min_rival"] = istar;
    j["warnings"] = model.warnings();
    return j;
}

inline Report start_report(Command cmd, const RunConfig& cfg, const ChangeModel& model) {
    Report rep;
    rep.command = std::string(to_string(cmd));
    rep.json["schema_version"] = schema_version;
    rep.json["toolkit"] = "seqdiag";
    rep.json["version"] = toolkit_version;
    rep.json["command"] = rep.command;
    rep.json["config"] = to_config_text(cfg.reproducible_part());
    rep.json["model"] = model_json(model);
    return rep;
}

inline std::string scheme_file_token(const Scheme& s) {
    std::string out(to_string(s.variant));
    if (s.variant == Variant::generalized) out += "_m" + std::to_string(s.window);
    return out;
}

inline std::string csv_row(std::initializer_list<std::string> cells) {
    std::string out;
    bool first = true;
    for (const auto& c : cells) {
        if (!first) out += ',';
        out += c;
        first = false;
    }
    return out + '\n';
}

inline std::string num(double v) { return format_double(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }

inline const char* calibration_csv_header() { return "alternative,b,metric,estimate,se,censored,n\n"; }

inline std::string calibration_csv(const OptimalPerformance& opt) {
    std::string out = calibration_csv_header();
    for (std::size_t i = 0; i < opt.calibration.size(); ++i) {
        const auto& c = opt.calibration[i];
        const auto& d = opt.delay[i];
        out += csv_row({num(i + 1), num(c.b), "arl_false_alarm", num(c.arl.value), num(c.arl.se),
                        num(c.arl.censored), num(c.arl.n)});
        out += csv_row({num(i + 1), num(c.b), "optimal_lorden_delay", num(d.value), num(d.se), num(d.censored),
                        num(d.n)});
    }
    return out;
}

inline Json calibration_json(const OptimalPerformance& opt, double alpha) {
    Json j;
    j["alpha"] = alpha;
    j["target_arl"] = 1.0 / alpha;
    Json alts = Json::array();
    for (std::size_t i = 0; i < opt.calibration.size(); ++i) {
        Json a;
        a["alternative"] = i + 1;
        a["b"] = opt.calibration[i].b;
        a["arl_false_alarm"] = to_json(opt.calibration[i].arl);
        a["optimal_lorden_delay"] = to_json(opt.delay[i]);
        alts.push_back(a);
    }
    j["alternatives"] = alts;
    j["max_optimal_delay"] = opt.max_delay();
    return j;
}

inline bool any_unreliable(const OptimalPerformance& opt) {
    for (std::size_t i = 0; i < opt.calibration.size(); ++i) {
        if (opt.calibration[i].arl.unreliable || opt.delay[i].unreliable) return true;
    }
    return false;
}

inline std::size_t count_set(const std::vector<std::uint8_t>& v) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](std::uint8_t x) { return x != 0; }));
}

inline Json region_summary(const RegionMask& m) {
    Json j;
    j["cells"] = m.B() * m.H();
    j["A"] = count_set(m.A);
    Json d = Json::array();
    for (const auto& di : m.D) d.push_back(count_set(di));
    j["D"] = d;
    j["S"] = count_set(m.S);
    j["undecided"] = m.undecided;
    j["delay_proxy"] = m.delay_proxy;
    return j;
}

inline std::string regions_csv(const RegionMask& m) {
    std::string out = "b,h,A";
    for (std::size_t i = 0; i < m.D.size(); ++i) out += ",D_" + std::to_string(i + 1);
    out += ",S\n";
    for (std::size_t r = 0; r < m.H(); ++r) {
        for (std::size_t c = 0; c < m.B(); ++c) {
            const std::size_t k = m.index(c, r);
            out += num(m.b[c]) + ',' + num(m.h[r]) + ',' + (m.A[k] ? '1' : '0');
            for (const auto& d : m.D) out += std::string(",") + (d[k] ? '1' : '0');
            out += std::string(",") + (m.S[k] ? '1' : '0') + '\n';
        }
    }
    return out;
}

inline std::string estimates_csv(const RegionEstimates& est) {
    std::string out = to_csv(est.arl);
    for (const auto& d : est.delay) out += to_csv(d, false);
    return out;
}

// Thresholds for one (scheme, r) produced by the design pipeline.
struct Designed {
    double r = 0.0;
    RegionMask mask;
    std::optional<GridPoint> point;
    std::optional<MisidChoice> misid_choice;
};

struct SchemeDesign {
    Scheme scheme;
    RegionEstimates estimates;
    std::vector<Designed> by_r;
};

inline SchemeDesign design_scheme(const Scheme& scheme, const RunConfig& cfg, const ChangeModel& model,
                                  const OptimalPerformance& opt, std::span<const double> b,
                                  std::span<const double> h, const MCConfig& mc) {
    SchemeDesign out;
    out.scheme = scheme;
    out.estimates = estimate_regions(scheme, model, b, h, mc);
    std::vector<WorstMisid> worst;
    for (double r : cfg.design.r) {
        const DesignReport rep = design(scheme, cfg.design.alpha, r, opt, out.estimates, cfg.design.conservative);
        Designed d;
        d.r = r;
        d.mask = rep.mask;
        d.point = rep.selected;
        if (cfg.design.selection == "misid_optimal" && d.mask.feasible()) {
            if (worst.empty()) worst = worst_misid_grid(scheme, model, b, h, cfg.grid.nu, mc);
            d.misid_choice = select_misid_optimal(d.mask, worst);
            d.point = d.misid_choice->point;
        }
        out.by_r.push_back(std::move(d));
    }
    return out;
}

inline Json infeasible_json(const RegionMask& m) {
    Json nonempty = Json::array();
    if (count_set(m.A)) nonempty.push_back("A");
    for (std::size_t i = 0; i < m.D.size(); ++i) {
        if (count_set(m.D[i])) nonempty.push_back("D_" + std::to_string(i + 1));
    }
    return nonempty;
}

} // namespace detail

// b_i(alpha) and L_i(alpha) for every alternative.
inline Report cmd_calibrate(const RunConfig& cfg) {
    validate_for(cfg, Command::calibrate);
    const ChangeModel model = cfg.build_model();
    const MCConfig mc = cfg.mc_config();
    Report rep = detail::start_report(Command::calibrate, cfg, model);
    const auto b = cfg.threshold_grid(model.K()).b_values();
    const OptimalPerformance opt = optimal_performance(model, cfg.design.alpha, b, mc);
    rep.json["results"] = detail::calibration_json(opt, cfg.design.alpha);
    rep.csv.emplace_back("calibration.csv", detail::calibration_csv(opt));
    if (detail::any_unreliable(opt)) rep.raise(exit_unreliable);
    return rep;
}

// Region masks and selected thresholds per (variant, r).
inline Report cmd_design(const RunConfig& cfg) {
    validate_for(cfg, Command::design);
    const ChangeModel model = cfg.build_model();
    const MCConfig mc = cfg.mc_config();
    Report rep = detail::start_report(Command::design, cfg, model);
    const ThresholdGrid grid = cfg.threshold_grid(model.K());
    const auto b = grid.b_values();
    const auto h = grid.h_values();
    const OptimalPerformance opt = optimal_performance(model, cfg.design.alpha, b, mc);
    if (detail::any_unreliable(opt)) rep.raise(exit_unreliable);

    Json results;
    results["calibration"] = detail::calibration_json(opt, cfg.design.alpha);
    results["selection"] = cfg.design.selection;
    Json designs = Json::array();
    for (const Scheme& scheme : cfg.procedure.variants) {
        const detail::SchemeDesign sd = detail::design_scheme(scheme, cfg, model, opt, b, h, mc);
        const std::string token = detail::scheme_file_token(scheme);
        const std::string est_file = "estimates_" + token + ".csv";
        rep.csv.emplace_back(est_file, detail::estimates_csv(sd.estimates));
        for (const auto& d : sd.by_r) {
            const std::string mask_file = "regions_" + token + "_r" + format_double(d.r) + ".csv";
            rep.csv.emplace_back(mask_file, detail::regions_csv(d.mask));
            Json j;
            j["variant"] = describe(scheme);
            j["r"] = d.r;
            j["delay_limit"] = d.r * opt.max_delay();
            j["regions"] = detail::region_summary(d.mask);
            j["estimates_csv"] = est_file;
            j["regions_csv"] = mask_file;
            if (!d.point) {
                j["status"] = "INFEASIBLE";
                j["nonempty_masks"] = detail::infeasible_json(d.mask);
                rep.raise(exit_infeasible);
            } else {
                j["status"] = "OK";
                const std::size_t bi = d.point->b_index;
                const std::size_t hi = d.point->h_index;
                j["b"] = d.mask.b[bi];
                j["h"] = d.mask.h[hi];
                j["arl_false_alarm"] = detail::to_json(sd.estimates.arl.at(bi, hi));
                bool unreliable = sd.estimates.arl.at(bi, hi).unreliable;
                Json delays = Json::array();
                for (const auto& t : sd.estimates.delay) {
                    Json e = detail::to_json(t.at(bi, hi));
                    e["metric"] = t.metric;
                    delays.push_back(e);
                    unreliable = unreliable || t.at(bi, hi).unreliable;
                }
                j["delays"] = delays;
                if (d.misid_choice) {
                    Json w = detail::to_json(d.misid_choice->worst.estimate);
                    w["alternative"] = d.misid_choice->worst.truth + 1;
                    w["change_point"] = d.misid_choice->worst.change_point;
                    j["worst_misid"] = w;
                    unreliable = unreliable || d.misid_choice->low_power;
                }
                if (unreliable) rep.raise(exit_unreliable);
            }
            designs.push_back(j);
        }
    }
    results["designs"] = designs;
    rep.json["results"] = results;
    return rep;
}

// Metrics of explicit thresholds: E_inf[T], E_i[T] at change-point 0, and
// misidentification at every configured change-point.
inline Report cmd_evaluate(const RunConfig& cfg) {
    validate_for(cfg, Command::evaluate);
    const ChangeModel model = cfg.build_model();
    const MCConfig mc = cfg.mc_config();
    Report rep = detail::start_report(Command::evaluate, cfg, model);
    const double b = *cfg.procedure.b;
    const double h = *cfg.procedure.h;
    const double bs[] = {b};
    const double hs[] = {h};
    std::string csv = "variant,b,h,metric,nu,alternative,estimate,se,censored,n\n";
    Json evals = Json::array();
    for (const Scheme& scheme : cfg.procedure.variants) {
        const std::string name = describe(scheme);
        Json j;
        j["variant"] = name;
        j["b"] = b;
        j["h"] = h;
        const Estimate arl = estimate_arl_false_alarm(scheme, model, bs, hs, mc).cells.front();
        j["arl_false_alarm"] = detail::to_json(arl);
        bool unreliable = arl.unreliable;
        csv += detail::csv_row({name, detail::num(b), detail::num(h), "arl_false_alarm", "", "",
                                detail::num(arl.value), detail::num(arl.se), detail::num(arl.censored),
                                detail::num(arl.n)});
        Json delays = Json::array();
        std::vector<Estimate> delay(model.K());
        std::vector<std::string> metric(model.K());
        for (std::size_t i = 0; i < model.K(); ++i) {
            const std::size_t twin = model.equivalent_to(i);
            if (mc.exploit_symmetry && twin != i) {
                delay[i] = delay[twin];
            } else {
                delay[i] = estimate_delay_at_zero(scheme, model, i, bs, hs, mc).cells.front();
            }
            metric[i] = lorden_equals_zero_delay(scheme.variant) ? "lorden_delay" : "delay_at_nu0";
            Json e = detail::to_json(delay[i]);
            e["alternative"] = i + 1;
            e["metric"] = metric[i];
            delays.push_back(e);
            unreliable = unreliable || delay[i].unreliable;
            csv += detail::csv_row({name, detail::num(b), detail::num(h), metric[i], "0", detail::num(i + 1),
                                    detail::num(delay[i].value), detail::num(delay[i].se),
                                    detail::num(delay[i].censored), detail::num(delay[i].n)});
        }
        j["delays"] = delays;
        Json misid = Json::array();
        const ProcedureSpec spec{scheme, b, h};
        for (std::size_t nu : cfg.grid.nu) {
            std::vector<MisidEstimate> m(model.K());
            for (std::size_t jx = 0; jx < model.K(); ++jx) {
                const std::size_t twin = model.equivalent_to(jx);
                m[jx] = (mc.exploit_symmetry && twin != jx) ? m[twin] : estimate_misid(spec, model, nu, jx, mc);
                Json e = detail::to_json(m[jx]);
                e["change_point"] = nu;
                e["alternative"] = jx + 1;
                misid.push_back(e);
                unreliable = unreliable || m[jx].low_power;
                csv += detail::csv_row({name, detail::num(b), detail::num(h), "misid", detail::num(nu),
                                        detail::num(jx + 1), detail::num(m[jx].probability), detail::num(m[jx].se),
                                        detail::num(m[jx].censored), detail::num(m[jx].retained)});
            }
        }
        j["misid"] = misid;
        evals.push_back(j);
        if (unreliable) rep.raise(exit_unreliable);
    }
    rep.json["results"] = evals;
    rep.csv.emplace_back("evaluate.csv", csv);
    return rep;
}

// Worst-over-j misidentification curves over the change-point grid, for
// explicit or designed thresholds.
inline Report cmd_misid_sweep(const RunConfig& cfg) {
    validate_for(cfg, Command::misid_sweep);
    const ChangeModel model = cfg.build_model();
    const MCConfig mc = cfg.mc_config();
    Report rep = detail::start_report(Command::misid_sweep, cfg, model);
    const bool explicit_thresholds = cfg.procedure.b.has_value();

    std::optional<OptimalPerformance> opt;
    std::vector<double> b_grid, h_grid;
    Json results;
    if (!explicit_thresholds) {
        const ThresholdGrid grid = cfg.threshold_grid(model.K());
        b_grid = grid.b_values();
        h_grid = grid.h_values();
        opt = optimal_performance(model, cfg.design.alpha, b_grid, mc);
        if (detail::any_unreliable(*opt)) rep.raise(exit_unreliable);
        results["calibration"] = detail::calibration_json(*opt, cfg.design.alpha);
        results["selection"] = cfg.design.selection;
    }

    std::string curve_csv = "variant,r,b,h,nu,worst_alternative,estimate,se,n,low_power\n";
    std::string worst_csv = "variant,r,b,h,nu,alternative,estimate,se,n,low_power\n";
    Json sweeps = Json::array();
    const auto alternatives = distinct_alternatives(model, mc);

    auto sweep = [&](const Scheme& scheme, std::optional<double> r, double b, double h) {
        const std::string name = describe(scheme);
        const std::string r_text = r ? format_double(*r) : std::string();
        const ProcedureSpec spec{scheme, b, h};
        Json j;
        j["variant"] = name;
        j["r"] = r ? Json(*r) : Json(nullptr);
        j["status"] = "OK";
        j["b"] = b;
        j["h"] = h;
        Json curve = Json::array();
        std::optional<std::pair<MisidEstimate, std::pair<std::size_t, std::size_t>>> overall;
        bool low_power = false;
        for (std::size_t nu : cfg.grid.nu) {
            std::optional<std::pair<MisidEstimate, std::size_t>> worst;
            for (std::size_t jx : alternatives) {
                const MisidEstimate m = estimate_misid(spec, model, nu, jx, mc);
                if (!worst || m.probability > worst->first.probability) worst = std::make_pair(m, jx);
            }
            Json e = detail::to_json(worst->first);
            e["change_point"] = nu;
            e["worst_alternative"] = worst->second + 1;
            curve.push_back(e);
            low_power = low_power || worst->first.low_power;
            curve_csv += detail::csv_row({name, r_text, detail::num(b), detail::num(h), detail::num(nu),
                                          detail::num(worst->second + 1), detail::num(worst->first.probability),
                                          detail::num(worst->first.se), detail::num(worst->first.retained),
                                          worst->first.low_power ? "1" : "0"});
            if (!overall || worst->first.probability > overall->first.probability) {
                overall = std::make_pair(worst->first, std::make_pair(nu, worst->second));
            }
        }
        j["curve"] = curve;
        Json w = detail::to_json(overall->first);
        w["change_point"] = overall->second.first;
        w["alternative"] = overall->second.second + 1;
        j["worst"] = w;
        worst_csv += detail::csv_row({name, r_text, detail::num(b), detail::num(h),
                                      detail::num(overall->second.first), detail::num(overall->second.second + 1),
                                      detail::num(overall->first.probability), detail::num(overall->first.se),
                                      detail::num(overall->first.retained), overall->first.low_power ? "1" : "0"});
        if (low_power) rep.raise(exit_unreliable);
        sweeps.push_back(j);
    };

    for (const Scheme& scheme : cfg.procedure.variants) {
        if (explicit_thresholds) {
            sweep(scheme, std::nullopt, *cfg.procedure.b, *cfg.procedure.h);
            continue;
        }
        const detail::SchemeDesign sd = detail::design_scheme(scheme, cfg, model, *opt, b_grid, h_grid, mc);
        for (const auto& d : sd.by_r) {
            if (!d.point) {
                Json j;
                j["variant"] = describe(scheme);
                j["r"] = d.r;
                j["status"] = "INFEASIBLE";
                j["nonempty_masks"] = detail::infeasible_json(d.mask);
                sweeps.push_back(j);
                rep.raise(exit_infeasible);
                continue;
            }
            sweep(scheme, d.r, d.mask.b[d.point->b_index], d.mask.h[d.point->h_index]);
        }
    }
    results["sweeps"] = sweeps;
    rep.json["results"] = results;
    rep.csv.emplace_back("misid_curve.csv", curve_csv);
    rep.csv.emplace_back("misid_worst.csv", worst_csv);
    return rep;
}

// One simulated path with every statistic traced, and the backward partial
// sums at a fixed time.
inline Report cmd_demo_paths(const RunConfig& cfg) {
    validate_for(cfg, Command::demo_paths);
    const ChangeModel model = cfg.build_model();
    const std::size_t K = model.K();
    const std::size_t truth = cfg.demo.truth.value_or(K) - 1;
    const std::size_t nu = cfg.demo.change_point;
    const std::size_t len = cfg.demo.length;
    Report rep = detail::start_report(Command::demo_paths, cfg, model);

    StatisticBank matrix(K, Scheme{Variant::matrix, 0});
    StatisticBank adaptive(K, Scheme{Variant::adaptive, 0});
    StatisticBank windowed(K, Scheme{Variant::generalized, cfg.demo.window});
    StatisticBank full(K, Scheme{Variant::generalized_full, 0});
    const std::string m = std::to_string(cfg.demo.window);

    std::string trace = "n,x,post_change";
    for (std::size_t i = 0; i < K; ++i) trace += ",Y_" + std::to_string(i + 1);
    for (std::size_t i = 0; i < K; ++i) trace += ",R_" + std::to_string(i + 1);
    for (const char* prefix : {"Ymatrix_", "Yadaptive_"}) {
        for (std::size_t i = 0; i < K; ++i) {
            for (std::size_t j = 0; j < K; ++j) {
                if (i != j) trace += "," + std::string(prefix) + std::to_string(i + 1) + "_" + std::to_string(j + 1);
            }
        }
    }
    for (std::size_t i = 0; i < K; ++i) trace += ",Wwindow_" + std::to_string(i + 1);
    for (std::size_t i = 0; i < K; ++i) trace += ",Wfull_" + std::to_string(i + 1);
    trace += '\n';

    RandomStream rng = rng_stream(cfg.mc.seed.value_or(0), 0, detail::scenario_tag(Scenario::change_at(nu, truth)));
    std::vector<double> x(model.dim());
    std::vector<double> l(K);
    std::vector<std::vector<double>> llr_history;
    for (std::size_t n = 1; n <= len; ++n) {
        const bool post = n > nu;
        (post ? model.alternative(truth) : model.pre()).sample(rng, x);
        model.llrs(x, l);
        llr_history.push_back(l);
        matrix.advance(l);
        adaptive.advance(l);
        windowed.advance(l);
        full.advance(l);
        trace += std::to_string(n) + ',' + detail::num(x[0]) + ',' + (post ? '1' : '0');
        for (double y : matrix.Y()) trace += ',' + detail::num(y);
        for (std::size_t r : matrix.reset_clock().R) trace += ',' + std::to_string(r);
        for (const StatisticBank* bank : {&matrix, &adaptive}) {
            for (std::size_t i = 0; i < K; ++i) {
                for (std::size_t j = 0; j < K; ++j) {
                    if (i != j) trace += ',' + detail::num(bank->pairs()(i, j));
                }
            }
        }
        for (double w : windowed.W()) trace += ',' + detail::num(w);
        for (double w : full.W()) trace += ',' + detail::num(w);
        trace += '\n';
    }

    // sum_{s=k+1}^{n} l(s) for k = 0..n at n = fixed_n.
    const std::size_t nf = cfg.demo.fixed_n;
    std::string sums = "k";
    for (std::size_t i = 0; i < K; ++i) sums += ",sum_l_" + std::to_string(i + 1);
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) {
            if (i != j) sums += ",sum_l_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
        }
    }
    sums += '\n';
    std::vector<std::string> rows(nf + 1);
    std::vector<double> single(K, 0.0);
    std::vector<double> pair(K * K, 0.0);
    for (std::size_t k = nf + 1; k-- > 0;) {
        if (k < nf) {
            const auto& lk = llr_history[k];  // l(k + 1)
            for (std::size_t i = 0; i < K; ++i) {
                single[i] += lk[i];
                for (std::size_t j = 0; j < K; ++j) pair[i * K + j] += lk[i] - lk[j];
            }
        }
        std::string row = std::to_string(k);
        for (std::size_t i = 0; i < K; ++i) row += ',' + detail::num(single[i]);
        for (std::size_t i = 0; i < K; ++i) {
            for (std::size_t j = 0; j < K; ++j) {
                if (i != j) row += ',' + detail::num(pair[i * K + j]);
            }
        }
        rows[k] = row + '\n';
    }
    for (const auto& r : rows) sums += r;

    Json results;
    results["change_point"] = nu;
    results["true_alternative"] = truth + 1;
    results["length"] = len;
    results["window"] = cfg.demo.window;
    results["fixed_n"] = nf;
    results["trace_csv"] = "demo_trace.csv";
    results["partial_sums_csv"] = "demo_partial_sums.csv";
    rep.json["results"] = results;
    rep.csv.emplace_back("demo_trace.csv", trace);
    rep.csv.emplace_back("demo_partial_sums.csv", sums);
    return rep;
}

inline Report run_command(Command cmd, const RunConfig& cfg) {
    switch (cmd) {
    case Command::calibrate: return cmd_calibrate(cfg);
    case Command::design: return cmd_design(cfg);
    case Command::evaluate: return cmd_evaluate(cfg);
    case Command::misid_sweep: return cmd_misid_sweep(cfg);
    case Command::demo_paths: return cmd_demo_paths(cfg);
    }
    throw ConfigError("unknown command");
}

inline std::string report_json_text(const Report& rep) {
    Json j = rep.json;
    j["exit_code"] = rep.exit_code;
    return j.dump(2) + '\n';
}

// Writes <command>.json and every CSV table into dir.
inline void write_report(const Report& rep, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto put = [&](const std::string& name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw Error("cannot write " + (dir / name).string());
        out << text;
    };
    put(rep.command + ".json", report_json_text(rep));
    for (const auto& [name, text] : rep.csv) put(name, text);
}

} // namespace seqdiag
