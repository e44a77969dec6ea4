#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "seqdiag/app.hpp"

using namespace seqdiag;
namespace fs = std::filesystem;

namespace {

const std::string source_dir = SEQDIAG_SOURCE_DIR;
const std::string cli = SEQDIAG_CLI;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("seqdiag_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = cli + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

const char* small_simultaneous = R"(
[model]
kind = multichannel_simultaneous
channels = 2

[procedure]
variants = adaptive, min_cusum
b = 2.5
h = 0

[grid]
nu = 0, 20

[mc]
paths = 400
seed = 7
)";

const char* small_design = R"(
[model]
kind = multichannel_simultaneous

[procedure]
variants = adaptive

[grid]
b_step = 0.05
h_step = 0.25
nu = 0, 50

[mc]
paths = 1000
seed = 11
exploit_symmetry = true

[design]
alpha = 0.01
r = 1.3, 2
)";

} // namespace

TEST(Config, CanonicalTextRoundTrips) {
    RunConfig c = parse_config_text(small_design);
    c.procedure.variants.push_back(Scheme{Variant::generalized, 15});
    c.procedure.b = 1.25;
    c.demo.truth = 2;
    c.design.selection = "misid_optimal";
    const RunConfig back = parse_config_text(to_config_text(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(to_config_text(back), to_config_text(c));
    EXPECT_EQ(parse_config_text(to_config_text(RunConfig{})), RunConfig{});
}

TEST(Config, InlineCommentsAreIgnored) {
    const RunConfig c = parse_config_text("; leading\n[model]\nkind = gaussian_mean_shift  ; kind\n"
                                          "thetas = 1, 2\t# means\n[mc]\nseed = 4 ;\n");
    EXPECT_EQ(c.model.kind, "gaussian_mean_shift");
    EXPECT_EQ(c.model.thetas, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(c.mc.seed, std::optional<std::uint64_t>(4));
}

TEST(Config, EveryFieldIsPrinted) {
    const fs::path dir = scratch("print");
    ASSERT_EQ(run_cli("--print-config --seed 5", dir / "out.txt"), 0);
    const std::string text = slurp(dir / "out.txt");
    for (const char* key :
         {"[model]", "kind =", "thetas =", "channels =", "pre_mean =", "pre_sd =", "post_mean =", "post_sd =",
          "[procedure]", "variants =", "b =", "h =", "[grid]", "b_step =", "b_max = auto", "h_start =", "h_step =",
          "h_max = auto", "nu =", "[mc]", "paths = 50000", "horizon = 100000", "seed = 5", "workers =",
          "false_alarm_fraction =", "exploit_symmetry =", "[design]", "alpha =", "r =", "selection =",
          "conservative =", "[demo]", "change_point =", "length =", "truth =", "window =", "fixed_n =", "[output]",
          "dir ="}) {
        EXPECT_NE(text.find(key), std::string::npos) << key;
    }
    EXPECT_EQ(parse_config_text(text).mc.seed, std::optional<std::uint64_t>(5));
}

TEST(Config, ValidationNamesTheField) {
    auto message = [](const std::string& text, Command cmd) -> std::string {
        try {
            validate_for(parse_config_text(text), cmd);
        } catch (const ConfigError& e) {
            return e.what();
        }
        return "";
    };
    EXPECT_NE(message("[mc]\nseed = 1\n[design]\nalpha = 0.01\n", Command::calibrate).find("[model]"),
              std::string::npos);
    EXPECT_NE(message("[model]\nkind = multichannel_single\n[mc]\nseed = 1\n[grid]\n[procedure]\n"
                      "[design]\nalpha = 0.01\nr = 1.0\n",
                      Command::design)
                  .find("design.r"),
              std::string::npos);
    EXPECT_NE(message("[model]\n[mc]\n[design]\n", Command::calibrate).find("mc.seed"), std::string::npos);
    EXPECT_NE(message(small_design, Command::evaluate).find("procedure.b"), std::string::npos);
    EXPECT_EQ(message(small_design, Command::design), "");
    EXPECT_EQ(message(small_simultaneous, Command::evaluate), "");

    auto parse_error = [](const std::string& text) -> std::string {
        try {
            parse_config_text(text);
        } catch (const ConfigError& e) {
            return e.what();
        }
        return "";
    };
    EXPECT_NE(parse_error("[mc]\npathz = 3\n").find("mc.pathz"), std::string::npos);
    EXPECT_NE(parse_error("[montecarlo]\n").find("[montecarlo]"), std::string::npos);
    EXPECT_NE(parse_error("[mc]\npaths = many\n").find("mc.paths"), std::string::npos);
    EXPECT_NE(parse_error("[procedure]\nvariants = cusum\n").find("cusum"), std::string::npos);
    EXPECT_NE(parse_error("[procedure]\nvariants = generalized\n").find("window"), std::string::npos);
    EXPECT_NE(parse_error("[mc]\nseed = 1\n[mc]\n").find("line"), std::string::npos);
}

TEST(Config, ShippedConfigsAreValid) {
    for (const char* name : {"single_fault", "simultaneous", "single_fault_ci", "simultaneous_ci"}) {
        std::ifstream in(fs::path(source_dir) / "configs" / (std::string(name) + ".cfg"));
        const RunConfig c = parse_config(in);
        EXPECT_NO_THROW(validate_for(c, Command::calibrate)) << name;
        EXPECT_NO_THROW(validate_for(c, Command::design)) << name;
        EXPECT_NO_THROW(validate_for(c, Command::misid_sweep)) << name;
        EXPECT_EQ(c.mc.paths, std::string(name).ends_with("_ci") ? 10000u : 50000u);
        EXPECT_EQ(c.mc.seed, std::optional<std::uint64_t>(2021));
    }
    std::ifstream in(fs::path(source_dir) / "configs" / "demo_paths.cfg");
    EXPECT_NO_THROW(validate_for(parse_config(in), Command::demo_paths));
}

TEST(Evaluate, ZeroIsolationThresholdMatchesMinCusumStopping) {
    const Report rep = cmd_evaluate(parse_config_text(small_simultaneous));
    const auto& r = rep.json["results"];
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0]["arl_false_alarm"], r[1]["arl_false_alarm"]);
    EXPECT_EQ(r[0]["delays"][0]["estimate"], r[1]["delays"][0]["estimate"]);
    EXPECT_EQ(r[0]["delays"][2]["se"], r[1]["delays"][2]["se"]);
    EXPECT_EQ(r[0]["misid"].size(), 6u);
}

TEST(Evaluate, ReportEchoReproducesTheRun) {
    RunConfig cfg = parse_config_text(small_simultaneous);
    cfg.mc.workers = 3;
    const Report rep = cmd_evaluate(cfg);
    const RunConfig echoed = parse_config_text(rep.json["config"].get<std::string>());
    EXPECT_EQ(echoed, cfg.reproducible_part());
    EXPECT_EQ(report_json_text(cmd_evaluate(echoed)), report_json_text(rep));
}

TEST(Evaluate, SingleAlternativeNeverMisidentifies) {
    const Report rep = cmd_evaluate(parse_config_text(R"(
[model]
kind = gaussian_mean_shift
thetas = 1
[procedure]
variants = adaptive, matrix
b = 2
h = 0.5
[grid]
nu = 0, 10
[mc]
paths = 500
seed = 3
)"));
    for (const auto& v : rep.json["results"]) {
        for (const auto& m : v["misid"]) EXPECT_EQ(m["estimate"], 0.0);
    }
    EXPECT_EQ(rep.exit_code, exit_ok);
}

TEST(Evaluate, EveryEstimateHasStandardErrorAndCount) {
    const Report rep = cmd_evaluate(parse_config_text(small_simultaneous));
    const std::string csv = rep.csv.front().second;
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,b,h,metric,nu,alternative,estimate,se,censored,n");
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    int rows = 0;
    while (std::getline(lines, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9) << line;
        EXPECT_NE(line.back(), ',');
        ++rows;
    }
    EXPECT_EQ(rows, 2 * (1 + 3 + 6));
}

TEST(Design, SelectsFeasibleAdaptiveThresholds) {
    const Report rep = cmd_design(parse_config_text(small_design));
    const auto& designs = rep.json["results"]["designs"];
    ASSERT_EQ(designs.size(), 2u);
    EXPECT_EQ(designs[1]["status"], "OK");
    EXPECT_GT(designs[1]["regions"]["S"].get<std::size_t>(), 0u);
    EXPECT_LE(designs[0]["regions"]["S"].get<std::size_t>(), designs[1]["regions"]["S"].get<std::size_t>());
    bool has_mask = false;
    for (const auto& [name, text] : rep.csv) has_mask = has_mask || name == "regions_adaptive_r2.csv";
    EXPECT_TRUE(has_mask);
}

TEST(MisidSweep, SingleChangePointReducesToClassicalMetric) {
    RunConfig cfg = parse_config_text(small_simultaneous);
    cfg.grid.nu = {0};
    const Report sweep = cmd_misid_sweep(cfg);
    const Report eval = cmd_evaluate(cfg);
    const auto& curve = sweep.json["results"]["sweeps"][0]["curve"];
    ASSERT_EQ(curve.size(), 1u);
    double worst = 0.0;
    for (const auto& m : eval.json["results"][0]["misid"]) worst = std::max(worst, m["estimate"].get<double>());
    EXPECT_EQ(curve[0]["estimate"].get<double>(), worst);
}

TEST(DemoPaths, TracesShowTheFailureMechanism) {
    std::ifstream in(fs::path(source_dir) / "configs" / "demo_paths.cfg");
    const Report rep = cmd_demo_paths(parse_config(in));
    ASSERT_EQ(rep.csv.size(), 2u);

    auto table = [](const std::string& text) {
        std::istringstream ss(text);
        std::string line;
        std::getline(ss, line);
        std::vector<std::string> header;
        std::stringstream hs(line);
        for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
        std::vector<std::map<std::string, double>> rows;
        while (std::getline(ss, line)) {
            std::stringstream ls(line);
            std::map<std::string, double> row;
            std::size_t k = 0;
            for (std::string cell; std::getline(ls, cell, ','); ++k) row[header[k]] = std::stod(cell);
            rows.push_back(row);
        }
        return rows;
    };
    const auto trace = table(rep.csv[0].second);
    ASSERT_EQ(trace.size(), 100u);
    // Before the change Y_12 drifts upward while the adaptive version stays low.
    EXPECT_GT(trace[49].at("Ymatrix_1_2"), 20.0);
    double adaptive_max = 0.0;
    for (std::size_t n = 0; n < 50; ++n) adaptive_max = std::max(adaptive_max, trace[n].at("Yadaptive_1_2"));
    EXPECT_LT(adaptive_max, 0.25 * trace[49].at("Ymatrix_1_2"));
    // After the change the adaptive Y'_21 tracks Y_21.
    double gap = 0.0, scale = 0.0;
    for (std::size_t n = 50; n < 100; ++n) {
        gap += std::abs(trace[n].at("Yadaptive_2_1") - trace[n].at("Ymatrix_2_1"));
        scale += trace[n].at("Ymatrix_2_1");
    }
    EXPECT_LT(gap, 0.1 * scale);

    const auto sums = table(rep.csv[1].second);
    ASSERT_EQ(sums.size(), 76u);
    EXPECT_EQ(sums[75].at("sum_l_1_2"), 0.0);
    EXPECT_LE(sums[50].at("sum_l_1_2"), 0.0);
    int nonpositive = 0;
    for (std::size_t k = 50; k < 75; ++k) nonpositive += sums[k].at("sum_l_1_2") <= 0.0;
    EXPECT_GE(nonpositive, 20);
    EXPECT_GT(sums[0].at("sum_l_1_2"), 0.0);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("exit");
    EXPECT_EQ(run_cli("calibrate --config " + write_config(dir, "[mc]\nseed = 1\n").string(), dir / "log"), 2);
    EXPECT_NE(slurp(dir / "log").find("[model]"), std::string::npos);

    const std::string censored = std::string(small_simultaneous) + "horizon = 3\n";
    EXPECT_EQ(run_cli("evaluate --out " + (dir / "c").string() + " --config " + write_config(dir, censored).string(),
                      dir / "log"),
              4);

    const std::string infeasible = std::string(small_design) + "conservative = true\n" +
                                   "[output]\ndir = " + (dir / "i").string() + "\n";
    const std::string tight = std::regex_replace(infeasible, std::regex("r = 1.3, 2"), "r = 1.01");
    EXPECT_EQ(run_cli("design --config " + write_config(dir, tight).string(), dir / "log"), 3);
    EXPECT_NE(slurp(dir / "i" / "design.json").find("INFEASIBLE"), std::string::npos);
}

TEST(Cli, ReportsAreByteIdenticalAcrossWorkerCounts) {
    const fs::path dir = scratch("workers");
    const fs::path cfg = write_config(dir, small_simultaneous);
    for (const char* cmd : {"evaluate", "misid-sweep"}) {
        ASSERT_EQ(run_cli(std::string(cmd) + " --workers 1 --out " + (dir / "w1").string() + " --config " +
                              cfg.string(),
                          dir / "log"),
                  0);
        ASSERT_EQ(run_cli(std::string(cmd) + " --workers 4 --out " + (dir / "w4").string() + " --config " +
                              cfg.string(),
                          dir / "log"),
                  0);
    }
    for (const auto& entry : fs::directory_iterator(dir / "w1")) {
        EXPECT_EQ(slurp(entry.path()), slurp(dir / "w4" / entry.path().filename())) << entry.path();
    }
}

TEST(Cli, SeedFlagOverridesConfig) {
    const fs::path dir = scratch("seed");
    const fs::path cfg = write_config(dir, small_simultaneous);
    ASSERT_EQ(run_cli("evaluate --seed 8 --out " + (dir / "a").string() + " --config " + cfg.string(), dir / "log"), 0);
    const std::string json = slurp(dir / "a" / "evaluate.json");
    EXPECT_NE(json.find("seed = 8"), std::string::npos);
    ASSERT_EQ(run_cli("evaluate --out " + (dir / "b").string() + " --config " + cfg.string(), dir / "log"), 0);
    EXPECT_NE(json, slurp(dir / "b" / "evaluate.json"));
}
