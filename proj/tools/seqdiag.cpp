#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "seqdiag/app.hpp"

using namespace seqdiag;

int main(int argc, char** argv) {
    CLI::App app{"Sequential change diagnosis: CuSum-family detection and isolation"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string out_dir;
    bool print_config = false;
    app.add_option("--config", config_path, "run configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "base seed (overrides [mc] seed)");
    app.add_option("--workers", workers, "worker threads (overrides [mc] workers)");
    app.add_option("--out", out_dir, "report directory (overrides [output] dir)");
    app.add_flag("--print-config", print_config, "print the effective configuration and exit");

    const std::pair<const char*, Command> commands[] = {
        {"calibrate", Command::calibrate},     {"design", Command::design},
        {"evaluate", Command::evaluate},       {"misid-sweep", Command::misid_sweep},
        {"demo-paths", Command::demo_paths},
    };
    const char* help[] = {
        "calibrate single CuSum thresholds b_i(alpha) and optimal delays L_i(alpha)",
        "estimate feasibility regions and select (b, h) per variant and r",
        "estimate false-alarm ARL, delays and misidentification at explicit (b, h)",
        "worst-case misidentification over change-points for explicit or designed thresholds",
        "trace the statistics along one simulated path",
    };
    for (std::size_t k = 0; k < std::size(commands); ++k) app.add_subcommand(commands[k].first, help[k]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_validation;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot open config " + config_path);
            cfg = parse_config(in);
        }
        if (seed) cfg.mc.seed = *seed;
        if (workers) cfg.mc.workers = *workers;
        if (!out_dir.empty()) cfg.output_dir = out_dir;

        if (print_config) {
            std::cout << to_config_text(cfg);
            return exit_ok;
        }

        std::optional<Command> cmd;
        for (const auto& [name, c] : commands) {
            if (app.got_subcommand(name)) cmd = c;
        }
        if (!cmd) {
            std::cerr << app.help();
            return exit_validation;
        }
        if (config_path.empty()) throw ConfigError("--config is required for " + std::string(to_string(*cmd)));

        const Report rep = run_command(*cmd, cfg);
        write_report(rep, cfg.output_dir);
        std::cout << "wrote " << (std::filesystem::path(cfg.output_dir) / (rep.command + ".json")).string();
        for (const auto& [name, text] : rep.csv) std::cout << ' ' << name;
        std::cout << '\n';
        if (rep.exit_code == exit_infeasible) std::cerr << "error: design infeasible for some (variant, r)\n";
        if (rep.exit_code == exit_unreliable) std::cerr << "warning: some estimates are unreliable or low-power\n";
        return rep.exit_code;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_validation;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return exit_validation;
    } catch (const GridExhausted& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return exit_infeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
}
