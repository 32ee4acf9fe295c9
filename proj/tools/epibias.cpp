// epibias: reproducible reports on growth-rate, reproduction-number and
// case-fatality biases from closed forms and simulated outbreaks.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "epibias/epibias.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, runtime_error = 3 };

using Command = void (*)(epibias::CommandContext&);

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Biases in epidemic growth-rate, R0 and CFR estimates"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicates;
    std::optional<unsigned> threads;
    std::optional<std::string> out_dir;
    std::string format = "csv";
    app.add_option("--config", config_path, "INI configuration file (default: built-in Ebola scenario)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (required here or as [run] seed)");
    app.add_option("--replicates", replicates, "accepted outbreaks, and exposure replicates per generator")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "worker threads (0: all cores)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));

    const std::map<std::string, std::pair<std::string, Command>> commands{
        {"bias-table", {"closed-form bias table", epibias::cmd_bias_table}},
        {"simulate", {"simulate the outbreak ensemble", epibias::cmd_simulate}},
        {"estimate", {"growth, renewal and prediction estimates on the ensemble", epibias::cmd_estimate}},
        {"exposures", {"incubation estimators on simulated exposure histories", epibias::cmd_exposures}},
        {"cfr", {"delayed-outcome CFR corrections", epibias::cmd_cfr}},
        {"reproduce-paper", {"every report from one run", epibias::cmd_reproduce}},
    };
    for (const auto& [name, entry] : commands) {
        app.add_subcommand(name, entry.first);
    }

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    epibias::RunConfig config;
    try {
        if (!config_path.empty()) {
            config = epibias::load_config(config_path);
        }
        if (seed) {
            config.seed = seed;
        }
        if (replicates) {
            config.replicates = *replicates;
            config.exposure_replicates = *replicates;
        }
        if (threads) {
            config.threads = *threads;
        }
        if (out_dir) {
            config.out_dir = *out_dir;
        }
        config.format = format == "json" ? epibias::OutputFormat::Json : epibias::OutputFormat::Csv;
        if (!config.seed) {
            throw epibias::ConfigError("a seed is required: pass --seed or set [run] seed");
        }
        epibias::validate(config);
    }
    catch (const epibias::Error& e) {
        std::cerr << "epibias: " << e.what() << "\n";
        return config_error;
    }

    try {
        epibias::OutputDir out(config.out_dir, config.format);
        epibias::RunMetadata meta;
        meta.seed = *config.seed;
        meta.config_hash = epibias::config_hash(config);
        meta.command = name;
        epibias::CommandContext ctx{config, meta, out};
        commands.at(name).second(ctx);
        for (const auto& file : out.written()) {
            std::cout << (config.out_dir / file).string() << "\n";
        }
    }
    catch (const epibias::ConfigError& e) {
        std::cerr << "epibias: " << e.what() << "\n";
        return config_error;
    }
    catch (const std::exception& e) {
        std::cerr << "epibias: " << name << ": " << e.what() << "\n";
        return runtime_error;
    }
    return ok;
}
