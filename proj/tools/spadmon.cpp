#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "spadmon/scenario.hpp"

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interval-statistics characterization and eavesdropping monitor "
                 "for single-photon detectors"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed_override = 0;
    bool fixed_clock = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON configuration file")->required();
        cmd->add_option("--seed", seed_override, "override the config's RNG seed");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_flag("--fixed-clock", fixed_clock,
                      "stamp reports with a fixed marker instead of the wall clock");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate a detection stream as CSV");
    CLI::App* analyze =
        app.add_subcommand("analyze", "histogram, characterize and report one stream");
    CLI::App* monitor =
        app.add_subcommand("monitor", "characterize and compare against a baseline");
    CLI::App* suite =
        app.add_subcommand("suite", "run named scenarios against pass/fail bands");
    for (CLI::App* cmd : {sim, analyze, monitor, suite}) add_common(cmd);

    CLI11_PARSE(app, argc, argv);

    CLI::App* active = app.get_subcommands().front();
    const bool seed_given = active->count("--seed") > 0;

    try {
        if (active == suite) {
            const std::filesystem::path path(config_path);
            auto members = spadmon::parse_suite_config(
                read_text_file(config_path),
                path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
            if (seed_given)
                for (auto& member : members) member.config.seed = seed_override;
            return spadmon::run_suite(members, out_dir, fixed_clock, std::cout, std::cerr);
        }

        spadmon::ScenarioConfig config = spadmon::load_scenario_config(config_path);
        if (seed_given) config.seed = seed_override;
        if (active == sim) return spadmon::run_simulate(config, out_dir, std::cerr);
        return spadmon::run_analyze(config, out_dir, fixed_clock, active == monitor,
                                    std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
