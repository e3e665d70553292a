// saft: command-line front end for the pipeline.
//
//   saft {gen-data|gen-bank|train|attack|eval|diagonal} --config <path> [--seed N] [--threads N] [--out DIR]
//
// Flags override the config file, which overrides built-in defaults. On
// failure a single JSON object is written to stderr:
//   {"error": "<kind>", "message": "...", "command": "<name>"}
// Exit codes: 2 for usage and config errors, 3 for missing or mismatched
// artifacts, 1 for anything else.

#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "saft/pipeline.hpp"

namespace {

int exit_code(const std::string& kind) {
    if (kind == "config") return 2;
    if (kind == "dependency" || kind == "format") return 3;
    return 1;
}

int fail(const std::string& command, const std::string& kind, const std::string& message) {
    nlohmann::ordered_json j{{"error", kind}, {"message", message}, {"command", command}};
    std::cerr << j.dump() << std::endl;
    return exit_code(kind);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic-aware adversarial fine-tuning workbench"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"gen-data", "generate (or import) the image dataset"},
        {"gen-bank", "generate and filter class descriptions"},
        {"train", "fine-tune the image encoder"},
        {"attack", "craft adversarial examples against the trained encoder"},
        {"eval", "clean/robust zero-shot accuracy and retrieval recall"},
        {"diagonal", "attack-transfer analysis across similarity metrics"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "TOML run configuration")->required();
        sub->add_option("--seed", seed, "global seed");
        sub->add_option("--threads", threads, "worker thread cap");
        sub->add_option("--out", out, "run directory");
    }

    std::string command = "saft";
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(command, "config", e.what());
    }
    command = app.get_subcommands().front()->get_name();

    try {
        auto cfg = saft::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (threads) cfg.threads = *threads;
        if (out) cfg.out = *out;
        cfg.finalize();
        cfg.validate();
        saft::run_command(command, cfg, std::cout);
    } catch (const saft::Error& e) {
        return fail(command, e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail(command, "internal", e.what());
    }
    return 0;
}
