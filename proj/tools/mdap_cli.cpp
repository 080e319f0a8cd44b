// SPDX-License-Identifier: Apache-2.0
//
// mdap command-line front end. Only the public C interface is used.

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mdap/mdap.h"

namespace {

struct Flag {
    const char* name;
    const char* help;
};

const std::vector<Flag> kDataFlags = {
    {"domain-s", "source-domain interaction file (user<TAB>item<TAB>rating[<TAB>timestamp])"},
    {"domain-t", "target-domain interaction file"},
    {"threshold", "ratings at or above this value count as interactions"},
    {"min-interactions", "k-core threshold for users and items"},
};

const std::vector<Flag> kModelFlags = {
    {"k", "number of latent views"},
    {"tau", "Gumbel-softmax temperature"},
    {"lambda", "gate orthogonality weight"},
    {"dropout", "input dropout probability"},
    {"embed-dim", "embedding width"},
    {"hidden", "encoder and decoder hidden width"},
    {"ablation", "full, no_gumbel, single_view or no_gate"},
};

const std::vector<Flag> kTrainFlags = {
    {"epochs", "maximum number of epochs"},
    {"patience", "early-stopping patience in epochs"},
    {"batch-users", "users per mini-batch"},
    {"lr", "Adam learning rate"},
    {"cutoff", "K for Recall@K and NDCG@K"},
};

const std::vector<Flag> kSynthFlags = {
    {"n-users", "number of users"},
    {"n-items-s", "source-domain items"},
    {"n-items-t", "target-domain items"},
    {"k-true", "number of planted blocks"},
    {"overlap", "fraction of users active in both domains"},
    {"noise", "probability that an interaction falls outside the user's block"},
    {"per-user", "interactions per user and domain"},
};

const std::vector<Flag> kGridFlags = {
    {"grid-dropout", "comma-separated dropout values"},
    {"grid-tau", "comma-separated tau values"},
    {"grid-k", "comma-separated view counts"},
    {"grid-lambda", "comma-separated lambda values"},
};

struct Command {
    CLI::App* app = nullptr;
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> values;
    std::map<std::string, bool> switches;
};

void add_flags(Command& cmd, const std::vector<Flag>& flags, const std::string& group) {
    for (const auto& f : flags) {
        const std::string name = f.name;
        cmd.app->add_option_function<std::string>(
                   "--" + name, [&cmd, name](const std::string& v) { cmd.values.emplace_back(name, v); }, f.help)
            ->group(group);
    }
}

void add_switch(Command& cmd, const std::string& name, const std::string& help) {
    cmd.app->add_flag_callback("--" + name, [&cmd, name] { cmd.switches[name] = true; }, help);
}

Command& add_command(CLI::App& app, std::map<std::string, Command>& commands, const std::string& name,
                     const std::string& description) {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, description);
    cmd.app->add_option("--config", cmd.config_file, "flat key=value file; flags override it");
    add_flags(cmd, {{"out", "output directory"}, {"seed", "random seed"}}, "Common");
    return cmd;
}

int report_failure(mdap_status status) {
    std::fprintf(stderr, "mdap: error: %s\n", mdap_last_error());
    return mdap_exit_code(status);
}

void log_to_stderr(mdap_log_level level, const char* message, void*) {
    if (level >= MDAP_LOG_INFO) {
        std::fprintf(stderr, "%s%s\n", level >= MDAP_LOG_WARNING ? "warning: " : "", message);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-domain adaptive preference recommender"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(mdap_version()));
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "print progress messages");

    std::map<std::string, Command> commands;
    {
        Command& c = add_command(app, commands, "prepare", "load, filter and split two domain files");
        add_flags(c, kDataFlags, "Data");
        add_switch(c, "strict", "fail on malformed input lines instead of skipping them");
    }
    {
        Command& c = add_command(app, commands, "synth", "generate a synthetic two-domain dataset");
        add_flags(c, kSynthFlags, "Generator");
    }
    const auto add_training = [&](const std::string& name, const std::string& description) -> Command& {
        Command& c = add_command(app, commands, name, description);
        add_flags(c, {{"data", "prepared dataset directory (default: --out)"}, {"preset", "epinions, douban or amazon"}},
                  "Data");
        add_flags(c, kModelFlags, "Model");
        add_flags(c, kTrainFlags, "Training");
        return c;
    };
    add_training("train", "train a model and evaluate its best checkpoint on the test split");
    {
        Command& c = add_training("evaluate", "evaluate a checkpoint on one split");
        add_flags(c, {{"checkpoint", "checkpoint file (default: <out>/checkpoints/best.ckpt)"},
                      {"split", "train, valid or test"}},
                  "Evaluation");
    }
    add_training("ablate", "train the four model variants and compare them on test");
    {
        Command& c = add_training("grid", "staged hyperparameter search on validation NDCG");
        add_flags(c, kGridFlags, "Grid");
        add_switch(c, "grid-full", "evaluate the full cross-product instead of the staged search");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    const Command& cmd = commands.at(name);

    if (verbose) {
        mdap_set_log_handler(log_to_stderr, nullptr);
    }

    mdap_config* raw = nullptr;
    if (mdap_status s = mdap_config_create(&raw); s != MDAP_OK) {
        return report_failure(s);
    }
    std::unique_ptr<mdap_config, decltype(&mdap_config_destroy)> config(raw, mdap_config_destroy);

    if (!cmd.config_file.empty()) {
        if (mdap_status s = mdap_config_load_file(config.get(), cmd.config_file.c_str()); s != MDAP_OK) {
            return report_failure(s);
        }
    }
    // a preset sets several options at once, so it goes before the other flags
    for (const auto& [key, value] : cmd.values) {
        if (key == "preset") {
            if (mdap_status s = mdap_config_set(config.get(), key.c_str(), value.c_str()); s != MDAP_OK) {
                return report_failure(s);
            }
        }
    }
    for (const auto& [key, value] : cmd.values) {
        if (key != "preset") {
            if (mdap_status s = mdap_config_set(config.get(), key.c_str(), value.c_str()); s != MDAP_OK) {
                return report_failure(s);
            }
        }
    }
    for (const auto& [key, on] : cmd.switches) {
        if (mdap_status s = mdap_config_set(config.get(), key.c_str(), on ? "true" : "false"); s != MDAP_OK) {
            return report_failure(s);
        }
    }

    if (mdap_status s = mdap_command_run(config.get(), name.c_str()); s != MDAP_OK) {
        return report_failure(s);
    }
    std::printf("%s\n", mdap_last_summary());
    return 0;
}
