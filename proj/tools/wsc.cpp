// Command-line front end for the experiment pipeline. Each subcommand is a
// thin wrapper over the matching harness function: resolve presets/config
// files/overrides into one Config, then run with a seed and an output dir.
//
// Exit codes: 0 ok, 2 bad usage or config, 3 a run failed (diverged,
// non-finite loss, child process error).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <system_error>
#include <vector>

#include "CLI11.hpp"

#include "wsc/config.hpp"
#include "wsc/errors.hpp"
#include "wsc/harness.hpp"

#ifndef WSC_PRESET_DIR
#define WSC_PRESET_DIR "presets"
#endif

namespace {

// a preset name (possibly nested, "paper/push1") maps into the preset dir;
// an explicit path (leading / or ., or a .cfg suffix) is used as-is
std::string preset_path(const std::string& name) {
    if (name.empty() || name[0] == '/' || name[0] == '.' ||
        (name.size() > 4 && name.substr(name.size() - 4) == ".cfg"))
        return name;
    return std::string(WSC_PRESET_DIR) + "/" + name + ".cfg";
}

// sweep children re-invoke this binary; /proc/self/exe survives odd argv[0]s
std::string self_path(const char* argv0) {
    std::error_code ec;
    auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
    if (!ec) return p.string();
    return argv0;
}

struct CommonArgs {
    std::vector<std::string> presets;
    std::vector<std::string> configs;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--preset", a.presets,
                    "named preset (presets/<name>.cfg) or path, repeatable");
    cmd->add_option("--config", a.configs, "config file, repeatable");
    cmd->add_option("--set", a.sets, "key=value override, repeatable");
    cmd->add_option("--seed", a.seed, "run seed");
    cmd->add_option("--out", a.out, "output directory")->required();
}

wsc::cfg::Config resolve(const CommonArgs& a) {
    wsc::cfg::Config c;
    for (const auto& p : a.presets) wsc::cfg::merge_file(c, preset_path(p));
    for (const auto& p : a.configs) wsc::cfg::merge_file(c, p);
    for (const auto& s : a.sets) wsc::cfg::apply_override(c, s);
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"factor-world experiment pipeline"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        CommonArgs args;
    };
    Sub subs[] = {
        {"gen-data", "sample a weakly-labeled dataset", {}},
        {"train-disentangle", "train the ranking-adversary encoder", {}},
        {"train-vae", "train the beta-VAE baseline encoder", {}},
        {"train-policy", "train a goal-conditioned Q policy", {}},
        {"eval", "roll out a saved policy against sampled goals", {}},
        {"probe", "sweep goal axes and correlate with outcomes", {}},
        {"align", "latent-vs-true distance correlation on rollouts", {}},
        {"report", "factor/latent correlation matrix for a checkpoint", {}},
        {"sweep", "run the data->encoder->report pipeline over a grid", {}},
    };
    for (auto& s : subs) add_common(app.add_subcommand(s.name, s.help), s.args);

    CLI11_PARSE(app, argc, argv);

    const Sub* chosen = nullptr;
    for (auto& s : subs)
        if (app.get_subcommand(s.name)->parsed()) chosen = &s;

    try {
        const wsc::cfg::Config c = resolve(chosen->args);
        const std::uint64_t seed = chosen->args.seed;
        const std::string& out = chosen->args.out;
        const std::string name = chosen->name;
        using namespace wsc::harness;
        if (name == "gen-data") cmd_gen_data(c, seed, out);
        else if (name == "train-disentangle") cmd_train_disentangle(c, seed, out);
        else if (name == "train-vae") cmd_train_vae(c, seed, out);
        else if (name == "train-policy") cmd_train_policy(c, seed, out);
        else if (name == "eval") cmd_eval(c, seed, out);
        else if (name == "probe") cmd_probe(c, seed, out);
        else if (name == "align") cmd_align(c, seed, out);
        else if (name == "report") cmd_report(c, seed, out);
        else if (name == "sweep")
            return cmd_sweep(c, seed, out, self_path(argv[0]));
    } catch (const wsc::ConfigError& e) { // ParseError included
        std::fprintf(stderr, "wsc: %s\n", e.what());
        return 2;
    } catch (const wsc::UsageError& e) {
        std::fprintf(stderr, "wsc: %s\n", e.what());
        return 2;
    } catch (const wsc::TrainingError& e) {
        std::fprintf(stderr, "wsc: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "wsc: %s\n", e.what());
        return 3;
    }
    return 0;
}
