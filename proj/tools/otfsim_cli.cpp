// otfsim command-line front end.
//
// Exit status: 0 success, 1 configuration error, 2 runtime failure.

#include "otfsim/harness/config.hpp"
#include "otfsim/harness/experiments.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using otfsim::harness::json;

namespace {

struct Common {
    std::string config;
    std::string preset;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::string out = "results";
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "JSON experiment config");
    sub->add_option("--preset", c.preset, "built-in preset (paper_table3, paper_table3_qam4, desk_qam4)");
    sub->add_option("--seed", c.seed, "override the root seed (and the training seed)");
    sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", c.out, "output directory");
}

json load_json(const Common& c)
{
    if (c.config.empty() == c.preset.empty()) throw otfsim::ConfigError("give exactly one of --config or --preset");
    json j = c.config.empty() ? otfsim::harness::preset_json(c.preset) : otfsim::harness::read_json_file(c.config);
    j = otfsim::harness::resolve_presets(j);
    if (c.seed) {
        j["seed"] = *c.seed;
        if (j.contains("ae") && j["ae"].is_object()) j["ae"]["train"]["seed"] = *c.seed;
    }
    return j;
}

void write_manifest(const Common& c, const std::string& command, const otfsim::harness::ExperimentConfig& cfg,
                    const std::vector<fs::path>& outputs, double seconds)
{
    json m;
    m["otfsim_version"] = otfsim::harness::version_string();
    m["command"] = command;
    m["config"] = otfsim::harness::to_json(cfg);
    m["seed"] = cfg.seed;
    m["workers"] = c.workers;
    m["wall_time_s"] = seconds;
    std::vector<std::string> names;
    for (const auto& p : outputs) names.push_back(p.string());
    m["outputs"] = names;
    otfsim::harness::write_file(fs::path(c.out) / (cfg.name + "_" + command + "_manifest.json"),
                                [&](std::ostream& os) { os << m.dump(2) << "\n"; });
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"OTFS / index-modulation / autoencoder link simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", otfsim::harness::version_string());

    Common ber_o, papr_o, train_o, sweep_o, val_o;
    auto* ber = app.add_subcommand("ber", "BER Monte-Carlo over the SNR grid");
    add_common(ber, ber_o);
    auto* pap = app.add_subcommand("papr", "PAPR CCDF of the transmitted frames");
    add_common(pap, papr_o);
    auto* trn = app.add_subcommand("train", "train the multi-band autoencoder");
    add_common(trn, train_o);
    auto* swp = app.add_subcommand("sweep", "repeat a task over values of one config key");
    add_common(swp, sweep_o);
    std::string sweep_key;
    std::string sweep_values;
    std::string sweep_task = "ber";
    swp->add_option("--param", sweep_key, "JSON pointer of the swept key, e.g. /ae/model/eta")->required();
    swp->add_option("--values", sweep_values, "JSON array of values, e.g. [0.001,0.1,0.3]")->required();
    swp->add_option("--task", sweep_task, "ber | papr | train");
    auto* val = app.add_subcommand("validate-config", "parse, validate and print the resolved config");
    add_common(val, val_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    try {
        using namespace otfsim::harness;
        if (ber->parsed()) {
            const auto cfg = config_from_json(load_json(ber_o));
            const auto rows = run_ber(cfg, ber_o.workers);
            const fs::path out = fs::path(ber_o.out) / (cfg.name + "_ber.csv");
            write_file(out, [&](std::ostream& os) { write_ber_csv(os, cfg, rows); });
            write_manifest(ber_o, "ber", cfg, {out}, elapsed());
            std::cout << out.string() << "\n";
        } else if (pap->parsed()) {
            const auto cfg = config_from_json(load_json(papr_o));
            const auto res = run_papr(cfg, papr_o.workers);
            const fs::path out = fs::path(papr_o.out) / (cfg.name + "_papr.csv");
            write_file(out, [&](std::ostream& os) { write_papr_csv(os, cfg, res); });
            write_manifest(papr_o, "papr", cfg, {out}, elapsed());
            std::cout << out.string() << "\n";
        } else if (trn->parsed()) {
            const auto cfg = config_from_json(load_json(train_o));
            const auto t = run_training(cfg, train_o.out);
            write_manifest(train_o, "train", cfg, {t.checkpoint, t.trace}, elapsed());
            std::cout << t.checkpoint.string() << "\n" << t.trace.string() << "\n";
        } else if (swp->parsed()) {
            const json base = load_json(sweep_o);
            json values;
            try {
                values = json::parse(sweep_values);
            } catch (const json::exception& e) {
                throw otfsim::ConfigError(std::string("--values is not valid JSON: ") + e.what());
            }
            if (!values.is_array()) throw otfsim::ConfigError("--values must be a JSON array");
            const auto outs = run_sweep(base, sweep_key, values.get<std::vector<json>>(), task_from_string(sweep_task), sweep_o.out, sweep_o.workers);
            write_manifest(sweep_o, "sweep", config_from_json(base), outs, elapsed());
            for (const auto& p : outs) std::cout << p.string() << "\n";
        } else if (val->parsed()) {
            std::cout << to_json(config_from_json(load_json(val_o))).dump(2) << "\n";
        }
    } catch (const otfsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
