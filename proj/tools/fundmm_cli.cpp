// fundmm: calibration, HJB solve, and backtest driver.
//
// Exit codes: 0 success, 1 runtime failure, 2 input or validation failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "fundmm/fundmm.hpp"

namespace {

struct Overrides {
    std::string config;
    std::string output_dir;
    std::string data_dir;
    std::string mode;
    std::string seeds;
    std::int64_t n_time = 0;
    int workers = -1;
};

void add_config_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--output-dir", o.output_dir, "override output_dir");
    cmd->add_option("--data-dir", o.data_dir, "override data.dir");
    cmd->add_option("--mode", o.mode, "fill counting rule: volume_minute or minute_hit");
    cmd->add_option("--seeds", o.seeds, "reporting seed range FIRST-LAST");
    cmd->add_option("--n-time", o.n_time, "override hjb.n_time");
    cmd->add_option("--workers", o.workers, "parallel seed workers (0 = hardware threads)");
}

fundmm::RunConfig load(const Overrides& o) {
    auto cfg = fundmm::load_run_config(o.config);
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (!o.data_dir.empty()) cfg.data_dir = o.data_dir;
    if (!o.mode.empty()) {
        try {
            cfg.fill.mode = fundmm::parse_hit_mode(o.mode);
        } catch (const fundmm::InvalidInput&) {
            throw fundmm::ConfigError("--mode: expected volume_minute or minute_hit, got '" + o.mode + "'");
        }
    }
    if (!o.seeds.empty()) cfg.seeds = fundmm::parse_seed_range(o.seeds);
    if (o.n_time != 0) {
        if (o.n_time < 1) throw fundmm::ConfigError("--n-time must be >= 1");
        cfg.hjb.n_time = o.n_time;
    }
    if (o.workers >= 0) cfg.workers = static_cast<unsigned>(o.workers);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Funding-aware perpetual market making: calibrate, solve, backtest"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    Overrides o;
    bool verify_as_limit = false, stress = false;
    std::string spec_path, out_dir;
    std::optional<std::uint64_t> seed;

    auto* cal = app.add_subcommand("calibrate", "fit funding (OU, OU+jump) and fill-curve models");
    add_config_options(cal, o);
    auto* sol = app.add_subcommand("solve", "solve the inventory-funding HJB and write quote tables");
    add_config_options(sol, o);
    sol->add_flag("--verify-as-limit", verify_as_limit, "check offsets equal 1/k on every node (zero-funding configs)");
    auto* bt = app.add_subcommand("backtest", "replay the holdout panel for every configured policy");
    add_config_options(bt, o);
    bt->add_flag("--stress", stress, "also run the four stress windows");
    auto* st = app.add_subcommand("stress", "select stress windows and compare policies inside them");
    add_config_options(st, o);
    auto* syn = app.add_subcommand("synth", "generate a synthetic mid/funding/tape dataset");
    syn->add_option("-s,--spec", spec_path, "synthetic spec (JSON)")->required()->check(CLI::ExistingFile);
    syn->add_option("-o,--out", out_dir, "output directory")->required();
    syn->add_option("--seed", seed, "override the seed in the synthetic spec");
    auto* ver = app.add_subcommand("verify", "parse and validate every input a config refers to");
    add_config_options(ver, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*cal) {
            fundmm::cmd_calibrate(load(o), std::cout);
        } else if (*sol) {
            fundmm::cmd_solve(load(o), verify_as_limit, std::cout);
        } else if (*bt) {
            fundmm::cmd_backtest(load(o), stress, std::cout);
        } else if (*st) {
            fundmm::cmd_stress(load(o), std::cout);
        } else if (*syn) {
            auto spec = fundmm::load_synthetic_spec(spec_path);
            if (seed) spec.seed = *seed;
            fundmm::cmd_synth(spec, out_dir, std::cout);
        } else if (*ver) {
            fundmm::cmd_verify(load(o), std::cout);
            std::cout << "ok\n";
        }
    } catch (const fundmm::InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fundmm::RuntimeFailure& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
