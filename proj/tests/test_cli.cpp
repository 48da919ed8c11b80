// End-to-end tests that drive the fundmm executable.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fundmm/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = FUNDMM_SOURCE_DIR;

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path work_root() {
    static const fs::path root = [] {
        auto p = fs::temp_directory_path() / ("fundmm_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run fundmm_run(const std::string& args) {
    const auto o = work_root() / "stdout.txt";
    const auto e = work_root() / "stderr.txt";
    const std::string cmd = std::string("\"") + FUNDMM_CLI_PATH + "\" " + args + " > \"" + o.string() + "\" 2> \"" +
                            e.string() + "\"";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_json(const fs::path& p, const json& j) { fundmm::write_text(p.string(), j.dump(2)); }

// One 30-day ETH-like synthetic dataset shared by the pipeline tests.
const fs::path& eth_data() {
    static const fs::path dir = [] {
        const auto d = work_root() / "eth_data";
        const auto r = fundmm_run("synth -s \"" + (kSource / "configs/synthetic/eth_like.json").string() + "\" -o \"" +
                                  d.string() + "\"");
        if (r.code != 0) throw std::runtime_error("synth failed: " + r.err);
        return d;
    }();
    return dir;
}

json pipeline_config(const std::string& out) {
    auto j = read_json(kSource / "configs/eth.json");
    j["data"]["dir"] = eth_data().string();
    j["output_dir"] = (work_root() / out).string();
    j["hjb"]["n_f"] = 21;
    j["seeds"] = {{"first", 1}, {"last", 10}};
    j["calibration_seeds"] = {{"first", 101}, {"last", 104}};
    return j;
}

fs::path write_config(const std::string& name, const json& j) {
    const auto p = work_root() / (name + ".json");
    write_json(p, j);
    return p;
}

std::string cfg_arg(const fs::path& p) { return "-c \"" + p.string() + "\""; }

// Calibrated and solved pipeline configuration, built once.
const fs::path& solved_config() {
    static const fs::path cfg = [] {
        const auto p = write_config("pipeline", pipeline_config("pipeline_out"));
        for (const char* cmd : {"calibrate", "solve"}) {
            const auto r = fundmm_run(std::string(cmd) + " " + cfg_arg(p));
            if (r.code != 0) throw std::runtime_error(std::string(cmd) + " failed: " + r.err);
        }
        return p;
    }();
    return cfg;
}

}  // namespace

TEST_CASE("usage errors exit with code 2", "[cli]") {
    CHECK(fundmm_run("").code == 2);
    CHECK(fundmm_run("frobnicate").code == 2);
    CHECK(fundmm_run("solve").code == 2);
    CHECK(fundmm_run("solve -c /nonexistent/config.json").code == 2);
    CHECK(fundmm_run("--help").code == 0);
}

TEST_CASE("missing input column: exit 2 naming the column", "[cli][io]") {
    const auto dir = work_root() / "badcol";
    fs::create_directories(dir);
    fundmm::write_text((dir / "mid.csv").string(), "timestamp,mid\n2024-01-01T00:00:00Z,3000\n2024-01-01T00:01:00Z,3000\n");
    fundmm::write_text((dir / "funding.csv").string(), "timestamp,rate\n2024-01-01T00:00:00Z,0.0001\n");
    auto j = read_json(kSource / "configs/as_limit.json");
    j["data"]["dir"] = dir.string();
    j["output_dir"] = (dir / "out").string();
    const auto r = fundmm_run("verify " + cfg_arg(write_config("badcol", j)));
    CHECK(r.code == 2);
    CHECK(r.err.find("funding_rate") != std::string::npos);
    CHECK(r.err.find("funding.csv") != std::string::npos);
}

TEST_CASE("config errors exit 2 before any output is written", "[cli][config]") {
    auto j = pipeline_config("never_written");
    j["hjb"]["gamma"] = 0.1;
    const auto r = fundmm_run("calibrate " + cfg_arg(write_config("unknown_field", j)));
    CHECK(r.code == 2);
    CHECK(r.err.find("config.hjb.gamma") != std::string::npos);
    CHECK_FALSE(fs::exists(work_root() / "never_written"));

    CHECK(fundmm_run("calibrate " + cfg_arg(write_config("ok", pipeline_config("never_written"))) + " --mode trades")
              .code == 2);
    CHECK(fundmm_run("backtest " + cfg_arg(write_config("ok", pipeline_config("never_written"))) + " --seeds 9-3")
              .code == 2);
    CHECK_FALSE(fs::exists(work_root() / "never_written"));
}

TEST_CASE("solve before calibrate is an input error", "[cli]") {
    const auto r = fundmm_run("solve " + cfg_arg(write_config("uncalibrated", pipeline_config("uncalibrated_out"))));
    CHECK(r.code == 2);
    CHECK(r.err.find("calibrate") != std::string::npos);
}

TEST_CASE("zero-volatility zero-funding synthetic panel", "[cli][synth]") {
    const auto dir = work_root() / "flat";
    const auto r = fundmm_run("synth -s \"" + (kSource / "configs/synthetic/flat.json").string() + "\" -o \"" +
                              dir.string() + "\"");
    REQUIRE(r.code == 0);
    const auto mid = fundmm::read_mid_csv((dir / "mid.csv").string());
    const auto f = fundmm::read_funding_csv((dir / "funding.csv").string());
    REQUIRE(mid.size() == 2 * 1440);
    for (double m : mid.values) CHECK(m == mid.values.front());
    for (double x : f.values) CHECK(x == 0.0);
    CHECK_FALSE(fs::exists(dir / "tape.csv"));
}

TEST_CASE("synth output is a pure function of spec and seed", "[cli][synth]") {
    const auto spec = (kSource / "configs/synthetic/sol_like.json").string();
    const auto a = work_root() / "sol_a", b = work_root() / "sol_b", c = work_root() / "sol_c";
    REQUIRE(fundmm_run("synth -s \"" + spec + "\" -o \"" + a.string() + "\"").code == 0);
    REQUIRE(fundmm_run("synth -s \"" + spec + "\" -o \"" + b.string() + "\"").code == 0);
    REQUIRE(fundmm_run("synth -s \"" + spec + "\" -o \"" + c.string() + "\" --seed 99").code == 0);
    for (const char* f : {"mid.csv", "funding.csv", "tape.csv", "truth.json"}) CHECK(slurp(a / f) == slurp(b / f));
    CHECK(slurp(a / "mid.csv") != slurp(c / "mid.csv"));
}

TEST_CASE("calibrate writes funding and fill reports", "[cli][calibrate]") {
    const auto& cfg = solved_config();
    const auto out = work_root() / "pipeline_out";
    const auto fr = read_json(out / "funding_calibration.json");
    CHECK(fr.at("half_life_hours").get<double>() > 0.0);
    CHECK(fr.at("ll_gain").get<double>() >= 0.0);
    CHECK(fr.at("n_train").get<int>() > 4 * fr.at("n_test").get<int>() - 8);
    CHECK(fr.at("jump_probability_per_hour").get<double>() > 0.0);

    // Truth: Lambda = 120 per hour, k = 0.5 per dollar.
    const auto vm = read_json(out / "fill_calibration_volume_minute.json");
    CHECK(vm.at("lambda0_per_hour").get<double>() == Catch::Approx(120.0).epsilon(0.05));
    CHECK(vm.at("k_per_quote_unit").get<double>() == Catch::Approx(0.5).epsilon(0.05));

    const auto r = fundmm_run("calibrate " + cfg_arg(cfg) + " --mode minute_hit");
    REQUIRE(r.code == 0);
    const auto mh = read_json(out / "fill_calibration_minute_hit.json");
    CHECK(mh.at("lambda0_per_hour").get<double>() >= vm.at("lambda0_per_hour").get<double>());
    const auto hv = vm.at("hit_rates").get<std::vector<double>>();
    const auto hm = mh.at("hit_rates").get<std::vector<double>>();
    REQUIRE(hv.size() == hm.size());
    for (std::size_t i = 0; i < hv.size(); ++i) CHECK(hm[i] >= hv[i]);
}

TEST_CASE("solve is deterministic and the CFL bound is enforced", "[cli][solve]") {
    const auto& cfg = solved_config();
    const auto out = work_root() / "pipeline_out";
    const auto summary = read_json(out / "solve_summary.json");
    const double bound = summary.at("cfl_max_dt_hours").get<double>();
    CHECK(summary.at("grid").at("dt_hours").get<double>() <= bound);

    const auto fd = slurp(out / "hjb_fd.table");
    const auto as = slurp(out / "pure_as.table");
    REQUIRE(fundmm_run("solve " + cfg_arg(cfg)).code == 0);
    CHECK(slurp(out / "hjb_fd.table") == fd);
    CHECK(slurp(out / "pure_as.table") == as);
    CHECK(read_json(out / "solve_summary.json") == summary);

    // One step per hour is far above the bound.
    const auto r = fundmm_run("solve " + cfg_arg(cfg) + " --n-time 1");
    CHECK(r.code == 2);
    const auto pos = r.err.find("max admissible dt=");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(r.err.substr(pos + 18)) == Catch::Approx(bound).epsilon(1e-12));
    CHECK(slurp(out / "hjb_fd.table") == fd);
}

TEST_CASE("backtest over seeds 1..10", "[cli][backtest]") {
    const auto& cfg = solved_config();
    const auto out = work_root() / "pipeline_out";
    REQUIRE(fundmm_run("backtest " + cfg_arg(cfg) + " --stress").code == 0);

    const auto summary = read_json(out / "backtest_summary.json");
    const auto rows = summary.at("rows");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].at("policy") == "pure_as");
    CHECK(rows[0].at("delta_vs_pure_as").get<double>() == 0.0);
    CHECK(rows[0].at("win_rate").get<double>() == 0.0);
    for (const auto& row : rows) {
        CHECK(row.at("n_seeds").get<int>() == 10);
        const double w = row.at("win_rate").get<double>();
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        CHECK(row.at("ci95").get<double>() >= 0.0);
    }

    std::istringstream csv(slurp(out / "backtest_seeds.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "seed,policy,final_equity,inventory_rms,max_drawdown,n_fills,funding_paid");
    std::map<std::string, int> per_policy;
    while (std::getline(csv, line)) ++per_policy[line.substr(line.find(',') + 1, line.find(',', line.find(',') + 1) - line.find(',') - 1)];
    REQUIRE(per_policy.size() == 4);
    for (const auto& [p, n] : per_policy) CHECK(n == 10);

    const auto stress = read_json(out / "stress_report.json");
    REQUIRE(stress.at("windows").size() == 4);
    std::set<std::string> labels;
    for (const auto& w : stress.at("windows")) {
        labels.insert(w.at("label").get<std::string>());
        CHECK(w.at("rows").size() == 4);
        CHECK(fundmm::parse_timestamp(w.at("end").get<std::string>()) -
                  fundmm::parse_timestamp(w.at("start").get<std::string>()) ==
              3 * 86400);
    }
    CHECK(labels == std::set<std::string>{"high_funding", "low_funding", "high_volatility", "calm"});

    // Rerun: identical bytes.
    const auto seeds = slurp(out / "backtest_seeds.csv");
    const auto sum = slurp(out / "backtest_summary.json");
    const auto st = slurp(out / "stress_report.json");
    REQUIRE(fundmm_run("backtest " + cfg_arg(cfg) + " --stress --workers 3").code == 0);
    CHECK(slurp(out / "backtest_seeds.csv") == seeds);
    CHECK(slurp(out / "backtest_summary.json") == sum);
    CHECK(slurp(out / "stress_report.json") == st);
}

TEST_CASE("backtest without a pure_as policy is rejected", "[cli][backtest]") {
    auto j = pipeline_config("pipeline_out");
    j["policies"] = json::array({{{"kind", "hjb_fd"}}});
    solved_config();
    const auto r = fundmm_run("backtest " + cfg_arg(write_config("no_baseline", j)));
    CHECK(r.code == 2);
    CHECK(r.err.find("pure_as") != std::string::npos);
}

TEST_CASE("verify checks inputs and tables", "[cli][verify]") {
    const auto& cfg = solved_config();
    const auto r = fundmm_run("verify " + cfg_arg(cfg));
    CHECK(r.code == 0);
    CHECK(r.out.find("ok") != std::string::npos);

    const auto out = work_root() / "pipeline_out";
    const auto table = slurp(out / "pure_as.table");
    auto corrupt = table;
    corrupt[corrupt.size() / 2] ^= 0x5a;
    fundmm::write_text((out / "pure_as.table").string(), corrupt);
    CHECK(fundmm_run("verify " + cfg_arg(cfg)).code == 2);
    fundmm::write_text((out / "pure_as.table").string(), table);
    CHECK(fundmm_run("verify " + cfg_arg(cfg)).code == 0);
}

TEST_CASE("AS-limit verification reports the inventory-limit rows", "[cli][solve]") {
    const auto dir = work_root() / "as_flat";
    REQUIRE(fundmm_run("synth -s \"" + (kSource / "configs/synthetic/flat.json").string() + "\" -o \"" +
                       dir.string() + "\"")
                .code == 0);
    auto j = read_json(kSource / "configs/as_limit.json");
    j["data"]["dir"] = dir.string();
    j["output_dir"] = (dir / "out").string();
    const auto cfg = write_config("as_limit", j);
    const auto r = fundmm_run("solve " + cfg_arg(cfg) + " --verify-as-limit");
    const auto s = read_json(dir / "out" / "solve_summary.json");
    REQUIRE(s.at("as_limit_checks").size() == 2);
    for (const auto& c : s.at("as_limit_checks")) {
        INFO(c.dump());
        CHECK(c.at("target_offset").get<double>() == 2.0);
        CHECK(c.at("max_rel_error_outside_limit_cone").get<double>() <= 1e-10);
        CHECK(c.at("offsets_outside_limit_cone").get<long>() > 0);
        CHECK(r.code == (c.at("passed").get<bool>() ? 0 : 1));
    }

    // Nonzero penalties are refused for the check.
    j["hjb"]["alpha"] = 1e-4;
    CHECK(fundmm_run("solve " + cfg_arg(write_config("as_limit_bad", j)) + " --verify-as-limit").code == 2);
}

TEST_CASE("packaged configs pass CFL at N_t = 2048 under both fill modes", "[cli][packaged]") {
    for (const char* asset : {"eth", "btc", "sol"}) {
        INFO(asset);
        const auto data = work_root() / (std::string("pkg_") + asset);
        REQUIRE(fundmm_run("synth -s \"" + (kSource / "configs/synthetic" / (std::string(asset) + "_like.json")).string() +
                           "\" -o \"" + data.string() + "\"")
                    .code == 0);
        const std::string common = cfg_arg(kSource / "configs" / (std::string(asset) + ".json")) + " --data-dir \"" +
                                   data.string() + "\" --output-dir \"" + (data / "out").string() + "\"";
        for (const char* mode : {"volume_minute", "minute_hit"}) {
            INFO(mode);
            const std::string args = common + " --mode " + mode;
            REQUIRE(fundmm_run("calibrate " + args).code == 0);
            const auto r = fundmm_run("solve " + args);
            CHECK(r.code == 0);
            INFO(r.err);
            const auto s = read_json(data / "out" / "solve_summary.json");
            CHECK(s.at("grid").at("n_time").get<int>() == 2048);
            CHECK(s.at("grid").at("dt_hours").get<double>() <= s.at("cfl_max_dt_hours").get<double>());
        }
    }
}
