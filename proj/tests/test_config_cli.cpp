// Configuration parsing/validation and report-runner tests, including the
// determinism guarantee: identical configs must produce byte-identical
// reports and CSV exports.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spinsim/cli_runner.hpp"
#include "spinsim/config.hpp"

using namespace spinsim;
using config::ConfigError;
using config::Diagnostic;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_errors(const std::vector<Diagnostic>& diags) {
    int n = 0;
    for (const auto& d : diags)
        if (d.severity == Diagnostic::Severity::error) ++n;
    return n;
}

bool any_message_contains(const std::vector<Diagnostic>& diags,
                          const std::string& needle) {
    for (const auto& d : diags)
        if (d.message.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_CASE("default configuration validates without diagnostics") {
    const config::RunConfig cfg = config::default_config();
    CHECK(config::validate_config(cfg).empty());
    CHECK(cfg.system.n_spins() == 7);
    CHECK(cfg.experiment == "expand");
    CHECK(cfg.mode == experiment::Mode::ideal);
}

TEST_CASE("json overrides reach every section") {
    const std::string text = R"({
        "mode": "pulse_level",
        "experiment": "measure",
        "theta_deg": 45.0,
        "storage_time_s": 0.25,
        "seed": 7,
        "relaxation": {"t2_by_order": {"7": 0.04, "6": 0.08},
                        "t2_default_s": 0.2, "t1_s": 3.0, "apply_t1": true},
        "mq": {"n_cycles": 10, "tau_s": 2.0e-5, "phase_steps": 20},
        "saturation": {"n_rounds": 2, "max_targets": 6,
                        "pulse_duration_s": 0.02, "flip_angle_deg": 45.0,
                        "n_slices": 64},
        "spectrum": {"channel": "c13", "method": "fid", "broadening_hz": 2.0,
                      "n_points": 4096, "readout_flip_deg": 30.0},
        "output": {"dir": "out", "csv": true, "plot": true}
    })";
    const config::RunConfig cfg = config::parse_config(text);
    CHECK(cfg.mode == experiment::Mode::pulse_level);
    CHECK(cfg.experiment == "measure");
    CHECK(cfg.theta_deg == Catch::Approx(45.0));
    CHECK(cfg.storage_time_s == Catch::Approx(0.25));
    CHECK(cfg.seed == 7);
    CHECK(cfg.relaxation.t2_by_order.at(7) == Catch::Approx(0.04));
    CHECK(cfg.relaxation.t2_by_order.at(6) == Catch::Approx(0.08));
    CHECK(cfg.relaxation.t2_default_s == Catch::Approx(0.2));
    CHECK(cfg.relaxation.apply_t1);
    CHECK(cfg.mq.n_cycles == 10);
    CHECK(cfg.mq.tau_s == Catch::Approx(2.0e-5));
    CHECK(cfg.mq.phase_steps == 20);
    CHECK(cfg.saturation.n_rounds == 2);
    CHECK(cfg.saturation.flip_angle == Catch::Approx(spinsim::pi / 4.0));
    CHECK(cfg.spectrum.channel == Channel::c13);
    CHECK(cfg.spectrum.method == "fid");
    CHECK(cfg.spectrum.n_points == 4096);
    CHECK(cfg.spectrum.readout_flip_deg == Catch::Approx(30.0));
    CHECK(cfg.output.dir == "out");
    CHECK(cfg.output.csv);
}

TEST_CASE("system can be given explicitly or as the ring preset") {
    const std::string preset = R"({"system": {"preset": "benzene",
        "b_ortho_hz": 900.0, "b_ch_hz": [1500, 240, 90, 50, 90, 240],
        "j01_hz": 150.0}})";
    const config::RunConfig a = config::parse_config(preset);
    CHECK(a.system.n_spins() == 7);
    CHECK(a.system.dipolar_hz(1, 2) == Catch::Approx(900.0));
    CHECK(a.system.dipolar_hz(0, 1) == Catch::Approx(1500.0));
    CHECK(a.system.jcoupling_hz(0, 1) == Catch::Approx(150.0));

    const std::string explicit_sys = R"({"system": {
        "species": ["c13", "h1"],
        "dipolar_hz": [[0, 120], [120, 0]],
        "jcoupling_hz": [[0, 158], [158, 0]],
        "offsets_hz": [0, 50]}})";
    const config::RunConfig b = config::parse_config(explicit_sys);
    CHECK(b.system.n_spins() == 2);
    CHECK(b.system.sites[0].species == Species::c13);
    CHECK(b.system.sites[1].offset_hz == Catch::Approx(50.0));
    CHECK(b.system.dipolar_hz(0, 1) == Catch::Approx(120.0));

    CHECK_THROWS_AS(
        config::parse_config(R"({"system": {"preset": "acetone"}})"),
        ConfigError);
    CHECK_THROWS_AS(
        config::parse_config(R"({"system": {"species": ["h1", "h1"],
            "dipolar_hz": [[0, 1]]}})"),
        ConfigError);
    CHECK_THROWS_AS(
        config::parse_config(R"({"system": {"species": ["xe129"]}})"),
        ConfigError);
    CHECK_THROWS_AS(
        config::parse_config(R"({"system": {"species": ["h1"],
            "offsets_hz": [1, 2]}})"),
        ConfigError);
}

TEST_CASE("unknown keys are rejected with their name and section") {
    try {
        config::parse_config(R"({"modee": "ideal"})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("modee") != std::string::npos);
    }
    try {
        config::parse_config(R"({"mq": {"cycles": 3}})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("cycles") != std::string::npos);
        CHECK(what.find("mq") != std::string::npos);
    }
}

TEST_CASE("parse errors carry the source line number") {
    const std::string text = "{\n  \"mode\": pulse\n}";
    try {
        config::parse_config(text, "bad.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("bad.json:2") != std::string::npos);
    }
    CHECK_THROWS_AS(config::load_config("nonexistent-config.json"), ConfigError);
}

TEST_CASE("relaxation map keys must be integer orders") {
    CHECK_NOTHROW(
        config::parse_config(R"({"relaxation": {"t2_by_order": {"7": 0.05}}})"));
    CHECK_THROWS_AS(
        config::parse_config(R"({"relaxation": {"t2_by_order": {"x": 0.05}}})"),
        ConfigError);
    CHECK_THROWS_AS(
        config::parse_config(R"({"relaxation": {"t2_by_order": {"7q": 0.05}}})"),
        ConfigError);
}

TEST_CASE("semantic validation flags bad values as errors") {
    config::RunConfig cfg = config::default_config();
    cfg.theta_deg = 400.0;
    cfg.spectrum.broadening_hz = -1.0;
    cfg.mq.tau_s = 0.0;
    const auto diags = config::validate_config(cfg);
    CHECK(count_errors(diags) == 3);
    CHECK(any_message_contains(diags, "theta_deg"));
    CHECK(any_message_contains(diags, "broadening"));
    CHECK(any_message_contains(diags, "tau_s"));

    config::RunConfig fid_cfg = config::default_config();
    fid_cfg.spectrum.method = "fid";
    fid_cfg.spectrum.n_points = 3000;  // not a power of two
    CHECK(count_errors(config::validate_config(fid_cfg)) == 1);

    config::RunConfig method_cfg = config::default_config();
    method_cfg.spectrum.method = "magic";
    CHECK(count_errors(config::validate_config(method_cfg)) == 1);
}

TEST_CASE("homonuclear J couplings produce a warning") {
    config::RunConfig cfg = config::default_config();
    cfg.system.jcoupling_hz(1, 2) = 7.0;
    cfg.system.jcoupling_hz(2, 1) = 7.0;
    const auto diags = config::validate_config(cfg);
    CHECK(count_errors(diags) == 0);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].severity == Diagnostic::Severity::warning);
    CHECK(diags[0].message.find("ignored") != std::string::npos);
}

TEST_CASE("too-slow expansion for the decoherence budget is flagged") {
    config::RunConfig cfg = config::default_config();
    cfg.relaxation.t2_by_order[7] = 0.001;  // 1 ms, below the ~4 ms pipeline
    const auto diags = config::validate_config(cfg);
    CHECK(count_errors(diags) == 0);
    CHECK(any_message_contains(diags, "decoherence"));
}

TEST_CASE("runner produces deterministic reports and csv files") {
    namespace fs = std::filesystem;
    config::RunConfig cfg = config::default_config();
    cfg.experiment = "spectrum";
    cfg.spectrum.method = "transition";
    cfg.spectrum.n_points = 512;

    cli::RunOptions opt;
    opt.out_dir = "test_cli_out";
    opt.csv = true;
    opt.state = "thermal";

    const std::string rep1 = cli::run(cfg, opt);
    const std::string csv1 = slurp("test_cli_out/spectrum.csv");
    const std::string rep2 = cli::run(cfg, opt);
    const std::string csv2 = slurp("test_cli_out/spectrum.csv");

    CHECK(rep1 == rep2);
    CHECK(csv1 == csv2);
    CHECK(rep1.find("peaks detected") != std::string::npos);
    CHECK(rep1.find("dipolar peak bound (protons) = 792") != std::string::npos);
    CHECK(csv1.rfind("# channel=H1", 0) == 0);
    CHECK(fs::exists("test_cli_out/spectrum_report.txt"));
    fs::remove_all("test_cli_out");
}

TEST_CASE("runner covers the logic-check and peaks subcommands") {
    namespace fs = std::filesystem;
    cli::RunOptions opt;
    opt.out_dir = "test_cli_out2";

    config::RunConfig cfg = config::default_config();
    cfg.experiment = "logic_check";
    const std::string logic_rep = cli::run(cfg, opt);
    CHECK(logic_rep.find("circuit_vs_closed_form_fidelity = 1") !=
          std::string::npos);
    CHECK(logic_rep.find("<M^2> = 49") != std::string::npos);

    cfg.experiment = "peaks";
    const std::string peaks_rep = cli::run(cfg, opt);
    CHECK(peaks_rep.find("792") != std::string::npos);
    CHECK(peaks_rep.find("192") != std::string::npos);

    cfg.experiment = "levitate";
    CHECK_THROWS_AS(cli::run(cfg, opt), ConfigError);

    cfg.experiment = "spectrum";
    opt.state = "haunted";
    CHECK_THROWS_AS(cli::run(cfg, opt), ConfigError);
    fs::remove_all("test_cli_out2");
}

TEST_CASE("runner rejects configs with validation errors") {
    config::RunConfig cfg = config::default_config();
    cfg.experiment = "thermal";
    cfg.theta_deg = 400.0;
    cli::RunOptions opt;
    opt.out_dir = "test_cli_out3";
    CHECK_THROWS_AS(cli::run(cfg, opt), ConfigError);
    std::filesystem::remove_all("test_cli_out3");
}

TEST_CASE("ideal thermal and expand reports carry the key quantities") {
    namespace fs = std::filesystem;
    cli::RunOptions opt;
    opt.out_dir = "test_cli_out4";

    config::RunConfig cfg = config::default_config();
    cfg.experiment = "thermal";
    const std::string thermal_rep = cli::run(cfg, opt);
    CHECK(thermal_rep.find("trace = ") != std::string::npos);
    CHECK(thermal_rep.find("coherence orders") != std::string::npos);

    cfg.experiment = "expand";
    cfg.theta_deg = 90.0;
    const std::string expand_rep = cli::run(cfg, opt);
    CHECK(expand_rep.find("fidelity_vs_oracle = 1") != std::string::npos);
    CHECK(expand_rep.find("seven_quantum_magnitude") != std::string::npos);
    CHECK(fs::exists("test_cli_out4/expand_report.txt"));
    fs::remove_all("test_cli_out4");
}
