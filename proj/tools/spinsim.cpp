// spinsim: config-driven simulator of the seven-spin state-expansion
// experiment. Subcommands select the experiment; --config supplies system
// and pipeline parameters (defaults cover everything).

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "spinsim/spinsim.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string mode;
    double theta_deg = -1.0;  // <0 means "use config value"
    spinsim::cli::RunOptions opt;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_theta) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--mode", args.mode, "ideal or pulse_level")
        ->check(CLI::IsMember({"ideal", "pulse_level"}));
    if (with_theta) {
        cmd->add_option("--theta", args.theta_deg,
                        "carbon rotation angle in degrees [0, 360)");
    }
    cmd->add_option("--out", args.opt.out_dir, "output directory");
    cmd->add_flag("--csv", args.opt.csv, "write CSV spectrum data");
    cmd->add_flag("--plot", args.opt.plot, "write SVG plots");
}

spinsim::config::RunConfig resolve(const CommonArgs& args,
                                   const std::string& experiment) {
    spinsim::config::RunConfig cfg = args.config_path.empty()
                                         ? spinsim::config::default_config()
                                         : spinsim::config::load_config(args.config_path);
    cfg.experiment = experiment;
    if (!args.mode.empty()) {
        cfg.mode = (args.mode == "ideal") ? spinsim::experiment::Mode::ideal
                                          : spinsim::experiment::Mode::pulse_level;
    }
    if (args.theta_deg >= 0.0) cfg.theta_deg = args.theta_deg;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"seven-spin state-expansion simulator"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string experiment;

    auto* thermal = app.add_subcommand("thermal", "thermal deviation state");
    add_common(thermal, args, false);
    thermal->callback([&] { experiment = "thermal"; });

    auto* rho_a = app.add_subcommand("rho-a", "prepare I0z*Sigma_z (step A)");
    add_common(rho_a, args, false);
    rho_a->callback([&] { experiment = "rho_a"; });

    auto* pseudo = app.add_subcommand("pseudopure", "prepare pseudopure state (step B)");
    add_common(pseudo, args, false);
    pseudo->callback([&] { experiment = "pseudopure"; });

    auto* expand = app.add_subcommand("expand", "expand into a|up...> + b|down...>");
    add_common(expand, args, true);
    expand->callback([&] { experiment = "expand"; });

    auto* measure = app.add_subcommand("measure", "expansion plus storage decoherence");
    add_common(measure, args, true);
    measure->callback([&] { experiment = "measure"; });

    auto* spectrum = app.add_subcommand("spectrum", "render a spectrum of a state");
    add_common(spectrum, args, true);
    spectrum->add_option("--state", args.opt.state,
                         "thermal, rho-a, pseudopure, expand, or measure");
    spectrum->callback([&] { experiment = "spectrum"; });

    auto* logic = app.add_subcommand("logic-check", "qubit-circuit oracle check");
    add_common(logic, args, true);
    logic->callback([&] { experiment = "logic_check"; });

    auto* peaks = app.add_subcommand("peaks", "resolved-peak counting bounds");
    add_common(peaks, args, false);
    peaks->callback([&] { experiment = "peaks"; });

    CLI11_PARSE(app, argc, argv);

    try {
        const spinsim::config::RunConfig cfg = resolve(args, experiment);
        const std::string report = spinsim::cli::run(cfg, args.opt);
        std::cout << report;
        return 0;
    } catch (const spinsim::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
}
