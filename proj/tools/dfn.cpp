// Command-line front end: scenario validation, simulation, min-cut, limit-flow
// sweeps and weak-resilience estimates.

#include "dfn/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Dynamical flow network simulator and resilience analyzer"};
    app.set_version_flag("--version", dfn::kToolVersion);
    app.require_subcommand(1);

    std::string scenario;

    auto* validate = app.add_subcommand("validate", "Check topology, flow functions and routing policy");
    validate->add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);

    dfn::SimulateOptions sim;
    std::string sim_out;
    auto* simulate = app.add_subcommand("simulate", "Integrate the network ODE; emit trajectory CSV and summary JSON");
    simulate->add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    simulate->add_option("--horizon", sim.horizon, "Simulated time span")->check(CLI::PositiveNumber);
    simulate->add_option("--dt", sim.dt, "Integration step")->check(CLI::PositiveNumber);
    simulate->add_option("--out", sim_out, "Output directory (default: $DFN_OUTPUT_DIR)");
    simulate->add_option("--every", sim.every, "Write every k-th step to the CSV")->check(CLI::PositiveNumber);

    auto* mincut = app.add_subcommand("mincut", "Minimum origin-destination cut capacity");
    mincut->add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);

    dfn::ResilienceOptions res;
    std::string res_out;
    std::vector<double> alphas;
    int samples = 0;
    std::uint64_t seed = 0;
    auto* resilience = app.add_subcommand("resilience", "Bracket the weak resilience with scaling attacks");
    resilience->add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    auto* alphas_opt = resilience->add_option("--alphas", alphas, "Transfer fractions to sweep")->delimiter(',');
    auto* samples_opt = resilience->add_option("--samples", samples, "Random perturbations below the min cut");
    auto* seed_opt = resilience->add_option("--seed", seed, "Random seed (default: scenario seed)");
    resilience->add_option("--horizon", res.horizon, "Simulated time span per attack")->check(CLI::PositiveNumber);
    resilience->add_option("--jobs", res.jobs, "Worker threads (0 = all cores)");
    resilience->add_option("--out", res_out, "Output directory (default: $DFN_OUTPUT_DIR)");

    dfn::LimitFlowOptions lf;
    std::string lf_out;
    std::vector<double> sweep;
    auto* limitflow = app.add_subcommand("limitflow", "Limit flow as a function of the inflow");
    limitflow->add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    limitflow->add_option("--sweep", sweep, "from,to,steps")->delimiter(',')->expected(3);
    limitflow->add_option("--jobs", lf.jobs, "Worker threads (0 = all cores)");
    limitflow->add_option("--out", lf_out, "Output directory (default: $DFN_OUTPUT_DIR)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : dfn::kExitValidationFailure;
    }

    if (*validate) return dfn::cmd_validate(scenario, std::cout);
    if (*simulate) {
        if (!sim_out.empty()) sim.out_dir = sim_out;
        return dfn::cmd_simulate(scenario, sim, std::cout);
    }
    if (*mincut) return dfn::cmd_mincut(scenario, std::cout);
    if (*resilience) {
        if (*alphas_opt) res.alphas = alphas;
        if (*samples_opt) res.samples = samples;
        if (*seed_opt) res.seed = seed;
        if (!res_out.empty()) res.out_dir = res_out;
        return dfn::cmd_resilience(scenario, res, std::cout);
    }
    if (*limitflow) {
        if (!sweep.empty()) {
            lf.from = sweep[0];
            lf.to = sweep[1];
            lf.steps = static_cast<int>(sweep[2]);
        }
        if (!lf_out.empty()) lf.out_dir = lf_out;
        return dfn::cmd_limitflow(scenario, lf, std::cout);
    }
    return dfn::kExitRuntimeFailure;
}
