// Runs the dfn binary as a subprocess and checks exit codes and outputs.

#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" DFN_CLI "\" " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string fx(const std::string& name) { return "\"" + dfn::test::fixture(name) + "\""; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dfn_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("validate") {
    const auto ok = run("validate " + fx("example3.json"));
    CHECK(ok.code == 0);
    CHECK(json::parse(ok.out)["ok"] == true);

    const auto cycle = run("validate " + fx("cycle.json"));
    CHECK(cycle.code == 1);
    const auto report = json::parse(cycle.out);
    CHECK(report["topology"]["issues"][0]["kind"] == "cycle");
    CHECK(report["topology"]["issues"][0]["nodes"] == json::array({1, 2}));

    const auto seeking = run("validate " + fx("anticoop.json"));
    CHECK(seeking.code == 1);
    const auto node = json::parse(seeking.out)["policy"]["nodes"][0];
    CHECK(node["property_a"]["passed"] == false);
    CHECK_FALSE(node["property_a"]["violations"].empty());

    const auto syntax = run("validate " + fx("syntax_error.json"));
    CHECK(syntax.code == 1);
    CHECK(json::parse(syntax.out)["message"].get<std::string>().find("line 4") != std::string::npos);

    CHECK(run("validate").code == 1);
    CHECK(run("frobnicate " + fx("example3.json")).code == 1);
}

TEST_CASE("simulate") {
    const auto dir = scratch("simulate");
    const auto r = run("simulate " + fx("example3.json") + " --out \"" + dir.string() + "\"");
    REQUIRE(r.code == 0);
    const auto summary = json::parse(slurp(dir / "summary.json"));
    CHECK(summary == json::parse(r.out));
    CHECK(summary["schema"] == "dfn-summary/1");
    CHECK(std::abs(summary["terminal_flow"][0].get<double>() - 1.0 / 3.0) <= 1e-4);
    CHECK(std::abs(summary["terminal_flow"][1].get<double>() - 2.0 / 3.0) <= 1e-4);
    CHECK(summary["converged"] == true);

    std::ifstream csv(dir / "trajectory.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,rho_1,rho_2,f_1,f_2,lambda_0,lambda_1");

    const auto manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["scenario_hash"].get<std::string>().size() == 16);
    CHECK(manifest["outputs"].size() == 2);

    const auto zero = json::parse(run("simulate " + fx("zero_inflow.json")).out);
    for (const auto& f : zero["terminal_flow"]) CHECK(f.get<double>() == 0.0);

    const auto attacked = json::parse(run("simulate " + fx("example3_cut_attack.json")).out);
    CHECK(attacked["tail_min_outflow"].get<double>() < 0.5);
    CHECK(attacked["perturbation"]["alpha_transferring"] == false);
    CHECK(attacked["perturbation"]["magnitude"].get<double>() == doctest::Approx(1.25).epsilon(1e-15));

    // Output directory from the environment.
    const auto envdir = scratch("simulate_env");
    CHECK(run("simulate " + fx("chain.json") + " --horizon 20", "DFN_OUTPUT_DIR=\"" + envdir.string() + "\"").code == 0);
    CHECK(fs::exists(envdir / "trajectory.csv"));

    // Inflow above capacity drives densities past the configured ceiling.
    const auto faildir = scratch("simulate_fail");
    const auto unstable = run("simulate " + fx("overload.json") + " --out \"" + faildir.string() + "\"");
    CHECK(unstable.code == 2);
    CHECK(json::parse(unstable.out)["error"].get<std::string>().find("density") != std::string::npos);
    CHECK(json::parse(slurp(faildir / "summary.json")).contains("error"));
}

TEST_CASE("mincut") {
    auto capacity = [](const std::string& f) {
        const auto r = run("mincut " + fx(f));
        REQUIRE(r.code == 0);
        return json::parse(r.out);
    };
    CHECK(capacity("example3.json")["capacity"].get<double>() == doctest::Approx(1.5).epsilon(1e-15));
    const auto chain = capacity("chain.json");
    CHECK(chain["capacity"].get<double>() == 1.0);
    CHECK(chain["cut"]["links"] == json::array({2}));
    const auto dag = capacity("random_dag.json");
    CHECK(dag["capacity"].get<double>() == doctest::Approx(2.705).epsilon(1e-12));
    CHECK(dag["cut"]["origin_side"] == json::array({6}));
    CHECK(capacity("diamond5.json")["capacity"].get<double>() == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(run("mincut " + fx("cycle.json")).code == 1);
}

TEST_CASE("resilience") {
    const auto a = run("resilience " + fx("example3.json") + " --alphas 0.5 --samples 5 --seed 3");
    REQUIRE(a.code == 0);
    const auto report = json::parse(a.out);
    CHECK(report["schema"] == "dfn-resilience/1");
    CHECK(report["min_cut"].get<double>() == 1.5);
    CHECK(report["seed"] == 3);
    CHECK(report["alpha_sweep"].size() == 1);
    CHECK(report["alpha_sweep"][0]["defeating_delta"].get<double>() <= 1.5 - 0.25 + 0.015 + 1e-12);
    CHECK(report["samples"].size() == 5);

    const auto b = run("resilience " + fx("example3.json") + " --alphas 0.5 --samples 5 --seed 3 --jobs 1");
    CHECK(a.out == b.out);

    CHECK(run("resilience " + fx("anticoop.json") + " --samples 1").code == 1);
}

TEST_CASE("limitflow") {
    const auto dir = scratch("limitflow");
    const auto r = run("limitflow " + fx("example3.json") + " --sweep 0,2,9 --out \"" + dir.string() + "\"");
    REQUIRE(r.code == 0);
    std::istringstream csv(r.out);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "lambda0,f_1,f_2,saturated_1,saturated_2,residual,status");
    std::getline(csv, line);
    CHECK(line.rfind("0,0,0,0,0,", 0) == 0);
    int rows = 1;
    double prev = -1.0;
    while (std::getline(csv, line)) {
        ++rows;
        std::istringstream fields(line);
        std::string lambda, f1;
        std::getline(fields, lambda, ',');
        std::getline(fields, f1, ',');
        CHECK(std::stod(f1) >= prev);
        prev = std::stod(f1);
        if (std::stod(lambda) >= 1.5) CHECK(std::stod(f1) == 0.75);
    }
    CHECK(rows == 9);
    CHECK(slurp(dir / "limitflow.csv") == r.out);
    CHECK(run("limitflow " + fx("example3.json") + " --sweep 0,2").code == 1);
}

TEST_CASE("reruns are byte-identical") {
    const std::string cmd = "simulate " + fx("diamond5.json") + " --horizon 30";
    CHECK(run(cmd).out == run(cmd).out);
}
