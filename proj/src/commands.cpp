#include "dfn/commands.hpp"

#include "dfn/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dfn {

using nlohmann::json;
namespace fs = std::filesystem;

std::optional<std::string> resolve_output_dir(const std::optional<std::string>& flag) {
    if (flag) return flag;
    if (const char* env = std::getenv("DFN_OUTPUT_DIR"); env && *env) return std::string(env);
    return std::nullopt;
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string format_number(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string hex64(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

json link_ids(const Scenario& s, const std::vector<LinkIndex>& links) {
    json a = json::array();
    for (LinkIndex e : links) a.push_back(s.network.topology().link(e).id);
    return a;
}

json file_nodes(const Scenario& s, const std::vector<NodeId>& canonical) {
    std::vector<NodeId> labels;
    for (NodeId v : canonical) labels.push_back(s.file_label[v]);
    std::sort(labels.begin(), labels.end());
    return labels;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
}

void write_outputs(const std::optional<std::string>& dir, const std::string& command, const std::string& scenario_path,
                   std::uint64_t seed, const std::vector<std::pair<std::string, std::string>>& files,
                   const json& options) {
    if (!dir) return;
    fs::create_directories(*dir);
    json manifest;
    manifest["schema"] = "dfn-manifest/1";
    manifest["command"] = command;
    manifest["scenario"] = scenario_path;
    manifest["scenario_hash"] = hex64(fnv1a64(read_file(scenario_path)));
    manifest["seed"] = seed;
    manifest["tool_version"] = kToolVersion;
    manifest["options"] = options;
    manifest["outputs"] = json::array();
    for (const auto& [name, text] : files) {
        const fs::path p = fs::path(*dir) / name;
        write_text(p, text);
        manifest["outputs"].push_back(p.string());
    }
    write_text(fs::path(*dir) / "manifest.json", manifest.dump(2) + "\n");
}

int report_error(std::ostream& out, const std::string& kind, const std::string& message, int code) {
    out << json{{"error", kind}, {"message", message}}.dump(2) << "\n";
    return code;
}

// Runs body(); maps parse/validation problems to exit 1 and everything else to 2.
template <typename Body>
int guarded(std::ostream& out, Body&& body) {
    try {
        return body();
    } catch (const ParseError& e) {
        return report_error(out, "parse", e.what(), kExitValidationFailure);
    } catch (const PreconditionError& e) {
        return report_error(out, "precondition", e.what(), kExitValidationFailure);
    } catch (const SimulationError& e) {
        return report_error(out, "simulation", e.what(), kExitRuntimeFailure);
    } catch (const std::exception& e) {
        return report_error(out, "runtime", e.what(), kExitRuntimeFailure);
    }
}

Scenario load_network(const std::string& path) {
    ScenarioDocument doc = load_scenario(path);
    if (auto v = validate_topology(doc.topology); !v.ok())
        throw ParseError("invalid topology: " + v.issues.front().message);
    try {
        return build_network(std::move(doc));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(e.what());  // unresolved references make the document invalid
    }
}

json property_report_json(const PropertyReport& r) {
    json j{{"passed", r.passed}, {"samples", r.samples}};
    if (!r.detail.empty()) j["detail"] = r.detail;
    if (!r.violations.empty()) {
        j["violations"] = json::array();
        for (const auto& v : r.violations)
            j["violations"].push_back({{"point", v.point}, {"row", v.row}, {"col", v.col}, {"value", v.value}});
    }
    return j;
}

}  // namespace

json validation_report(const ScenarioDocument& doc) {
    json report;
    report["schema"] = "dfn-validate/1";
    bool ok = true;

    const ValidationResult topo = validate_topology(doc.topology);
    json issues = json::array();
    for (const auto& i : topo.issues)
        issues.push_back({{"kind", to_string(i.kind)}, {"nodes", i.nodes}, {"message", i.message}});
    report["topology"] = {{"ok", topo.ok()}, {"issues", issues}};
    if (!topo.ok()) {
        report["ok"] = false;
        return report;
    }

    std::optional<Scenario> s;
    try {
        s.emplace(build_network(doc));
        report["references"] = {{"ok", true}};
    } catch (const Error& e) {
        report["references"] = {{"ok", false}, {"message", e.what()}};
        report["ok"] = false;
        return report;
    }

    json flows = json::array();
    bool flows_ok = true;
    for (LinkIndex e = 0; e < s->network.link_count(); ++e) {
        const auto cert = certify_flow_function(s->network.flow(e));
        if (!cert.ok) {
            flows_ok = false;
            flows.push_back({{"link", s->network.topology().link(e).id}, {"problems", cert.problems}});
        }
    }
    report["flow_functions"] = {{"ok", flows_ok}, {"problems", flows}};
    ok = ok && flows_ok;

    json nodes = json::array();
    bool policy_ok = true;
    const auto& topology = s->network.topology();
    for (NodeId v = 0; v + 1 < topology.node_count(); ++v) {
        const auto k = static_cast<Eigen::Index>(topology.outgoing(v).size());
        json node{{"node", s->file_label[v]}};
        const auto a = check_property_a(*s->policy, v, k, 1000, doc.seed + static_cast<std::uint64_t>(v));
        node["property_a"] = property_report_json(a);
        policy_ok = policy_ok && a.passed;
        json b{{"passed", true}, {"subsets_checked", 0}};
        if (k > 12) {
            b["skipped"] = "too many outgoing links to enumerate subsets";
        } else {
            json failures = json::array();
            for (std::uint32_t mask = 1; mask + 1 < (1U << k); ++mask) {
                std::vector<int> subset;
                for (int i = 0; i < k; ++i)
                    if (mask >> i & 1U) subset.push_back(i);
                const auto r = check_property_b(*s->policy, v, VectorXd::Ones(k), subset);
                b["subsets_checked"] = b["subsets_checked"].get<int>() + 1;
                if (!r.passed) {
                    b["passed"] = false;
                    policy_ok = false;
                    if (failures.size() < 8) {
                        std::vector<LinkIndex> links;
                        for (int i : subset) links.push_back(topology.outgoing(v)[i]);
                        failures.push_back(json{{"subset", link_ids(*s, links)}, {"detail", r.detail}});
                    }
                }
            }
            if (!failures.empty()) b["failures"] = failures;
        }
        node["property_b"] = b;
        nodes.push_back(node);
    }
    report["policy"] = {{"ok", policy_ok},
                        {"family", s->policy->name()},
                        {"strictly_positive", s->policy->strictly_positive()},
                        {"nodes", nodes}};
    ok = ok && policy_ok;

    if (!doc.scale_perturbation.empty() || doc.cut_attack_alpha) {
        try {
            const auto spec = scenario_perturbation(*s);
            const auto m = analyze_perturbation<double>(s->network.flows(), spec);
            report["perturbation"] = {{"ok", true}, {"magnitude", m.magnitude}, {"stretching", m.stretching}};
        } catch (const Error& e) {
            report["perturbation"] = {{"ok", false}, {"message", e.what()}};
            ok = false;
        }
    }

    const MinCut mc = min_cut_capacity(topology, s->network.capacities());
    report["min_cut"] = mc.capacity;
    report["inflow_below_min_cut"] = doc.inflow < mc.capacity;
    report["ok"] = ok;
    return report;
}

int cmd_validate(const std::string& scenario_path, std::ostream& out) {
    return guarded(out, [&] {
        const json report = validation_report(load_scenario(scenario_path));
        out << report.dump(2) << "\n";
        return report["ok"].get<bool>() ? kExitSuccess : kExitValidationFailure;
    });
}

std::string trajectory_csv(const Scenario& s, const Trajectory<double>& traj, int every) {
    const auto& topo = s.network.topology();
    std::ostringstream os;
    os << "t";
    for (const Link& l : topo.links()) os << ",rho_" << l.id;
    for (const Link& l : topo.links()) os << ",f_" << l.id;
    for (NodeId v = 0; v < topo.node_count(); ++v) os << ",lambda_" << s.file_label[v];
    os << "\n";
    every = std::max(1, every);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        if (i % every != 0 && i + 1 != traj.size()) continue;
        os << format_number(traj.times[i]);
        for (Eigen::Index e = 0; e < traj.states[i].size(); ++e) os << "," << format_number(traj.states[i][e]);
        for (Eigen::Index e = 0; e < traj.flows[i].size(); ++e) os << "," << format_number(traj.flows[i][e]);
        for (Eigen::Index v = 0; v < traj.node_inflows[i].size(); ++v)
            os << "," << format_number(traj.node_inflows[i][v]);
        os << "\n";
    }
    return os.str();
}

int cmd_simulate(const std::string& scenario_path, const SimulateOptions& opt, std::ostream& out) {
    return guarded(out, [&] {
        const Scenario s = load_network(scenario_path);
        SimulationConfig cfg = s.doc.simulation;
        if (opt.horizon) cfg.horizon = *opt.horizon;
        if (opt.dt) cfg.dt = *opt.dt;

        const auto f0 = scenario_initial_flow(s);
        const VectorXd rho0 = f0 ? initial_state_for(s.network, *f0) : VectorXd::Zero(s.network.link_count());
        const PerturbationSpecd spec = scenario_perturbation(s);
        const FlowNetworkd net = spec.empty() ? s.network : s.network.perturbed(spec);

        json summary;
        summary["schema"] = "dfn-summary/1";
        summary["inflow"] = cfg.inflow;
        summary["horizon"] = cfg.horizon;
        const auto& topo = net.topology();
        std::vector<int> ids;
        for (const Link& l : topo.links()) ids.push_back(l.id);
        summary["link_ids"] = ids;

        const auto dir = resolve_output_dir(opt.out_dir);
        const json options{{"horizon", cfg.horizon}, {"dt", cfg.dt}, {"every", opt.every}};
        Trajectory<double> traj;
        try {
            traj = simulate(net, *s.policy, cfg, rho0);
        } catch (const SimulationError& e) {
            summary["error"] = e.what();
            write_outputs(dir, "simulate", scenario_path, s.doc.seed, {{"summary.json", summary.dump(2) + "\n"}}, options);
            out << summary.dump(2) << "\n";
            return static_cast<int>(kExitRuntimeFailure);
        }
        const auto est = alpha_transfer_estimate(traj, 1.0, cfg.inflow, cfg.tail_fraction);
        const auto sat = saturated_links(net, traj, cfg.saturation_threshold);
        std::vector<int> sat_ids;
        for (LinkIndex e = 0; e < net.link_count(); ++e)
            if (sat[e]) sat_ids.push_back(topo.link(e).id);

        summary["dt"] = traj.dt;
        summary["steps"] = traj.size() - 1;
        summary["terminal_flow"] = std::vector<double>(traj.terminal_flow().begin(), traj.terminal_flow().end());
        summary["terminal_density"] = std::vector<double>(traj.terminal_state().begin(), traj.terminal_state().end());
        summary["tail_min_outflow"] = est.tail_min;
        summary["tail_variation"] = est.tail_variation;
        summary["converged"] = est.tail_variation <= cfg.convergence_tol * std::max(1.0, cfg.inflow);
        summary["saturated_links"] = sat_ids;
        summary["max_undershoot"] = traj.max_undershoot;
        if (!spec.empty()) {
            const auto m = analyze_perturbation<double>(s.network.flows(), spec);
            json p{{"magnitude", m.magnitude}, {"stretching", m.stretching}};
            p["links"] = json::array();
            for (const auto& [e, ff] : spec.replacements)
                p["links"].push_back({{"id", topo.link(e).id}, {"eps", ff.scale()}});
            if (s.doc.cut_attack_alpha) {
                const double a = *s.doc.cut_attack_alpha;
                p["alpha"] = a;
                p["alpha_transferring"] =
                    alpha_transfer_estimate(traj, a, cfg.inflow, cfg.tail_fraction).transferring;
            }
            summary["perturbation"] = p;
        }

        write_outputs(dir, "simulate", scenario_path, s.doc.seed,
                      {{"trajectory.csv", trajectory_csv(s, traj, opt.every)}, {"summary.json", summary.dump(2) + "\n"}},
                      options);
        out << summary.dump(2) << "\n";
        return static_cast<int>(kExitSuccess);
    });
}

int cmd_mincut(const std::string& scenario_path, std::ostream& out) {
    return guarded(out, [&] {
        const Scenario s = load_network(scenario_path);
        const auto& topo = s.network.topology();
        const VectorXd caps = s.network.capacities();
        const MinCut mc = min_cut_capacity(topo, caps);
        json j;
        j["schema"] = "dfn-mincut/1";
        j["capacity"] = mc.capacity;
        j["max_flow"] = max_flow_value(topo, caps);
        j["enumerated"] = mc.enumerated;
        j["cut"] = {{"origin_side", file_nodes(s, mc.cut.origin_side)}, {"links", link_ids(s, mc.cut.cut_links)}};
        out << j.dump(2) << "\n";
        return static_cast<int>(kExitSuccess);
    });
}

json resilience_to_json(const Scenario& s, const ResilienceReport& r) {
    json j;
    j["schema"] = "dfn-resilience/1";
    j["min_cut"] = r.min_cut;
    j["cut_links"] = link_ids(s, r.cut.cut_links);
    j["inflow"] = r.inflow;
    j["alpha_sweep"] = json::array();
    for (const auto& a : r.alpha_sweep)
        j["alpha_sweep"].push_back({{"alpha", a.alpha},
                                    {"defeating_delta", a.defeating_delta},
                                    {"preserving_delta", a.preserving_delta},
                                    {"epsilon", a.epsilon},
                                    {"upper_bound", a.upper_bound},
                                    {"evaluations", a.evaluations}});
    j["preserved_delta_max"] = r.preserved_delta_max;
    j["alpha_floor"] = r.alpha_floor;
    j["defeats"] = r.defeats;
    j["samples"] = json::array();
    for (const auto& x : r.samples)
        j["samples"].push_back({{"delta", x.delta}, {"tail_min", x.tail_min}, {"defeated", x.defeated},
                                {"inconclusive", x.inconclusive}});
    j["seed"] = r.seed;
    return j;
}

int cmd_resilience(const std::string& scenario_path, const ResilienceOptions& opt, std::ostream& out) {
    return guarded(out, [&] {
        const Scenario s = load_network(scenario_path);
        ResilienceConfig cfg;
        cfg.sim = s.doc.simulation;
        if (opt.horizon) cfg.sim.horizon = *opt.horizon;
        if (opt.alphas) cfg.alphas = *opt.alphas;
        if (opt.samples) cfg.samples = *opt.samples;
        cfg.seed = opt.seed.value_or(s.doc.seed);
        cfg.jobs = opt.jobs;
        const double inflow = s.doc.inflow;
        const VectorXd f0 = scenario_initial_flow(s).value_or(default_initial_flow(s.network, *s.policy, inflow));
        const auto report = estimate_weak_resilience(s.network, *s.policy, inflow, f0, cfg);
        const json j = resilience_to_json(s, report);
        write_outputs(resolve_output_dir(opt.out_dir), "resilience", scenario_path, cfg.seed,
                      {{"resilience.json", j.dump(2) + "\n"}},
                      {{"alphas", cfg.alphas}, {"samples", cfg.samples}, {"horizon", cfg.sim.horizon}});
        out << j.dump(2) << "\n";
        return static_cast<int>(kExitSuccess);
    });
}

int cmd_limitflow(const std::string& scenario_path, const LimitFlowOptions& opt, std::ostream& out) {
    return guarded(out, [&] {
        if (opt.steps < 1) throw Error("sweep needs at least one row");
        if (opt.from < 0 || opt.to < opt.from) throw Error("sweep range must satisfy 0 <= from <= to");
        const Scenario s = load_network(scenario_path);
        const auto& topo = s.network.topology();
        const int m = topo.link_count();

        struct Row {
            double inflow = 0.0;
            LimitFlow<double> limit;
            std::string status = "ok";
        };
        std::vector<Row> rows(opt.steps);
        parallel_for(rows.size(), opt.jobs, [&](std::size_t i) {
            Row& r = rows[i];
            r.inflow = opt.steps == 1 ? opt.from : opt.from + (opt.to - opt.from) * static_cast<double>(i) / (opt.steps - 1);
            try {
                r.limit = network_limit_flow(s.network, *s.policy, r.inflow);
            } catch (const ConvergenceError& e) {
                r.status = std::string("no_convergence");
            }
        });

        std::ostringstream csv;
        csv << "lambda0";
        for (const Link& l : topo.links()) csv << ",f_" << l.id;
        for (const Link& l : topo.links()) csv << ",saturated_" << l.id;
        csv << ",residual,status\n";
        for (const Row& r : rows) {
            csv << format_number(r.inflow);
            for (int e = 0; e < m; ++e) csv << "," << (r.status == "ok" ? format_number(r.limit.flow[e]) : "");
            for (int e = 0; e < m; ++e) csv << "," << (r.status == "ok" ? (r.limit.saturated[e] ? "1" : "0") : "");
            csv << "," << (r.status == "ok" ? format_number(r.limit.max_residual) : "") << "," << r.status << "\n";
        }
        write_outputs(resolve_output_dir(opt.out_dir), "limitflow", scenario_path, s.doc.seed,
                      {{"limitflow.csv", csv.str()}}, {{"from", opt.from}, {"to", opt.to}, {"steps", opt.steps}});
        out << csv.str();
        return static_cast<int>(kExitSuccess);
    });
}

}  // namespace dfn
