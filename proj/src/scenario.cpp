#include "dfn/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dfn {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ParseError(where + ": " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object()) fail(where, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(where, "missing field '" + key + "'");
    return *it;
}

double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where, "expected a number");
    return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) fail(where, "expected an integer");
    return v.get<int>();
}

// Object keys are link ids or node labels written as decimal strings.
int key_to_int(const std::string& key, const std::string& where) {
    std::size_t used = 0;
    int value = 0;
    try {
        value = std::stoi(key, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != key.size()) fail(where, "key '" + key + "' is not an integer");
    return value;
}

double positive(double x, const std::string& where) {
    if (!(x > 0) || !std::isfinite(x)) fail(where, "must be finite and positive");
    return x;
}

SimulationConfig parse_simulation(const json& s, SimulationConfig cfg) {
    const std::string where = "simulation";
    if (!s.is_object()) fail(where, "expected an object");
    for (const auto& [key, value] : s.items()) {
        const std::string at = where + "." + key;
        if (key == "dt")
            cfg.dt = positive(as_number(value, at), at);
        else if (key == "horizon")
            cfg.horizon = positive(as_number(value, at), at);
        else if (key == "tail_fraction")
            cfg.tail_fraction = as_number(value, at);
        else if (key == "saturation_threshold")
            cfg.saturation_threshold = as_number(value, at);
        else if (key == "convergence_tol")
            cfg.convergence_tol = positive(as_number(value, at), at);
        else if (key == "density_ceiling")
            cfg.density_ceiling = positive(as_number(value, at), at);
        else
            fail(at, "unknown field");
    }
    try {
        cfg.validate();
    } catch (const Error& e) {
        fail(where, e.what());
    }
    return cfg;
}

}  // namespace

ScenarioDocument parse_scenario(const json& j) {
    if (!j.is_object()) fail("document", "expected a JSON object");
    if (auto it = j.find("schema"); it != j.end() && *it != kScenarioSchema)
        fail("schema", "unsupported schema " + it->dump());

    ScenarioDocument doc;
    const int nodes = as_int(require(j, "nodes", "document"), "nodes");
    if (nodes < 2) fail("nodes", "need at least two nodes");

    const json& links = require(j, "links", "document");
    if (!links.is_array()) fail("links", "expected an array");
    std::vector<Link> parsed;
    for (std::size_t i = 0; i < links.size(); ++i) {
        const std::string at = "links[" + std::to_string(i) + "]";
        Link l;
        l.id = as_int(require(links[i], "id", at), at + ".id");
        l.tail = as_int(require(links[i], "tail", at), at + ".tail");
        l.head = as_int(require(links[i], "head", at), at + ".head");
        if (l.tail < 0 || l.tail >= nodes) fail(at + ".tail", "node label out of range");
        if (l.head < 0 || l.head >= nodes) fail(at + ".head", "node label out of range");
        parsed.push_back(l);
    }
    doc.topology = NetworkTopology(nodes, std::move(parsed));

    const json& ffs = require(j, "flow_functions", "document");
    if (!ffs.is_object()) fail("flow_functions", "expected an object keyed by link id");
    for (const auto& [key, value] : ffs.items()) {
        const std::string at = "flow_functions." + key;
        const int id = key_to_int(key, at);
        const json& fam = require(value, "family", at);
        if (fam != "exp") fail(at + ".family", "unsupported family " + fam.dump());
        ExpFlowSpec spec;
        spec.rate = positive(as_number(require(value, "a", at), at + ".a"), at + ".a");
        spec.f_max = positive(as_number(require(value, "f_max", at), at + ".f_max"), at + ".f_max");
        doc.flow_functions[id] = spec;
    }

    const json& pol = require(j, "policy", "document");
    if (!pol.is_object()) fail("policy", "expected an object keyed by node label");
    for (const auto& [key, value] : pol.items()) {
        const std::string at = "policy." + key;
        const int node = key_to_int(key, at);
        NodePolicySpec np;
        std::string type = "logit";
        if (auto it = value.find("type"); value.is_object() && it != value.end()) {
            if (!it->is_string()) fail(at + ".type", "expected a string");
            type = it->get<std::string>();
        }
        if (type == "logit")
            np.family = PolicyFamily::Logit;
        else if (type == "congestion_seeking")
            np.family = PolicyFamily::CongestionSeeking;
        else if (type == "constant")
            np.family = PolicyFamily::Constant;
        else
            fail(at + ".type", "unknown policy type '" + type + "'");
        if (np.family != PolicyFamily::Constant)
            np.eta = positive(as_number(require(value, "eta", at), at + ".eta"), at + ".eta");
        const json& w = require(value, "weights", at);
        if (!w.is_object()) fail(at + ".weights", "expected an object keyed by link id");
        for (const auto& [lk, lv] : w.items()) {
            const std::string wat = at + ".weights." + lk;
            const double x = as_number(lv, wat);
            if (np.family == PolicyFamily::Constant ? x < 0 : !(x > 0)) fail(wat, "invalid weight");
            np.weights[key_to_int(lk, wat)] = x;
        }
        doc.policy[node] = std::move(np);
    }

    doc.inflow = as_number(require(j, "inflow", "document"), "inflow");
    if (!(doc.inflow >= 0) || !std::isfinite(doc.inflow)) fail("inflow", "must be finite and nonnegative");

    if (auto it = j.find("initial_flow"); it != j.end()) {
        if (!it->is_object()) fail("initial_flow", "expected an object keyed by link id");
        for (const auto& [key, value] : it->items()) {
            const std::string at = "initial_flow." + key;
            const double f = as_number(value, at);
            if (f < 0) fail(at, "must be nonnegative");
            doc.initial_flow[key_to_int(key, at)] = f;
        }
    }

    if (auto it = j.find("perturbation"); it != j.end()) {
        if (!it->is_object()) fail("perturbation", "expected an object");
        for (const auto& [key, value] : it->items()) {
            const std::string at = "perturbation." + key;
            if (key == "cut_attack") {
                const double a = as_number(require(value, "alpha", at), at + ".alpha");
                if (!(a > 0 && a <= 1)) fail(at + ".alpha", "must lie in (0, 1]");
                doc.cut_attack_alpha = a;
                continue;
            }
            const int id = key_to_int(key, at);
            const json& type = require(value, "type", at);
            if (type != "scale") fail(at + ".type", "unsupported perturbation type " + type.dump());
            const double eps = as_number(require(value, "eps", at), at + ".eps");
            if (!(eps >= 0 && eps <= 1)) fail(at + ".eps", "must lie in [0, 1]");
            doc.scale_perturbation[id] = eps;
        }
    }

    doc.simulation.inflow = doc.inflow;
    if (auto it = j.find("simulation"); it != j.end()) doc.simulation = parse_simulation(*it, doc.simulation);

    if (auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0))
            fail("seed", "expected a nonnegative integer");
        doc.seed = it->get<std::uint64_t>();
    }

    static const std::set<std::string> known{"schema", "nodes", "links", "flow_functions", "policy", "inflow",
                                             "initial_flow", "perturbation", "simulation", "seed", "description"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) fail(key, "unknown field");
    return doc;
}

ScenarioDocument parse_scenario_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // Translate the byte offset into line:column.
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << "line " << line << ", column " << col << ": JSON syntax error";
        throw ParseError(os.str());
    }
    return parse_scenario(j);
}

ScenarioDocument load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_scenario_text(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

Scenario build_network(ScenarioDocument doc) {
    if (auto v = validate_topology(doc.topology); !v.ok())
        throw Error("invalid topology: " + v.issues.front().message);
    const auto canonical_label = topological_order(doc.topology);
    const NetworkTopology topo = doc.topology.relabeled(canonical_label);
    std::vector<NodeId> file_label(canonical_label.size());
    for (std::size_t v = 0; v < canonical_label.size(); ++v) file_label[canonical_label[v]] = static_cast<NodeId>(v);

    std::vector<FlowFunctiond> flows;
    for (const Link& l : topo.links()) {
        auto it = doc.flow_functions.find(l.id);
        if (it == doc.flow_functions.end()) throw Error("link " + std::to_string(l.id) + " has no flow function");
        flows.push_back(FlowFunctiond::exponential(it->second.rate, it->second.f_max));
    }
    for (const auto& [id, spec] : doc.flow_functions)
        if (!topo.index_of(id)) throw Error("flow function given for unknown link " + std::to_string(id));

    // Policy, indexed by canonical label with weights in outgoing-link order.
    bool constant = false, softmax = false;
    for (const auto& [node, np] : doc.policy) {
        if (node < 0 || node >= topo.node_count()) throw Error("policy given for unknown node " + std::to_string(node));
        (np.family == PolicyFamily::Constant ? constant : softmax) = true;
    }
    if (constant && softmax) throw Error("mixing constant and softmax policies across nodes is not supported");

    const int n = topo.node_count();
    std::vector<SoftmaxPolicy<double>::Node> soft(n);
    std::vector<VectorXd> splits(n);
    for (NodeId v = 0; v < n; ++v) {
        const auto& out = topo.outgoing(v);
        if (out.empty()) continue;
        const NodeId label = file_label[v];
        auto it = doc.policy.find(label);
        if (it == doc.policy.end()) throw Error("node " + std::to_string(label) + " has no routing policy");
        const NodePolicySpec& np = it->second;
        VectorXd w(static_cast<Eigen::Index>(out.size()));
        for (std::size_t i = 0; i < out.size(); ++i) {
            const int id = topo.link(out[i]).id;
            auto wi = np.weights.find(id);
            if (wi == np.weights.end())
                throw Error("policy of node " + std::to_string(label) + " has no weight for link " + std::to_string(id));
            w[static_cast<Eigen::Index>(i)] = wi->second;
        }
        if (np.weights.size() != out.size())
            throw Error("policy of node " + std::to_string(label) + " weights a link that does not leave it");
        soft[v] = {np.family == PolicyFamily::CongestionSeeking ? -np.eta : np.eta, w};
        splits[v] = w;
    }
    PolicyPtr<double> policy;
    if (constant)
        policy = std::make_shared<ConstantPolicy<double>>(std::move(splits));
    else
        policy = std::make_shared<SoftmaxPolicy<double>>(std::move(soft));

    FlowNetworkd network(topo, std::move(flows));
    return Scenario{std::move(doc), canonical_label, std::move(file_label), std::move(network), std::move(policy)};
}

PerturbationSpecd scenario_perturbation(const Scenario& s) {
    PerturbationSpecd spec;
    if (s.doc.cut_attack_alpha) spec = cut_attack(s.network, *s.doc.cut_attack_alpha, s.doc.inflow).spec;
    for (const auto& [id, eps] : s.doc.scale_perturbation) {
        auto e = s.network.topology().index_of(id);
        if (!e) throw Error("perturbation names unknown link " + std::to_string(id));
        // Explicit scalings compose with a cut attack on the same link.
        auto it = spec.replacements.find(*e);
        const FlowFunctiond base = it == spec.replacements.end() ? s.network.flow(*e) : it->second;
        spec.replacements[*e] = base.scaled(eps);
    }
    return spec;
}

std::optional<VectorXd> scenario_initial_flow(const Scenario& s) {
    if (s.doc.initial_flow.empty()) return std::nullopt;
    VectorXd f = VectorXd::Zero(s.network.link_count());
    for (const auto& [id, value] : s.doc.initial_flow) {
        auto e = s.network.topology().index_of(id);
        if (!e) throw Error("initial flow names unknown link " + std::to_string(id));
        f[*e] = value;
    }
    return f;
}

nlohmann::json to_json(const ScenarioDocument& doc) {
    json j;
    j["schema"] = kScenarioSchema;
    j["nodes"] = doc.topology.node_count();
    j["links"] = json::array();
    for (const Link& l : doc.topology.links()) j["links"].push_back({{"id", l.id}, {"tail", l.tail}, {"head", l.head}});
    j["flow_functions"] = json::object();
    for (const auto& [id, f] : doc.flow_functions)
        j["flow_functions"][std::to_string(id)] = {{"family", "exp"}, {"a", f.rate}, {"f_max", f.f_max}};
    j["policy"] = json::object();
    for (const auto& [node, np] : doc.policy) {
        json p;
        p["type"] = np.family == PolicyFamily::Logit ? "logit"
                    : np.family == PolicyFamily::CongestionSeeking ? "congestion_seeking"
                                                                   : "constant";
        if (np.family != PolicyFamily::Constant) p["eta"] = np.eta;
        p["weights"] = json::object();
        for (const auto& [id, w] : np.weights) p["weights"][std::to_string(id)] = w;
        j["policy"][std::to_string(node)] = p;
    }
    j["inflow"] = doc.inflow;
    if (!doc.initial_flow.empty())
        for (const auto& [id, f] : doc.initial_flow) j["initial_flow"][std::to_string(id)] = f;
    if (!doc.scale_perturbation.empty() || doc.cut_attack_alpha) {
        json p = json::object();
        for (const auto& [id, eps] : doc.scale_perturbation) p[std::to_string(id)] = {{"type", "scale"}, {"eps", eps}};
        if (doc.cut_attack_alpha) p["cut_attack"] = {{"alpha", *doc.cut_attack_alpha}};
        j["perturbation"] = p;
    }
    const SimulationConfig& s = doc.simulation;
    j["simulation"] = {{"horizon", s.horizon},
                       {"tail_fraction", s.tail_fraction},
                       {"saturation_threshold", s.saturation_threshold},
                       {"convergence_tol", s.convergence_tol},
                       {"density_ceiling", s.density_ceiling}};
    if (s.dt > 0) j["simulation"]["dt"] = s.dt;
    j["seed"] = doc.seed;
    return j;
}

}  // namespace dfn
