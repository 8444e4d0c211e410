#ifndef DFN_SCENARIO_HPP
#define DFN_SCENARIO_HPP

#include "dfn/dynamics.hpp"
#include "dfn/flows.hpp"
#include "dfn/resilience.hpp"
#include "dfn/routing.hpp"
#include "dfn/topology.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dfn {

// Malformed scenario document; the message names the offending field (and
// line/column for syntax errors).
class ParseError : public Error {
public:
    using Error::Error;
};

inline constexpr const char* kScenarioSchema = "dfn-scenario/1";

enum class PolicyFamily { Logit, CongestionSeeking, Constant };

struct NodePolicySpec {
    PolicyFamily family = PolicyFamily::Logit;
    double eta = 1.0;
    std::map<int, double> weights;  // link id -> weight
};

struct ExpFlowSpec {
    double rate = 1.0;
    double f_max = 1.0;
};

/**
 * One experiment. Node labels and link ids are as written in the file; the
 * canonical relabeling is applied by build_network().
 *
 *   {
 *     "schema": "dfn-scenario/1",
 *     "nodes": 2,
 *     "links": [{"id": 1, "tail": 0, "head": 1}, ...],
 *     "flow_functions": {"1": {"family": "exp", "a": 1.0, "f_max": 0.75}, ...},
 *     "policy": {"0": {"type": "logit", "eta": 1.0, "weights": {"1": 0.6, "2": 6.0}}},
 *     "inflow": 1.0,
 *     "initial_flow": {"1": 0.1, ...},                  optional
 *     "perturbation": {"1": {"type": "scale", "eps": 0.5},
 *                      "cut_attack": {"alpha": 0.5}},   optional
 *     "simulation": {"dt": 0.01, "horizon": 200, ...},  optional
 *     "seed": 1                                         optional
 *   }
 */
struct ScenarioDocument {
    NetworkTopology topology;
    std::map<int, ExpFlowSpec> flow_functions;  // link id -> parameters
    std::map<int, NodePolicySpec> policy;       // node label -> parameters
    double inflow = 0.0;
    std::map<int, double> initial_flow;         // link id -> flow
    std::map<int, double> scale_perturbation;   // link id -> eps
    std::optional<double> cut_attack_alpha;
    SimulationConfig simulation;
    std::uint64_t seed = 1;
};

ScenarioDocument parse_scenario(const nlohmann::json& j);
ScenarioDocument parse_scenario_text(const std::string& text);
ScenarioDocument load_scenario(const std::string& path);

// Canonical form of a scenario with a valid topology.
struct Scenario {
    ScenarioDocument doc;
    std::vector<NodeId> canonical_label;  // file label -> canonical label
    std::vector<NodeId> file_label;       // canonical label -> file label
    FlowNetworkd network;
    PolicyPtr<double> policy;
};

// Throws Error when the topology is invalid or cross references do not
// resolve (a link without flow function, a routing node without policy, ...).
Scenario build_network(ScenarioDocument doc);

// Perturbation described by the document (explicit scalings merged with the
// cut attack, if any). Empty spec when the document has none.
PerturbationSpecd scenario_perturbation(const Scenario& s);

// Document initial flow as a vector by link index, or nullopt.
std::optional<VectorXd> scenario_initial_flow(const Scenario& s);

nlohmann::json to_json(const ScenarioDocument& doc);

}  // namespace dfn

#endif  // DFN_SCENARIO_HPP
