#ifndef DFN_TOPOLOGY_HPP
#define DFN_TOPOLOGY_HPP

#include "dfn/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dfn {

struct Link {
    int id = 0;
    NodeId tail = 0;
    NodeId head = 0;
};

/**
 * Directed multigraph on nodes {0, ..., node_count-1}. Parallel links are
 * distinct entries. Construction only checks that endpoints are in range;
 * structural conditions (acyclic, single origin/destination) are reported by
 * validate_topology().
 */
class NetworkTopology {
public:
    NetworkTopology() = default;
    NetworkTopology(int node_count, std::vector<Link> links);

    int node_count() const { return node_count_; }
    int link_count() const { return static_cast<int>(links_.size()); }
    const std::vector<Link>& links() const { return links_; }
    const Link& link(LinkIndex e) const { return links_.at(e); }

    // Link indices leaving / entering v, in increasing index order.
    const std::vector<LinkIndex>& outgoing(NodeId v) const { return outgoing_.at(v); }
    const std::vector<LinkIndex>& incoming(NodeId v) const { return incoming_.at(v); }

    // Position of the link with the given id, if any.
    std::optional<LinkIndex> index_of(int link_id) const;

    // Unique node with no incoming links / no outgoing links. Throws when
    // there is not exactly one.
    NodeId origin() const;
    NodeId destination() const;

    // Origin is 0, destination is node_count-1 and every link points from a
    // lower to a higher label.
    bool is_canonical() const;

    // Returns a copy where node v is renamed new_label[v]. Link order and ids
    // are preserved.
    NetworkTopology relabeled(const std::vector<NodeId>& new_label) const;

private:
    int node_count_ = 0;
    std::vector<Link> links_;
    std::vector<std::vector<LinkIndex>> outgoing_;
    std::vector<std::vector<LinkIndex>> incoming_;
};

enum class Violation {
    Empty,
    SelfLoop,
    Cycle,
    NoOrigin,
    MultipleOrigins,
    NoDestination,
    MultipleDestinations,
    DestinationUnreachable,
    DuplicateLinkId,
};

const char* to_string(Violation v);

struct ValidationIssue {
    Violation kind;
    std::vector<NodeId> nodes;  // cycle members, offending sources, ...
    std::string message;
};

struct ValidationResult {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
    bool has(Violation v) const;
};

ValidationResult validate_topology(const NetworkTopology& topo);

/**
 * Topological relabeling. Kahn's algorithm, always taking the smallest ready
 * label, so the result is deterministic. Returns new_label indexed by the
 * old label; origin maps to 0 and destination to node_count-1.
 * Throws Error if the topology is invalid.
 */
std::vector<NodeId> topological_order(const NetworkTopology& topo);

// Relabels into canonical form using topological_order().
NetworkTopology canonicalize(const NetworkTopology& topo);

struct Cut {
    std::vector<NodeId> origin_side;  // sorted
    std::vector<LinkIndex> cut_links; // sorted
};

inline constexpr int kDefaultCutEnumerationLimit = 20;

// Every partition U with origin in U and destination outside. 2^(n-1) cuts
// for n+1 nodes. Refuses (throws) above `node_limit` nodes.
std::vector<Cut> enumerate_od_cuts(const NetworkTopology& topo,
                                   int node_limit = kDefaultCutEnumerationLimit);

double cut_capacity(const Cut& cut, const VectorXd& capacities);

struct MinCut {
    double capacity = 0.0;
    Cut cut;
    bool enumerated = false;  // true when the enumeration route ran
};

/**
 * Minimum o-d cut capacity. With node_count <= node_limit both the cut
 * enumerator and max-flow run and must agree to 1e-12 (relative); the witness
 * is then the cut with the lexicographically smallest origin side. Larger
 * graphs use max-flow only and report the residual-reachable origin side.
 */
MinCut min_cut_capacity(const NetworkTopology& topo, const VectorXd& capacities,
                        int node_limit = kDefaultCutEnumerationLimit);

// Enumeration-only route.
MinCut min_cut_by_enumeration(const NetworkTopology& topo, const VectorXd& capacities,
                              int node_limit = kDefaultCutEnumerationLimit);

struct MaxFlow {
    double value = 0.0;
    VectorXd link_flow;
    Cut residual_cut;  // origin side = nodes reachable in the final residual graph
};

// Edmonds-Karp on the multigraph; parallel links stay separate arcs.
MaxFlow max_flow(const NetworkTopology& topo, const VectorXd& capacities);

inline double max_flow_value(const NetworkTopology& topo, const VectorXd& capacities) {
    return max_flow(topo, capacities).value;
}

}  // namespace dfn

#endif  // DFN_TOPOLOGY_HPP
