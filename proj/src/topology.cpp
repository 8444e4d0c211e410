#include "dfn/topology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace dfn {

NetworkTopology::NetworkTopology(int node_count, std::vector<Link> links)
    : node_count_(node_count), links_(std::move(links)) {
    if (node_count_ < 0) throw Error("node count must be nonnegative");
    outgoing_.assign(node_count_, {});
    incoming_.assign(node_count_, {});
    for (LinkIndex e = 0; e < link_count(); ++e) {
        const Link& l = links_[e];
        if (l.tail < 0 || l.tail >= node_count_ || l.head < 0 || l.head >= node_count_) {
            std::ostringstream os;
            os << "link " << l.id << " has endpoint outside [0, " << node_count_ << ")";
            throw Error(os.str());
        }
        outgoing_[l.tail].push_back(e);
        incoming_[l.head].push_back(e);
    }
}

std::optional<LinkIndex> NetworkTopology::index_of(int link_id) const {
    for (LinkIndex e = 0; e < link_count(); ++e)
        if (links_[e].id == link_id) return e;
    return std::nullopt;
}

NodeId NetworkTopology::origin() const {
    NodeId found = -1;
    for (NodeId v = 0; v < node_count_; ++v) {
        if (incoming_[v].empty()) {
            if (found >= 0) throw Error("topology has more than one origin");
            found = v;
        }
    }
    if (found < 0) throw Error("topology has no origin");
    return found;
}

NodeId NetworkTopology::destination() const {
    NodeId found = -1;
    for (NodeId v = 0; v < node_count_; ++v) {
        if (outgoing_[v].empty()) {
            if (found >= 0) throw Error("topology has more than one destination");
            found = v;
        }
    }
    if (found < 0) throw Error("topology has no destination");
    return found;
}

bool NetworkTopology::is_canonical() const {
    if (node_count_ < 2) return false;
    for (const Link& l : links_)
        if (l.tail >= l.head) return false;
    for (NodeId v = 1; v < node_count_; ++v)
        if (incoming_[v].empty()) return false;
    for (NodeId v = 0; v + 1 < node_count_; ++v)
        if (outgoing_[v].empty()) return false;
    return incoming_[0].empty() && outgoing_[node_count_ - 1].empty();
}

NetworkTopology NetworkTopology::relabeled(const std::vector<NodeId>& new_label) const {
    if (static_cast<int>(new_label.size()) != node_count_)
        throw Error("relabeling has wrong size");
    std::vector<Link> links = links_;
    for (Link& l : links) {
        l.tail = new_label[l.tail];
        l.head = new_label[l.head];
    }
    return NetworkTopology(node_count_, std::move(links));
}

const char* to_string(Violation v) {
    switch (v) {
    case Violation::Empty: return "empty";
    case Violation::SelfLoop: return "self_loop";
    case Violation::Cycle: return "cycle";
    case Violation::NoOrigin: return "no_origin";
    case Violation::MultipleOrigins: return "multiple_origins";
    case Violation::NoDestination: return "no_destination";
    case Violation::MultipleDestinations: return "multiple_destinations";
    case Violation::DestinationUnreachable: return "destination_unreachable";
    case Violation::DuplicateLinkId: return "duplicate_link_id";
    }
    return "unknown";
}

bool ValidationResult::has(Violation v) const {
    return std::any_of(issues.begin(), issues.end(),
                       [v](const ValidationIssue& i) { return i.kind == v; });
}

namespace {

std::string join_nodes(const std::vector<NodeId>& nodes) {
    std::ostringstream os;
    for (std::size_t i = 0; i < nodes.size(); ++i) os << (i ? "," : "") << nodes[i];
    return os.str();
}

// First directed cycle found by DFS, as a node sequence. Empty if acyclic.
std::vector<NodeId> find_cycle(const NetworkTopology& topo) {
    const int n = topo.node_count();
    enum Color : char { White, Grey, Black };
    std::vector<Color> color(n, White);
    std::vector<NodeId> parent(n, -1);

    for (NodeId root = 0; root < n; ++root) {
        if (color[root] != White) continue;
        // (node, next outgoing position)
        std::vector<std::pair<NodeId, std::size_t>> stack{{root, 0}};
        color[root] = Grey;
        while (!stack.empty()) {
            auto& [u, pos] = stack.back();
            const auto& out = topo.outgoing(u);
            if (pos == out.size()) {
                color[u] = Black;
                stack.pop_back();
                continue;
            }
            const NodeId w = topo.link(out[pos++]).head;
            if (color[w] == Grey) {
                std::vector<NodeId> cycle{w};
                for (NodeId x = u; x != w; x = parent[x]) cycle.push_back(x);
                std::reverse(cycle.begin() + 1, cycle.end());
                return cycle;
            }
            if (color[w] == White) {
                color[w] = Grey;
                parent[w] = u;
                stack.emplace_back(w, 0);
            }
        }
    }
    return {};
}

}  // namespace

ValidationResult validate_topology(const NetworkTopology& topo) {
    ValidationResult r;
    const int n = topo.node_count();
    if (n < 2 || topo.link_count() == 0) {
        r.issues.push_back({Violation::Empty, {}, "topology needs at least two nodes and one link"});
        return r;
    }

    std::set<int> ids;
    for (const Link& l : topo.links()) {
        if (!ids.insert(l.id).second)
            r.issues.push_back({Violation::DuplicateLinkId, {}, "duplicate link id " + std::to_string(l.id)});
        if (l.tail == l.head)
            r.issues.push_back({Violation::SelfLoop, {l.tail}, "link " + std::to_string(l.id) + " is a self loop"});
    }

    if (auto cycle = find_cycle(topo); !cycle.empty())
        r.issues.push_back({Violation::Cycle, cycle, "directed cycle through nodes " + join_nodes(cycle)});

    std::vector<NodeId> sources, sinks;
    for (NodeId v = 0; v < n; ++v) {
        if (topo.incoming(v).empty()) sources.push_back(v);
        if (topo.outgoing(v).empty()) sinks.push_back(v);
    }
    if (sources.empty())
        r.issues.push_back({Violation::NoOrigin, {}, "no node without incoming links"});
    else if (sources.size() > 1)
        r.issues.push_back({Violation::MultipleOrigins, sources, "several nodes without incoming links: " + join_nodes(sources)});

    if (sinks.empty()) {
        r.issues.push_back({Violation::NoDestination, {}, "no node without outgoing links"});
        return r;
    }
    if (sinks.size() > 1)
        r.issues.push_back({Violation::MultipleDestinations, sinks, "several nodes without outgoing links: " + join_nodes(sinks)});

    // Reachability is judged against the highest-labelled sink.
    const NodeId dest = sinks.back();
    std::vector<char> reaches(n, 0);
    std::deque<NodeId> queue{dest};
    reaches[dest] = 1;
    while (!queue.empty()) {
        const NodeId v = queue.front();
        queue.pop_front();
        for (LinkIndex e : topo.incoming(v)) {
            const NodeId u = topo.link(e).tail;
            if (!reaches[u]) {
                reaches[u] = 1;
                queue.push_back(u);
            }
        }
    }
    std::vector<NodeId> stranded;
    for (NodeId v = 0; v < n; ++v)
        if (!reaches[v]) stranded.push_back(v);
    if (!stranded.empty())
        r.issues.push_back({Violation::DestinationUnreachable, stranded,
                            "nodes " + join_nodes(stranded) + " have no path to destination " + std::to_string(dest)});
    return r;
}

std::vector<NodeId> topological_order(const NetworkTopology& topo) {
    if (auto v = validate_topology(topo); !v.ok())
        throw Error("cannot order invalid topology: " + v.issues.front().message);

    const int n = topo.node_count();
    std::vector<int> indegree(n);
    for (NodeId v = 0; v < n; ++v) indegree[v] = static_cast<int>(topo.incoming(v).size());

    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (NodeId v = 0; v < n; ++v)
        if (indegree[v] == 0) ready.push(v);

    std::vector<NodeId> new_label(n, -1);
    int next = 0;
    while (!ready.empty()) {
        const NodeId u = ready.top();
        ready.pop();
        new_label[u] = next++;
        for (LinkIndex e : topo.outgoing(u))
            if (--indegree[topo.link(e).head] == 0) ready.push(topo.link(e).head);
    }
    return new_label;
}

NetworkTopology canonicalize(const NetworkTopology& topo) {
    return topo.relabeled(topological_order(topo));
}

std::vector<Cut> enumerate_od_cuts(const NetworkTopology& topo, int node_limit) {
    const int n = topo.node_count();
    if (n > node_limit)
        throw Error("cut enumeration refused: " + std::to_string(n) + " nodes exceeds limit " +
                    std::to_string(node_limit));
    const NodeId o = topo.origin();
    const NodeId d = topo.destination();
    std::vector<NodeId> inner;
    for (NodeId v = 0; v < n; ++v)
        if (v != o && v != d) inner.push_back(v);

    const std::uint64_t count = std::uint64_t{1} << inner.size();
    std::vector<Cut> cuts;
    cuts.reserve(count);
    std::vector<char> in_u(n);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        std::fill(in_u.begin(), in_u.end(), 0);
        in_u[o] = 1;
        for (std::size_t i = 0; i < inner.size(); ++i)
            if (mask >> i & 1U) in_u[inner[i]] = 1;
        Cut c;
        for (NodeId v = 0; v < n; ++v)
            if (in_u[v]) c.origin_side.push_back(v);
        for (LinkIndex e = 0; e < topo.link_count(); ++e)
            if (in_u[topo.link(e).tail] && !in_u[topo.link(e).head]) c.cut_links.push_back(e);
        cuts.push_back(std::move(c));
    }
    return cuts;
}

double cut_capacity(const Cut& cut, const VectorXd& capacities) {
    double s = 0.0;
    for (LinkIndex e : cut.cut_links) s += capacities[e];
    return s;
}

namespace {

void check_capacities(const NetworkTopology& topo, const VectorXd& capacities) {
    if (capacities.size() != topo.link_count())
        throw Error("capacity vector size does not match link count");
    for (Eigen::Index e = 0; e < capacities.size(); ++e)
        if (!std::isfinite(capacities[e]) || capacities[e] <= 0.0)
            throw Error("link capacities must be finite and positive");
}

void require_valid(const NetworkTopology& topo) {
    if (auto v = validate_topology(topo); !v.ok())
        throw Error("invalid topology: " + v.issues.front().message);
}

}  // namespace

MinCut min_cut_by_enumeration(const NetworkTopology& topo, const VectorXd& capacities, int node_limit) {
    require_valid(topo);
    check_capacities(topo, capacities);
    auto cuts = enumerate_od_cuts(topo, node_limit);
    MinCut best;
    best.capacity = std::numeric_limits<double>::infinity();
    best.enumerated = true;
    const double scale = std::max(1.0, capacities.sum());
    for (auto& c : cuts) {
        const double cap = cut_capacity(c, capacities);
        const bool tie = std::abs(cap - best.capacity) <= 1e-12 * scale;
        if ((!tie && cap < best.capacity) || (tie && c.origin_side < best.cut.origin_side)) {
            best.capacity = tie ? std::min(cap, best.capacity) : cap;
            best.cut = std::move(c);
        }
    }
    return best;
}

MaxFlow max_flow(const NetworkTopology& topo, const VectorXd& capacities) {
    require_valid(topo);
    check_capacities(topo, capacities);
    const int n = topo.node_count();
    const int m = topo.link_count();
    const NodeId s = topo.origin();
    const NodeId t = topo.destination();

    // Arc 2e is link e forward, arc 2e+1 its reverse.
    std::vector<double> residual(2 * m);
    std::vector<NodeId> arc_head(2 * m);
    std::vector<std::vector<int>> adj(n);
    for (LinkIndex e = 0; e < m; ++e) {
        residual[2 * e] = capacities[e];
        residual[2 * e + 1] = 0.0;
        arc_head[2 * e] = topo.link(e).head;
        arc_head[2 * e + 1] = topo.link(e).tail;
        adj[topo.link(e).tail].push_back(2 * e);
        adj[topo.link(e).head].push_back(2 * e + 1);
    }
    const double eps = 1e-14 * capacities.maxCoeff();

    std::vector<int> via(n);
    auto bfs = [&]() {
        std::fill(via.begin(), via.end(), -1);
        std::vector<char> seen(n, 0);
        std::deque<NodeId> q{s};
        seen[s] = 1;
        while (!q.empty()) {
            const NodeId u = q.front();
            q.pop_front();
            for (int a : adj[u]) {
                const NodeId w = arc_head[a];
                if (!seen[w] && residual[a] > eps) {
                    seen[w] = 1;
                    via[w] = a;
                    q.push_back(w);
                }
            }
        }
        return seen;
    };

    double value = 0.0;
    for (;;) {
        bfs();
        if (via[t] < 0) break;
        double push = std::numeric_limits<double>::infinity();
        for (NodeId v = t; v != s; v = arc_head[via[v] ^ 1]) push = std::min(push, residual[via[v]]);
        for (NodeId v = t; v != s; v = arc_head[via[v] ^ 1]) {
            residual[via[v]] -= push;
            residual[via[v] ^ 1] += push;
        }
        value += push;
    }

    MaxFlow out;
    out.value = value;
    out.link_flow.resize(m);
    for (LinkIndex e = 0; e < m; ++e) out.link_flow[e] = residual[2 * e + 1];
    const auto seen = bfs();
    for (NodeId v = 0; v < n; ++v)
        if (seen[v]) out.residual_cut.origin_side.push_back(v);
    for (LinkIndex e = 0; e < m; ++e)
        if (seen[topo.link(e).tail] && !seen[topo.link(e).head]) out.residual_cut.cut_links.push_back(e);
    return out;
}

MinCut min_cut_capacity(const NetworkTopology& topo, const VectorXd& capacities, int node_limit) {
    const MaxFlow mf = max_flow(topo, capacities);
    if (topo.node_count() > node_limit) {
        MinCut r;
        r.capacity = cut_capacity(mf.residual_cut, capacities);
        r.cut = mf.residual_cut;
        return r;
    }
    MinCut r = min_cut_by_enumeration(topo, capacities, node_limit);
    if (std::abs(r.capacity - mf.value) > 1e-12 * std::max(1.0, r.capacity)) {
        std::ostringstream os;
        os.precision(17);
        os << "min-cut enumeration (" << r.capacity << ") and max-flow (" << mf.value << ") disagree";
        throw Error(os.str());
    }
    return r;
}

}  // namespace dfn
