// Shared fixtures and independent oracles for the test suites.
#ifndef DFN_TESTS_SUPPORT_HPP
#define DFN_TESTS_SUPPORT_HPP

#include "dfn/dynamics.hpp"
#include "dfn/flows.hpp"
#include "dfn/routing.hpp"
#include "dfn/topology.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace dfn::test {

inline std::string fixture(const std::string& name) { return std::string(DFN_FIXTURES) + "/" + name; }

// Two parallel links 0 -> 1, mu = 3/4 (1 - e^{-rho}), logit weights (3/5, 6), eta = 1.
template <typename Scalar = double>
struct ParallelPair {
    FlowNetwork<Scalar> net{NetworkTopology(2, {{1, 0, 1}, {2, 0, 1}}),
                            {FlowFunction<Scalar>::exponential(1, Scalar(3) / 4),
                             FlowFunction<Scalar>::exponential(1, Scalar(3) / 4)}};
    std::shared_ptr<SoftmaxPolicy<Scalar>> policy =
        make_logit_policy<Scalar>(net.topology(), Scalar(1), (VectorX<Scalar>(2) << Scalar(3) / 5, 6).finished());
};

// Closed-form limit flow of ParallelPair: the positive root of
// 12 f^2 + (11 - 12 lambda) f - lambda = 0, which meets 3/4 at lambda = 3/2.
template <typename Scalar = double>
std::pair<Scalar, Scalar> pair_closed_form(Scalar lambda) {
    using std::sqrt;
    if (lambda >= Scalar(3) / 2) return {Scalar(3) / 4, Scalar(3) / 4};
    const Scalar b = 12 * lambda - 11;
    const Scalar f1 = (b + sqrt(b * b + 48 * lambda)) / 24;
    return {f1, lambda - f1};
}

// Five-node diamond (same as fixtures/diamond5.json). Min cut 1.8 at {0}.
struct Diamond {
    FlowNetwork<double> net{NetworkTopology(5, {{10, 0, 1}, {11, 0, 2}, {12, 1, 2}, {13, 1, 3}, {14, 2, 3}, {15, 2, 4}, {16, 3, 4}}),
                            {FlowFunctiond::exponential(1.0, 1.0), FlowFunctiond::exponential(1.0, 0.8),
                             FlowFunctiond::exponential(2.0, 0.5), FlowFunctiond::exponential(1.0, 0.7),
                             FlowFunctiond::exponential(1.5, 0.9), FlowFunctiond::exponential(1.0, 0.6),
                             FlowFunctiond::exponential(1.0, 1.4)}};
    std::shared_ptr<SoftmaxPolicy<double>> policy = std::make_shared<SoftmaxPolicy<double>>(
        std::vector<SoftmaxPolicy<double>::Node>{{1.0, (VectorXd(2) << 1.0, 1.0).finished()},
                                                 {1.5, (VectorXd(2) << 0.5, 1.0).finished()},
                                                 {1.0, (VectorXd(2) << 1.0, 2.0).finished()},
                                                 {2.0, (VectorXd(1) << 1.0).finished()},
                                                 {1.0, VectorXd()}});
    static constexpr double min_cut = 1.8;
};

// Random valid DAG on n nodes in canonical form: a backbone chain plus
// `extra` random forward links (parallel links allowed).
inline NetworkTopology random_dag(int n, int extra, std::mt19937_64& rng) {
    std::vector<Link> links;
    int id = 0;
    for (int v = 0; v + 1 < n; ++v) links.push_back({id++, v, v + 1});
    std::uniform_int_distribution<int> tail(0, n - 2);
    for (int i = 0; i < extra; ++i) {
        const int u = tail(rng);
        std::uniform_int_distribution<int> head(u + 1, n - 1);
        links.push_back({id++, u, head(rng)});
    }
    return NetworkTopology(n, std::move(links));
}

inline VectorXd random_capacities(int m, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    VectorXd c(m);
    for (int e = 0; e < m; ++e) c[e] = u(rng);
    return c;
}

// Brute-force min cut over all subsets containing the origin and not the
// destination, written independently of the library enumerator.
inline double brute_force_min_cut(const NetworkTopology& topo, const VectorXd& caps) {
    const int n = topo.node_count();
    NodeId o = -1, d = -1;
    for (NodeId v = 0; v < n; ++v) {
        if (topo.incoming(v).empty()) o = v;
        if (topo.outgoing(v).empty()) d = v;
    }
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < (1U << n); ++mask) {
        if (!(mask >> o & 1U) || (mask >> d & 1U)) continue;
        double c = 0.0;
        for (const Link& l : topo.links())
            if ((mask >> l.tail & 1U) && !(mask >> l.head & 1U)) c += caps[topo.index_of(l.id).value()];
        best = std::min(best, c);
    }
    return best;
}

// Node reachability to `target` by repeated relaxation (no queue), used as an
// oracle for the validator's BFS.
inline std::vector<bool> reaches(const NetworkTopology& topo, NodeId target) {
    std::vector<bool> r(topo.node_count(), false);
    r[target] = true;
    for (bool changed = true; changed;) {
        changed = false;
        for (const Link& l : topo.links())
            if (r[l.head] && !r[l.tail]) r[l.tail] = changed = true;
    }
    return r;
}

}  // namespace dfn::test

#endif  // DFN_TESTS_SUPPORT_HPP
