#ifndef DFN_ROUTING_HPP
#define DFN_ROUTING_HPP

#include "dfn/topology.hpp"
#include "dfn/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

namespace dfn {

/**
 * Distributed routing policy: for each non-destination node v, a map from the
 * densities on v's outgoing links (ordered as topology.outgoing(v)) to a
 * probability vector over those links.
 *
 * jacobian(v, rho)(e, j) is dG_j / d rho_e, so every row sums to zero.
 */
template <typename Scalar>
class RoutingPolicy {
public:
    virtual ~RoutingPolicy() = default;

    virtual VectorX<Scalar> route(NodeId v, const VectorX<Scalar>& local) const = 0;

    // Central differences with relative step 1e-6; subclasses may override
    // with an analytic form.
    virtual MatrixX<Scalar> jacobian(NodeId v, const VectorX<Scalar>& local) const {
        const Eigen::Index k = local.size();
        MatrixX<Scalar> J(k, k);
        VectorX<Scalar> up = local, down = local;
        for (Eigen::Index e = 0; e < k; ++e) {
            const Scalar h = Scalar(1e-6) * std::max(Scalar(1), local[e]);
            up[e] = local[e] + h;
            down[e] = std::max(Scalar(0), local[e] - h);
            J.row(e) = ((route(v, up) - route(v, down)) / (up[e] - down[e])).transpose();
            up[e] = down[e] = local[e];
        }
        return J;
    }

    // Whether every component is positive at every density. Only families
    // that can prove it return true.
    virtual bool strictly_positive() const { return false; }

    virtual std::string name() const = 0;
};

template <typename Scalar>
using PolicyPtr = std::shared_ptr<const RoutingPolicy<Scalar>>;

/**
 * Softmax routing G_e = w_e exp(-eta_v rho_e) / sum_j w_j exp(-eta_v rho_j).
 *
 * With eta_v > 0 on every node this is the logit policy, which steers flow
 * away from congested links. A negative eta gives the congestion-seeking
 * variant, kept as the standard counterexample to cooperativity.
 */
template <typename Scalar>
class SoftmaxPolicy final : public RoutingPolicy<Scalar> {
public:
    struct Node {
        Scalar eta = 1;
        VectorX<Scalar> weights;  // per outgoing link, positive
    };

    // nodes[v] for every non-destination node; the destination entry is ignored.
    explicit SoftmaxPolicy(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
        for (const Node& n : nodes_) {
            if (n.weights.size() == 0) continue;
            if (n.eta == 0 || !std::isfinite(static_cast<double>(n.eta))) throw Error("softmax eta must be finite and nonzero");
            if ((n.weights.array() <= 0).any()) throw Error("softmax weights must be positive");
        }
    }

    const Node& node(NodeId v) const { return nodes_.at(v); }
    std::size_t node_count() const { return nodes_.size(); }

    VectorX<Scalar> route(NodeId v, const VectorX<Scalar>& local) const override {
        const Node& n = checked_node(v, local.size());
        // Shift by the extreme density so large densities cannot underflow the
        // whole denominator.
        const Scalar shift = n.eta > 0 ? local.minCoeff() : local.maxCoeff();
        VectorX<Scalar> g = n.weights.array() * (-n.eta * (local.array() - shift)).exp();
        return g / g.sum();
    }

    MatrixX<Scalar> jacobian(NodeId v, const VectorX<Scalar>& local) const override {
        const Node& n = checked_node(v, local.size());
        const VectorX<Scalar> g = route(v, local);
        MatrixX<Scalar> J = n.eta * g * g.transpose();
        J.diagonal() = -n.eta * g.array() * (1 - g.array());
        return J;
    }

    bool strictly_positive() const override { return true; }

    bool is_logit() const {
        return std::all_of(nodes_.begin(), nodes_.end(),
                           [](const Node& n) { return n.weights.size() == 0 || n.eta > 0; });
    }

    std::string name() const override { return is_logit() ? "logit" : "softmax"; }

private:
    const Node& checked_node(NodeId v, Eigen::Index k) const {
        if (v < 0 || v >= static_cast<NodeId>(nodes_.size()) || nodes_[v].weights.size() == 0)
            throw Error("routing requested at node " + std::to_string(v) + " which has no outgoing links");
        if (nodes_[v].weights.size() != k) throw Error("local density vector has wrong size");
        return nodes_[v];
    }

    std::vector<Node> nodes_;
};

// Density-independent split.
template <typename Scalar>
class ConstantPolicy final : public RoutingPolicy<Scalar> {
public:
    explicit ConstantPolicy(std::vector<VectorX<Scalar>> splits) : splits_(std::move(splits)) {
        for (auto& s : splits_) {
            if (s.size() == 0) continue;
            if ((s.array() < 0).any() || !(s.sum() > 0)) throw Error("constant split must be nonnegative and nonzero");
            s /= s.sum();
        }
    }

    VectorX<Scalar> route(NodeId v, const VectorX<Scalar>& local) const override {
        if (v < 0 || v >= static_cast<NodeId>(splits_.size()) || splits_[v].size() == 0)
            throw Error("routing requested at node " + std::to_string(v) + " which has no outgoing links");
        if (splits_[v].size() != local.size()) throw Error("local density vector has wrong size");
        return splits_[v];
    }

    MatrixX<Scalar> jacobian(NodeId, const VectorX<Scalar>& local) const override {
        return MatrixX<Scalar>::Zero(local.size(), local.size());
    }

    bool strictly_positive() const override {
        return std::all_of(splits_.begin(), splits_.end(),
                           [](const VectorX<Scalar>& s) { return s.size() == 0 || (s.array() > 0).all(); });
    }

    std::string name() const override { return "constant"; }

private:
    std::vector<VectorX<Scalar>> splits_;
};

// Arbitrary user rule; Jacobian by finite differences.
template <typename Scalar>
class FunctionPolicy final : public RoutingPolicy<Scalar> {
public:
    using Rule = std::function<VectorX<Scalar>(NodeId, const VectorX<Scalar>&)>;
    explicit FunctionPolicy(Rule rule, std::string name = "function") : rule_(std::move(rule)), name_(std::move(name)) {}
    VectorX<Scalar> route(NodeId v, const VectorX<Scalar>& local) const override { return rule_(v, local); }
    std::string name() const override { return name_; }

private:
    Rule rule_;
    std::string name_;
};

// Logit parameters for every non-destination node of a canonical topology,
// with one eta for all nodes and weights taken from `weights` (by link index).
template <typename Scalar>
std::shared_ptr<SoftmaxPolicy<Scalar>> make_logit_policy(const NetworkTopology& topo, Scalar eta,
                                                         const VectorX<Scalar>& weights) {
    std::vector<typename SoftmaxPolicy<Scalar>::Node> nodes(topo.node_count());
    for (NodeId v = 0; v < topo.node_count(); ++v) {
        const auto& out = topo.outgoing(v);
        nodes[v].eta = eta;
        nodes[v].weights.resize(static_cast<Eigen::Index>(out.size()));
        for (std::size_t i = 0; i < out.size(); ++i) nodes[v].weights[i] = weights[out[i]];
    }
    return std::make_shared<SoftmaxPolicy<Scalar>>(std::move(nodes));
}

template <typename Scalar>
VectorX<Scalar> local_densities(const NetworkTopology& topo, NodeId v, const VectorX<Scalar>& rho) {
    const auto& out = topo.outgoing(v);
    VectorX<Scalar> local(static_cast<Eigen::Index>(out.size()));
    for (std::size_t i = 0; i < out.size(); ++i) local[i] = rho[out[i]];
    return local;
}

/**
 * Sum over links of sgn(sigma_e - varsigma_e) * (G_e(sigma) - G_e(varsigma)),
 * with sgn(0) = 0. Nonpositive for policies with nonnegative cross partials.
 */
template <typename Scalar>
Scalar cooperative_gap(const RoutingPolicy<Scalar>& policy, NodeId v, const std::type_identity_t<VectorX<Scalar>>& sigma,
                       const std::type_identity_t<VectorX<Scalar>>& varsigma) {
    const VectorX<Scalar> diff = policy.route(v, sigma) - policy.route(v, varsigma);
    Scalar s = 0;
    for (Eigen::Index e = 0; e < sigma.size(); ++e) {
        if (sigma[e] > varsigma[e])
            s += diff[e];
        else if (sigma[e] < varsigma[e])
            s -= diff[e];
    }
    return s;
}

struct PropertyViolation {
    std::vector<double> point;
    int row = 0;
    int col = 0;
    double value = 0.0;
};

struct PropertyReport {
    bool passed = true;
    int samples = 0;
    std::vector<PropertyViolation> violations;  // first few only
    std::string detail;
};

// Density vector with log-uniform components in [lo, hi].
template <typename Scalar, typename Rng>
VectorX<Scalar> sample_log_uniform(Eigen::Index k, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    VectorX<Scalar> x(k);
    for (Eigen::Index i = 0; i < k; ++i) x[i] = static_cast<Scalar>(std::exp(u(rng)));
    return x;
}

/**
 * Nonnegative cross partials: samples density vectors at mixed scales
 * (1e-2 .. 1e2) and checks every off-diagonal Jacobian entry is >= -1e-9.
 */
template <typename Scalar>
PropertyReport check_property_a(const RoutingPolicy<Scalar>& policy, NodeId v, Eigen::Index link_count,
                                int samples, std::uint64_t seed = 1) {
    PropertyReport r;
    std::mt19937_64 rng(seed);
    for (int s = 0; s < samples; ++s) {
        const VectorX<Scalar> rho = sample_log_uniform<Scalar>(link_count, 1e-2, 1e2, rng);
        const MatrixX<Scalar> J = policy.jacobian(v, rho);
        ++r.samples;
        for (Eigen::Index e = 0; e < link_count; ++e) {
            for (Eigen::Index j = 0; j < link_count; ++j) {
                if (e == j || J(e, j) >= Scalar(-1e-9)) continue;
                r.passed = false;
                if (r.violations.size() < 8) {
                    PropertyViolation pv;
                    for (Eigen::Index i = 0; i < link_count; ++i) pv.point.push_back(static_cast<double>(rho[i]));
                    pv.row = static_cast<int>(e);
                    pv.col = static_cast<int>(j);
                    pv.value = static_cast<double>(J(e, j));
                    r.violations.push_back(std::move(pv));
                }
            }
        }
    }
    if (!r.passed) r.detail = "negative cross partial dG_j/drho_e found";
    return r;
}

/**
 * Abandonment of diverging links: with densities on `subset` held at `base`,
 * drive the others to 10^k for k = 2..6. Passes when the mass outside the
 * subset ends below 1e-4 and the mass on the subset settles (successive
 * values within 1e-5).
 */
template <typename Scalar>
PropertyReport check_property_b(const RoutingPolicy<Scalar>& policy, NodeId v,
                                const std::type_identity_t<VectorX<Scalar>>& base,
                                const std::vector<int>& subset) {
    PropertyReport r;
    const Eigen::Index k = base.size();
    if (subset.empty() || static_cast<Eigen::Index>(subset.size()) >= k)
        throw Error("property (b) needs a nonempty proper subset of outgoing links");
    std::vector<char> in(k, 0);
    for (int j : subset) in.at(j) = 1;

    VectorX<Scalar> prev;
    Scalar outside = 0;
    for (int p = 2; p <= 6; ++p) {
        VectorX<Scalar> rho = base;
        for (Eigen::Index e = 0; e < k; ++e)
            if (!in[e]) rho[e] = std::pow(Scalar(10), Scalar(p));
        const VectorX<Scalar> g = policy.route(v, rho);
        ++r.samples;
        VectorX<Scalar> on(static_cast<Eigen::Index>(subset.size()));
        outside = 0;
        for (std::size_t i = 0; i < subset.size(); ++i) on[i] = g[subset[i]];
        for (Eigen::Index e = 0; e < k; ++e)
            if (!in[e]) outside += g[e];
        if (p == 6 && prev.size() && (on - prev).cwiseAbs().maxCoeff() > Scalar(1e-5)) {
            r.passed = false;
            r.detail = "mass on the retained links does not settle";
        }
        prev = on;
    }
    if (outside > Scalar(1e-4)) {
        r.passed = false;
        r.detail = "mass on diverging links does not vanish (" + std::to_string(static_cast<double>(outside)) + ")";
    }
    return r;
}

}  // namespace dfn

#endif  // DFN_ROUTING_HPP
