#include "dfn/resilience.hpp"

#include "dfn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dfn {

PerturbationSpecd scale_links(const FlowNetworkd& net, const std::vector<LinkIndex>& links, double eps) {
    PerturbationSpecd spec;
    for (LinkIndex e : links) spec.replacements[e] = scale_perturbation(net.flow(e), eps);
    return spec;
}

CutAttack cut_attack(const FlowNetworkd& net, double alpha, double inflow) {
    if (!(inflow > 0)) throw Error("cut attack needs a positive inflow");
    if (!(alpha > 0 && alpha <= 1)) throw Error("alpha must lie in (0, 1]");
    const MinCut mc = min_cut_capacity(net.topology(), net.capacities());
    CutAttack a;
    a.cut = mc.cut;
    a.min_cut = mc.capacity;
    a.epsilon = alpha * inflow / (2.0 * mc.capacity);
    if (a.epsilon > 1.0) throw Error("inflow exceeds twice the min-cut capacity; scaling factor would exceed 1");
    a.spec = scale_links(net, mc.cut.cut_links, a.epsilon);
    const auto metrics = analyze_perturbation<double>(net.flows(), a.spec);
    a.magnitude = metrics.magnitude;
    a.stretching = metrics.stretching;
    return a;
}

VectorXd default_initial_flow(const FlowNetworkd& net, const Policyd& policy, double inflow) {
    const auto limit = network_limit_flow(net, policy, inflow);
    if (limit.any_saturated()) return VectorXd::Zero(net.link_count());
    return limit.flow;
}

VectorXd initial_state_for(const FlowNetworkd& net, const VectorXd& initial_flow) {
    if (initial_flow.size() != net.link_count()) throw Error("initial flow has wrong size");
    VectorXd rho(net.link_count());
    for (LinkIndex e = 0; e < net.link_count(); ++e) {
        if (!(initial_flow[e] < net.flow(e).capacity()))
            throw Error("initial flow must lie strictly below capacity on every link");
        rho[e] = net.flow(e).inverse(initial_flow[e]);
    }
    return rho;
}

AttackOutcome evaluate_attack(const FlowNetworkd& net, const Policyd& policy, const PerturbationSpecd& spec,
                              double alpha, const VectorXd& initial_flow, const SimulationConfig& config) {
    const auto metrics = analyze_perturbation<double>(net.flows(), spec);
    const FlowNetworkd perturbed = net.perturbed(spec);
    const auto traj = simulate(perturbed, policy, config, initial_state_for(net, initial_flow));
    const auto est = alpha_transfer_estimate(traj, alpha, config.inflow, config.tail_fraction);
    AttackOutcome out;
    out.defeated = !est.transferring;
    out.inconclusive = est.inconclusive;
    out.tail_min = est.tail_min;
    out.magnitude = metrics.magnitude;
    out.stretching = metrics.stretching;
    return out;
}

double ResilienceReport::bracket_upper() const {
    if (alpha_sweep.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::min_element(alpha_sweep.begin(), alpha_sweep.end(),
                            [](const auto& a, const auto& b) { return a.alpha < b.alpha; })
        ->defeating_delta;
}

PerturbationSpecd random_scaling(const FlowNetworkd& net, double target, double min_scale, std::mt19937_64& rng) {
    const int m = net.link_count();
    VectorXd cap_gap(m);  // largest allowed delta_e
    for (LinkIndex e = 0; e < m; ++e) cap_gap[e] = (1.0 - min_scale) * net.flow(e).capacity();
    if (target > cap_gap.sum()) throw Error("requested magnitude exceeds what scaling can remove");

    std::exponential_distribution<double> expo(1.0);
    VectorXd weight(m);
    for (LinkIndex e = 0; e < m; ++e) weight[e] = expo(rng);

    // Water-filling: spread the remaining magnitude by weight over links that
    // have not hit their limit.
    VectorXd delta = VectorXd::Zero(m);
    std::vector<char> active(m, 1);
    double remaining = target;
    while (remaining > 1e-15 * std::max(1.0, target)) {
        double wsum = 0.0;
        for (LinkIndex e = 0; e < m; ++e)
            if (active[e]) wsum += weight[e];
        if (wsum <= 0) break;
        bool clipped = false;
        double assigned = 0.0;
        for (LinkIndex e = 0; e < m; ++e) {
            if (!active[e]) continue;
            const double want = remaining * weight[e] / wsum;
            if (delta[e] + want >= cap_gap[e]) {
                assigned += cap_gap[e] - delta[e];
                delta[e] = cap_gap[e];
                active[e] = 0;
                clipped = true;
            }
        }
        if (!clipped) {
            for (LinkIndex e = 0; e < m; ++e)
                if (active[e]) delta[e] += remaining * weight[e] / wsum;
            break;
        }
        remaining -= assigned;
    }

    PerturbationSpecd spec;
    for (LinkIndex e = 0; e < m; ++e)
        if (delta[e] > 0) spec.replacements[e] = net.flow(e).scaled(1.0 - delta[e] / net.flow(e).capacity());
    return spec;
}

namespace {

void require_locally_responsive(const FlowNetworkd& net, const Policyd& policy) {
    if (!policy.strictly_positive()) throw PreconditionError("weak resilience estimate needs a strictly positive policy");
    for (NodeId v = 0; v + 1 < net.node_count(); ++v) {
        const auto k = static_cast<Eigen::Index>(net.topology().outgoing(v).size());
        if (!check_property_a(policy, v, k, 200, 7 + static_cast<std::uint64_t>(v)).passed)
            throw PreconditionError("policy has a negative cross partial at node " + std::to_string(v));
    }
}

AlphaSweepEntry bisect_cut_scaling(const FlowNetworkd& net, const Policyd& policy, const MinCut& mc, double alpha,
                                   double inflow, const VectorXd& f0, const ResilienceConfig& cfg) {
    AlphaSweepEntry entry;
    entry.alpha = alpha;
    entry.upper_bound = mc.capacity - alpha * inflow / 2.0;
    auto defeated_at = [&](double eps) {
        ++entry.evaluations;
        return evaluate_attack(net, policy, scale_links(net, mc.cut.cut_links, eps), alpha, f0, cfg.sim).defeated;
    };

    // eps_hi preserves transfer, eps_lo defeats it.
    double eps_hi = 1.0;
    if (defeated_at(eps_hi)) {
        entry.defeating_delta = 0.0;
        entry.epsilon = 1.0;
        return entry;
    }
    double eps_lo = std::min(1.0, alpha * inflow / (2.0 * mc.capacity));
    while (!defeated_at(eps_lo)) {
        eps_hi = eps_lo;
        eps_lo /= 4.0;
        if (eps_lo < 1e-12) throw Error("no defeating cut scaling found");
    }
    while ((eps_hi - eps_lo) > cfg.bisection_tol) {
        const double mid = 0.5 * (eps_lo + eps_hi);
        (defeated_at(mid) ? eps_lo : eps_hi) = mid;
    }
    const auto magnitude = [&](double eps) {
        return analyze_perturbation<double>(net.flows(), scale_links(net, mc.cut.cut_links, eps)).magnitude;
    };
    entry.epsilon = eps_lo;
    entry.defeating_delta = magnitude(eps_lo);
    entry.preserving_delta = magnitude(eps_hi);
    return entry;
}

}  // namespace

ResilienceReport estimate_weak_resilience(const FlowNetworkd& net, const Policyd& policy, double inflow,
                                          const VectorXd& initial_flow, const ResilienceConfig& config) {
    if (!(inflow > 0)) throw Error("weak resilience estimate needs a positive inflow");
    require_locally_responsive(net, policy);
    ResilienceConfig cfg = config;
    cfg.sim.inflow = inflow;

    const MinCut mc = min_cut_capacity(net.topology(), net.capacities());
    ResilienceReport report;
    report.min_cut = mc.capacity;
    report.cut = mc.cut;
    report.inflow = inflow;
    report.alpha_floor = cfg.alpha_floor;
    report.seed = cfg.seed;

    report.alpha_sweep.resize(cfg.alphas.size());
    parallel_for(cfg.alphas.size(), cfg.jobs, [&](std::size_t i) {
        report.alpha_sweep[i] = bisect_cut_scaling(net, policy, mc, cfg.alphas[i], inflow, initial_flow, cfg);
    });

    // Stratified magnitudes: sample i lands in the i-th of `samples` equal
    // slices of [0, (1 - margin) C]. Perturbations are drawn up front from a
    // single generator so the report does not depend on thread scheduling.
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double top = (1.0 - cfg.margin) * mc.capacity;
    std::vector<PerturbationSpecd> specs;
    std::vector<double> targets;
    for (int i = 0; i < cfg.samples; ++i) {
        targets.push_back(top * (i + unit(rng)) / cfg.samples);
        specs.push_back(random_scaling(net, targets.back(), cfg.min_scale, rng));
    }
    report.samples.resize(cfg.samples);
    parallel_for(static_cast<std::size_t>(cfg.samples), cfg.jobs, [&](std::size_t i) {
        const auto out = evaluate_attack(net, policy, specs[i], cfg.alpha_floor, initial_flow, cfg.sim);
        report.samples[i] = {out.magnitude, out.tail_min, out.defeated, out.inconclusive};
    });
    for (const auto& s : report.samples) {
        if (s.defeated)
            ++report.defeats;
        else
            report.preserved_delta_max = std::max(report.preserved_delta_max, s.delta);
    }
    return report;
}

}  // namespace dfn
