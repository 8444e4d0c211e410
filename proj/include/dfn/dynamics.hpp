#ifndef DFN_DYNAMICS_HPP
#define DFN_DYNAMICS_HPP

#include "dfn/flows.hpp"
#include "dfn/integrator.hpp"
#include "dfn/parallel.hpp"
#include "dfn/routing.hpp"
#include "dfn/topology.hpp"
#include "dfn/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace dfn {

/**
 * Canonical topology (origin 0, destination n, links pointing upward) with
 * one flow function per link.
 */
template <typename Scalar>
class FlowNetwork {
public:
    FlowNetwork(NetworkTopology topo, std::vector<FlowFunction<Scalar>> flows)
        : topo_(std::move(topo)), flows_(std::move(flows)) {
        if (auto v = validate_topology(topo_); !v.ok()) throw Error("invalid topology: " + v.issues.front().message);
        if (!topo_.is_canonical()) throw Error("flow network requires a canonically labelled topology");
        if (static_cast<int>(flows_.size()) != topo_.link_count())
            throw Error("need exactly one flow function per link");
    }

    const NetworkTopology& topology() const { return topo_; }
    std::span<const FlowFunction<Scalar>> flows() const { return flows_; }
    const FlowFunction<Scalar>& flow(LinkIndex e) const { return flows_.at(e); }
    int node_count() const { return topo_.node_count(); }
    int link_count() const { return topo_.link_count(); }
    NodeId destination() const { return topo_.node_count() - 1; }

    VectorX<Scalar> capacities() const { return dfn::capacities<Scalar>(flows_); }

    // lambda_v^max: total capacity of v's outgoing links.
    Scalar node_capacity(NodeId v) const {
        Scalar s = 0;
        for (LinkIndex e : topo_.outgoing(v)) s += flows_[e].capacity();
        return s;
    }

    std::vector<FlowFunction<Scalar>> outgoing_flows(NodeId v) const {
        std::vector<FlowFunction<Scalar>> out;
        for (LinkIndex e : topo_.outgoing(v)) out.push_back(flows_[e]);
        return out;
    }

    // Same topology with replaced flow functions.
    FlowNetwork with_flows(std::vector<FlowFunction<Scalar>> flows) const { return FlowNetwork(topo_, std::move(flows)); }

    FlowNetwork perturbed(const PerturbationSpec<Scalar>& spec) const { return with_flows(spec.apply(flows_)); }

    // 0.01 / fastest local rate max_e mu_e'.
    Scalar default_time_step() const {
        Scalar rate = 0;
        for (const auto& f : flows_) rate = std::max(rate, f.slope_bound());
        return Scalar(0.01) / rate;
    }

    VectorX<Scalar> median_densities() const {
        VectorX<Scalar> m(link_count());
        for (LinkIndex e = 0; e < link_count(); ++e) m[e] = flows_[e].median_density();
        return m;
    }

private:
    NetworkTopology topo_;
    std::vector<FlowFunction<Scalar>> flows_;
};

template <typename Scalar>
struct RhsEvaluation {
    VectorX<Scalar> rate;         // d rho / dt
    VectorX<Scalar> flow;         // mu(rho)
    VectorX<Scalar> node_inflow;  // lambda_0 .. lambda_n
};

/**
 * Right-hand side of the network ODE, d rho_e/dt = lambda_v G^v_e(rho^v) - mu_e(rho_e)
 * for e leaving v, with lambda_v the sum of flows entering v (lambda_0 the
 * exogenous inflow). Nodes are visited in label order. Negative densities
 * (intermediate RK stages) are read as zero.
 */
template <typename Scalar>
RhsEvaluation<Scalar> evaluate_rhs(const FlowNetwork<Scalar>& net, const RoutingPolicy<Scalar>& policy,
                                   std::type_identity_t<Scalar> inflow, const std::type_identity_t<VectorX<Scalar>>& rho) {
    const auto& topo = net.topology();
    const VectorX<Scalar> r = rho.cwiseMax(Scalar(0));
    RhsEvaluation<Scalar> out;
    out.flow.resize(r.size());
    for (LinkIndex e = 0; e < net.link_count(); ++e) out.flow[e] = net.flow(e).unchecked(r[e]);
    out.node_inflow = VectorX<Scalar>::Zero(net.node_count());
    out.node_inflow[0] = inflow;
    out.rate.resize(r.size());
    for (NodeId v = 0; v < net.node_count(); ++v) {
        if (v > 0)
            for (LinkIndex e : topo.incoming(v)) out.node_inflow[v] += out.flow[e];
        const auto& outgoing = topo.outgoing(v);
        if (outgoing.empty()) continue;
        const VectorX<Scalar> g = policy.route(v, local_densities(topo, v, r));
        for (std::size_t i = 0; i < outgoing.size(); ++i)
            out.rate[outgoing[i]] = out.node_inflow[v] * g[static_cast<Eigen::Index>(i)] - out.flow[outgoing[i]];
    }
    return out;
}

template <typename Scalar>
VectorX<Scalar> rhs(const FlowNetwork<Scalar>& net, const RoutingPolicy<Scalar>& policy, std::type_identity_t<Scalar> inflow,
                    const std::type_identity_t<VectorX<Scalar>>& rho) {
    return evaluate_rhs(net, policy, inflow, rho).rate;
}

struct SimulationConfig {
    double inflow = 0.0;          // lambda_0
    double dt = 0.0;              // 0 selects FlowNetwork::default_time_step()
    double horizon = 100.0;
    double tail_fraction = 0.2;   // window used for liminf estimates
    double saturation_threshold = 0.999;
    double convergence_tol = 1e-6;
    double density_ceiling = 1e12;

    void validate() const {
        if (!(inflow >= 0) || !std::isfinite(inflow)) throw Error("inflow must be finite and nonnegative");
        if (dt < 0 || !std::isfinite(dt)) throw Error("time step must be positive (or 0 for default)");
        if (!(horizon > 0)) throw Error("horizon must be positive");
        if (!(tail_fraction > 0 && tail_fraction < 1)) throw Error("tail fraction must lie in (0, 1)");
        if (!(saturation_threshold > 0 && saturation_threshold < 1))
            throw Error("saturation threshold must lie in (0, 1)");
    }
};

class SimulationError : public Error {
public:
    using Error::Error;
};

template <typename Scalar>
struct Trajectory {
    std::vector<Scalar> times;
    std::vector<VectorX<Scalar>> states;
    std::vector<VectorX<Scalar>> flows;
    std::vector<VectorX<Scalar>> node_inflows;  // lambda_0 .. lambda_n
    VectorX<Scalar> terminal_rate;              // d rho/dt at the last state
    double dt = 0.0;
    double max_undershoot = 0.0;                // largest negative density clamped away

    std::size_t size() const { return times.size(); }
    const VectorX<Scalar>& terminal_state() const { return states.back(); }
    const VectorX<Scalar>& terminal_flow() const { return flows.back(); }
    Scalar outflow(std::size_t i) const { return node_inflows[i][node_inflows[i].size() - 1]; }
};

/**
 * Fixed-step RK4 integration of the network ODE over [0, horizon]. The step
 * is horizon / ceil(horizon / dt). Densities are clamped at zero after each
 * step and the largest clamp is reported in max_undershoot. A non-finite
 * density or one above the configured ceiling raises SimulationError.
 *
 * `inflow`, if given, overrides the constant config.inflow as lambda_0(t).
 */
template <typename Scalar>
Trajectory<Scalar> simulate(const FlowNetwork<Scalar>& net, const RoutingPolicy<Scalar>& policy,
                            const SimulationConfig& config, const std::type_identity_t<VectorX<Scalar>>& rho0,
                            const std::type_identity_t<std::function<Scalar(Scalar)>>& inflow = {}) {
    config.validate();
    if (rho0.size() != net.link_count()) throw Error("initial state has wrong size");
    if ((rho0.array() < 0).any()) throw Error("initial densities must be nonnegative");

    const double nominal = config.dt > 0 ? config.dt : static_cast<double>(net.default_time_step());
    const long steps = std::max(1L, static_cast<long>(std::ceil(config.horizon / nominal - 1e-9)));
    const Scalar dt = Scalar(config.horizon) / Scalar(steps);
    auto lambda0 = [&](Scalar t) { return inflow ? inflow(t) : Scalar(config.inflow); };
    auto f = [&](Scalar t, const VectorX<Scalar>& x) { return rhs(net, policy, lambda0(t), x); };

    Trajectory<Scalar> traj;
    traj.dt = static_cast<double>(dt);
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);
    traj.flows.reserve(steps + 1);
    traj.node_inflows.reserve(steps + 1);
    auto record = [&](Scalar t, const VectorX<Scalar>& x) {
        auto ev = evaluate_rhs(net, policy, lambda0(t), x);
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.flows.push_back(std::move(ev.flow));
        traj.node_inflows.push_back(std::move(ev.node_inflow));
        traj.terminal_rate = std::move(ev.rate);
    };
    record(Scalar(0), rho0);

    rk4_integrate<Scalar>(f, Scalar(0), rho0, dt, steps, [&](Scalar t, VectorX<Scalar>& x) {
        for (Eigen::Index e = 0; e < x.size(); ++e) {
            if (!std::isfinite(static_cast<double>(x[e])) || x[e] > Scalar(config.density_ceiling)) {
                std::ostringstream os;
                os << "integration unstable at t=" << static_cast<double>(t) << ": density on link index " << e
                   << " is " << static_cast<double>(x[e]) << " (dt=" << static_cast<double>(dt) << ")";
                throw SimulationError(os.str());
            }
            if (x[e] < 0) {
                traj.max_undershoot = std::max(traj.max_undershoot, -static_cast<double>(x[e]));
                x[e] = 0;
            }
        }
        record(t, x);
    });
    return traj;
}

template <typename Scalar>
Trajectory<Scalar> simulate(const FlowNetwork<Scalar>& net, const RoutingPolicy<Scalar>& policy,
                            const SimulationConfig& config) {
    return simulate<Scalar>(net, policy, config, VectorX<Scalar>::Zero(net.link_count()));
}

struct TransferEstimate {
    bool transferring = false;
    bool inconclusive = false;  // tail still moving by >= 5% of lambda_0
    double tail_min = 0.0;      // liminf surrogate of the destination inflow
    double tail_variation = 0.0;
};

/**
 * Decides alpha-transfer from the minimum destination inflow over the last
 * tail_fraction of the horizon: transferring iff tail_min >= alpha*lambda_0 - tol,
 * with tol = 1e-3 * lambda_0 unless given.
 */
template <typename Scalar>
TransferEstimate alpha_transfer_estimate(const Trajectory<Scalar>& traj, double alpha, double inflow,
                                         double tail_fraction = 0.2, double tol = -1.0) {
    if (traj.size() == 0) throw Error("empty trajectory");
    if (tol < 0) tol = 1e-3 * inflow;
    const double t_end = static_cast<double>(traj.times.back());
    const double t_start = t_end * (1.0 - tail_fraction);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        if (static_cast<double>(traj.times[i]) < t_start) continue;
        const double out = static_cast<double>(traj.outflow(i));
        lo = std::min(lo, out);
        hi = std::max(hi, out);
    }
    TransferEstimate r;
    r.tail_min = lo;
    r.tail_variation = hi - lo;
    r.transferring = alpha <= 0 || lo >= alpha * inflow - tol;
    r.inconclusive = inflow > 0 && r.tail_variation >= 0.05 * inflow;
    return r;
}

// Links whose flow exceeds threshold * capacity while their density still grows.
template <typename Scalar>
std::vector<char> saturated_links(const FlowNetwork<Scalar>& net, const Trajectory<Scalar>& traj, double threshold) {
    std::vector<char> sat(net.link_count(), 0);
    for (LinkIndex e = 0; e < net.link_count(); ++e)
        sat[e] = traj.terminal_flow()[e] > Scalar(threshold) * net.flow(e).capacity() && traj.terminal_rate[e] > 0;
    return sat;
}

struct FixedPointOptions {
    double damping = 0.5;
    int max_iterations = 10000;
    double residual_tol = 1e-10;
};

enum class LimitMethod { Zero, Saturated, FixedPoint, Homotopy };

template <typename Scalar>
struct LocalLimitFlow {
    VectorX<Scalar> flow;
    bool saturated = false;
    double residual = 0.0;
    int iterations = 0;
    LimitMethod method = LimitMethod::Zero;
};

namespace detail {

template <typename Scalar>
VectorX<Scalar> flows_at(std::span<const FlowFunction<Scalar>> flows, const VectorX<Scalar>& rho) {
    VectorX<Scalar> f(rho.size());
    for (Eigen::Index e = 0; e < rho.size(); ++e) f[e] = flows[e].unchecked(std::max(Scalar(0), rho[e]));
    return f;
}

// lambda G(rho) - mu(rho)
template <typename Scalar>
VectorX<Scalar> local_residual(const RoutingPolicy<Scalar>& policy, NodeId v, std::span<const FlowFunction<Scalar>> flows,
                               Scalar lambda, const VectorX<Scalar>& rho) {
    return lambda * policy.route(v, rho) - flows_at(flows, rho);
}

// Newton on lambda G(rho) = mu(rho) from `rho`, projected onto rho >= 0 with
// backtracking on the max-norm residual. Returns false if it stalls.
template <typename Scalar>
bool newton_solve(const RoutingPolicy<Scalar>& policy, NodeId v, std::span<const FlowFunction<Scalar>> flows,
                  Scalar lambda, VectorX<Scalar>& rho, double tol, int& iterations) {
    const Eigen::Index k = rho.size();
    VectorX<Scalar> F = local_residual(policy, v, flows, lambda, rho);
    for (int it = 0; it < 100; ++it) {
        const Scalar norm = F.cwiseAbs().maxCoeff();
        if (norm <= Scalar(tol)) return true;
        ++iterations;
        MatrixX<Scalar> JF = lambda * policy.jacobian(v, rho).transpose();
        for (Eigen::Index e = 0; e < k; ++e) JF(e, e) -= flows[e].derivative(rho[e]);
        const VectorX<Scalar> step = JF.partialPivLu().solve(-F);
        if (!step.allFinite()) return false;
        Scalar t = 1;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, t /= 2) {
            VectorX<Scalar> trial = (rho + t * step).cwiseMax(Scalar(0));
            VectorX<Scalar> Ft = local_residual(policy, v, flows, lambda, trial);
            if (Ft.allFinite() && Ft.cwiseAbs().maxCoeff() < norm) {
                rho = std::move(trial);
                F = std::move(Ft);
                accepted = true;
                break;
            }
        }
        if (!accepted) return F.cwiseAbs().maxCoeff() <= Scalar(tol);
    }
    return F.cwiseAbs().maxCoeff() <= Scalar(tol);
}

}  // namespace detail

/**
 * Limit flow of the single-node system driven by constant input lambda.
 *
 * lambda >= total outgoing capacity saturates every link. Otherwise the fixed
 * point lambda G(mu^{-1}(f)) = f is sought by damped iteration in flow
 * space; if that fails to reach the residual tolerance, a continuation in
 * lambda from 0 with a Newton corrector in density space takes over, halving
 * the continuation step whenever the corrector stalls.
 */
template <typename Scalar>
LocalLimitFlow<Scalar> local_limit_flow(const RoutingPolicy<Scalar>& policy, NodeId v,
                                        std::span<const FlowFunction<Scalar>> flows, Scalar lambda,
                                        const FixedPointOptions& opt = {}) {
    if (lambda < 0) throw Error("local limit flow needs nonnegative input");
    const auto k = static_cast<Eigen::Index>(flows.size());
    if (k == 0) throw Error("node has no outgoing links");
    LocalLimitFlow<Scalar> out;
    VectorX<Scalar> cap(k);
    for (Eigen::Index e = 0; e < k; ++e) cap[e] = flows[e].capacity();

    if (lambda == 0) {
        out.flow = VectorX<Scalar>::Zero(k);
        return out;
    }
    if (lambda >= cap.sum()) {
        out.flow = cap;
        out.saturated = true;
        out.method = LimitMethod::Saturated;
        return out;
    }

    auto residual_of = [&](const VectorX<Scalar>& rho) {
        return static_cast<double>(detail::local_residual(policy, v, flows, lambda, rho).cwiseAbs().maxCoeff());
    };

    // Damped iteration in flow space.
    {
        const Scalar beta = Scalar(opt.damping);
        VectorX<Scalar> f = (lambda * policy.route(v, VectorX<Scalar>::Zero(k))).cwiseMin(cap * Scalar(0.5));
        VectorX<Scalar> rho(k);
        for (int it = 0; it < opt.max_iterations; ++it) {
            for (Eigen::Index e = 0; e < k; ++e) rho[e] = flows[e].inverse(f[e]);
            const VectorX<Scalar> target = lambda * policy.route(v, rho);
            const Scalar res = (target - f).cwiseAbs().maxCoeff();
            out.iterations = it + 1;
            if (!std::isfinite(static_cast<double>(res))) break;
            if (res <= Scalar(opt.residual_tol)) {
                out.flow = f;
                out.residual = static_cast<double>(res);
                out.method = LimitMethod::FixedPoint;
                return out;
            }
            // Stay strictly inside the capacity box so mu^{-1} is defined.
            f = ((1 - beta) * f + beta * target).cwiseMin(cap - (cap - f) / 2);
        }
    }

    // Continuation in lambda with Newton corrector.
    VectorX<Scalar> rho = VectorX<Scalar>::Zero(k);
    Scalar reached = 0;
    Scalar step = lambda / 16;
    int iterations = 0;
    while (reached < lambda) {
        const Scalar next = std::min(lambda, reached + step);
        VectorX<Scalar> trial = rho;
        if (detail::newton_solve(policy, v, flows, next, trial, opt.residual_tol * 0.01, iterations)) {
            rho = std::move(trial);
            reached = next;
            step *= 2;
        } else {
            step /= 2;
            if (step < lambda * Scalar(1e-14))
                throw ConvergenceError("local limit flow did not converge at node " + std::to_string(v),
                                       residual_of(trial));
        }
    }
    out.flow = detail::flows_at(flows, rho);
    out.residual = residual_of(rho);
    out.iterations += iterations;
    out.method = LimitMethod::Homotopy;
    if (out.residual > opt.residual_tol)
        throw ConvergenceError("local limit flow residual above tolerance at node " + std::to_string(v), out.residual);
    return out;
}

template <typename Scalar>
struct LimitFlow {
    VectorX<Scalar> flow;          // f*
    std::vector<char> saturated;   // per link
    VectorX<Scalar> node_inflow;   // lambda*_0 .. lambda*_n
    double max_residual = 0.0;

    bool any_saturated() const { return std::any_of(saturated.begin(), saturated.end(), [](char s) { return s; }); }
};

// Limit flow of the whole network: local limit flows cascaded in label order.
template <typename Scalar>
LimitFlow<Scalar> network_limit_flow(const FlowNetwork<Scalar>& net, const RoutingPolicy<Scalar>& policy,
                                     std::type_identity_t<Scalar> inflow,
                                     const FixedPointOptions& opt = {}) {
    const auto& topo = net.topology();
    LimitFlow<Scalar> out;
    out.flow = VectorX<Scalar>::Zero(net.link_count());
    out.saturated.assign(net.link_count(), 0);
    out.node_inflow = VectorX<Scalar>::Zero(net.node_count());
    out.node_inflow[0] = inflow;
    for (NodeId v = 0; v < net.node_count(); ++v) {
        if (v > 0)
            for (LinkIndex e : topo.incoming(v)) out.node_inflow[v] += out.flow[e];
        const auto& outgoing = topo.outgoing(v);
        if (outgoing.empty()) continue;
        const auto local_flows = net.outgoing_flows(v);
        const auto local = local_limit_flow<Scalar>(policy, v, local_flows, out.node_inflow[v], opt);
        out.max_residual = std::max(out.max_residual, local.residual);
        for (std::size_t i = 0; i < outgoing.size(); ++i) {
            out.flow[outgoing[i]] = local.flow[static_cast<Eigen::Index>(i)];
            out.saturated[outgoing[i]] = local.saturated;
        }
    }
    return out;
}

// Per-link log-uniform densities in [1e-3, 1e2] times the link's median density.
template <typename Scalar, typename Rng>
VectorX<Scalar> random_initial_state(const FlowNetwork<Scalar>& net, Rng& rng) {
    std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e2));
    VectorX<Scalar> rho(net.link_count());
    for (LinkIndex e = 0; e < net.link_count(); ++e)
        rho[e] = net.flow(e).median_density() * static_cast<Scalar>(std::exp(u(rng)));
    return rho;
}

template <typename Scalar>
struct ConvergenceReport {
    std::vector<VectorX<Scalar>> initial_states;
    std::vector<VectorX<Scalar>> terminal_flows;
    LimitFlow<Scalar> limit;
    double max_pairwise = 0.0;  // max-norm distance between terminal flows
    double max_vs_limit = 0.0;  // max-norm distance to the fixed-point limit flow
    bool passed = false;
};

/**
 * Simulates from k random initial states (concurrently, up to `jobs`
 * threads) and compares terminal flows with each other and with
 * network_limit_flow.
 */
template <typename Scalar>
ConvergenceReport<Scalar> convergence_check(const FlowNetwork<Scalar>& net, const RoutingPolicy<Scalar>& policy,
                                            const SimulationConfig& config, int k, std::uint64_t seed,
                                            double tol = 1e-3, unsigned jobs = 0) {
    if (k < 2) throw Error("convergence check needs at least two initial conditions");
    ConvergenceReport<Scalar> r;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < k; ++i) r.initial_states.push_back(random_initial_state(net, rng));
    r.terminal_flows.resize(k);
    parallel_for(static_cast<std::size_t>(k), jobs, [&](std::size_t i) {
        r.terminal_flows[i] = simulate(net, policy, config, r.initial_states[i]).terminal_flow();
    });
    r.limit = network_limit_flow(net, policy, Scalar(config.inflow));
    for (int i = 0; i < k; ++i) {
        r.max_vs_limit = std::max(r.max_vs_limit,
                                  static_cast<double>((r.terminal_flows[i] - r.limit.flow).cwiseAbs().maxCoeff()));
        for (int j = i + 1; j < k; ++j)
            r.max_pairwise = std::max(
                r.max_pairwise, static_cast<double>((r.terminal_flows[i] - r.terminal_flows[j]).cwiseAbs().maxCoeff()));
    }
    r.passed = r.max_pairwise <= tol && r.max_vs_limit <= tol;
    return r;
}

}  // namespace dfn

#endif  // DFN_DYNAMICS_HPP
