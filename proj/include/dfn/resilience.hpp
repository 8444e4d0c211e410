#ifndef DFN_RESILIENCE_HPP
#define DFN_RESILIENCE_HPP

#include "dfn/dynamics.hpp"
#include "dfn/flows.hpp"
#include "dfn/routing.hpp"
#include "dfn/topology.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace dfn {

using FlowNetworkd = FlowNetwork<double>;
using Policyd = RoutingPolicy<double>;
using PerturbationSpecd = PerturbationSpec<double>;

// The policy is not locally responsive with positive splits, so the estimate
// does not apply.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/**
 * Scaling attack on a minimum cut: every cut link is multiplied by
 * eps = alpha * lambda_0 / (2 C), so the cut can carry at most alpha*lambda_0/2.
 * Its magnitude is (1 - eps) C = C - alpha*lambda_0/2.
 */
struct CutAttack {
    PerturbationSpecd spec;
    Cut cut;
    double min_cut = 0.0;
    double epsilon = 0.0;
    double magnitude = 0.0;
    double stretching = 1.0;
};

CutAttack cut_attack(const FlowNetworkd& net, double alpha, double inflow);

// Uniform scaling of the given links by eps.
PerturbationSpecd scale_links(const FlowNetworkd& net, const std::vector<LinkIndex>& links, double eps);

// Initial flow used for attack runs: the unperturbed limit flow when it is an
// equilibrium (nothing saturated), else zero.
VectorXd default_initial_flow(const FlowNetworkd& net, const Policyd& policy, double inflow);

// rho(0) = mu^{-1}(f0) under the unperturbed flow functions.
VectorXd initial_state_for(const FlowNetworkd& net, const VectorXd& initial_flow);

struct AttackOutcome {
    bool defeated = false;
    bool inconclusive = false;
    double tail_min = 0.0;
    double magnitude = 0.0;
    double stretching = 1.0;
};

/**
 * Simulates the perturbed network under the unchanged policy from
 * mu^{-1}(initial_flow) and reports whether alpha-transfer is lost.
 */
AttackOutcome evaluate_attack(const FlowNetworkd& net, const Policyd& policy, const PerturbationSpecd& spec,
                              double alpha, const VectorXd& initial_flow, const SimulationConfig& config);

struct ResilienceConfig {
    std::vector<double> alphas{0.5, 0.2, 0.1, 0.05};
    int samples = 50;
    double margin = 0.1;         // sampled magnitudes stay <= (1 - margin) C
    double alpha_floor = 1e-3;
    double bisection_tol = 0.01; // fraction of C
    double min_scale = 1e-3;     // smallest per-link eps in random samples
    std::uint64_t seed = 1;
    unsigned jobs = 0;
    SimulationConfig sim{.horizon = 200.0};
};

struct AlphaSweepEntry {
    double alpha = 0.0;
    double defeating_delta = 0.0;  // smallest magnitude found to defeat alpha-transfer
    double preserving_delta = 0.0; // largest magnitude bisection saw preserve it
    double epsilon = 0.0;          // cut scaling at defeating_delta
    double upper_bound = 0.0;      // C - alpha*lambda_0/2
    int evaluations = 0;
};

struct SampleOutcome {
    double delta = 0.0;
    double tail_min = 0.0;
    bool defeated = false;
    bool inconclusive = false;
};

struct ResilienceReport {
    double min_cut = 0.0;
    Cut cut;
    double inflow = 0.0;
    std::vector<AlphaSweepEntry> alpha_sweep;
    double preserved_delta_max = 0.0;
    int defeats = 0;
    double alpha_floor = 0.0;
    std::vector<SampleOutcome> samples;
    std::uint64_t seed = 0;

    // Defeating magnitude at the smallest swept alpha, the upper end of the
    // bracket (defeating magnitudes grow as alpha shrinks).
    double bracket_upper() const;
};

// Random scaling perturbation with magnitude exactly `target`, spread over
// all links by random weights, each eps >= min_scale.
PerturbationSpecd random_scaling(const FlowNetworkd& net, double target, double min_scale, std::mt19937_64& rng);

/**
 * Brackets the weak resilience with scaling attacks.
 *
 * Upper side: for each alpha, bisect the uniform scaling of a minimum cut for
 * the smallest magnitude that defeats alpha-transfer (to bisection_tol * C).
 * Lower side: `samples` random scaling perturbations with stratified
 * magnitudes up to (1 - margin) C, each checked for alpha_floor-transfer.
 *
 * The policy must have nonnegative cross partials and strictly positive
 * splits; PreconditionError otherwise.
 */
ResilienceReport estimate_weak_resilience(const FlowNetworkd& net, const Policyd& policy, double inflow,
                                          const VectorXd& initial_flow, const ResilienceConfig& config);

}  // namespace dfn

#endif  // DFN_RESILIENCE_HPP
