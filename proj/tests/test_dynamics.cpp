#include "dfn/dynamics.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dfn;

namespace {

VectorXd equilibrium_density(const FlowNetwork<double>& net, const VectorXd& f) {
    VectorXd rho(f.size());
    for (Eigen::Index e = 0; e < f.size(); ++e) rho[e] = net.flow(e).inverse(f[e]);
    return rho;
}

}  // namespace

TEST_CASE("right-hand side") {
    test::ParallelPair<> pp;
    const auto ev = evaluate_rhs(pp.net, *pp.policy, 1.0, VectorXd::Zero(2));
    CHECK(ev.rate[0] == doctest::Approx(1.0 / 11.0).epsilon(1e-15));
    CHECK(ev.rate[1] == doctest::Approx(10.0 / 11.0).epsilon(1e-15));
    CHECK(ev.node_inflow[0] == 1.0);
    CHECK(ev.node_inflow[1] == 0.0);

    // No inflow: every loaded link drains.
    const VectorXd loaded = (VectorXd(2) << 0.5, 2.0).finished();
    const auto drain = evaluate_rhs(pp.net, *pp.policy, 0.0, loaded);
    CHECK(drain.rate[0] == doctest::Approx(-0.75 * -std::expm1(-0.5)).epsilon(1e-15));
    CHECK((drain.rate.array() < 0).all());
    CHECK(drain.node_inflow[1] == doctest::Approx(drain.flow.sum()).epsilon(1e-15));

    // Negative intermediate densities are read as zero.
    CHECK(rhs(pp.net, *pp.policy, 1.0, (VectorXd(2) << -1e-3, 0.0).finished()) == ev.rate);
}

TEST_CASE("network construction") {
    CHECK_THROWS_AS(FlowNetwork<double>(NetworkTopology(2, {{1, 0, 1}}), {}), Error);
    CHECK_THROWS_AS(FlowNetwork<double>(NetworkTopology(3, {{1, 1, 0}, {2, 0, 2}}),
                                        {FlowFunctiond::exponential(1, 1), FlowFunctiond::exponential(1, 1)}),
                    Error);
    test::ParallelPair<> pp;
    CHECK(pp.net.node_capacity(0) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(pp.net.default_time_step() == doctest::Approx(0.01 / 0.75).epsilon(1e-15));
}

TEST_CASE("fixed step integration") {
    test::ParallelPair<> pp;
    SimulationConfig cfg;
    cfg.inflow = 1.0;
    cfg.horizon = 1.0;
    cfg.dt = 0.3;  // 1 / ceil(1/0.3) = 0.25
    const auto traj = simulate(pp.net, *pp.policy, cfg);
    CHECK(traj.size() == 5);
    CHECK(traj.dt == 0.25);
    CHECK(traj.times.back() == doctest::Approx(1.0).epsilon(1e-15));

    cfg.dt = 0.0;
    CHECK(simulate(pp.net, *pp.policy, cfg).dt == doctest::Approx(1.0 / 75.0).epsilon(1e-14));

    CHECK_THROWS_AS(simulate(pp.net, *pp.policy, cfg, (VectorXd(2) << -1.0, 0.0).finished()), Error);
    CHECK_THROWS_AS(simulate(pp.net, *pp.policy, cfg, VectorXd::Zero(3)), Error);
    cfg.inflow = -1.0;
    CHECK_THROWS_AS(simulate(pp.net, *pp.policy, cfg), Error);
}

TEST_CASE("oversupplied links blow through the density ceiling") {
    test::ParallelPair<> pp;
    SimulationConfig cfg;
    cfg.inflow = 3.0;
    cfg.horizon = 50.0;
    cfg.density_ceiling = 10.0;
    CHECK_THROWS_AS(simulate(pp.net, *pp.policy, cfg), SimulationError);
}

TEST_CASE("equilibrium is stationary") {
    test::ParallelPair<> pp;
    const auto [f1, f2] = test::pair_closed_form(1.0);
    const VectorXd rho = equilibrium_density(pp.net, (VectorXd(2) << f1, f2).finished());
    CHECK(rhs(pp.net, *pp.policy, 1.0, rho).cwiseAbs().maxCoeff() <= 1e-14);
    SimulationConfig cfg;
    cfg.inflow = 1.0;
    cfg.horizon = 20.0;
    const auto traj = simulate(pp.net, *pp.policy, cfg, rho);
    CHECK((traj.terminal_state() - rho).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(traj.max_undershoot == 0.0);
}

TEST_CASE("limit flow of two parallel links in closed form") {
    test::ParallelPair<> pp;
    // (12 - 11 + sqrt(1 + 48)) / 24 at lambda = 1
    CHECK(test::pair_closed_form(1.0).first == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(test::pair_closed_form(1.5 - 1e-12).first == doctest::Approx(0.75).epsilon(1e-10));
    for (double lambda : {0.25, 0.5, 1.0, 1.4}) {
        const auto [f1, f2] = test::pair_closed_form(lambda);
        const auto lf = network_limit_flow(pp.net, *pp.policy, lambda);
        CHECK(std::abs(lf.flow[0] - f1) <= 1e-9);
        CHECK(std::abs(lf.flow[1] - f2) <= 1e-9);
        CHECK_FALSE(lf.any_saturated());
        CHECK(lf.max_residual <= 1e-10);
        CHECK(lf.node_inflow[1] == doctest::Approx(lambda).epsilon(1e-9));

        SimulationConfig cfg;
        cfg.inflow = lambda;
        cfg.horizon = 200.0;
        const auto traj = simulate(pp.net, *pp.policy, cfg);
        CHECK(std::abs(traj.terminal_flow()[0] - f1) <= 1e-4);
        CHECK(std::abs(traj.terminal_flow()[1] - f2) <= 1e-4);
    }
    for (double lambda : {1.5, 2.0}) {
        const auto lf = network_limit_flow(pp.net, *pp.policy, lambda);
        CHECK(lf.flow[0] == 0.75);
        CHECK(lf.flow[1] == 0.75);
        CHECK(lf.saturated == std::vector<char>{1, 1});
    }
}

TEST_CASE("local limit flow") {
    test::ParallelPair<> pp;
    const auto flows = pp.net.outgoing_flows(0);
    const auto zero = local_limit_flow<double>(*pp.policy, 0, flows, 0.0);
    CHECK(zero.flow.isZero());
    CHECK(zero.method == LimitMethod::Zero);
    CHECK(local_limit_flow<double>(*pp.policy, 0, flows, 1.5).method == LimitMethod::Saturated);
    CHECK_THROWS_AS(local_limit_flow<double>(*pp.policy, 0, flows, -1.0), Error);

    // Forcing the continuation path gives the same answer.
    FixedPointOptions no_iterations;
    no_iterations.max_iterations = 1;
    const auto homotopy = local_limit_flow<double>(*pp.policy, 0, flows, 1.2, no_iterations);
    CHECK(homotopy.method == LimitMethod::Homotopy);
    CHECK(std::abs(homotopy.flow[0] - test::pair_closed_form(1.2).first) <= 1e-9);

    // Just under capacity.
    const double lambda = 1.5 - 1e-6;
    const auto near = local_limit_flow<double>(*pp.policy, 0, flows, lambda);
    CHECK(std::abs(near.flow.sum() - lambda) <= 1e-9);
    CHECK((near.flow.array() < 0.75).all());
}

TEST_CASE("limit flow is continuous and conserves min(lambda, capacity)") {
    test::Diamond d;
    VectorXd prev;
    for (int i = 0; i <= 60; ++i) {
        const double lambda = 3.0 * i / 60.0;
        const auto lf = network_limit_flow(d.net, *d.policy, lambda);
        const double out = lf.node_inflow[d.net.destination()];
        CHECK(lf.max_residual <= 1e-10);
        // Node 0 has capacity 1.8 = the min cut.
        CHECK(std::abs(lf.flow[0] + lf.flow[1] - std::min(lambda, 1.8)) <= 1e-8);
        CHECK(out <= std::min(lambda, d.min_cut) + 1e-8);
        if (prev.size()) CHECK((lf.flow - prev).cwiseAbs().maxCoeff() <= 0.2);
        prev = lf.flow;
    }
    test::ParallelPair<> pp;
    double last = -1.0;
    for (int i = 0; i <= 40; ++i) {
        const double lambda = 2.0 * i / 40.0;
        const auto lf = network_limit_flow(pp.net, *pp.policy, lambda);
        CHECK(std::abs(lf.flow.sum() - std::min(lambda, 1.5)) <= 1e-9);
        CHECK(lf.flow[0] >= last - 1e-12);
        last = lf.flow[0];
    }
}

TEST_CASE("sweep values agree with simulation at spot inflows") {
    test::Diamond d;
    SimulationConfig cfg;
    cfg.horizon = 400.0;
    for (double lambda : {0.3, 0.7, 1.1, 1.4, 1.6}) {
        cfg.inflow = lambda;
        const auto lf = network_limit_flow(d.net, *d.policy, lambda);
        const auto traj = simulate(d.net, *d.policy, cfg);
        CHECK((traj.terminal_flow() - lf.flow).cwiseAbs().maxCoeff() <= 1e-3);
    }
}

TEST_CASE("all-or-none saturation at every node") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 5);
        const NetworkTopology topo = test::random_dag(n, static_cast<int>(rng() % 6), rng);
        std::vector<FlowFunctiond> flows;
        const VectorXd caps = test::random_capacities(topo.link_count(), 0.2, 2.0, rng);
        for (LinkIndex e = 0; e < topo.link_count(); ++e) flows.push_back(FlowFunctiond::exponential(1.0, caps[e]));
        FlowNetwork<double> net(topo, flows);
        const auto policy = make_logit_policy<double>(topo, 1.0, VectorXd::Ones(topo.link_count()));
        const double c = min_cut_capacity(topo, caps).capacity;
        const auto lf = network_limit_flow(net, *policy, 1.5 * c);
        for (NodeId v = 0; v < n; ++v) {
            const auto& out = topo.outgoing(v);
            for (LinkIndex e : out) CHECK(lf.saturated[e] == lf.saturated[out.front()]);
        }
        CHECK(lf.any_saturated());
        CHECK(lf.node_inflow[n - 1] <= c * (1 + 1e-12));
    }
}

TEST_CASE("trajectories are ordered by their inputs") {
    test::ParallelPair<> pp;
    SimulationConfig cfg;
    cfg.horizon = 30.0;
    cfg.dt = 0.01;
    const VectorXd rho0 = VectorXd::Constant(2, 0.2);
    const auto low = simulate<double>(pp.net, *pp.policy, cfg, rho0, [](double) { return 0.5; });
    const auto high = simulate<double>(pp.net, *pp.policy, cfg, rho0,
                                       [](double t) { return 0.5 + 0.3 * (1.0 + std::sin(t)) / 2.0; });
    REQUIRE(low.size() == high.size());
    double worst = -1.0;
    for (std::size_t i = 0; i < low.size(); ++i) worst = std::max(worst, (low.states[i] - high.states[i]).maxCoeff());
    CHECK(worst <= 1e-9);
}

TEST_CASE("distance to the limit flow contracts") {
    test::ParallelPair<> pp;
    SimulationConfig cfg;
    cfg.inflow = 1.0;
    cfg.horizon = 60.0;
    const auto lf = network_limit_flow(pp.net, *pp.policy, 1.0);
    const auto traj = simulate(pp.net, *pp.policy, cfg, (VectorXd(2) << 4.0, 0.0).finished());
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traj.size(); i += 300) {
        const double dist = (traj.flows[i] - lf.flow).cwiseAbs().sum();
        CHECK(dist <= prev + 1e-12);
        prev = dist;
    }
    CHECK(prev <= 1e-6);
}

TEST_CASE("random initial states converge to one flow") {
    SUBCASE("parallel pair") {
        test::ParallelPair<> pp;
        SimulationConfig cfg;
        cfg.inflow = 1.0;
        cfg.horizon = 200.0;
        const auto r = convergence_check(pp.net, *pp.policy, cfg, 6, 3);
        CHECK(r.passed);
        CHECK(r.max_pairwise <= 1e-3);
    }
    SUBCASE("diamond") {
        test::Diamond d;
        SimulationConfig cfg;
        cfg.inflow = 1.0;
        cfg.horizon = 300.0;
        const auto r = convergence_check(d.net, *d.policy, cfg, 4, 5);
        CHECK(r.passed);
    }
}

TEST_CASE("transfer estimates") {
    test::ParallelPair<> pp;
    SimulationConfig cfg;
    cfg.inflow = 1.0;
    cfg.horizon = 100.0;
    const auto traj = simulate(pp.net, *pp.policy, cfg);
    const auto full = alpha_transfer_estimate(traj, 1.0, 1.0);
    CHECK(full.transferring);
    CHECK_FALSE(full.inconclusive);
    CHECK(full.tail_min == doctest::Approx(1.0).epsilon(1e-4));

    cfg.inflow = 2.0;
    const auto over = simulate(pp.net, *pp.policy, cfg);
    CHECK_FALSE(alpha_transfer_estimate(over, 0.9, 2.0).transferring);
    CHECK(alpha_transfer_estimate(over, 0.5, 2.0).transferring);
    CHECK(saturated_links(pp.net, over, 0.999) == std::vector<char>{1, 1});
    CHECK(saturated_links(pp.net, traj, 0.999) == std::vector<char>{0, 0});
}

TEST_CASE("RK4 error shrinks sixteenfold per halving") {
    test::ParallelPair<> pp;
    SimulationConfig cfg;
    cfg.inflow = 1.0;
    cfg.horizon = 4.0;
    auto run = [&](double dt) {
        cfg.dt = dt;
        return simulate(pp.net, *pp.policy, cfg).terminal_state();
    };
    const VectorXd reference = run(0.0005);
    const double coarse = (run(0.08) - reference).norm();
    const double fine = (run(0.04) - reference).norm();
    CHECK(coarse / fine >= 12.0);
}

TEST_CASE("long double instantiation") {
    test::ParallelPair<long double> pp;
    const auto lf = network_limit_flow<long double>(pp.net, *pp.policy, 1.0L);
    CHECK(std::abs(static_cast<double>(lf.flow[0]) - test::pair_closed_form(1.0).first) <= 1e-12);
}
