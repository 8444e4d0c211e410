#ifndef DFN_FLOWS_HPP
#define DFN_FLOWS_HPP

#include "dfn/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dfn {

enum class FlowFamily { Exponential, Generic };

/**
 * Link flow function: a strictly increasing, saturating map from density to
 * flow with mu(0) = 0 and supremum capacity().
 *
 * Two families are built in. Exponential: f_max * (1 - exp(-a * rho)).
 * Generic: a user rule with a declared supremum and slope bound; it must pass
 * certify_flow_function() before it is used in a network.
 *
 * Every flow function carries a multiplicative scale in (0, 1] so that the
 * scaling perturbations eps * mu stay inside the same family.
 */
template <typename Scalar>
class FlowFunction {
public:
    using Rule = std::function<Scalar(Scalar)>;

    FlowFunction() = default;

    static FlowFunction exponential(Scalar rate, Scalar capacity) {
        if (!(rate > 0) || !(capacity > 0) || !std::isfinite(static_cast<double>(rate)) ||
            !std::isfinite(static_cast<double>(capacity)))
            throw Error("exponential flow function needs finite positive rate and capacity");
        FlowFunction f;
        f.family_ = FlowFamily::Exponential;
        f.rate_ = rate;
        f.f_max_ = capacity;
        return f;
    }

    // `slope_bound` is an upper bound on mu'; it sets the default time step.
    static FlowFunction generic(Rule rule, Scalar capacity, Scalar slope_bound, std::string label = "generic") {
        if (!rule) throw Error("generic flow function needs an evaluation rule");
        if (!(capacity > 0) || !(slope_bound > 0))
            throw Error("generic flow function needs positive capacity and slope bound");
        FlowFunction f;
        f.family_ = FlowFamily::Generic;
        f.rule_ = std::move(rule);
        f.f_max_ = capacity;
        f.slope_ = slope_bound;
        f.label_ = std::move(label);
        return f;
    }

    FlowFamily family() const { return family_; }
    const std::string& label() const { return label_; }
    Scalar rate() const { return rate_; }
    Scalar scale() const { return scale_; }
    Scalar base_capacity() const { return f_max_; }
    Scalar capacity() const { return scale_ * f_max_; }

    Scalar slope_bound() const {
        return family_ == FlowFamily::Exponential ? scale_ * rate_ * f_max_ : scale_ * slope_;
    }

    Scalar operator()(Scalar rho) const {
        if (rho < 0) throw Error("flow function evaluated at negative density");
        return unchecked(rho);
    }

    // Evaluation without the sign check; callers guarantee rho >= 0.
    Scalar unchecked(Scalar rho) const {
        using std::expm1;
        if (family_ == FlowFamily::Exponential) return -scale_ * f_max_ * expm1(-rate_ * rho);
        return scale_ * rule_(rho);
    }

    Scalar derivative(Scalar rho) const {
        using std::exp;
        if (family_ == FlowFamily::Exponential) return scale_ * f_max_ * rate_ * exp(-rate_ * rho);
        const Scalar h = Scalar(1e-6) * std::max(Scalar(1), rho);
        const Scalar lo = std::max(Scalar(0), rho - h);
        return (unchecked(rho + h) - unchecked(lo)) / (rho + h - lo);
    }

    // Density carrying flow f. Requires 0 <= f < capacity().
    Scalar inverse(Scalar f) const {
        using std::log1p;
        if (f < 0) throw Error("flow function inverse of negative flow");
        if (!(f < capacity())) throw Error("flow at or above capacity has no finite density");
        if (f == 0) return Scalar(0);
        if (family_ == FlowFamily::Exponential) return -log1p(-f / capacity()) / rate_;
        return bisect_level(f);
    }

    // Density at which the function carries half its capacity.
    Scalar median_density() const {
        using std::log;
        if (family_ == FlowFamily::Exponential) return log(Scalar(2)) / rate_;
        return bisect_level(capacity() / 2);
    }

    // eps * mu, with eps in [0, 1]. eps = 0 is representable but never admissible.
    FlowFunction scaled(Scalar eps) const {
        if (!(eps >= 0) || eps > 1) throw Error("scaling factor must lie in [0, 1]");
        FlowFunction f = *this;
        f.scale_ = scale_ * eps;
        return f;
    }

    // Same underlying function up to the scale factor.
    bool same_base(const FlowFunction& o) const {
        if (family_ != o.family_) return false;
        if (family_ == FlowFamily::Exponential) return rate_ == o.rate_ && f_max_ == o.f_max_;
        return false;
    }

private:
    Scalar bisect_level(Scalar target) const {
        Scalar hi = 1;
        int guard = 0;
        while (unchecked(hi) <= target) {
            hi *= 2;
            if (++guard > 2000) throw Error("flow function never reaches requested level");
        }
        Scalar lo = 0;
        for (int i = 0; i < 200 && hi - lo > std::numeric_limits<Scalar>::epsilon() * hi; ++i) {
            const Scalar mid = (lo + hi) / 2;
            (unchecked(mid) < target ? lo : hi) = mid;
        }
        return (lo + hi) / 2;
    }

    FlowFamily family_ = FlowFamily::Exponential;
    Scalar rate_ = 1;
    Scalar f_max_ = 1;
    Scalar slope_ = 1;
    Scalar scale_ = 1;
    Rule rule_;
    std::string label_ = "exp";
};

using FlowFunctiond = FlowFunction<double>;

template <typename Scalar>
VectorX<Scalar> capacities(std::span<const FlowFunction<Scalar>> flows) {
    VectorX<Scalar> c(static_cast<Eigen::Index>(flows.size()));
    for (std::size_t e = 0; e < flows.size(); ++e) c[e] = flows[e].capacity();
    return c;
}

template <typename Scalar>
VectorX<Scalar> evaluate(std::span<const FlowFunction<Scalar>> flows, const VectorX<Scalar>& rho) {
    VectorX<Scalar> f(rho.size());
    for (Eigen::Index e = 0; e < rho.size(); ++e) f[e] = flows[e](rho[e]);
    return f;
}

// Geometric grid {0} u [lo, hi] with `points` nodes.
template <typename Scalar>
std::vector<Scalar> geometric_grid(Scalar lo, Scalar hi, int points) {
    using std::pow;
    std::vector<Scalar> g{Scalar(0)};
    g.reserve(points + 1);
    const Scalar ratio = pow(hi / lo, Scalar(1) / Scalar(points - 1));
    Scalar x = lo;
    for (int i = 0; i < points; ++i, x *= ratio) g.push_back(x);
    return g;
}

struct CertificationReport {
    bool ok = true;
    std::vector<std::string> problems;
    void fail(std::string msg) {
        ok = false;
        problems.push_back(std::move(msg));
    }
};

/**
 * Sampled check of the flow-function assumptions: mu(0) = 0, strict increase
 * and mu < capacity on a geometric grid, and saturation (>= 0.999 capacity) at
 * a large density.
 */
template <typename Scalar>
CertificationReport certify_flow_function(const FlowFunction<Scalar>& ff, int points = 10000) {
    using std::abs;
    CertificationReport r;
    if (!(ff.capacity() > 0)) {
        r.fail("capacity is not positive");
        return r;
    }
    if (abs(ff.unchecked(Scalar(0))) > Scalar(1e-12) * ff.capacity()) r.fail("mu(0) != 0");
    Scalar median;
    try {
        median = ff.median_density();
    } catch (const Error&) {
        r.fail("function never reaches half its capacity");
        return r;
    }
    const auto grid = geometric_grid<Scalar>(Scalar(1e-4), std::max(Scalar(1), median) * Scalar(1e4), points);
    Scalar prev = ff.unchecked(grid[0]);
    bool sat = false;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const Scalar f = ff.unchecked(grid[i]);
        if (!std::isfinite(static_cast<double>(f))) {
            r.fail("non-finite value at density " + std::to_string(static_cast<double>(grid[i])));
            return r;
        }
        if (f > ff.capacity()) {
            r.fail("value exceeds capacity at density " + std::to_string(static_cast<double>(grid[i])));
            return r;
        }
        // Strictness only resolvable while the increment exceeds rounding.
        if (f < prev || (f == prev && ff.capacity() - f > Scalar(1e-9) * ff.capacity())) {
            r.fail("not strictly increasing near density " + std::to_string(static_cast<double>(grid[i])));
            return r;
        }
        if (f >= Scalar(0.999) * ff.capacity()) sat = true;
        prev = f;
    }
    if (!sat) r.fail("does not saturate to 0.999 of capacity");
    return r;
}

// Per-link replacement flow functions, keyed by link index.
template <typename Scalar>
struct PerturbationSpec {
    std::map<LinkIndex, FlowFunction<Scalar>> replacements;

    bool empty() const { return replacements.empty(); }

    std::vector<FlowFunction<Scalar>> apply(std::span<const FlowFunction<Scalar>> flows) const {
        std::vector<FlowFunction<Scalar>> out(flows.begin(), flows.end());
        for (const auto& [e, ff] : replacements) {
            if (e < 0 || e >= static_cast<LinkIndex>(out.size())) throw Error("perturbation names unknown link");
            out[e] = ff;
        }
        return out;
    }
};

template <typename Scalar>
FlowFunction<Scalar> scale_perturbation(const FlowFunction<Scalar>& ff, Scalar eps) {
    return ff.scaled(eps);
}

/**
 * Checks that `perturbed` is an admissible replacement of `original`: it
 * satisfies the flow-function assumptions (so eps > 0 for scalings) and
 * lies pointwise below the original on a 10^4-point geometric grid.
 */
template <typename Scalar>
CertificationReport certify_admissible(const FlowFunction<Scalar>& original, const FlowFunction<Scalar>& perturbed,
                                       int points = 10000) {
    CertificationReport r;
    if (!(perturbed.capacity() > 0)) {
        r.fail("perturbed flow function is identically zero");
        return r;
    }
    if (perturbed.capacity() > original.capacity()) r.fail("perturbed capacity exceeds original");
    if (original.same_base(perturbed)) return r;  // eps * mu <= mu analytically

    auto own = certify_flow_function(perturbed, points);
    for (auto& p : own.problems) r.fail("perturbed: " + p);
    const Scalar hi = std::max(original.median_density(), perturbed.median_density()) * Scalar(50);
    const Scalar tol = Scalar(1e-12) * original.capacity();
    for (Scalar rho : geometric_grid<Scalar>(Scalar(1e-4), hi, points)) {
        if (perturbed.unchecked(rho) > original.unchecked(rho) + tol) {
            r.fail("perturbed flow exceeds original at density " + std::to_string(static_cast<double>(rho)));
            break;
        }
    }
    return r;
}

/**
 * sup_{rho >= 0} (mu - mu~). Analytic when mu~ is a scaling of mu; otherwise
 * the maximum over a geometric grid [1e-4, rho_hi] refined by golden-section
 * around the best node, together with the limit capacity gap, with rho_hi
 * doubled until the result moves by less than 1e-6.
 */
template <typename Scalar>
Scalar link_gap(const FlowFunction<Scalar>& original, const FlowFunction<Scalar>& perturbed) {
    using std::abs;
    if (original.same_base(perturbed)) return original.capacity() - perturbed.capacity();

    auto gap = [&](Scalar rho) { return original.unchecked(rho) - perturbed.unchecked(rho); };
    auto sup_on = [&](Scalar hi) {
        const auto grid = geometric_grid<Scalar>(Scalar(1e-4), hi, 4000);
        std::size_t best = 0;
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (gap(grid[i]) > gap(grid[best])) best = i;
        Scalar a = grid[best == 0 ? 0 : best - 1];
        Scalar b = grid[std::min(best + 1, grid.size() - 1)];
        const Scalar phi = (std::sqrt(Scalar(5)) - 1) / 2;
        for (int it = 0; it < 200 && b - a > Scalar(1e-15) * std::max(Scalar(1), b); ++it) {
            const Scalar c = b - phi * (b - a);
            const Scalar d = a + phi * (b - a);
            if (gap(c) > gap(d))
                b = d;
            else
                a = c;
        }
        return std::max({gap(grid[best]), gap((a + b) / 2), original.capacity() - perturbed.capacity()});
    };

    Scalar hi = std::max(original.median_density(), perturbed.median_density()) * Scalar(50);
    Scalar value = sup_on(hi);
    for (int i = 0; i < 60; ++i) {
        hi *= 2;
        const Scalar next = sup_on(hi);
        const bool stable = abs(next - value) < Scalar(1e-6);
        value = std::max(value, next);
        if (stable) break;
    }
    return value;
}

template <typename Scalar>
struct PerturbationMetrics {
    VectorX<Scalar> gaps;     // per-link delta_e
    Scalar magnitude = 0;     // sum of gaps
    VectorX<Scalar> stretch;  // per-link median ratio
    Scalar stretching = 1;    // max ratio
};

// Certifies every replacement and computes its gaps and stretching. Throws
// Error naming the first inadmissible link.
template <typename Scalar>
PerturbationMetrics<Scalar> analyze_perturbation(std::span<const FlowFunction<Scalar>> flows,
                                                 const PerturbationSpec<Scalar>& spec) {
    const auto m = static_cast<Eigen::Index>(flows.size());
    PerturbationMetrics<Scalar> out;
    out.gaps = VectorX<Scalar>::Zero(m);
    out.stretch = VectorX<Scalar>::Ones(m);
    for (const auto& [e, ff] : spec.replacements) {
        if (e < 0 || e >= m) throw Error("perturbation names unknown link");
        auto cert = certify_admissible(flows[e], ff);
        if (!cert.ok) throw Error("inadmissible perturbation on link index " + std::to_string(e) + ": " +
                                  cert.problems.front());
        out.gaps[e] = link_gap(flows[e], ff);
        out.stretch[e] = ff.median_density() / flows[e].median_density();
    }
    out.magnitude = out.gaps.sum();
    out.stretching = m > 0 ? out.stretch.maxCoeff() : Scalar(1);
    return out;
}

template <typename Scalar>
Scalar perturbation_magnitude(std::span<const FlowFunction<Scalar>> flows, const PerturbationSpec<Scalar>& spec) {
    return analyze_perturbation(flows, spec).magnitude;
}

template <typename Scalar>
Scalar stretching_coefficient(std::span<const FlowFunction<Scalar>> flows, const PerturbationSpec<Scalar>& spec) {
    return analyze_perturbation(flows, spec).stretching;
}

}  // namespace dfn

#endif  // DFN_FLOWS_HPP
