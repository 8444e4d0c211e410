#ifndef DFN_INTEGRATOR_HPP
#define DFN_INTEGRATOR_HPP

#include "dfn/types.hpp"

namespace dfn {

// One classical fourth-order Runge-Kutta step of dx/dt = f(t, x).
template <typename Scalar, typename Rhs>
VectorX<Scalar> rk4_step(const Rhs& f, Scalar t, const VectorX<Scalar>& x, Scalar dt) {
    const Scalar half = dt / 2;
    const VectorX<Scalar> k1 = f(t, x);
    const VectorX<Scalar> k2 = f(t + half, VectorX<Scalar>(x + half * k1));
    const VectorX<Scalar> k3 = f(t + half, VectorX<Scalar>(x + half * k2));
    const VectorX<Scalar> k4 = f(t + dt, VectorX<Scalar>(x + dt * k3));
    return x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

// Integrates over [t0, t0 + steps*dt], calling observe(t, x) after each step.
template <typename Scalar, typename Rhs, typename Observer>
VectorX<Scalar> rk4_integrate(const Rhs& f, Scalar t0, VectorX<Scalar> x, Scalar dt, long steps, Observer&& observe) {
    for (long i = 1; i <= steps; ++i) {
        x = rk4_step(f, t0 + (i - 1) * dt, x, dt);
        observe(t0 + i * dt, x);
    }
    return x;
}

}  // namespace dfn

#endif  // DFN_INTEGRATOR_HPP
