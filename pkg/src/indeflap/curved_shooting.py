"""Shooting characteristic function for curved (and flat) transversal modes.

After the gauge transform ``psi = f**(-1/2) u`` the mode-``n`` problem becomes a
flat string with an even effective potential ``V``:

    -u'' + V u =  lam/eps_+ u   on (0, a),
    -u'' + V u = -lam/eps_- u   on (-b, 0).

Both one-sided solutions are shot from their Dirichlet ends towards the
interface. The gauge factor has zero slope at ``x = 0``, so the interface
conditions carry over unchanged and the 4x4 matching determinant collapses to

    M(lam) = eps_- u_+(0) u_-'(0) + eps_+ u_+'(0) u_-(0).
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp

from .eigenfunction import NotARootError, PiecewiseEigenfunction
from .geometry import ProblemSpec, half_range, metric_factor_derivatives, require_valid

RTOL = 1e-10
ATOL = 1e-10
FALLBACK_STEPS = 20000
# growth allowed inside one integration chunk before renormalizing
_CHUNK_LOG_GROWTH = 150.0

Potential = Callable[[np.ndarray], np.ndarray]


class IntegratorError(RuntimeError):
    """Raised when neither the adaptive nor the fixed-step integrator succeeds."""


@dataclasses.dataclass(frozen=True)
class ShootingState:
    side: str
    x: float
    value: float
    slope: float
    lam: float


@dataclasses.dataclass(frozen=True)
class EffectivePotential:
    """Flat-gauge potential of mode ``n`` on a surface of curvature ``K``."""

    K: float
    n: int
    c: float

    def __call__(self, x):
        return effective_potential(self.K, self.n, self.c, x)

    def bounds(self, lo: float, hi: float, samples: int = 257):
        """Min and max of the potential over ``[lo, hi]`` (it is monotone in |x|)."""
        xs = np.linspace(lo, hi, samples)
        vals = self(xs)
        return float(np.min(vals)), float(np.max(vals))


def effective_potential(K: float, n: int, c: float, x):
    """Flat-gauge potential of transversal mode ``n``.

    For ``K > 0`` this is ``(8q - 3K - K cos(2 sqrt(K) x)) / (8 cos^2(sqrt(K) x))``,
    for ``K < 0`` the hyperbolic continuation, and ``q`` for ``K = 0``.
    """
    q = (n * math.pi / c) ** 2
    x = np.asarray(x, dtype=float)
    if K > 0:
        if np.any(np.abs(x) >= half_range(K)):
            raise ValueError(f"potential undefined at |x| >= pi/(2 sqrt K) for K={K}")
        s = math.sqrt(K)
        cx = np.cos(s * x)
        out = (8.0 * q - 3.0 * K - K * np.cos(2.0 * s * x)) / (8.0 * cx * cx)
    elif K < 0:
        s = math.sqrt(-K)
        cx = np.cosh(s * x)
        out = (8.0 * q - 3.0 * K - K * np.cosh(2.0 * s * x)) / (8.0 * cx * cx)
    else:
        out = np.full_like(x, q)
    return out if out.ndim else float(out)


def general_potential(f, df, d2f, n: int, c: float) -> Potential:
    """Potential ``f''/(2f) - f'^2/(4f^2) + q/f^2`` for an arbitrary even metric factor."""
    q = (n * math.pi / c) ** 2

    def V(x):
        fx, dfx, d2fx = f(x), df(x), d2f(x)
        return d2fx / (2.0 * fx) - dfx ** 2 / (4.0 * fx ** 2) + q / fx ** 2

    return V


def metric_potential(K: float, n: int, c: float) -> Potential:
    """``general_potential`` fed with the constant-curvature metric factor."""
    return general_potential(
        lambda x: metric_factor_derivatives(K, x)[0],
        lambda x: metric_factor_derivatives(K, x)[1],
        lambda x: metric_factor_derivatives(K, x)[2],
        n, c,
    )


def _rk4_fixed(rhs, y0, t0, t1, steps):
    h = (t1 - t0) / steps
    y = np.array(y0, dtype=float)
    t = t0
    for _ in range(steps):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def _integrate(rhs, y0, t0, t1, rtol, atol, fallback_steps, dense=False):
    sol = solve_ivp(rhs, (t0, t1), y0, method="RK45", rtol=rtol, atol=atol,
                    vectorized=True, dense_output=dense)
    if sol.status == 0 and np.all(np.isfinite(sol.y[:, -1])):
        return sol.y[:, -1], (sol.sol if dense else None)
    if dense:
        raise IntegratorError(f"adaptive integration failed near x={sol.t[-1]:.6g}: {sol.message}")

    def rhs_flat(t, y):
        return rhs(t, y.reshape(-1, 1)).ravel() if y.ndim == 1 else rhs(t, y)

    y = _rk4_fixed(rhs_flat, np.ravel(y0), t0, t1, fallback_steps)
    if not np.all(np.isfinite(y)):
        raise IntegratorError(
            f"adaptive integration failed near x={sol.t[-1]:.6g} and the fixed-step "
            f"fallback produced non-finite values"
        )
    return y, None


def shoot_side(V: Potential, mu, length: float, rtol: float = RTOL, atol: float = ATOL,
               fallback_steps: int = FALLBACK_STEPS):
    """Shoot ``u'' = (V - mu) u`` from ``x = length`` (``u=0, u'=-1``) to ``x = 0``.

    ``mu`` may be an array; all values are integrated together by scipy's
    RK45. Returns ``(u(0), u'(0), log_scale)`` where the true solution is the
    returned pair times ``exp(log_scale)``; chunked renormalization keeps it
    finite for any growth rate.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    m = mu.size
    v_max = float(np.max(V(np.linspace(0.0, length, 65))))
    rate = math.sqrt(max(v_max - float(np.min(mu)), 0.0)) + 1e-300
    chunks = max(1, int(math.ceil(rate * length / _CHUNK_LOG_GROWTH)))
    edges = np.linspace(length, 0.0, chunks + 1)

    def rhs(x, y):
        y = y.reshape(2, m, -1)
        vx = V(np.asarray(x, dtype=float))
        du = y[1]
        ddu = (vx - mu[:, None]) * y[0]
        return np.concatenate([du, ddu]).reshape(2 * m, -1)

    state = np.concatenate([np.zeros(m), -np.ones(m)])
    log_scale = np.zeros(m)
    for t0, t1 in zip(edges[:-1], edges[1:]):
        state, _ = _integrate(rhs, state, t0, t1, rtol, atol, fallback_steps // chunks + 1)
        u, du = state[:m], state[m:]
        norm = np.hypot(u, du)
        if np.any(norm == 0) or not np.all(np.isfinite(norm)):
            raise IntegratorError(f"degenerate shooting state at x={t1:.6g}")
        if chunks > 1:
            state = np.concatenate([u / norm, du / norm])
            log_scale += np.log(norm)
    return state[:m], state[m:], log_scale


def shoot_side_fast(K: float, q: float, mu, length: float, total_length: float,
                    rtol: float = RTOL, atol: float = ATOL):
    """Compiled Dormand-Prince 5(4) version of ``shoot_side`` for the closed-form potential.

    Each ``mu`` gets its own step-size control. When adaptivity stalls the
    affected value is recomputed by fixed-step RK4 with step
    ``total_length / FALLBACK_STEPS``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    u, du, logs, status = _dp45_batch(float(K), float(q), mu, float(length), rtol, atol)
    bad = np.flatnonzero(status != 0)
    if bad.size:
        steps = max(1, int(math.ceil(FALLBACK_STEPS * length / total_length)))
        for i in bad:
            u[i], du[i], logs[i], ok = _rk4_fixed_potential(float(K), float(q), mu[i], float(length), steps)
            if not ok:
                raise IntegratorError(
                    f"step control underflow near x={status[i]:.6g} for mu={mu[i]!r} "
                    f"and the fixed-step fallback failed"
                )
    return u, du, logs


@njit(cache=True)
def _potential_at(K, q, x):
    if K > 0.0:
        s = math.sqrt(K)
        cx = math.cos(s * x)
        return (8.0 * q - 3.0 * K - K * math.cos(2.0 * s * x)) / (8.0 * cx * cx)
    if K < 0.0:
        s = math.sqrt(-K)
        cx = math.cosh(s * x)
        return (8.0 * q - 3.0 * K - K * math.cosh(2.0 * s * x)) / (8.0 * cx * cx)
    return q


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@njit(cache=True)
def _dp45_one(K, q, mu, length, rtol, atol, C, A, B, E):
    x = length
    y0, y1 = 0.0, -1.0
    log_scale = 0.0
    rate = math.sqrt(abs(_potential_at(K, q, length) - mu)) + 1.0
    h = -min(length, 0.01 / rate)
    h_min = 1e-14 * length
    k0 = np.empty(7)
    k1 = np.empty(7)
    while x > 0.0:
        if x + h < 0.0:
            h = -x
        for s in range(7):
            z0, z1 = y0, y1
            for j in range(s):
                z0 += h * A[s, j] * k0[j]
                z1 += h * A[s, j] * k1[j]
            xs = x + C[s] * h
            k0[s] = z1
            k1[s] = (_potential_at(K, q, xs) - mu) * z0
        n0, n1 = y0, y1
        e0, e1 = 0.0, 0.0
        for s in range(7):
            n0 += h * B[s] * k0[s]
            n1 += h * B[s] * k1[s]
            e0 += h * E[s] * k0[s]
            e1 += h * E[s] * k1[s]
        sc0 = atol + rtol * max(abs(y0), abs(n0))
        sc1 = atol + rtol * max(abs(y1), abs(n1))
        err = math.sqrt(0.5 * ((e0 / sc0) ** 2 + (e1 / sc1) ** 2))
        if err <= 1.0:
            x = x + h
            if x < 0.5 * h_min:
                x = 0.0
            y0, y1 = n0, n1
            norm = math.hypot(y0, y1)
            if norm > 1e100:
                y0 /= norm
                y1 /= norm
                log_scale += math.log(norm)
            fac = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** -0.2)
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        if not (math.isfinite(n0) and math.isfinite(n1)):
            fac = 0.2
        h *= fac
        if abs(h) < h_min and x > 0.0:
            return y0, y1, log_scale, x
    return y0, y1, log_scale, 0.0


@njit(cache=True)
def _dp45_batch_impl(K, q, mu, length, rtol, atol, C, A, B, E):
    m = mu.size
    u = np.empty(m)
    du = np.empty(m)
    logs = np.empty(m)
    status = np.zeros(m)
    for i in range(m):
        u[i], du[i], logs[i], status[i] = _dp45_one(K, q, mu[i], length, rtol, atol, C, A, B, E)
    return u, du, logs, status


def _dp45_batch(K, q, mu, length, rtol, atol):
    return _dp45_batch_impl(K, q, np.ascontiguousarray(mu), length, rtol, atol, _C, _A, _B, _E)


@njit(cache=True)
def _rk4_fixed_potential(K, q, mu, length, steps):
    h = -length / steps
    y0, y1 = 0.0, -1.0
    log_scale = 0.0
    x = length
    for _ in range(steps):
        a0, a1 = y1, (_potential_at(K, q, x) - mu) * y0
        m0 = y0 + 0.5 * h * a0
        m1 = y1 + 0.5 * h * a1
        b0, b1 = m1, (_potential_at(K, q, x + 0.5 * h) - mu) * m0
        m0 = y0 + 0.5 * h * b0
        m1 = y1 + 0.5 * h * b1
        c0, c1 = m1, (_potential_at(K, q, x + 0.5 * h) - mu) * m0
        m0 = y0 + h * c0
        m1 = y1 + h * c1
        d0, d1 = m1, (_potential_at(K, q, x + h) - mu) * m0
        y0 += h / 6.0 * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
        y1 += h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        x += h
        norm = math.hypot(y0, y1)
        if not math.isfinite(norm):
            return y0, y1, log_scale, False
        if norm > 1e100:
            y0 /= norm
            y1 /= norm
            log_scale += math.log(norm)
    return y0, y1, log_scale, True


def _potential_for(spec: ProblemSpec, n: int, potential: Optional[Potential]) -> Potential:
    if potential is not None:
        return potential
    if spec.K == 0:
        q = spec.q(n)
        return lambda x: np.full_like(np.asarray(x, dtype=float), q)
    return EffectivePotential(spec.K, n, spec.c)


@dataclasses.dataclass(frozen=True)
class MatchResult:
    """Interface data of the two shot solutions for a batch of ``lam``."""

    lam: np.ndarray
    u_plus: np.ndarray
    du_plus: np.ndarray
    u_minus: np.ndarray
    du_minus: np.ndarray
    log_scale: np.ndarray
    eps_plus: float
    eps_minus: float

    @property
    def normalized(self) -> np.ndarray:
        """Determinant divided by the norms of both interface states (sign-exact)."""
        det = (self.eps_minus * self.u_plus * self.du_minus
               + self.eps_plus * self.du_plus * self.u_minus)
        return det / (np.hypot(self.u_plus, self.du_plus) * np.hypot(self.u_minus, self.du_minus))

    @property
    def relative(self) -> np.ndarray:
        """Determinant relative to the size of its two terms."""
        t1 = self.eps_minus * self.u_plus * self.du_minus
        t2 = self.eps_plus * self.du_plus * self.u_minus
        den = np.abs(t1) + np.abs(t2)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, (t1 + t2) / den, 0.0)

    @property
    def raw(self) -> np.ndarray:
        det = (self.eps_minus * self.u_plus * self.du_minus
               + self.eps_plus * self.du_plus * self.u_minus)
        with np.errstate(over="ignore"):
            return det * np.exp(self.log_scale)


def shoot_batch(spec: ProblemSpec, n: int, lam, potential: Optional[Potential] = None,
                rtol: float = RTOL, atol: float = ATOL, engine: str = "auto") -> MatchResult:
    """Interface states of both shot solutions for every ``lam``.

    ``engine="compiled"`` uses the per-value Dormand-Prince core (closed-form
    potentials only), ``"scipy"`` the vectorized RK45 of scipy; ``"auto"``
    picks the compiled core whenever no custom potential is given.
    """
    require_valid(spec)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if engine == "auto":
        engine = "scipy" if potential is not None else "compiled"
    mu_p, mu_m = lam / spec.eps_plus, -lam / spec.eps_minus
    if engine == "compiled":
        if potential is not None:
            raise ValueError("the compiled engine only supports the closed-form potential")
        total = spec.a + spec.b
        q = spec.q(n)
        up, dup, lp = shoot_side_fast(spec.K, q, mu_p, spec.a, total, rtol, atol)
        # minus side in the mirrored coordinate s = -x; V is even
        vm, dvm, lm = shoot_side_fast(spec.K, q, mu_m, spec.b, total, rtol, atol)
    elif engine == "scipy":
        V = _potential_for(spec, n, potential)
        up, dup, lp = shoot_side(V, mu_p, spec.a, rtol, atol)
        vm, dvm, lm = shoot_side(V, mu_m, spec.b, rtol, atol)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return MatchResult(lam, up, dup, vm, -dvm, lp + lm, spec.eps_plus, spec.eps_minus)


def shoot_match(spec: ProblemSpec, n: int, lam, potential: Optional[Potential] = None,
                normalized: bool = False, rtol: float = RTOL, atol: float = ATOL,
                engine: str = "auto"):
    """Matching determinant ``M(lam)`` of mode ``n``; zero exactly at eigenvalues.

    With the default seeds ``u(a) = 0, u'(a) = -1`` and ``u(-b) = 0, u'(-b) = 1``
    and ``K = 0`` this coincides with the flat characteristic function.
    ``normalized=True`` returns the overflow-free, sign-preserving version.
    """
    res = shoot_batch(spec, n, lam, potential, rtol, atol, engine)
    out = res.normalized if normalized else res.raw
    return out if np.ndim(lam) else float(out[0])


def shooting_states(spec: ProblemSpec, n: int, lam: float,
                    potential: Optional[Potential] = None):
    """``(plus, minus)`` ShootingStates at the interface for one ``lam``."""
    res = shoot_batch(spec, n, lam, potential)
    scale = float(np.exp(res.log_scale[0] / 2.0))
    plus = ShootingState("plus", 0.0, float(res.u_plus[0]) * scale,
                         float(res.du_plus[0]) * scale, float(lam))
    minus = ShootingState("minus", 0.0, float(res.u_minus[0]) * scale,
                          float(res.du_minus[0]) * scale, float(lam))
    return plus, minus


class CurvedEigenfunction(PiecewiseEigenfunction):
    """Sampled transversal eigenfunction from dense shooting output.

    Values come from the integrator's dense interpolant in the flat gauge and
    are mapped back by ``psi = f**(-1/2) u``.
    """

    representation = "sampled"

    def __init__(self, spec: ProblemSpec, n: int, lam: float,
                 potential: Optional[Potential] = None, samples: int = 401,
                 rtol: float = 1e-10):
        V = _potential_for(spec, n, potential)
        self._sol_plus = self._dense(V, lam / spec.eps_plus, spec.a)
        self._sol_minus = self._dense(V, -lam / spec.eps_minus, spec.b)
        up0, dup0 = self._sol_plus(0.0)
        vm0, dvm0 = self._sol_minus(0.0)
        um0, dum0 = vm0, -dvm0
        size = max(abs(dup0) * spec.a, abs(dum0) * spec.b)
        if max(abs(up0), abs(um0)) > 1e-8 * size:
            self._alpha, self._beta = um0, up0
        else:
            # both interface values vanish: scale by the flux condition instead
            self._alpha, self._beta = spec.eps_minus * dum0, -spec.eps_plus * dup0
        super().__init__(spec, n, lam, rtol)
        self.grid = np.concatenate([np.linspace(-spec.b, 0.0, samples)[:-1],
                                    np.linspace(0.0, spec.a, samples)])
        self.values, self.slopes = self.value_and_slope(self.grid)

    @staticmethod
    def _dense(V, mu, length):
        def rhs(x, y):
            return np.vstack([y[1], (V(np.asarray(x, dtype=float)) - mu) * y[0]])

        _, sol = _integrate(rhs, np.array([0.0, -1.0]), length, 0.0, RTOL * 1e-2,
                            ATOL * 1e-2, FALLBACK_STEPS, dense=True)
        return sol

    def _gauge(self, x, u, du):
        f, df, _ = metric_factor_derivatives(self.spec.K, x)
        root = np.sqrt(f)
        return u / root, (du - df * u / (2.0 * f)) / root

    def _plus(self, x):
        x = np.asarray(x, dtype=float)
        u, du = self._sol_plus(x)
        return self._gauge(x, self._alpha * u, self._alpha * du)

    def _minus(self, x):
        x = np.asarray(x, dtype=float)
        v, dv = self._sol_minus(-x)
        return self._gauge(x, self._beta * v, -self._beta * dv)

    def _raw_norm_squared(self, rtol):
        # the gauge makes psi^2 f = u^2, integrate in the flat gauge
        a, b = self.spec.a, self.spec.b
        from .quadrature import adaptive_simpson

        plus = adaptive_simpson(lambda x: (self._alpha * self._sol_plus(x)[0]) ** 2, 0.0, a, rtol=rtol)
        minus = adaptive_simpson(lambda x: (self._beta * self._sol_minus(-x)[0]) ** 2, -b, 0.0, rtol=rtol)
        return plus + minus


def transversal_solution(spec: ProblemSpec, n: int, lam: float,
                         potential: Optional[Potential] = None,
                         root_tol: float = 1e-7) -> CurvedEigenfunction:
    """Normalized manifold-gauge eigenfunction at an eigenvalue ``lam``.

    Raises NotARootError when the relative matching residual exceeds ``root_tol``.
    """
    require_valid(spec)
    res = shoot_batch(spec, n, lam, potential)
    rel = abs(float(res.relative[0]))
    if not rel <= root_tol:
        raise NotARootError(f"lambda={lam!r} is not a root of mode {n}: relative residual {rel:.3e}")
    return CurvedEigenfunction(spec, n, lam, potential)
