"""Approximate zero modes at critical contrast and decay of near-zero eigenvalues.

At ``eps_+ = eps_-`` the function ``F_n(x) = exp(-(n pi / c) int_0^|x| dt/f)``
solves ``A_K [F_n sin(n pi y / c)] = 0`` on each side and meets both interface
conditions. Cutting it off smoothly at ``|x| in [a1, a2]`` yields Dirichlet
admissible functions whose residual lives only on the transition layer, so
``||A phi_n|| / ||phi_n||`` decays like ``F_n(a1)``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Iterable, List, Optional, Sequence

import mpmath
import numpy as np
from scipy.integrate import quad

from . import rootfinder
from .geometry import (InvalidSpecError, ProblemSpec, contrast, drift, inverse_metric_integral,
                       metric_factor, require_valid, transverse_mode)
from .quadrature import adaptive_simpson


def _h(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def _h_derivs(t):
    t = np.asarray(t, dtype=float)
    h = _h(t)
    d1 = np.zeros_like(t)
    d2 = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    with np.errstate(over="ignore", invalid="ignore"):
        d1[pos] = np.where(h[pos] > 0, h[pos] / tp ** 2, 0.0)
        d2[pos] = np.where(h[pos] > 0, h[pos] * (1.0 / tp ** 4 - 2.0 / tp ** 3), 0.0)
    return h, d1, d2


def smooth_step(t):
    """``S(t) = h(t) / (h(t) + h(1-t))`` with ``h(t) = exp(-1/t)``; C-infinity, 0 to 1 on [0, 1]."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    h, g = _h(t), _h(1.0 - t)
    return h / (h + g)


def smooth_step_derivatives(t):
    """``(S, S', S'')`` of the smooth step."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    h, h1, h2 = _h_derivs(t)
    g, g1, g2 = _h_derivs(1.0 - t)
    g1, g2 = -g1, g2          # derivatives of h(1 - t) with respect to t
    den = h + g
    num1 = h1 * g - h * g1
    s = h / den
    s1 = num1 / den ** 2
    s2 = (h2 * g - h * g2) / den ** 2 - 2.0 * num1 * (h1 + g1) / den ** 3
    return s, s1, s2


@dataclasses.dataclass(frozen=True)
class CutoffProfile:
    """``chi = 1`` on ``[0, a1]``, ``0`` beyond ``a2``, smooth and monotone between."""

    a1: float
    a2: float

    def __post_init__(self):
        if not 0 < self.a1 < self.a2:
            raise ValueError(f"need 0 < a1 < a2, got a1={self.a1}, a2={self.a2}")

    @classmethod
    def default(cls, spec: ProblemSpec) -> "CutoffProfile":
        r = min(spec.a, spec.b, 1.0)
        return cls(0.3 * r, 0.6 * r)

    def check(self, spec: ProblemSpec) -> "CutoffProfile":
        if not self.a2 < min(spec.a, spec.b):
            raise ValueError(f"cutoff a2={self.a2} must stay below min(a, b)={min(spec.a, spec.b)}")
        return self

    def derivatives(self, x):
        """``(chi, chi', chi'')`` at ``|x|``."""
        x = np.abs(np.asarray(x, dtype=float))
        w = self.a2 - self.a1
        s, s1, s2 = smooth_step_derivatives((x - self.a1) / w)
        return 1.0 - s, -s1 / w, -s2 / w ** 2

    def __call__(self, x):
        return self.derivatives(x)[0]


def zero_mode_profile(K: float, n: int, c: float, x):
    """``F_n(x) = exp(-(n pi / c) int_0^|x| dt/f)`` in closed form."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.exp(-(n * math.pi / c) * inverse_metric_integral(K, x))
    return out if out.ndim else float(out)


def general_metric_zero_solution(f: Callable[[float], float], n: int, c: float, x: float) -> float:
    """``exp(-(n pi / c) int_0^x dt / f(t))`` with the integral done by quadrature."""
    integral, _ = quad(lambda t: 1.0 / f(t), 0.0, x, epsabs=0.0, epsrel=1e-13, limit=200)
    return math.exp(-(n * math.pi / c) * integral)


@dataclasses.dataclass(frozen=True)
class SingularSequenceReport:
    n: int
    norm_phi: float
    norm_Aphi: float
    ratio: float
    bound: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def envelope(K: float, n: int, c: float, a1: float) -> float:
    """``n F_n(a1) (1 - F_n(a1)^2)^(-1/2)``; for ``K = 0`` this is ``n e^{-n pi a1/c} (1 - e^{-2 n pi a1/c})^{-1/2}``."""
    F = zero_mode_profile(K, n, c, a1)
    return n * F / math.sqrt(-math.expm1(2.0 * math.log(F))) if F > 0 else 0.0


def _require_critical(spec: ProblemSpec):
    require_valid(spec)
    if not contrast(spec).is_critical:
        raise InvalidSpecError([f"critical contrast eps_+ = eps_- required (kappa={spec.kappa!r})"])


class SingularElement:
    """Cut-off approximate zero mode ``phi_n(x, y) = F_n(|x|) chi(|x|) sqrt(2/c) sin(n pi y / c)``."""

    def __init__(self, spec: ProblemSpec, n: int, cutoff: Optional[CutoffProfile] = None):
        _require_critical(spec)
        self.spec = spec
        self.n = n
        self.cutoff = (cutoff or CutoffProfile.default(spec)).check(spec)
        self.k = n * math.pi / spec.c

    def transversal(self, x):
        """``F_n(|x|) chi(|x|)``."""
        return zero_mode_profile(self.spec.K, self.n, self.spec.c, x) * self.cutoff(x)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.transversal(x) * transverse_mode(self.n, self.spec.c, y)

    def applied_transversal(self, x):
        """Closed form of ``A_K`` on the transversal factor for ``x >= 0``.

        Only the terms with a derivative of the cutoff survive:
        ``eps F (2k chi'/f + p chi' - chi'')`` with ``p = -f'/f``.
        """
        x = np.asarray(x, dtype=float)
        K = self.spec.K
        F = zero_mode_profile(K, self.n, self.spec.c, x)
        _, c1, c2 = self.cutoff.derivatives(x)
        f = metric_factor(K, x)
        return self.spec.eps_plus * F * (2.0 * self.k * c1 / f + drift(K, x) * c1 - c2)

    def interface_data(self):
        """``(jump, flux residual)`` of the transversal factor at ``x = 0``."""
        # one-sided slopes of F(|x|) chi(|x|) at 0: chi' = 0 there, F'(0) = -k
        slope_plus, slope_minus = -self.k, self.k
        ep, em = self.spec.eps_plus, self.spec.eps_minus
        flux = abs(ep * slope_plus + em * slope_minus) / max(abs(ep * slope_plus), abs(em * slope_minus))
        return 0.0, flux

    def norms(self, rtol: float = 1e-12):
        K = self.spec.K
        a1, a2 = self.cutoff.a1, self.cutoff.a2

        def mass(x):
            return self.transversal(x) ** 2 * metric_factor(K, x)

        def residual(x):
            return self.applied_transversal(x) ** 2 * metric_factor(K, x)

        norm2 = 2.0 * (adaptive_simpson(mass, 0.0, a1, rtol=rtol)
                       + adaptive_simpson(mass, a1, a2, rtol=rtol))
        res2 = 2.0 * adaptive_simpson(residual, a1, a2, rtol=rtol)
        return math.sqrt(norm2), math.sqrt(res2)

    def report(self) -> SingularSequenceReport:
        norm_phi, norm_aphi = self.norms()
        ratio = norm_aphi / norm_phi if norm_phi > 0 else math.nan
        bound = envelope(self.spec.K, self.n, self.spec.c, self.cutoff.a1)
        return SingularSequenceReport(self.n, norm_phi, norm_aphi, ratio, bound)

    def annihilation_residual(self, xs: Sequence[float], dps: int = 40) -> float:
        """Max over ``xs`` in ``[0, a1]`` of ``|A_K F_n| / (eps q F_n / f^2)``.

        The operator is applied by high-precision numerical differentiation of
        the closed-form ``F_n``, independently of the identity used in ``norms``.
        """
        K, c, n = self.spec.K, self.spec.c, self.n
        eps = self.spec.eps_plus
        worst = 0.0
        with mpmath.workdps(dps):
            k = mpmath.mpf(n) * mpmath.pi / c

            def f(x):
                if K > 0:
                    return mpmath.cos(mpmath.sqrt(K) * x)
                if K < 0:
                    return mpmath.cosh(mpmath.sqrt(-K) * x)
                return mpmath.mpf(1)

            def F(x):
                if K > 0:
                    s = mpmath.sqrt(K)
                    g = mpmath.atanh(mpmath.sin(s * x)) / s
                elif K < 0:
                    s = mpmath.sqrt(-K)
                    g = mpmath.atan(mpmath.sinh(s * x)) / s
                else:
                    g = x
                return mpmath.exp(-k * g)

            def flux(x):
                return eps * f(x) * mpmath.diff(F, x)

            for x in xs:
                x = mpmath.mpf(x)
                if x <= 0:
                    continue
                applied = -mpmath.diff(flux, x) / f(x) + eps * k ** 2 * F(x) / f(x) ** 2
                scale = eps * k ** 2 * F(x) / f(x) ** 2
                worst = max(worst, float(abs(applied) / scale))
        return worst


def singular_element(spec: ProblemSpec, n: int, cutoff: Optional[CutoffProfile] = None):
    """Report for the ``n``-th cut-off approximate zero mode, plus the element itself."""
    element = SingularElement(spec, n, cutoff)
    return element.report(), element


def residual_decay(spec: ProblemSpec, n_range: Iterable[int],
                   cutoff: Optional[CutoffProfile] = None) -> List[SingularSequenceReport]:
    return [SingularElement(spec, n, cutoff).report() for n in n_range]


def envelope_constant(reports: Sequence[SingularSequenceReport]) -> float:
    """Smallest ``C`` with ``ratio <= C * bound`` over all reports."""
    return max(r.ratio / r.bound for r in reports if r.bound > 0)


def strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values[:-1], values[1:]))


@dataclasses.dataclass(frozen=True)
class DecayRow:
    n: int
    min_abs_lambda: float
    scaled: float          # min|lambda| * exp(n pi a*/c)
    sharp: float           # min|lambda| * exp(2 n pi a*/c) / q

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class DecayTable:
    rows: List[DecayRow]

    @property
    def scaled(self) -> List[float]:
        return [r.scaled for r in self.rows]

    @property
    def strictly_decreasing(self) -> bool:
        return strictly_decreasing(self.scaled)

    @property
    def last_over_first(self) -> float:
        return self.rows[-1].scaled / self.rows[0].scaled

    def to_dicts(self) -> List[dict]:
        return [r.to_dict() for r in self.rows]


def min_abs_eigenvalue(spec: ProblemSpec, n: int) -> float:
    """``min_m |lambda_{n,m}|`` from the records with ``m`` in ``{-1, 0, 1}``."""
    recs = rootfinder.enumerate_modes(spec, n, (-1, 1))
    return min(abs(r.lam) for r in recs)


def critical_decay_probe(spec: ProblemSpec, n_range: Iterable[int],
                         require_critical: bool = True) -> DecayTable:
    """Smallest eigenvalue magnitude per mode and its exponentially rescaled forms.

    With ``require_critical=False`` the same table is produced for any flat
    spec, which serves as the non-critical control.
    """
    require_valid(spec)
    if spec.K != 0:
        raise InvalidSpecError([f"decay probe is for K = 0 (K={spec.K})"])
    if require_critical:
        if not contrast(spec).is_critical:
            raise InvalidSpecError([f"critical contrast required (kappa={spec.kappa!r})"])
        if spec.a == spec.b:
            raise InvalidSpecError(["a != b required: for a = b zero is an eigenvalue of every mode"])
    a_star = min(spec.a, spec.b)
    rows = []
    for n in n_range:
        lam = min_abs_eigenvalue(spec, n)
        e = n * math.pi * a_star / spec.c
        rows.append(DecayRow(n, lam, lam * math.exp(e), lam * math.exp(2.0 * e) / spec.q(n)))
    return DecayTable(rows)
