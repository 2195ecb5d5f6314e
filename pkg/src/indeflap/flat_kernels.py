"""Closed-form transversal machinery for the flat case ``K = 0``.

Each transversal mode ``n`` has an entire characteristic function

    D(lam) = eps_- CS(-w, b) SC(u, a) - eps_+ CS(u, a) SC(-w, b),
    u = lam/eps_+ - q,   w = lam/eps_- + q,   q = (n pi / c)**2,

whose real zeros are exactly the eigenvalues, including the threshold
eigenvalues ``lam = eps_+ q`` (``u = 0``) and ``lam = -eps_- q`` (``w = 0``).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .eigenfunction import NotARootError, PiecewiseEigenfunction
from .geometry import InvalidSpecError, ProblemSpec, require_valid

SERIES_SWITCH = 1e-6
_SERIES_TERMS = 8
_SC_COEF = np.array([(-1.0) ** k / math.factorial(2 * k + 1) for k in range(_SERIES_TERMS)])
_CS_COEF = np.array([(-1.0) ** k / math.factorial(2 * k) for k in range(_SERIES_TERMS)])


class NoCentralRootError(ValueError):
    """No eigenvalue inside ``(-eps q, eps q)``; the root sits beyond a threshold."""


@dataclasses.dataclass(frozen=True)
class ModeParams:
    n: int
    q: float
    eps_plus: float
    eps_minus: float

    @classmethod
    def of(cls, spec: ProblemSpec, n: int) -> "ModeParams":
        if n < 1:
            raise ValueError(f"mode index must be >= 1, got {n}")
        return cls(n, spec.q(n), spec.eps_plus, spec.eps_minus)

    def u(self, lam):
        return np.asarray(lam, dtype=float) / self.eps_plus - self.q

    def w(self, lam):
        return np.asarray(lam, dtype=float) / self.eps_minus + self.q


def _series(z, L, coef, odd):
    zl2 = z * L * L
    acc = np.zeros_like(zl2)
    for ck in coef[::-1]:
        acc = acc * zl2 + ck
    return acc * L if odd else acc


def SC(z, L):
    """``sin(sqrt(z) L)/sqrt(z)``, continued to ``sinh`` for ``z < 0``; ``L`` at 0."""
    z, L = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(L, dtype=float))
    out = np.empty(z.shape)
    small = np.abs(z * L * L) < SERIES_SWITCH
    pos = (z > 0) & ~small
    neg = (z < 0) & ~small
    if np.any(small):
        out[small] = _series(z[small], L[small], _SC_COEF, True)
    if np.any(pos):
        s = np.sqrt(z[pos])
        out[pos] = np.sin(s * L[pos]) / s
    if np.any(neg):
        s = np.sqrt(-z[neg])
        out[neg] = np.sinh(s * L[neg]) / s
    return out if out.ndim else float(out)


def CS(z, L):
    """``cos(sqrt(z) L)``, continued to ``cosh`` for ``z < 0``."""
    z, L = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(L, dtype=float))
    out = np.empty(z.shape)
    small = np.abs(z * L * L) < SERIES_SWITCH
    pos = (z > 0) & ~small
    neg = (z < 0) & ~small
    if np.any(small):
        out[small] = _series(z[small], L[small], _CS_COEF, False)
    if np.any(pos):
        out[pos] = np.cos(np.sqrt(z[pos]) * L[pos])
    if np.any(neg):
        out[neg] = np.cosh(np.sqrt(-z[neg]) * L[neg])
    return out if out.ndim else float(out)


def _growth(z, L):
    """Exponential growth rate ``sqrt(max(-z, 0)) L`` of SC and CS."""
    return np.sqrt(np.maximum(-np.asarray(z, dtype=float), 0.0)) * L


def SC_scaled(z, L):
    """``SC(z, L) exp(-sqrt(max(-z,0)) L)``; finite for any ``z``."""
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    g = _growth(zz, L)
    out = np.asarray(SC(zz, L), dtype=float) * np.exp(-np.minimum(g, 20.0))
    big = g > 20.0
    if np.any(big):
        s = np.sqrt(-zz[big])
        out[big] = -np.expm1(-2.0 * s * L) / (2.0 * s)
    return out if np.ndim(z) else float(out[0])


def CS_scaled(z, L):
    """``CS(z, L) exp(-sqrt(max(-z,0)) L)``."""
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    g = _growth(zz, L)
    out = np.asarray(CS(zz, L), dtype=float) * np.exp(-np.minimum(g, 20.0))
    big = g > 20.0
    if np.any(big):
        s = np.sqrt(-zz[big])
        out[big] = 0.5 * (1.0 + np.exp(-2.0 * s * L))
    return out if np.ndim(z) else float(out[0])


def _flat_mode(spec: ProblemSpec, n: int) -> ModeParams:
    require_valid(spec)
    if spec.K != 0:
        raise InvalidSpecError([f"flat kernels need K = 0 (K={spec.K})"])
    return ModeParams.of(spec, n)


def char_terms(spec: ProblemSpec, n: int, lam, scaled: bool = False):
    """The two products of the characteristic function.

    Returns ``(t_minus, t_plus)`` with ``D = eps_- * t_minus - eps_+ * t_plus``.
    With ``scaled=True`` both are multiplied by the same positive factor
    ``exp(-a sqrt(max(-u,0)) - b sqrt(max(w,0)))`` which removes overflow but
    keeps the zero set and the sign.
    """
    mode = _flat_mode(spec, n)
    u, w = mode.u(lam), mode.w(lam)
    if scaled:
        sc, cs = SC_scaled, CS_scaled
    else:
        sc, cs = SC, CS
    t_minus = np.multiply(cs(-w, spec.b), sc(u, spec.a))
    t_plus = np.multiply(cs(u, spec.a), sc(-w, spec.b))
    return t_minus, t_plus


def char_eval(spec: ProblemSpec, n: int, lam, scaled: bool = False):
    """Entire characteristic function ``D(lam)`` of transversal mode ``n``.

    ``lam`` is an eigenvalue of the mode-``n`` operator iff the result vanishes.
    Raises InvalidSpecError when ``spec.K != 0``.
    """
    t_minus, t_plus = char_terms(spec, n, lam, scaled)
    out = spec.eps_minus * t_minus - spec.eps_plus * t_plus
    return out if np.ndim(out) else float(out)


def char_scale(spec: ProblemSpec, n: int, lam, scaled: bool = False):
    """Magnitude of the individual terms; the natural unit for residuals."""
    t_minus, t_plus = char_terms(spec, n, lam, scaled)
    out = spec.eps_minus * np.abs(t_minus) + spec.eps_plus * np.abs(t_plus)
    return out if np.ndim(out) else float(out)


def tan_tanh_sides(spec: ProblemSpec, n: int, lam: float):
    """Both sides of the tan/tanh form of the characteristic equation.

    Only meaningful off the thresholds; returned for cross-checking roots.
    """
    mode = _flat_mode(spec, n)
    u, w = float(mode.u(lam)), float(mode.w(lam))
    lhs = SC(u, spec.a) / CS(u, spec.a) / spec.eps_plus
    rhs = SC(-w, spec.b) / CS(-w, spec.b) / spec.eps_minus
    return lhs, rhs


class FlatEigenfunction(PiecewiseEigenfunction):
    """Closed-form transversal eigenfunction for ``K = 0``.

    ``psi_+(x) = SC(-w, b) SC(u, a - x)`` and ``psi_-(x) = SC(u, a) SC(-w, b + x)``
    (times a normalization), which reduce to the linear-times-sinh forms at the
    thresholds ``u = 0`` or ``w = 0``. Continuity at 0 holds exactly because both
    branches evaluate the same product.
    """

    representation = "closed_form"

    def __init__(self, spec: ProblemSpec, n: int, lam: float, rtol: float = 1e-10):
        mode = ModeParams.of(spec, n)
        self.u = float(mode.u(lam))
        self.w = float(mode.w(lam))
        amp_plus = SC(-self.w, spec.b)
        amp_minus = SC(self.u, spec.a)
        # power-of-two rescaling is exact, so the interface products stay equal
        self._amp_plus = math.ldexp(amp_plus, -math.frexp(amp_plus)[1]) if amp_plus else 0.0
        self._amp_minus = math.ldexp(amp_minus, -math.frexp(amp_minus)[1]) if amp_minus else 0.0
        self._shift_plus = -math.frexp(amp_minus)[1] if amp_minus else 0
        self._shift_minus = -math.frexp(amp_plus)[1] if amp_plus else 0
        super().__init__(spec, n, lam, rtol)

    def _plus(self, x):
        x = np.asarray(x, dtype=float)
        t = self.spec.a - x
        val = np.ldexp(self._amp_plus * SC(self.u, t), self._shift_plus)
        slope = np.ldexp(-self._amp_plus * CS(self.u, t), self._shift_plus)
        return val, slope

    def _minus(self, x):
        x = np.asarray(x, dtype=float)
        t = self.spec.b + x
        val = np.ldexp(self._amp_minus * SC(-self.w, t), self._shift_minus)
        slope = np.ldexp(self._amp_minus * CS(-self.w, t), self._shift_minus)
        return val, slope

    def closed_form_norm_squared(self) -> float:
        """Exact ``int psi^2`` of the normalized function (cross-check only)."""
        a, b = self.spec.a, self.spec.b
        plus = _sc_square_integral(self.u, a) * math.ldexp(self._amp_plus, self._shift_plus) ** 2
        minus = _sc_square_integral(-self.w, b) * math.ldexp(self._amp_minus, self._shift_minus) ** 2
        return (plus + minus) * self.norm_constant ** 2


def _sc_square_integral(z: float, L: float) -> float:
    """``int_0^L SC(z, t)**2 dt`` in closed form."""
    if abs(z * L * L) < 1e-3:
        # series: sum_k c_k z^k, from integrating the squared SC series
        terms = [L ** 3 / 3.0, -z * L ** 5 / 15.0, 2.0 * z * z * L ** 7 / 315.0,
                 -z ** 3 * L ** 9 / 2835.0, 2.0 * z ** 4 * L ** 11 / 155925.0]
        return sum(terms)
    return (2.0 * L - SC(z, 2.0 * L)) / (4.0 * z)


def eigenfunction_flat(spec: ProblemSpec, n: int, lam: float,
                       root_tol: float = 1e-8) -> FlatEigenfunction:
    """Closed-form normalized eigenfunction at the eigenvalue ``lam``.

    Raises NotARootError if ``|D(lam)|`` exceeds ``root_tol`` relative to the
    size of its two terms.
    """
    value = char_eval(spec, n, lam, scaled=True)
    scale = char_scale(spec, n, lam, scaled=True)
    if abs(value) > root_tol * scale:
        raise NotARootError(
            f"lambda={lam!r} is not a root of mode {n}: relative residual {abs(value) / scale:.3e}"
        )
    return FlatEigenfunction(spec, n, lam)


def _xcoth(x, L):
    """``x / tanh(L x)`` written as ``x + 2x/expm1(2Lx)``; ``1/L`` at ``x = 0``."""
    if x == 0.0:
        return 1.0 / L
    return x + 2.0 * x / math.expm1(2.0 * L * x)


def central_difference(spec: ProblemSpec, n: int, lam: float) -> float:
    """Monotone reciprocal-difference function on ``(-eps q, eps q)`` at ``kappa = 1``.

    Evaluated without cancellation: the leading difference is rewritten as
    ``2 lam / (s1 + s2)`` so tiny roots keep full relative precision.
    """
    eps = spec.eps_plus
    q = spec.q(n)
    s1 = math.sqrt(max(lam / eps + q, 0.0))
    s2 = math.sqrt(max(q - lam / eps, 0.0))
    lead = 2.0 * lam / (s1 + s2)
    tail1 = 2.0 * s1 / math.expm1(2.0 * spec.b * s1) if s1 > 0 else 1.0 / spec.b - s1
    tail2 = 2.0 * s2 / math.expm1(2.0 * spec.a * s2) if s2 > 0 else 1.0 / spec.a - s2
    return lead + eps * (tail1 - tail2)


def central_root(spec: ProblemSpec, n: int, max_iter: int = 4000) -> float:
    """Unique eigenvalue in ``(-eps q, eps q)`` for ``eps_+ = eps_-``, ``K = 0``.

    Bisection on the increasing reciprocal-difference function. Its sign at the
    interval ends is checked; when both ends share a sign the eigenvalue has
    left the open interval (it then sits at or beyond a threshold) and
    NoCentralRootError is raised.
    """
    _flat_mode(spec, n)
    if spec.eps_plus != spec.eps_minus:
        raise ValueError("central_root requires eps_plus == eps_minus")
    eps = spec.eps_plus
    q = spec.q(n)
    lo, hi = -eps * q, eps * q
    g_lo = central_difference(spec, n, lo)
    g_hi = central_difference(spec, n, hi)
    if g_lo >= 0 or g_hi <= 0:
        raise NoCentralRootError(
            f"mode {n}: no sign change on (-eps q, eps q) "
            f"(G(-eps q)={g_lo:.6g}, G(eps q)={g_hi:.6g})"
        )
    if central_difference(spec, n, 0.0) == 0.0:
        return 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        g = central_difference(spec, n, mid)
        if g == 0.0:
            return mid
        if g < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(abs(lo), abs(hi)) and lo * hi > 0:
            break
    return 0.5 * (lo + hi)
