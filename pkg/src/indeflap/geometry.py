"""Problem description and constant-curvature geometry in Fermi coordinates.

The interface curve is a geodesic, so the metric is ``diag(1, f(x)**2)`` with
``f`` solving ``f'' + K f = 0``, ``f(0) = 1``, ``f'(0) = 0``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Any, Mapping

import numpy as np

TOL_CRIT = 1e-12

SPEC_KEYS = ("K", "a", "b", "c", "eps_plus", "eps_minus")


class InvalidSpecError(ValueError):
    """Raised when a ProblemSpec violates one of its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MetricDomainError(ValueError):
    """Raised when the metric factor degenerates (K > 0, |x| >= pi/(2 sqrt K))."""


@dataclasses.dataclass(frozen=True)
class ProblemSpec:
    """Rectangle ``(-b, a) x (0, c)`` on a surface of constant curvature ``K``.

    ``eps_plus`` is the permittivity on ``x > 0``; the permittivity on ``x < 0``
    is ``-eps_minus``.
    """

    K: float
    a: float
    b: float
    c: float
    eps_plus: float
    eps_minus: float

    @property
    def kappa(self) -> float:
        return self.eps_plus / self.eps_minus

    def q(self, n: int) -> float:
        """Squared transverse frequency ``(n pi / c)**2``."""
        return (n * math.pi / self.c) ** 2

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in SPEC_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProblemSpec":
        missing = [k for k in SPEC_KEYS if k not in data]
        if missing:
            raise KeyError(f"missing spec keys: {', '.join(missing)}")
        return cls(**{k: float(data[k]) for k in SPEC_KEYS})

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        return cls.from_dict(json.loads(text))


@dataclasses.dataclass(frozen=True)
class Contrast:
    kappa: float
    is_critical: bool


@dataclasses.dataclass(frozen=True)
class HomothetyResult:
    scaled_spec: ProblemSpec
    eigenvalue_factor: float


def contrast(spec: ProblemSpec, tol: float = TOL_CRIT) -> Contrast:
    kappa = spec.kappa
    return Contrast(kappa=kappa, is_critical=abs(kappa - 1.0) <= tol)


def half_range(K: float) -> float:
    """Largest admissible |x| for the metric factor (inf unless K > 0)."""
    if K > 0:
        return math.pi / (2.0 * math.sqrt(K))
    return math.inf


def metric_factor(K: float, x):
    """Jacobi field ``f(x)``: cos, 1 or cosh depending on the sign of ``K``."""
    x = np.asarray(x, dtype=float)
    if K > 0:
        if np.any(np.abs(x) >= half_range(K)):
            raise MetricDomainError(
                f"metric degenerates for K={K} at |x| >= pi/(2 sqrt K) = {half_range(K)}"
            )
        out = np.cos(math.sqrt(K) * x)
    elif K < 0:
        out = np.cosh(math.sqrt(-K) * x)
    else:
        out = np.ones_like(x)
    return out if out.ndim else float(out)


def metric_factor_derivatives(K: float, x):
    """Return ``(f, f', f'')`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(metric_factor(K, x), dtype=float)
    if K > 0:
        s = math.sqrt(K)
        df = -s * np.sin(s * x)
    elif K < 0:
        s = math.sqrt(-K)
        df = s * np.sinh(s * x)
    else:
        df = np.zeros_like(x)
    return f, df, -K * f


def drift(K: float, x):
    """First-order coefficient ``-f'/f`` of the transversal operator.

    Equals ``sqrt(K) tan(sqrt(K) x)``, continued to ``-sqrt|K| tanh(sqrt|K| x)``.
    """
    x = np.asarray(x, dtype=float)
    if K > 0:
        s = math.sqrt(K)
        return s * np.tan(s * x)
    if K < 0:
        s = math.sqrt(-K)
        return -s * np.tanh(s * x)
    return np.zeros_like(x)


def inverse_metric_integral(K: float, x):
    """Closed form of ``int_0^x dt / f(t)``."""
    x = np.asarray(x, dtype=float)
    if K > 0:
        s = math.sqrt(K)
        return np.arctanh(np.sin(s * x)) / s
    if K < 0:
        s = math.sqrt(-K)
        return np.arctan(np.sinh(s * x)) / s
    return x.copy()


def validate_spec(spec: ProblemSpec):
    """Return ``spec`` if it is admissible, otherwise the list of violations.

    Each violation names the offending field and the bound it breaks.
    """
    violations = []
    for name in ("a", "b", "c", "eps_plus", "eps_minus"):
        value = getattr(spec, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            violations.append(f"{name} > 0 violated ({name}={value!r})")
    if not math.isfinite(spec.K):
        violations.append(f"K must be finite (K={spec.K!r})")
    elif spec.K > 0:
        s = math.sqrt(spec.K)
        for name in ("a", "b"):
            value = getattr(spec, name)
            if math.isfinite(value) and value > 0 and s * value >= math.pi / 2:
                violations.append(
                    f"sqrt(K)*{name} < pi/2 violated "
                    f"(sqrt(K)*{name}={s * value:.17g} >= {math.pi / 2:.17g})"
                )
    return violations if violations else spec


def require_valid(spec: ProblemSpec) -> ProblemSpec:
    result = validate_spec(spec)
    if isinstance(result, list):
        raise InvalidSpecError(result)
    return spec


def homothety_scale(spec: ProblemSpec) -> HomothetyResult:
    """Rescale lengths by ``sqrt|K|`` so that the curvature becomes ``sign K``.

    Eigenvalues of ``spec`` are ``eigenvalue_factor`` times those of the
    scaled spec.
    """
    require_valid(spec)
    if spec.K == 0:
        return HomothetyResult(spec, 1.0)
    s = math.sqrt(abs(spec.K))
    scaled = spec.replace(
        K=math.copysign(1.0, spec.K), a=spec.a * s, b=spec.b * s, c=spec.c * s
    )
    return HomothetyResult(scaled, abs(spec.K))


def transverse_mode(n: int, c: float, y):
    """Normalized Dirichlet sine ``sqrt(2/c) sin(n pi y / c)``, exactly zero at its nodes."""
    t = np.remainder(n * (np.asarray(y, dtype=float) / c), 2.0)
    out = math.sqrt(2.0 / c) * np.sin(math.pi * t)
    out = np.where((t == 0.0) | (t == 1.0), 0.0, out)
    return out if out.ndim else float(out)
