"""Transversal eigenfunctions on ``[-b, 0] U [0, a]``."""

from __future__ import annotations

import math

import numpy as np

from .geometry import ProblemSpec, metric_factor
from .quadrature import adaptive_simpson


class NotARootError(ValueError):
    """Raised when an eigenfunction is requested at a non-eigenvalue."""


class PiecewiseEigenfunction:
    """Base class for a two-piece transversal function in the manifold gauge.

    Subclasses provide the unnormalized branches ``_plus(x)`` on ``[0, a]`` and
    ``_minus(x)`` on ``[-b, 0]``, each returning ``(value, slope)``. The
    instance multiplies both by ``norm_constant`` so that the weighted
    ``L^2(J_1, f dx)`` norm is one.
    """

    representation = "abstract"
    gauge = "manifold"

    def __init__(self, spec: ProblemSpec, n: int, lam: float, rtol: float = 1e-10):
        self.spec = spec
        self.n = n
        self.lam = float(lam)
        self.norm_constant = 1.0
        raw = self._raw_norm_squared(rtol)
        if not (raw > 0 and math.isfinite(raw)):
            raise NotARootError(f"eigenfunction has degenerate norm ({raw})")
        self.norm_constant = 1.0 / math.sqrt(raw)

    def _plus(self, x):
        raise NotImplementedError

    def _minus(self, x):
        raise NotImplementedError

    def _raw_norm_squared(self, rtol: float) -> float:
        K = self.spec.K

        def plus(x):
            return self._plus(x)[0] ** 2 * metric_factor(K, x)

        def minus(x):
            return self._minus(x)[0] ** 2 * metric_factor(K, x)

        return (adaptive_simpson(plus, 0.0, self.spec.a, rtol=rtol)
                + adaptive_simpson(minus, -self.spec.b, 0.0, rtol=rtol))

    def value_and_slope(self, x):
        """Values and x-derivatives; ``x = 0`` is taken from the plus side."""
        x = np.asarray(x, dtype=float)
        val = np.empty_like(x)
        slope = np.empty_like(x)
        pos = x >= 0
        if np.any(pos):
            v, s = self._plus(x[pos])
            val[pos], slope[pos] = v, s
        if np.any(~pos):
            v, s = self._minus(x[~pos])
            val[~pos], slope[~pos] = v, s
        val *= self.norm_constant
        slope *= self.norm_constant
        if val.ndim == 0:
            return float(val), float(slope)
        return val, slope

    def __call__(self, x):
        return self.value_and_slope(x)[0]

    @property
    def interface_values(self):
        """``(psi_plus(0), psi_minus(0), psi_plus'(0), psi_minus'(0))``."""
        vp, sp = self._plus(np.array([0.0]))
        vm, sm = self._minus(np.array([0.0]))
        c = self.norm_constant
        return float(vp[0] * c), float(vm[0] * c), float(sp[0] * c), float(sm[0] * c)

    @property
    def boundary_values(self):
        """``(psi(a), psi(-b))``."""
        vp, _ = self._plus(np.array([self.spec.a]))
        vm, _ = self._minus(np.array([-self.spec.b]))
        return float(vp[0] * self.norm_constant), float(vm[0] * self.norm_constant)

    def continuity_jump(self) -> float:
        vp, vm, _, _ = self.interface_values
        return vp - vm

    def flux_residual(self) -> float:
        """``|eps+ psi+'(0) + eps- psi-'(0)|`` relative to the larger flux term."""
        _, _, sp, sm = self.interface_values
        ep, em = self.spec.eps_plus, self.spec.eps_minus
        scale = max(abs(ep * sp), abs(em * sm))
        if scale == 0.0:
            return 0.0
        return abs(ep * sp + em * sm) / scale

    def norm_squared(self, rtol: float = 1e-10) -> float:
        return self._raw_norm_squared(rtol) * self.norm_constant ** 2

    def metadata(self) -> dict:
        vp, vm, sp, sm = self.interface_values
        return {
            "n": self.n,
            "lambda": self.lam,
            "representation": self.representation,
            "gauge": self.gauge,
            "norm_constant": self.norm_constant,
            "interface_value": vp,
            "interface_slope_plus": sp,
            "interface_slope_minus": sm,
            "flux_residual": self.flux_residual(),
        }
