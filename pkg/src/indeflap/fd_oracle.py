"""Finite-volume discretization of one transversal mode and a Sturm-bisection eigensolver.

The scheme works in the manifold gauge with weight ``f``. For node ``i`` with
control volume ``V_i = (h_{i-1/2} + h_{i+1/2}) / 2`` the generalized problem is

    -[F_{i+1/2} (psi_{i+1} - psi_i) / h_{i+1/2} - F_{i-1/2} (psi_i - psi_{i-1}) / h_{i-1/2}]
        + (q / f_i) (int_{V_i} eps) psi_i  =  lam f_i V_i psi_i,

with ``F = eps f`` at cell midpoints. ``x = 0`` is a node, so no flux straddles
the interface and the transmission condition holds by conservation. The
symmetric form ``W^{-1/2} S W^{-1/2}`` is stored as a diagonal and an
off-diagonal.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import List, Optional, Sequence

import numpy as np
from numba import njit
from scipy.linalg import eigh_tridiagonal

from .geometry import ProblemSpec, metric_factor, require_valid

MIN_CELLS = 16
WIDTH_RTOL = 1e-12
PASS_RTOL = 1e-3
PASS_ATOL = 1e-6
NEAR_ZERO = 1e-3


class CountMismatchError(RuntimeError):
    def __init__(self, message, discrete, analytic):
        self.discrete = discrete
        self.analytic = analytic
        super().__init__(message)


@dataclasses.dataclass(frozen=True)
class DiscreteOperator:
    spec: ProblemSpec
    n: int
    n_minus: int
    n_plus: int
    grid: np.ndarray          # interior nodes only
    diag: np.ndarray          # symmetric tridiagonal matrix
    off: np.ndarray
    weight: np.ndarray        # f_i V_i
    sign_definite: bool = False
    transverse: bool = True
    adjusted: Optional[str] = None

    @property
    def h_minus(self) -> float:
        return self.spec.b / self.n_minus

    @property
    def h_plus(self) -> float:
        return self.spec.a / self.n_plus

    @property
    def h(self) -> float:
        return max(self.h_minus, self.h_plus)

    @property
    def size(self) -> int:
        return self.diag.size

    def refined(self) -> "DiscreteOperator":
        """Same problem with both per-side steps halved."""
        return build_operator(self.spec, self.n, cells=(2 * self.n_minus, 2 * self.n_plus),
                              sign_definite=self.sign_definite, transverse=self.transverse)

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)


def split_cells(spec: ProblemSpec, N: int):
    """Per-side cell counts ``(N_-, N_+)`` and a note if ``N`` had to be adjusted."""
    if N < MIN_CELLS:
        raise ValueError(f"N must be at least {MIN_CELLS}, got {N}")
    n_minus = int(round(N * spec.b / (spec.a + spec.b)))
    n_plus = N - n_minus
    note = None
    if n_minus < 1 or n_plus < 1:
        n_minus, n_plus = max(n_minus, 1), max(n_plus, 1)
        note = (f"N={N} cannot place cells on both sides of x=0; "
                f"using N_-={n_minus}, N_+={n_plus}")
        warnings.warn(note, stacklevel=3)
    return n_minus, n_plus, note


def build_operator(spec: ProblemSpec, n: int, N: int = 2000, cells=None,
                   sign_definite: bool = False, transverse: bool = True) -> DiscreteOperator:
    """Symmetric tridiagonal discretization of transversal mode ``n``.

    ``N`` is the total number of cells; pass ``cells=(N_-, N_+)`` to fix the
    split explicitly. ``sign_definite=True`` flips the left permittivity to
    ``+eps_-`` and ``transverse=False`` drops the ``(n pi / c)^2`` term; both
    are sanity modes with known spectra.
    """
    require_valid(spec)
    note = None
    if cells is None:
        n_minus, n_plus, note = split_cells(spec, N)
    else:
        n_minus, n_plus = (int(v) for v in cells)
        if n_minus < 1 or n_plus < 1:
            raise ValueError(f"invalid cell split {cells}")
    hm, hp = spec.b / n_minus, spec.a / n_plus
    K = spec.K
    nodes = np.concatenate([-spec.b + hm * np.arange(n_minus), [0.0],
                            hp * np.arange(1, n_plus + 1)])
    nodes[-1] = spec.a
    nodes[0] = -spec.b
    steps = np.diff(nodes)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    eps_left = spec.eps_minus if sign_definite else -spec.eps_minus
    eps_mid = np.where(mids > 0, spec.eps_plus, eps_left)
    flux = eps_mid * metric_factor(K, mids) / steps

    inner = nodes[1:-1]
    f_in = metric_factor(K, inner)
    left, right = steps[:-1], steps[1:]
    vol = 0.5 * (left + right)
    # int of eps over each control volume; only the node at 0 straddles the jump
    eps_vol = np.where(inner > 0, spec.eps_plus * vol, eps_left * vol)
    zero = n_minus - 1
    eps_vol[zero] = spec.eps_plus * right[zero] / 2 + eps_left * left[zero] / 2
    q = spec.q(n) if transverse else 0.0

    stiff_diag = flux[:-1] + flux[1:] + q * eps_vol / f_in
    stiff_off = -flux[1:-1]
    weight = f_in * vol
    root = np.sqrt(weight)
    diag = stiff_diag / weight
    off = stiff_off / (root[:-1] * root[1:])
    return DiscreteOperator(spec, n, n_minus, n_plus, inner, diag, off, weight,
                            sign_definite, transverse, note)


@njit(cache=True)
def _sturm_count(diag, off2, sigma, tiny):
    """Number of eigenvalues strictly below ``sigma`` (negative LDL^T pivots)."""
    count = 0
    d = diag[0] - sigma
    if d == 0.0:
        d = -tiny
    if d < 0.0:
        count += 1
    for i in range(1, diag.size):
        d = diag[i] - sigma - off2[i - 1] / d
        if d == 0.0:
            d = -tiny
        if d < 0.0:
            count += 1
    return count


@njit(cache=True)
def _bisect_all(diag, off2, lo, hi, c_lo, c_hi, rtol, tiny):
    out = np.empty(c_hi - c_lo)
    for k in range(c_lo, c_hi):
        # find the point where the count first exceeds k
        a, b = lo, hi
        for _ in range(200):
            mid = 0.5 * (a + b)
            if b - a <= rtol * max(1.0, abs(mid)) or mid == a or mid == b:
                break
            if _sturm_count(diag, off2, mid, tiny) > k:
                b = mid
            else:
                a = mid
        out[k - c_lo] = 0.5 * (a + b)
    return out


def sturm_count(diag, off, sigma: float) -> int:
    diag = np.ascontiguousarray(diag, dtype=float)
    off2 = np.ascontiguousarray(np.asarray(off, dtype=float) ** 2)
    return int(_sturm_count(diag, off2, float(sigma), _tiny(diag, off2)))


def _tiny(diag, off2) -> float:
    scale = float(np.max(np.abs(diag))) if diag.size else 1.0
    if off2.size:
        scale = max(scale, math.sqrt(float(np.max(off2))))
    return np.finfo(float).eps ** 2 * max(scale, 1.0)


def eigs_in_interval(op, lo: float, hi: float, rtol: float = WIDTH_RTOL) -> np.ndarray:
    """Sorted eigenvalues of a symmetric tridiagonal matrix in ``[lo, hi)``.

    ``op`` is a DiscreteOperator or a ``(diag, off)`` pair.
    """
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if isinstance(op, DiscreteOperator):
        diag, off = op.diag, op.off
    else:
        diag, off = op
    diag = np.ascontiguousarray(diag, dtype=float)
    off2 = np.ascontiguousarray(np.asarray(off, dtype=float) ** 2)
    tiny = _tiny(diag, off2)
    c_lo = int(_sturm_count(diag, off2, float(lo), tiny))
    c_hi = int(_sturm_count(diag, off2, float(hi), tiny))
    return _bisect_all(diag, off2, float(lo), float(hi), c_lo, c_hi, rtol, tiny)


def spurious_flags(op: DiscreteOperator, eigenvalues: Sequence[float], threshold: float = 0.9):
    """Flag eigenvectors whose energy sits in two adjacent nodes."""
    flags = []
    for lam in eigenvalues:
        span = 1e-9 * max(1.0, abs(lam))
        _, vecs = eigh_tridiagonal(op.diag, op.off, select="v",
                                   select_range=(lam - span, lam + span))
        if vecs.shape[1] == 0:
            flags.append(False)
            continue
        v2 = vecs[:, 0] ** 2
        pair = v2[:-1] + v2[1:]
        flags.append(bool(np.max(pair) / np.sum(v2) > threshold))
    return flags


@dataclasses.dataclass
class OracleReport:
    window: tuple
    analytic: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    extrapolated: np.ndarray
    rel_errors: np.ndarray
    abs_errors: np.ndarray
    error_ratio: np.ndarray
    spurious: List[bool]
    cells: tuple

    @property
    def observed_order(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log2(self.error_ratio)

    @property
    def passed(self) -> bool:
        near = np.abs(self.analytic) < NEAR_ZERO
        ok = np.where(near, self.abs_errors < PASS_ATOL, self.rel_errors < PASS_RTOL)
        return bool(np.all(ok)) and not any(self.spurious)

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "cells": list(self.cells),
            "passed": self.passed,
            "rows": [
                {"analytic": float(a), "coarse": float(c), "fine": float(f),
                 "extrapolated": float(e), "rel_error": float(r), "abs_error": float(ae),
                 "spurious": bool(s)}
                for a, c, f, e, r, ae, s in zip(self.analytic, self.coarse, self.fine,
                                                self.extrapolated, self.rel_errors,
                                                self.abs_errors, self.spurious)
            ],
        }


def richardson(coarse, fine):
    return (4.0 * np.asarray(fine) - np.asarray(coarse)) / 3.0


def comparison_window(roots: np.ndarray):
    """Window around sorted roots with margins of a quarter of the nearest gap."""
    if roots.size == 1:
        pad = 0.25 * max(1.0, abs(roots[0]))
        return roots[0] - pad, roots[0] + pad
    gaps = np.diff(roots)
    return roots[0] - 0.25 * gaps[0], roots[-1] + 0.25 * gaps[-1]


def oracle_compare(spec: ProblemSpec, n: int, analytic_roots, N: int = 2000,
                   sign_definite: bool = False, transverse: bool = True,
                   window=None) -> OracleReport:
    """Compare analytic roots with the discrete spectrum at ``N`` and ``2N`` cells."""
    roots = np.asarray(analytic_roots, dtype=float)
    if roots.size == 0 or np.any(np.diff(roots) <= 0):
        raise ValueError("analytic roots must be non-empty and strictly increasing")
    lo, hi = window if window is not None else comparison_window(roots)
    op = build_operator(spec, n, N, sign_definite=sign_definite, transverse=transverse)
    op2 = op.refined()
    coarse = eigs_in_interval(op, lo, hi)
    fine = eigs_in_interval(op2, lo, hi)
    if coarse.size != roots.size or fine.size != roots.size:
        raise CountMismatchError(
            f"window [{lo:.6g}, {hi:.6g}]: {roots.size} analytic roots but "
            f"{coarse.size} (h) and {fine.size} (h/2) discrete eigenvalues",
            (coarse, fine), roots)
    extra = richardson(coarse, fine)
    abs_err = np.abs(extra - roots)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_err = abs_err / np.abs(roots)
        ratio = np.abs(coarse - roots) / np.abs(fine - roots)
    spurious = spurious_flags(op2, fine)
    return OracleReport((float(lo), float(hi)), roots, coarse, fine, extra, rel_err,
                        abs_err, ratio, spurious, (op.n_minus, op.n_plus))
