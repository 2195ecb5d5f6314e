"""Adaptive and composite Simpson quadrature."""

from __future__ import annotations

import math

import numpy as np


class QuadratureError(RuntimeError):
    pass


def adaptive_simpson(func, lo: float, hi: float, rtol: float = 1e-10,
                     atol: float = 1e-300, max_depth: int = 60,
                     initial_panels: int = 16) -> float:
    """Integrate a vectorized ``func`` over ``[lo, hi]`` with adaptive Simpson.

    The interval is first split into ``initial_panels`` panels so that
    localized features are not skipped, then each panel is bisected until the
    Richardson-corrected local error is below its share of the tolerance.
    """
    if hi == lo:
        return 0.0
    sign = 1.0
    if hi < lo:
        lo, hi, sign = hi, lo, -1.0

    edges = np.linspace(lo, hi, 2 * initial_panels + 1)
    values = np.asarray(func(edges), dtype=float)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("integrand is not finite on the initial grid")
    h = edges[2] - edges[0]
    coarse = h / 6.0 * (values[:-2:2] + 4.0 * values[1:-1:2] + values[2::2])
    scale = abs(coarse.sum())
    tol = max(rtol * scale, atol)

    # Breadth-first refinement: every panel is refined in one vectorized pass.
    a = edges[:-2:2].copy()
    b = edges[2::2].copy()
    fa, fm, fb = values[:-2:2].copy(), values[1:-1:2].copy(), values[2::2].copy()
    whole = coarse.copy()
    local_tol = np.full(a.shape, tol / initial_panels)
    total = 0.0
    for _ in range(max_depth):
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = np.asarray(func(lm), dtype=float)
        frm = np.asarray(func(rm), dtype=float)
        if not (np.all(np.isfinite(flm)) and np.all(np.isfinite(frm))):
            raise QuadratureError("integrand is not finite during refinement")
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        done = np.abs(delta) <= 15.0 * local_tol
        total += float(np.sum((left + right + delta / 15.0)[done]))
        keep = ~done
        if not np.any(keep):
            return sign * total
        a, m, b = a[keep], m[keep], b[keep]
        fa, fm, fb = fa[keep], fm[keep], fb[keep]
        flm, frm = flm[keep], frm[keep]
        left, right = left[keep], right[keep]
        half_tol = local_tol[keep] / 2.0
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        fa, fm, fb = (np.concatenate([fa, fm]), np.concatenate([flm, frm]),
                      np.concatenate([fm, fb]))
        whole = np.concatenate([left, right])
        local_tol = np.concatenate([half_tol, half_tol])
    raise QuadratureError(
        f"adaptive Simpson did not converge on [{lo}, {hi}] within depth {max_depth}"
    )


def simpson_weights(lo: float, hi: float, panels: int):
    """Nodes and weights of composite Simpson with ``panels`` (even) intervals."""
    if panels < 2 or panels % 2:
        raise ValueError("composite Simpson needs an even number of intervals >= 2")
    x = np.linspace(lo, hi, panels + 1)
    h = (hi - lo) / panels
    w = np.full(panels + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * h / 3.0


def piecewise_simpson_weights(breaks, panels_per_piece):
    """Composite Simpson over consecutive pieces sharing their break points.

    Every break point is a node, so kinks at the breaks do not spoil the order.
    """
    breaks = list(breaks)
    if isinstance(panels_per_piece, int):
        panels_per_piece = [panels_per_piece] * (len(breaks) - 1)
    xs, ws = [], []
    for k, (lo, hi) in enumerate(zip(breaks[:-1], breaks[1:])):
        x, w = simpson_weights(lo, hi, panels_per_piece[k])
        if xs:
            ws[-1][-1] += w[0]
            x, w = x[1:], w[1:]
        xs.append(x)
        ws.append(w.copy())
    return np.concatenate(xs), np.concatenate(ws)


def panels_for(length: float, h_target: float) -> int:
    n = max(2, int(math.ceil(length / h_target)))
    return n + (n % 2)
