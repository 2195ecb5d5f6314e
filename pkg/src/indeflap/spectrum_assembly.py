"""The 2D spectrum as a union of transversal spectra, and 2D eigenfunctions."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import curved_shooting, flat_kernels, rootfinder
from .eigenfunction import PiecewiseEigenfunction
from .geometry import ProblemSpec, contrast, metric_factor, require_valid, transverse_mode
from .quadrature import panels_for, piecewise_simpson_weights, simpson_weights
from .rootfinder import EigenvalueRecord

CSV_COLUMNS = ("n", "m", "lambda", "kind", "residual", "method")


def fmt(x) -> str:
    """CSV text of a value; floats get 17 significant digits so they round-trip."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclasses.dataclass
class SpectrumTable:
    spec: ProblemSpec
    records: List[EigenvalueRecord]
    certified: Dict[int, Tuple[float, float]]
    zero_mode: bool
    m_window: Tuple[int, int] = (-3, 3)

    def __post_init__(self):
        self.records.sort(key=lambda r: (r.lam, r.n, r.m))
        keys = [(r.n, r.m) for r in self.records]
        if len(keys) != len(set(keys)):
            raise ValueError("duplicate (n, m) in spectrum table")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def lookup(self, n: int, m: int) -> EigenvalueRecord:
        for r in self.records:
            if r.n == n and r.m == m:
                return r
        raise KeyError((n, m))

    def mode(self, n: int) -> List[EigenvalueRecord]:
        return [r for r in self.records if r.n == n]

    def smallest(self, count: int) -> List[EigenvalueRecord]:
        return sorted(self.records, key=lambda r: (abs(r.lam), r.n, r.m))[:count]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "records": [{k: r.to_dict()[k] for k in CSV_COLUMNS} for r in self.records],
            "certified": {
                "m_window": list(self.m_window),
                "lambda_windows": {str(n): list(w) for n, w in sorted(self.certified.items())},
                "zero_mode": self.zero_mode,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            d = r.to_dict()
            w.writerow([fmt(d[k]) for k in CSV_COLUMNS])
        return buf.getvalue()


def spectrum_2d(spec: ProblemSpec, n_max: int, m_window: Sequence[int] = (-3, 3),
                plan_kw: Optional[dict] = None) -> SpectrumTable:
    """Per-mode eigenvalues for ``n = 1..n_max`` merged into one table."""
    require_valid(spec)
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    records: List[EigenvalueRecord] = []
    certified = {}
    zero = False
    for n in range(1, n_max + 1):
        modes = rootfinder.enumerate_modes(spec, n, m_window, plan_kw)
        records.extend(modes.records)
        certified[n] = modes.window
        zero = zero or modes.zero_is_root
    return SpectrumTable(spec, records, certified, zero, (int(m_window[0]), int(m_window[1])))


def transversal_eigenfunction(spec: ProblemSpec, n: int, lam: float) -> PiecewiseEigenfunction:
    if spec.K == 0:
        return flat_kernels.eigenfunction_flat(spec, n, lam)
    return curved_shooting.transversal_solution(spec, n, lam)


@dataclasses.dataclass
class Eigenfunction2D:
    """``Psi(x, y) = psi(x) sqrt(2/c) sin(n pi y / c)``."""

    transversal: PiecewiseEigenfunction
    n: int

    @property
    def spec(self) -> ProblemSpec:
        return self.transversal.spec

    def y_factor(self, y):
        return transverse_mode(self.n, self.spec.c, y)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.transversal(x) * self.y_factor(y)


def assemble_eigenfunction(transversal: PiecewiseEigenfunction, n: Optional[int] = None) -> Eigenfunction2D:
    return Eigenfunction2D(transversal, transversal.n if n is None else n)


@dataclasses.dataclass(frozen=True)
class TensorQuadrature:
    """Composite Simpson nodes on ``[-b, 0] U [0, a]`` times ``[0, c]``."""

    h_x: float = 1e-3
    h_y: float = 5e-3
    chunk: int = 64

    def nodes(self, spec: ProblemSpec):
        xs, wx = piecewise_simpson_weights(
            [-spec.b, 0.0, spec.a],
            [panels_for(spec.b, self.h_x), panels_for(spec.a, self.h_x)])
        ys, wy = simpson_weights(0.0, spec.c, panels_for(spec.c, self.h_y))
        return xs, wx * metric_factor(spec.K, xs), ys, wy


def gram_matrix(functions: Sequence, quadrature: Optional[TensorQuadrature] = None) -> np.ndarray:
    """Gram matrix with the metric weight, accumulated over chunks of ``y`` nodes."""
    if not functions:
        raise ValueError("need at least one function")
    quadrature = quadrature or TensorQuadrature()
    spec = functions[0].spec
    xs, wx, ys, wy = quadrature.nodes(spec)
    k = len(functions)
    gram = np.zeros((k, k))
    for start in range(0, ys.size, quadrature.chunk):
        yc = ys[start:start + quadrature.chunk]
        wc = wy[start:start + quadrature.chunk]
        vals = np.stack([fn(xs[:, None], yc[None, :]) for fn in functions])
        weighted = vals * (wx[:, None] * wc[None, :])
        gram += np.einsum("ixy,jxy->ij", weighted, vals)
    if not np.all(np.isfinite(gram)):
        raise ArithmeticError("quadrature produced non-finite Gram entries")
    return gram


def gram_check(functions: Sequence, quadrature: Optional[TensorQuadrature] = None) -> float:
    """``max |G - I|`` for the given 2D functions."""
    gram = gram_matrix(functions, quadrature)
    return float(np.max(np.abs(gram - np.eye(len(functions)))))


@dataclasses.dataclass(frozen=True)
class ZeroModeResult:
    is_zero: bool
    witness: dict

    def __bool__(self):
        return self.is_zero


def detect_zero_mode(spec: ProblemSpec, modes: Iterable[int] = (1, 2, 3),
                     tol: float = 1e-8) -> ZeroModeResult:
    """Whether ``lam = 0`` is an eigenvalue.

    Flat: decided exactly by ``kappa = 1 and a = b``. Curved: the relative
    matching determinant at zero is below ``tol`` for every listed mode.
    """
    require_valid(spec)
    if spec.K == 0:
        crit = contrast(spec).is_critical
        return ZeroModeResult(crit and spec.a == spec.b,
                              {"kappa": spec.kappa, "critical": crit, "a_equals_b": spec.a == spec.b})
    residuals = {}
    for n in modes:
        residuals[n] = abs(float(curved_shooting.shoot_batch(spec, n, 0.0).relative[0]))
    return ZeroModeResult(all(r < tol for r in residuals.values()),
                          {"relative_residual": residuals, "tol": tol})


def revalidate(table: SpectrumTable) -> float:
    """Largest relative characteristic residual over all records of a table."""
    worst = 0.0
    for r in table.records:
        fn = rootfinder.ModeFunction(table.spec, r.n)
        worst = max(worst, fn.relative(r.lam))
    return worst
