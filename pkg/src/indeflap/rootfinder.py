"""Bracketing, refinement and signed indexing of real roots of a characteristic function."""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import curved_shooting, flat_kernels
from .geometry import ProblemSpec, contrast, require_valid

MAX_PHASE_STEP = math.pi / 4
TOUCH_RTOL = 1e-10
ZERO_RTOL = 1e-10
SINGULAR_RTOL = 1e-8
WIDTH_RTOL = 1e-13

KINDS = ("regular", "singular_plus", "singular_minus", "zero")
METHODS = ("flat_entire", "shooting", "fd_oracle")


class NonFiniteValueError(ArithmeticError):
    def __init__(self, lam: float, value: float):
        self.lam = lam
        super().__init__(f"characteristic function is not finite at lambda={lam!r} (value {value!r})")


class LostBracketError(ArithmeticError):
    pass


@dataclasses.dataclass(frozen=True)
class ScanPlan:
    lambda_min: float
    lambda_max: float
    max_phase_step: float = math.pi / 8
    resolution: float = 1e-9
    max_step: Optional[float] = None

    def __post_init__(self):
        if not self.lambda_min < self.lambda_max:
            raise ValueError(f"empty window [{self.lambda_min}, {self.lambda_max}]")
        if not 0 < self.max_phase_step <= MAX_PHASE_STEP:
            raise ValueError(f"phase increment must lie in (0, pi/4], got {self.max_phase_step}")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")

    @property
    def step_cap(self) -> float:
        if self.max_step is not None:
            return self.max_step
        return (self.lambda_max - self.lambda_min) / 512


@dataclasses.dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    touch: bool = False

    @property
    def exact(self) -> bool:
        return self.lo == self.hi


@dataclasses.dataclass
class ScanResult:
    brackets: List[Bracket]
    touches: List[Bracket]
    grid: np.ndarray
    values: np.ndarray

    def __iter__(self):
        return iter(self.brackets)

    def __len__(self):
        return len(self.brackets)


@dataclasses.dataclass(frozen=True)
class Root:
    lam: float
    value: float
    lo: float
    hi: float


@dataclasses.dataclass(frozen=True)
class EigenvalueRecord:
    n: int
    m: int
    lam: float
    kind: str = "regular"
    residual: float = 0.0
    method: str = "flat_entire"
    multiplicity_suspect: bool = False

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "lambda": self.lam, "kind": self.kind,
                "residual": self.residual, "method": self.method,
                "multiplicity_suspect": self.multiplicity_suspect}


@dataclasses.dataclass
class ModeEnumeration:
    """Records of one transverse mode plus the window in which none were missed."""

    n: int
    records: List[EigenvalueRecord]
    window: Tuple[float, float]
    zero_is_root: bool

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def by_m(self, m: int) -> EigenvalueRecord:
        for r in self.records:
            if r.m == m:
                return r
        raise KeyError(m)


def _evaluate(charfn, lam: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(charfn(lam), dtype=float)
        if out.shape != lam.shape:
            raise ValueError
    except (TypeError, ValueError):
        out = np.array([float(charfn(float(x))) for x in lam])
    bad = ~np.isfinite(out)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonFiniteValueError(float(lam[i]), float(out[i]))
    return out


def scan_grid(plan: ScanPlan, phase: Optional[Callable[[float], float]] = None) -> np.ndarray:
    """Grid whose consecutive phase increments never exceed the plan's bound."""
    lo, hi = plan.lambda_min, plan.lambda_max
    cap = plan.step_cap
    if phase is None:
        count = int(math.ceil((hi - lo) / cap))
        return np.linspace(lo, hi, count + 1)
    pts = [lo]
    x, ph = lo, phase(lo)
    h = cap
    while x < hi:
        h = min(2.0 * h, cap, hi - x)
        while True:
            nx = x + h
            nph = phase(nx)
            if abs(nph - ph) <= plan.max_phase_step or h <= plan.resolution:
                break
            h *= 0.5
        x, ph = (hi, phase(hi)) if hi - nx < plan.resolution else (nx, nph)
        pts.append(x)
    return np.array(pts)


def bracket_scan(charfn, plan: ScanPlan, osc_scale: Optional[Callable[[float], float]] = None,
                 touch_rtol: float = TOUCH_RTOL) -> ScanResult:
    """Sign-change brackets of ``charfn`` on the plan's window.

    ``osc_scale(lam)`` is the accumulated oscillation phase; steps are chosen so
    it grows by at most ``plan.max_phase_step`` between samples. Samples that
    are exactly zero become degenerate brackets. At every local minimum of
    ``|charfn|`` without a sign change a bounded minimization looks for a hidden
    pair of roots; if none is found but the minimum is below ``touch_rtol``
    times the local magnitude, the interval is reported as a touch.
    """
    grid = scan_grid(plan, osc_scale)
    vals = _evaluate(charfn, grid)
    brackets: List[Bracket] = []
    touches: List[Bracket] = []
    sgn = np.sign(vals)
    nz = np.flatnonzero(sgn != 0)
    for i in np.flatnonzero(sgn == 0):
        brackets.append(Bracket(float(grid[i]), float(grid[i])))
    for j, k in zip(nz[:-1], nz[1:]):
        if k == j + 1 and sgn[j] != sgn[k]:
            brackets.append(Bracket(float(grid[j]), float(grid[k])))
        elif k > j + 1 and sgn[j] == sgn[k]:
            touches.append(Bracket(float(grid[j]), float(grid[k]), touch=True))

    absv = np.abs(vals)
    for i in range(1, len(grid) - 1):
        if not (sgn[i] != 0 and sgn[i - 1] == sgn[i] == sgn[i + 1]):
            continue
        if not (absv[i] <= absv[i - 1] and absv[i] <= absv[i + 1]):
            continue
        s = sgn[i]
        lo, hi = float(grid[i - 1]), float(grid[i + 1])
        opt = minimize_scalar(lambda x: s * float(_evaluate(charfn, np.array([x]))[0]),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": max(plan.resolution, 1e-14 * max(1.0, abs(lo), abs(hi)))})
        local = float(np.max(absv[max(0, i - 3): i + 4]))
        if opt.fun < 0:
            xm = float(opt.x)
            brackets.append(Bracket(lo, xm))
            brackets.append(Bracket(xm, hi))
        elif opt.fun == 0.0:
            brackets.append(Bracket(float(opt.x), float(opt.x)))
            touches.append(Bracket(lo, hi, touch=True))
        elif abs(opt.fun) < touch_rtol * local:
            touches.append(Bracket(lo, hi, touch=True))
    brackets.sort(key=lambda b: (b.lo, b.hi))
    return ScanResult(brackets, touches, grid, vals)


def refine(charfn, bracket, width_rtol: float = WIDTH_RTOL, abs_floor: float = 1.0,
           max_iter: int = 400) -> Root:
    """Bisection to width ``width_rtol * max(abs_floor, |lam|)`` then one secant step."""
    if isinstance(bracket, Bracket):
        lo, hi = bracket.lo, bracket.hi
    else:
        lo, hi = (float(v) for v in bracket)

    def f(x):
        v = float(np.asarray(charfn(np.array([x]) if _accepts_arrays(charfn) else x)).ravel()[0])
        if not math.isfinite(v):
            raise NonFiniteValueError(x, v)
        return v

    flo = f(lo)
    if lo == hi:
        return Root(lo, flo, lo, hi)
    fhi = f(hi)
    if flo == 0.0:
        return Root(lo, 0.0, lo, lo)
    if fhi == 0.0:
        return Root(hi, 0.0, hi, hi)
    if (flo > 0) == (fhi > 0):
        raise LostBracketError(f"no sign change on [{lo!r}, {hi!r}] ({flo!r}, {fhi!r})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= width_rtol * max(abs_floor, abs(mid)) or mid in (lo, hi):
            break
        fm = f(mid)
        if fm == 0.0:
            return Root(mid, 0.0, mid, mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    cand = lo - flo * (hi - lo) / (fhi - flo)
    if lo <= cand <= hi:
        fc = f(cand)
        if abs(fc) <= min(abs(flo), abs(fhi)):
            return Root(cand, fc, lo, hi)
    if abs(flo) <= abs(fhi):
        return Root(lo, flo, lo, hi)
    return Root(hi, fhi, lo, hi)


def _accepts_arrays(charfn) -> bool:
    return getattr(charfn, "vectorized", False)


class ModeFunction:
    """Sign-exact characteristic function of one mode with its scales.

    ``__call__`` evaluates the overflow-free version, ``relative`` the value
    divided by the size of its terms, ``phase`` the oscillation phase used to
    pace the scan.
    """

    vectorized = True

    def __init__(self, spec: ProblemSpec, n: int):
        self.spec = require_valid(spec)
        self.n = n
        self.q = spec.q(n)
        if spec.K == 0:
            self.method = "flat_entire"
            self.v_plus = self.v_minus = (self.q, self.q)
        else:
            self.method = "shooting"
            pot = curved_shooting.EffectivePotential(spec.K, n, spec.c)
            self.v_plus = pot.bounds(0.0, spec.a)
            self.v_minus = pot.bounds(0.0, spec.b)

    def __call__(self, lam):
        if self.method == "flat_entire":
            return flat_kernels.char_eval(self.spec, self.n, lam, scaled=True)
        return curved_shooting.shoot_batch(self.spec, self.n, lam).normalized

    def relative(self, lam: float) -> float:
        if self.method == "flat_entire":
            v = flat_kernels.char_eval(self.spec, self.n, lam, scaled=True)
            s = flat_kernels.char_scale(self.spec, self.n, lam, scaled=True)
            return abs(v) / s if s else 0.0
        return abs(float(curved_shooting.shoot_batch(self.spec, self.n, lam).relative[0]))

    def phase(self, lam: float) -> float:
        sp = self.spec
        up = lam / sp.eps_plus - self.v_plus[0]
        um = -lam / sp.eps_minus - self.v_minus[0]
        return sp.a * math.sqrt(max(up, 0.0)) + sp.b * math.sqrt(max(um, 0.0))

    def threshold_window(self, m_lo: int, m_hi: int) -> Tuple[float, float]:
        """Window that should hold indices ``m_lo..m_hi`` by a phase count."""
        sp = self.spec
        hi = sp.eps_plus * (self.v_plus[1] + (math.pi * (max(m_hi, 0) + 2) / sp.a) ** 2)
        lo = -sp.eps_minus * (self.v_minus[1] + (math.pi * (max(-m_lo, 0) + 2) / sp.b) ** 2)
        return lo, hi


def zero_is_root(spec: ProblemSpec, n: int, fn: Optional[ModeFunction] = None,
                 tol: float = ZERO_RTOL) -> Tuple[bool, float]:
    """Whether ``lam = 0`` is an eigenvalue of mode ``n``, with the relative residual."""
    fn = fn or ModeFunction(spec, n)
    if fn.method == "flat_entire":
        exact = contrast(spec).is_critical and spec.a == spec.b
        return exact, 0.0 if exact else fn.relative(0.0)
    res = fn.relative(0.0)
    return res < tol, res


def _kind(spec: ProblemSpec, n: int, lam: float, is_zero: bool) -> str:
    if is_zero:
        return "zero"
    if spec.K != 0:
        return "regular"
    q = spec.q(n)
    if abs(lam / spec.eps_plus - q) < SINGULAR_RTOL * q:
        return "singular_plus"
    if abs(lam / spec.eps_minus + q) < SINGULAR_RTOL * q:
        return "singular_minus"
    return "regular"


def find_roots(fn: ModeFunction, lo: float, hi: float, plan_kw: Optional[dict] = None):
    """All roots of one mode on ``[lo, hi]`` and the touch flags of the scan."""
    sp, q = fn.spec, fn.q
    kw = dict(plan_kw or {})
    central = (sp.eps_plus + sp.eps_minus) * q / 64.0
    kw.setdefault("max_step", min((hi - lo) / 512, central))
    plan = ScanPlan(lo, hi, **kw)
    scan = bracket_scan(fn, plan, fn.phase)
    roots = [refine(fn, b) for b in scan.brackets]
    lams = sorted({r.lam for r in roots})
    touches = [t for t in scan.touches]
    return lams, touches


def enumerate_modes(spec: ProblemSpec, n: int, m_window: Sequence[int] = (-3, 3),
                    plan_kw: Optional[dict] = None, max_doublings: int = 30) -> ModeEnumeration:
    """Signed-index eigenvalues of transverse mode ``n`` covering ``m_window``.

    ``m = +1`` is the smallest positive root, ``m = -1`` the largest negative
    one and ``m = 0`` is used only when zero itself is an eigenvalue. The
    scanned window is enlarged until both ends of ``m_window`` are populated;
    it is returned as the certified window.
    """
    require_valid(spec)
    m_lo, m_hi = int(m_window[0]), int(m_window[1])
    if m_lo > m_hi:
        raise ValueError(f"empty m window {m_window}")
    fn = ModeFunction(spec, n)
    is_zero, _ = zero_is_root(spec, n, fn)
    lo, hi = fn.threshold_window(m_lo, m_hi)
    for _ in range(max_doublings):
        lams, touches = find_roots(fn, lo, hi, plan_kw)
        lams = _polish_central(spec, n, lams)
        if is_zero:
            zero_tol = ZERO_RTOL * spec.eps_plus * fn.q
            lams = [x for x in lams if abs(x) >= zero_tol]
        pos = [x for x in lams if x > 0]
        neg = [x for x in lams if x < 0]
        need_pos = max(m_hi, 0) - len(pos)
        need_neg = max(-m_lo, 0) - len(neg)
        if need_pos <= 0 and need_neg <= 0:
            break
        if need_pos > 0:
            hi *= 2.0
        if need_neg > 0:
            lo *= 2.0
    else:
        raise RuntimeError(f"mode {n}: window did not reach m in {m_window}")

    def suspect(x):
        return any(t.lo <= x <= t.hi for t in touches)

    records = []
    neg_sorted = sorted(neg, reverse=True)
    pos_sorted = sorted(pos)
    entries = [(-(i + 1), x) for i, x in enumerate(neg_sorted)]
    entries += [(i + 1, x) for i, x in enumerate(pos_sorted)]
    if is_zero:
        entries.append((0, 0.0))
    for m, x in sorted(entries, key=lambda e: e[1]):
        if not m_lo <= m <= m_hi:
            continue
        records.append(EigenvalueRecord(
            n=n, m=m, lam=float(x), kind=_kind(spec, n, x, m == 0),
            residual=fn.relative(x), method=fn.method,
            multiplicity_suspect=suspect(x)))
    return ModeEnumeration(n, records, (float(lo), float(hi)), is_zero)


def _polish_central(spec: ProblemSpec, n: int, lams: List[float]) -> List[float]:
    """Replace the central flat root at critical contrast by its full-precision value."""
    if spec.K != 0 or spec.eps_plus != spec.eps_minus:
        return lams
    eps, q = spec.eps_plus, spec.q(n)
    inside = [x for x in lams if -eps * q < x < eps * q]
    if len(inside) != 1:
        return lams
    try:
        exact = flat_kernels.central_root(spec, n)
    except flat_kernels.NoCentralRootError:
        return lams
    if abs(exact - inside[0]) > 1e-9 * max(1.0, abs(exact)):
        return lams
    return sorted(exact if x == inside[0] else x for x in lams)
