"""Acceptance criteria 1 to 11, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) and
then asserts the same condition, so a FAIL line always comes with a failed test.
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import record_criterion
from indeflap import curved_shooting as cs
from indeflap import essential_diag as ed
from indeflap import fd_oracle as fd
from indeflap import flat_kernels as fk
from indeflap import rootfinder as rf
from indeflap import spectrum_assembly as sa
from indeflap.cli import nearest_zero
from indeflap.geometry import ProblemSpec, homothety_scale

pytestmark = pytest.mark.acceptance

# smallest |lambda| over modes n <= 30 for kappa = 2, a = b = c = 1, frozen from a refined scan
DELTA_KAPPA2 = 10.196867050571035


def flat(a, b, c=1.0, ep=1.0, em=1.0):
    return ProblemSpec(0, a, b, c, ep, em)


def test_criterion_01_zero_mode():
    spec = flat(1, 1)
    char = max(abs(fk.char_eval(spec, n, 0.0)) for n in range(1, 11))
    fd_zero = []
    for n in (1, 2, 3):
        rep = fd.oracle_compare(spec, n, [0.0], N=4000, window=(-1.0, 1.0))
        fd_zero.append(abs(float(rep.extrapolated[0])))
    ok = char < 1e-12 and max(fd_zero) < 1e-7
    record_criterion(1, ok, f"max|D(0)|={char:.2e}, FD extrapolated |lambda| n=1..3: "
                            + ", ".join(f"{v:.2e}" for v in fd_zero))
    assert ok


def singular_c_oracle():
    # tanh(2 k) = k with k = sqrt(2) pi / c
    k = brentq(lambda k: math.tanh(2 * k) - k, 0.5, 1.5, xtol=1e-15)
    return math.sqrt(2) * math.pi / k


def test_criterion_02_singular_eigenvalue():
    def residual(c):
        return fk.char_eval(flat(1, 2, c), 1, (math.pi / c) ** 2, scaled=True)

    c = brentq(residual, 4.0, 5.0, xtol=1e-14)
    oracle = singular_c_oracle()
    modes = rf.enumerate_modes(flat(1, 2, c), 1)
    tagged = [r for r in modes if r.kind == "singular_plus"]
    ok = (abs(c - 4.640) <= 0.01 and abs(c - oracle) < 1e-10 and len(tagged) == 1
          and abs(tagged[0].lam - (math.pi / c) ** 2) < 1e-10)
    record_criterion(2, ok, f"c={c:.14f} (oracle {oracle:.14f}), singular_plus records={len(tagged)}")
    assert ok


def central_sign_changes(spec, n):
    fn = rf.ModeFunction(spec, n)
    bound = spec.eps_plus * spec.q(n) * (1 - 1e-12)
    scan = rf.bracket_scan(fn, rf.ScanPlan(-bound, bound, max_step=bound / 2048), fn.phase)
    return fn, scan


def test_criterion_03_central_uniqueness():
    rng = np.random.default_rng(0)
    pairs = [tuple(p) for p in rng.uniform(0.2, 3.0, (20, 2))]
    pairs += [(1.0, 1.0), (0.5, 0.5), (2.5, 2.5)]
    failures = []
    for a, b in pairs:
        spec = flat(a, b)
        for n in range(1, 11):
            fn, scan = central_sign_changes(spec, n)
            if len(scan) != 1:
                failures.append((a, b, n, f"{len(scan)} sign changes"))
                continue
            if a == b:
                root = fk.central_root(spec, n)
                if root != 0.0:
                    failures.append((a, b, n, f"root {root!r} for a = b"))
                continue
            root = fk.central_root(spec, n)
            if np.sign(root) != np.sign(b - a):
                failures.append((a, b, n, f"root sign {np.sign(root)} vs sign(b-a)"))
    ok = not failures
    detail = f"{len(pairs)} pairs x 10 modes, {len(failures)} failing cases"
    if failures:
        a, b, n, why = failures[0]
        detail += f"; first: a={a:.4f}, b={b:.4f}, n={n}: {why}"
    record_criterion(3, ok, detail)
    assert ok, failures


def test_criterion_04_critical_decay_rate():
    table = ed.critical_decay_probe(flat(1, 2, 6), range(2, 9))
    s = table.scaled
    ok = table.strictly_decreasing and s[-1] < 0.05 * s[0]
    record_criterion(4, ok, "s_n = " + ", ".join(f"{v:.4f}" for v in s)
                     + f"; s8/s2={table.last_over_first:.4f}")
    assert ok


def minima_kappa2(plan_kw=None):
    spec = flat(1, 1, 1, 2, 1)
    out = []
    for n in range(1, 31):
        recs = rf.enumerate_modes(spec, n, (-1, 1), plan_kw)
        out.append(min(abs(r.lam) for r in recs))
    return np.array(out)


def test_criterion_05_no_accumulation_off_criticality():
    coarse = minima_kappa2()
    fine = minima_kappa2({"max_phase_step": math.pi / 32})
    delta = float(coarse.min())
    op_min = fd.oracle_compare(flat(1, 1, 1, 2, 1), 1,
                               sorted(r.lam for r in rf.enumerate_modes(flat(1, 1, 1, 2, 1), 1, (-1, 1))))
    ok = (delta > 0 and np.all(np.diff(coarse[4:]) >= 0)
          and abs(delta - DELTA_KAPPA2) <= 1e-10 * DELTA_KAPPA2
          and np.allclose(coarse, fine, rtol=1e-12, atol=0)
          and op_min.passed)
    record_criterion(5, ok, f"delta={delta:.12f} at n={int(np.argmin(coarse)) + 1}, "
                            f"refined-scan max rel change={np.max(np.abs(fine / coarse - 1)):.1e}, "
                            f"FD oracle {'PASS' if op_min.passed else 'FAIL'}")
    assert ok


def test_criterion_06_flat_oracle():
    spec = flat(1, 2, 1, 3, 1)
    roots = [r.lam for r in rf.enumerate_modes(spec, 1, (-5, 5))]
    try:
        rep = fd.oracle_compare(spec, 1, roots, N=2000)
        ok = len(roots) == 10 and rep.passed and bool(np.all(rep.rel_errors < 1e-3))
        detail = (f"10 roots, max rel error {np.max(rep.rel_errors):.2e}, "
                  f"observed order {np.min(rep.observed_order):.3f}..{np.max(rep.observed_order):.3f}")
    except fd.CountMismatchError as exc:
        ok, detail = False, str(exc)
    record_criterion(6, ok, detail)
    assert ok


def test_criterion_07_curved_oracle():
    worst, m0 = 0.0, 0.0
    ok = True
    for K in (1.0, -1.0):
        spec = ProblemSpec(K, 0.7, 0.7, 1, 1, 1)
        for n in (1, 2, 3):
            m0 = max(m0, abs(cs.shoot_match(spec, n, 0.0, normalized=True)))
            roots = sorted(r.lam for r in nearest_zero(spec, n, 5))
            try:
                rep = fd.oracle_compare(spec, n, roots, N=2000)
            except fd.CountMismatchError:
                ok = False
                continue
            ok = ok and rep.passed
            far = np.abs(rep.analytic) >= fd.NEAR_ZERO
            worst = max(worst, float(np.max(rep.rel_errors[far])))
    ok = ok and m0 < 1e-8
    record_criterion(7, ok, f"K=+-1, n=1..3: max rel error {worst:.2e}, max |M(0)| {m0:.1e}")
    assert ok


def test_criterion_08_homothety():
    spec = ProblemSpec(0.25, 0.8, 0.8, 1, 1, 1)
    scaled = homothety_scale(spec)
    ref_spec = ProblemSpec(1, 0.4, 0.4, 0.5, 1, 1)
    assert scaled.scaled_spec == ref_spec and scaled.eigenvalue_factor == 0.25
    base = nearest_zero(spec, 1, 6)
    ref = rf.enumerate_modes(ref_spec, 1, (-6, 6))
    worst = 0.0
    for r in base:
        other = ref.by_m(r.m)
        if r.kind == "zero" or other.kind == "zero":
            worst = max(worst, 0.0 if r.kind == other.kind else math.inf)
            continue
        want = 0.25 * other.lam
        worst = max(worst, abs(r.lam - want) / abs(want))
    ok = len(base) == 6 and worst < 1e-8
    record_criterion(8, ok, f"6 eigenvalues nearest 0, max rel error {worst:.2e}")
    assert ok


def test_criterion_09_singular_sequences():
    cases = {0: flat(1, 2), 1: ProblemSpec(1, 0.7, 0.7, 1, 1, 1), -1: ProblemSpec(-1, 0.8, 1.2, 1, 1, 1)}
    parts, ok = [], True
    for K, spec in cases.items():
        reports = ed.residual_decay(spec, range(3, 11))
        ratios = [r.ratio for r in reports]
        el = ed.SingularElement(spec, 3)
        xs = np.linspace(0, el.cutoff.a1, 9)[1:]
        annihilation = max(ed.SingularElement(spec, n).annihilation_residual(xs) for n in range(3, 11))
        rel = ratios[-1] / ratios[0]
        this = ed.strictly_decreasing(ratios) and rel < 1e-3 and annihilation < 1e-8
        ok = ok and this
        parts.append(f"K={K:+d}: r10/r3={rel:.2e} {'ok' if this else 'FAIL'}")
    record_criterion(9, ok, "; ".join(parts))
    assert ok


def test_criterion_10_orthonormality():
    spec = flat(1, 2)
    table = sa.spectrum_2d(spec, 3, (-2, 2))
    chosen = table.smallest(12)
    fns, flux, jump = [], 0.0, 0.0
    for r in chosen:
        psi = sa.transversal_eigenfunction(spec, r.n, r.lam)
        flux = max(flux, psi.flux_residual())
        jump = max(jump, abs(psi.continuity_jump()))
        fns.append(sa.assemble_eigenfunction(psi, r.n))
    dev = sa.gram_check(fns)
    ok = len(fns) == 12 and dev < 1e-6 and jump == 0.0 and flux < 1e-7
    record_criterion(10, ok, f"max|G-I|={dev:.2e}, continuity jump {jump:.1e}, flux residual {flux:.1e}")
    assert ok


def test_criterion_11_sign_definite_sanity():
    spec = flat(1, 2)
    n = 1
    exact = (np.arange(1, 6) * math.pi / 3.0) ** 2 + spec.q(n)
    rep = fd.oracle_compare(spec, n, exact, N=1000, sign_definite=True)
    order = rep.observed_order
    ok = rep.passed and bool(np.all(np.abs(order - 2.0) <= 0.2))
    record_criterion(11, ok, f"observed order {order.min():.4f}..{order.max():.4f}, "
                             f"max rel error {rep.rel_errors.max():.1e}")
    assert ok
