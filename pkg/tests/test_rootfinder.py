import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indeflap import curved_shooting as cs
from indeflap import flat_kernels as fk
from indeflap import rootfinder as rf
from indeflap.geometry import ProblemSpec

SINGULAR_C = 4.6400671187151419262


def flat(a, b, c=1.0, ep=1.0, em=1.0):
    return ProblemSpec(0, a, b, c, ep, em)


def test_identity_refines_to_zero():
    root = rf.refine(lambda x: x, (-1.0, 2.0))
    assert abs(root.lam) < 1e-13


def test_constant_sign_has_no_brackets():
    scan = rf.bracket_scan(lambda x: np.full_like(x, 3.0), rf.ScanPlan(-5, 5))
    assert len(scan) == 0 and scan.touches == []


def test_scan_plan_validation():
    with pytest.raises(ValueError):
        rf.ScanPlan(1.0, 1.0)
    with pytest.raises(ValueError):
        rf.ScanPlan(0.0, 1.0, max_phase_step=1.0)
    with pytest.raises(ValueError):
        rf.ScanPlan(0.0, 1.0, resolution=0.0)


@given(st.floats(0.05, math.pi / 4), st.floats(0.5, 3.0))
@settings(max_examples=20)
def test_grid_respects_phase_bound(step, a):
    fn = rf.ModeFunction(flat(a, 1.0), 1)
    plan = rf.ScanPlan(-300.0, 300.0, max_phase_step=step, max_step=5.0)
    grid = rf.scan_grid(plan, fn.phase)
    assert grid[0] == -300.0 and grid[-1] == 300.0
    assert np.all(np.diff(grid) > 0)
    phases = np.array([fn.phase(x) for x in grid])
    jumps = np.abs(np.diff(phases))
    ok = (jumps <= step * (1 + 1e-12)) | (np.diff(grid) <= plan.resolution * 1.0001)
    assert np.all(ok)


def brute_force_roots(fn, lo, hi, points=1_000_000):
    xs = np.linspace(lo, hi, points + 1)
    s = np.sign(fn(xs))
    # exact zero samples plus strict sign flips between neighbouring samples
    return np.count_nonzero(s == 0) + np.count_nonzero(s[1:] * s[:-1] < 0)


def test_bracket_count_matches_brute_force():
    fn = rf.ModeFunction(flat(1, 1), 1)
    scan = rf.bracket_scan(fn, rf.ScanPlan(-40, 40), fn.phase)
    assert len(scan) == brute_force_roots(fn, -40, 40)
    assert any(b.lo <= 0.0 <= b.hi for b in scan)


def test_single_root_below_threshold():
    fn = rf.ModeFunction(flat(1, 2), 1)
    pi2 = math.pi ** 2
    scan = rf.bracket_scan(fn, rf.ScanPlan(-pi2 * (1 - 1e-12), pi2 * (1 - 1e-12)), fn.phase)
    assert len(scan) == 1


def test_flat_zero_bracket_refines_to_zero():
    fn = rf.ModeFunction(flat(1, 1), 1)
    assert abs(rf.refine(fn, (-0.5, 0.7)).lam) < 1e-12


def test_curved_zero_bracket_refines_to_zero():
    spec = ProblemSpec(1, 0.7, 0.7, 1, 1, 1)
    root = rf.refine(lambda x: cs.shoot_match(spec, 1, x, normalized=True), (-0.5, 0.7))
    assert abs(root.lam) < 1e-9


def test_lost_bracket():
    with pytest.raises(rf.LostBracketError):
        rf.refine(lambda x: x * x + 1.0, (-1.0, 1.0))


def test_non_finite_value_reports_location():
    with pytest.raises(rf.NonFiniteValueError) as err:
        rf.bracket_scan(lambda x: 1.0 / x if x != 0 else math.inf, rf.ScanPlan(-1, 1))
    assert err.value.lam == 0.0


def test_exact_zero_sample_is_a_bracket():
    scan = rf.bracket_scan(lambda x: x, rf.ScanPlan(-1, 1))
    assert [b.exact for b in scan] == [True]


def test_touching_root_is_flagged():
    scan = rf.bracket_scan(lambda x: (x - 0.3) ** 2, rf.ScanPlan(-1, 1))
    assert any(t.lo <= 0.3 <= t.hi for t in scan.touches)


def test_hidden_root_pair_is_split():
    scan = rf.bracket_scan(lambda x: (x - 0.3) ** 2 - 1e-10, rf.ScanPlan(-1, 1))
    roots = sorted(rf.refine(lambda x: (x - 0.3) ** 2 - 1e-10, b).lam for b in scan)
    assert roots == pytest.approx([0.3 - 1e-5, 0.3 + 1e-5], abs=1e-12)


def test_zero_record_for_symmetric_critical():
    modes = rf.enumerate_modes(flat(1, 1), 1)
    rec = modes.by_m(0)
    assert rec.lam == 0.0 and rec.kind == "zero"
    assert modes.zero_is_root


def test_singular_plus_record():
    modes = rf.enumerate_modes(flat(1, 2, SINGULAR_C), 1)
    sing = [r for r in modes if r.kind == "singular_plus"]
    assert len(sing) == 1
    assert sing[0].lam == pytest.approx((math.pi / SINGULAR_C) ** 2, rel=1e-12)
    assert sing[0].lam == pytest.approx(0.45840697806208, rel=1e-12)


def test_non_critical_contrast_has_gap_at_zero():
    modes = rf.enumerate_modes(flat(1, 1, 1, 2, 1), 1, (-5, 5))
    assert all(r.m != 0 for r in modes)
    assert min(abs(r.lam) for r in modes) > 1.0


@pytest.mark.parametrize("spec", [flat(1, 2), flat(1, 1), flat(0.5, 1.5, 2, 3, 1),
                                  ProblemSpec(1, 0.6, 0.9, 1, 1, 1.5),
                                  ProblemSpec(-1, 0.8, 1.2, 1, 2, 1)])
def test_signed_indexing(spec):
    modes = rf.enumerate_modes(spec, 2, (-4, 4))
    ms = [r.m for r in modes]
    lams = [r.lam for r in modes]
    assert ms == sorted(ms)
    assert np.all(np.diff(lams) > 0)
    pos = [r for r in modes if r.lam > 0]
    neg = [r for r in modes if r.lam < 0]
    assert pos[0].m == 1 and neg[-1].m == -1
    assert set(range(-4, 5)) - {0} <= set(ms)
    lo, hi = modes.window
    assert lo <= lams[0] and lams[-1] <= hi


def test_records_carry_method_and_residual():
    for spec, method in ((flat(1, 2), "flat_entire"), (ProblemSpec(1, 0.6, 0.9, 1, 1, 1), "shooting")):
        for r in rf.enumerate_modes(spec, 1, (-2, 2)):
            assert r.method == method
            assert r.residual < 1e-8
            assert r.kind in rf.KINDS


def test_window_covers_every_root_of_brute_force():
    spec = flat(1, 2, 1, 1.5, 1)
    modes = rf.enumerate_modes(spec, 1, (-3, 3))
    lo, hi = modes.window
    fn = rf.ModeFunction(spec, 1)
    lams, _ = rf.find_roots(fn, lo, hi)
    assert brute_force_roots(fn, lo, hi, 400_000) == len(lams)


def test_roots_accumulate_in_both_directions():
    fn = rf.ModeFunction(flat(1, 2), 1)
    counts = []
    for big in (1e2, 1e3, 1e4):
        lams, _ = rf.find_roots(fn, -big, big)
        counts.append((sum(x < 0 for x in lams), sum(x > 0 for x in lams)))
    neg, pos = zip(*counts)
    assert neg[0] < neg[1] < neg[2]
    assert pos[0] < pos[1] < pos[2]


def test_enumeration_is_deterministic():
    spec = ProblemSpec(-1, 0.8, 1.2, 1, 2, 1)
    first = [r.to_dict() for r in rf.enumerate_modes(spec, 1)]
    second = [r.to_dict() for r in rf.enumerate_modes(spec, 1)]
    assert first == second


def test_central_root_is_polished():
    spec = flat(1, 2)
    modes = rf.enumerate_modes(spec, 1, (-1, 1))
    central = [r.lam for r in modes if abs(r.lam) < spec.q(1)]
    assert central == [fk.central_root(spec, 1)]


def test_empty_m_window():
    with pytest.raises(ValueError):
        rf.enumerate_modes(flat(1, 1), 1, (2, 1))
