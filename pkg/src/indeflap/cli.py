"""Command-line interface: ``indeflap <command> [flags]``.

Every command writes JSON (default) or CSV to ``--output`` or stdout. Exit
codes: 0 success, 2 invalid input, 3 the output could not be written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import essential_diag, fd_oracle, rootfinder, spectrum_assembly
from .geometry import InvalidSpecError, ProblemSpec, SPEC_KEYS, homothety_scale, validate_spec
from .spectrum_assembly import fmt

COMMANDS = ("spectrum", "eigenfunction", "essential", "decay", "oracle", "scaling-check")
RANGE_FLAGS = ("--m-window", "--n-range")

DEFAULTS = {
    "format": "json",
    "n_max": 3,
    "m_window": "-3..3",
    "n": 1,
    "m": 1,
    "nx": 101,
    "ny": 101,
    "n_range": None,
    "grid": 2000,
    "roots": 5,
    "count": 6,
}


class UsageError(Exception):
    """Bad input; reported on stderr with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_range(text) -> Tuple[int, int]:
    """``"-3..3"`` or ``[-3, 3]`` to a pair of ints."""
    if isinstance(text, (list, tuple)) and len(text) == 2:
        lo, hi = int(text[0]), int(text[1])
    else:
        match = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", str(text))
        if not match:
            raise UsageError(f"expected a range like -3..3, got {text!r}")
        lo, hi = int(match.group(1)), int(match.group(2))
    if lo > hi:
        raise UsageError(f"empty range {lo}..{hi}")
    return lo, hi


def _join_range_values(argv: Sequence[str]) -> List[str]:
    """Glue ``--m-window -3..3`` into ``--m-window=-3..3`` so the value is not read as a flag."""
    out, i = [], 0
    argv = list(argv)
    while i < len(argv):
        tok = argv[i]
        if tok in RANGE_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="indeflap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON file with default values; flags override it")
        for key in SPEC_KEYS:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float)
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--output", "-o", help="output path (stdout if omitted)")

    p = sub.add_parser("spectrum", help="eigenvalues of modes 1..n-max")
    common(p)
    p.add_argument("--n-max", type=int)
    p.add_argument("--m-window")

    p = sub.add_parser("eigenfunction", help="sample one 2D eigenfunction on a grid")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)

    p = sub.add_parser("essential", help="residual ratios of cut-off approximate zero modes")
    common(p)
    p.add_argument("--n-range")
    p.add_argument("--a1", type=float)
    p.add_argument("--a2", type=float)

    p = sub.add_parser("decay", help="smallest eigenvalue per mode at critical contrast")
    common(p)
    p.add_argument("--n-range")
    p.add_argument("--control", action="store_true", default=None,
                   help="allow non-critical contrast (control run)")

    p = sub.add_parser("oracle", help="compare analytic roots with the finite-difference oracle")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--grid", type=int, help="total number of cells at the coarse level")
    p.add_argument("--roots", type=int, help="roots per side of zero")
    p.add_argument("--sign-definite", action="store_true", default=None,
                   help="use +eps on both sides and compare with the Dirichlet string spectrum")

    p = sub.add_parser("scaling-check", help="compare a spec with its curvature-normalized rescaling")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--count", type=int, help="number of eigenvalues nearest zero")
    return parser


def _settings(args: argparse.Namespace) -> Dict:
    values = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        values.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key, val in vars(args).items():
        if val is not None:
            values[key] = val
    return values


def _spec(values: Dict) -> ProblemSpec:
    missing = [k for k in SPEC_KEYS if values.get(k) is None]
    if missing:
        raise UsageError("missing spec values: " + ", ".join("--" + k.replace("_", "-") for k in missing))
    try:
        spec = ProblemSpec(**{k: float(values[k]) for k in SPEC_KEYS})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"non-numeric spec value: {exc}") from exc
    result = validate_spec(spec)
    if isinstance(result, list):
        raise InvalidSpecError(result)
    return spec


def _csv(rows: Sequence[Sequence], header: Sequence[str], meta: Optional[Dict] = None) -> str:
    buf = io.StringIO()
    for key, val in (meta or {}).items():
        buf.write(f"# {key}={fmt(val)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def cmd_spectrum(spec, v):
    table = spectrum_assembly.spectrum_2d(spec, int(v["n_max"]), parse_range(v["m_window"]))
    if v["format"] == "csv":
        return table.to_csv()
    out = table.to_dict()
    out["max_relative_residual"] = spectrum_assembly.revalidate(table)
    return _json(out)


def interface_grid(spec: ProblemSpec, nx: int) -> np.ndarray:
    """``nx`` points on ``[-b, a]`` with ``x = 0`` as an exact node."""
    if nx < 3:
        raise UsageError("--nx must be at least 3")
    cells = nx - 1
    left = min(max(1, int(round(cells * spec.b / (spec.a + spec.b)))), cells - 1)
    right = cells - left
    return np.concatenate([np.linspace(-spec.b, 0.0, left + 1)[:-1], np.linspace(0.0, spec.a, right + 1)])


def cmd_eigenfunction(spec, v):
    n, m = int(v["n"]), int(v["m"])
    modes = rootfinder.enumerate_modes(spec, n, (min(m, -1), max(m, 1)))
    try:
        rec = modes.by_m(m)
    except KeyError:
        raise UsageError(f"no eigenvalue with (n, m) = ({n}, {m}) in the computed table") from None
    psi = spectrum_assembly.transversal_eigenfunction(spec, n, rec.lam)
    fn = spectrum_assembly.assemble_eigenfunction(psi, n)
    xs = interface_grid(spec, int(v["nx"]))
    ny = int(v["ny"])
    if ny < 2:
        raise UsageError("--ny must be at least 2")
    ys = np.linspace(0.0, spec.c, ny)
    vals = fn(xs[:, None], ys[None, :])
    meta = {"n": n, "m": m, "lambda": rec.lam, "kind": rec.kind, "residual": rec.residual,
            "method": rec.method, "flux_residual": psi.flux_residual(),
            "continuity_jump": psi.continuity_jump(), "norm_squared": psi.norm_squared()}
    if v["format"] == "csv":
        rows = [(x, y, vals[i, j]) for i, x in enumerate(xs) for j, y in enumerate(ys)]
        return _csv(rows, ("x", "y", "value"), meta)
    meta.update({"x": xs.tolist(), "y": ys.tolist(), "values": vals.tolist()})
    return _json(meta)


def cmd_essential(spec, v):
    lo, hi = parse_range(v["n_range"] or "1..10")
    cutoff = essential_diag.CutoffProfile.default(spec)
    if v.get("a1") is not None or v.get("a2") is not None:
        cutoff = essential_diag.CutoffProfile(float(v.get("a1") or cutoff.a1),
                                              float(v.get("a2") or cutoff.a2))
    try:
        cutoff.check(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    reports = essential_diag.residual_decay(spec, range(lo, hi + 1), cutoff)
    xs = np.linspace(0.0, cutoff.a1, 9)[1:]
    annihilation = max(essential_diag.SingularElement(spec, r.n, cutoff).annihilation_residual(xs)
                       for r in reports)
    ratios = [r.ratio for r in reports]
    summary = {"a1": cutoff.a1, "a2": cutoff.a2,
               "envelope_constant": essential_diag.envelope_constant(reports),
               "strictly_decreasing": essential_diag.strictly_decreasing(ratios),
               "last_over_first": ratios[-1] / ratios[0],
               "annihilation_residual": annihilation}
    if v["format"] == "csv":
        rows = [(r.n, r.norm_phi, r.norm_Aphi, r.ratio, r.bound) for r in reports]
        return _csv(rows, ("n", "norm_phi", "norm_Aphi", "ratio", "bound"), summary)
    return _json({"spec": spec.to_dict(), "rows": [r.to_dict() for r in reports], **summary})


def cmd_decay(spec, v):
    lo, hi = parse_range(v["n_range"] or "2..8")
    table = essential_diag.critical_decay_probe(spec, range(lo, hi + 1),
                                                require_critical=not v.get("control"))
    summary = {"strictly_decreasing": table.strictly_decreasing,
               "last_over_first": table.last_over_first}
    if v["format"] == "csv":
        rows = [(r.n, r.min_abs_lambda, r.scaled, r.sharp) for r in table.rows]
        return _csv(rows, ("n", "min_abs_lambda", "scaled", "sharp"), summary)
    return _json({"spec": spec.to_dict(), "rows": table.to_dicts(), **summary})


def cmd_oracle(spec, v):
    n, k = int(v["n"]), int(v["roots"])
    if k < 1:
        raise UsageError("--roots must be positive")
    if v.get("sign_definite"):
        if spec.K != 0 or spec.eps_plus != spec.eps_minus:
            raise UsageError("--sign-definite has a closed-form reference only for K=0 and eps_plus=eps_minus")
        j = np.arange(1, 2 * k + 1)
        roots = spec.eps_plus * ((j * math.pi / (spec.a + spec.b)) ** 2 + spec.q(n))
    else:
        roots = [r.lam for r in rootfinder.enumerate_modes(spec, n, (-k, k))]
    try:
        report = fd_oracle.oracle_compare(spec, n, roots, N=int(v["grid"]),
                                          sign_definite=bool(v.get("sign_definite")))
    except fd_oracle.CountMismatchError as exc:
        out = {"spec": spec.to_dict(), "n": n, "passed": False, "error": str(exc)}
        return _json(out) if v["format"] == "json" else _csv([], ("error",), {"error": str(exc)})
    out = report.to_dict()
    order = report.observed_order
    if v["format"] == "csv":
        rows = [(row["analytic"], row["coarse"], row["fine"], row["extrapolated"],
                 row["rel_error"], row["abs_error"], o) for row, o in zip(out["rows"], order)]
        return _csv(rows, ("analytic", "coarse", "fine", "extrapolated", "rel_error",
                           "abs_error", "observed_order"),
                    {"n": n, "passed": report.passed, "status": "PASS" if report.passed else "FAIL"})
    for row, o in zip(out["rows"], order):
        row["observed_order"] = float(o)
    out.update({"spec": spec.to_dict(), "n": n, "status": "PASS" if report.passed else "FAIL"})
    return _json(out)


def nearest_zero(spec: ProblemSpec, n: int, count: int):
    modes = rootfinder.enumerate_modes(spec, n, (-count, count))
    return sorted(modes.records, key=lambda r: (abs(r.lam), r.m))[:count]


def cmd_scaling(spec, v):
    n, count = int(v["n"]), int(v["count"])
    scaled = homothety_scale(spec)
    base = {r.m: r for r in nearest_zero(spec, n, count)}
    ref = {r.m: r for r in rootfinder.enumerate_modes(scaled.scaled_spec, n, (-count, count))}
    rows = []
    for m in sorted(base):
        if m not in ref:
            rows.append((m, base[m].lam, math.nan, math.nan))
            continue
        want = scaled.eigenvalue_factor * ref[m].lam
        got = base[m].lam
        err = 0.0 if got == want else abs(got - want) / max(abs(got), abs(want))
        rows.append((m, got, want, err))
    worst = max(r[3] for r in rows)
    summary = {"factor": scaled.eigenvalue_factor, "max_rel_error": worst}
    if v["format"] == "csv":
        return _csv(rows, ("m", "lambda", "factor_times_scaled", "rel_error"), summary)
    return _json({"spec": spec.to_dict(), "scaled_spec": scaled.scaled_spec.to_dict(), "n": n,
                  "rows": [dict(zip(("m", "lambda", "factor_times_scaled", "rel_error"), r))
                           for r in rows], **summary})


HANDLERS = {
    "spectrum": cmd_spectrum,
    "eigenfunction": cmd_eigenfunction,
    "essential": cmd_essential,
    "decay": cmd_decay,
    "oracle": cmd_oracle,
    "scaling-check": cmd_scaling,
}


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_join_range_values(argv))
        values = _settings(args)
        spec = _spec(values)
        text = HANDLERS[args.command](spec, values)
    except InvalidSpecError as exc:
        for msg in exc.violations:
            print(f"invalid spec: {msg}", file=stderr)
        return 2
    except UsageError as exc:
        print(str(exc), file=stderr)
        return 2
    except SystemExit as exc:        # --help
        return int(exc.code or 0)
    path = values.get("output")
    if not path:
        stdout.write(text)
        return 0
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"cannot write {path}: {exc}", file=stderr)
        return 3
    return 0


def main() -> int:
    return run()
