"""Command-line entry point: ``symplug <subcommand> [flags]``.

Exit codes: 0 when every requested check passes, 1 when one fails, 2 on a
usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import PlugParams, PlugPoint, check_profile_axioms, load_config, validate_params
from .embeddings import embedding_suite, homotopy_isotopy_check
from .flow import Status, integrate
from .forms import nondegeneracy_sweep
from .harness import demo_destroy_orbit
from .verifier import (
    SearchFailure,
    VerificationReport,
    find_trapped_entry,
    verify_P1,
    verify_P2,
    verify_P3,
    verify_P4_surrogate,
    verify_symmetry,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PROPERTIES = ("P1", "P2", "P3", "P4", "SYM")
SUB_NAMES = {"i": "sign of v_t", "ii": "torus kernel direction", "iii": "torus closure"}


class UsageError(Exception):
    pass


def _common_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="flat key = value parameter file")
    parser.add_argument("--seed", type=int, default=d(0))
    parser.add_argument("--out", default=d("."), help="output directory")
    parser.add_argument("--tol", type=float, default=d(1e-10))
    parser.add_argument("--horizon", type=float, default=d(1000.0))
    parser.add_argument("--format", choices=("table", "records"), default=d("table"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _common_flags(common, suppress=True)
    ap = argparse.ArgumentParser(prog="symplug", description=__doc__.splitlines()[0])
    _common_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="parameters and profile axioms")
    sp = sub.add_parser("sweep", parents=[common], help="nondegeneracy over the tau grid")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--taus", type=int, default=11, help="number of tau values in [0, 1]")
    sp = sub.add_parser("verify", parents=[common], help="plug properties")
    sp.add_argument("properties", nargs="*", metavar="PROP",
                    help=f"any of {' '.join(PROPERTIES)} (default: all)")
    sp = sub.add_parser("trace", parents=[common], help="single trajectory dump")
    sp.add_argument("--start", required=True, help='"theta1,theta2,theta3,x,t"')
    sp.add_argument("--backward", action="store_true")
    sp = sub.add_parser("embed-check", parents=[common], help="pullback suites")
    sp.add_argument("--mode", choices=("analytic", "finite_difference", "both"), default="both")
    sp.add_argument("--samples", type=int, default=10_000)
    sp = sub.add_parser("demo", parents=[common], help="insertion demo in a periodic box")
    sp.add_argument("--L", type=float, default=None)
    sp.add_argument("--n-controls", type=int, default=None)
    return ap


def _load(args) -> tuple[PlugParams, dict]:
    if args.config is None:
        return PlugParams(), {}
    try:
        p, extra = load_config(args.config)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    unknown = set(extra) - {"L", "n_controls"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return p, extra


class Emitter:
    """Collects (name, passed, detail, record) rows and prints them."""

    def __init__(self, fmt: str, seed: int, stream=None):
        self.fmt = fmt
        self.seed = seed
        self.stream = stream or sys.stdout
        self.all_passed = True

    def row(self, name: str, passed: bool, detail: str, record: dict) -> None:
        self.all_passed &= bool(passed)
        if self.fmt == "records":
            rec = {"check": name, "pass": bool(passed), "seed": self.seed}
            rec.update(record)
            print(json.dumps(rec, sort_keys=True, default=_plain), file=self.stream)
        else:
            print(f"{name:<12} {'PASS' if passed else 'FAIL'}  {detail}", file=self.stream)

    def report(self, r: VerificationReport, detail: str) -> None:
        rec = json.loads(r.to_record())
        rec.pop("passed")
        rec.pop("tag")
        self.row(r.tag, r.passed, detail, rec)


def _plain(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _detail(r: VerificationReport) -> str:
    m = r.metrics
    if r.tag in ("P1", "SYM"):
        return f"worst_angle={m.get('worst_angle', float('nan')):.3e}"
    if r.tag == "P2":
        return f"final_torus_distance={m['final_torus_distance']:.3e} status={m['status']}"
    if r.tag == "P3":
        keys = ("n_exited", "n_inconclusive", "max_mismatch")
        return " ".join(f"{k}={m[k]}" for k in keys if k in m)
    if r.tag == "P4":
        failed = [f"({k}) {SUB_NAMES[k]}" for k in SUB_NAMES if m.get(f"sub_{k}") is False]
        skipped = [f"({k})" for k in SUB_NAMES if f"sub_{k}" in m and m[f"sub_{k}"] is None]
        s = f"min_gap={m.get('iii_min_gap', float('nan')):.3e}"
        if failed:
            s += " failed: " + ", ".join(failed)
        if skipped:
            s += " skipped: " + ", ".join(skipped)
        return s
    return r.notes


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(p, extra, args, em: Emitter) -> None:
    vr = validate_params(p)
    em.row("params", vr.passed, "; ".join(vr.failures()) or "all invariants hold",
           {"checks": {k: ok for k, (ok, _) in vr.checks.items()}, "params_hash": p.digest()})
    if vr.passed:
        ar = check_profile_axioms(p)
        bad = [k for k, ok in ar.axioms.items() if not ok]
        em.row("profiles", ar.passed, "failed: " + ", ".join(bad) if bad else "all axioms hold",
               {"axioms": ar.axioms, "worst": ar.worst, "grid_density": ar.grid_density,
                "params_hash": p.digest()})


def cmd_sweep(p, extra, args, em: Emitter) -> None:
    taus = np.linspace(0.0, 1.0, args.taus)
    for r in nondegeneracy_sweep(p, args.samples, taus, args.seed):
        rec = json.loads(r.to_record())
        em.row(f"tau={r.tau:.2f}", r.passed,
               f"min_c1={r.min_c1:.3e} oracle_err={r.oracle_spot_check_max_err:.1e}", rec)


def cmd_verify(p, extra, args, em: Emitter) -> None:
    props = args.properties or list(PROPERTIES)
    entry = None
    for prop in props:
        if prop == "P1":
            r = verify_P1(p, seed=args.seed)
        elif prop == "SYM":
            r = verify_symmetry(p, seed=args.seed)
        elif prop == "P3":
            r = verify_P3(p, horizon=args.horizon, tol=args.tol, seed=args.seed)
        elif prop == "P2":
            if entry is None:
                try:
                    entry = find_trapped_entry(p, tol=args.tol)
                except SearchFailure as exc:
                    em.row(prop, False, f"trapped entry search failed: {exc}",
                           {"stalled": exc.stalled, "params_hash": p.digest()})
                    continue
            r = verify_P2(p, entry, horizon=args.horizon, tol=args.tol)
        else:
            if entry is None:
                try:
                    entry = find_trapped_entry(p, tol=args.tol)
                except SearchFailure:
                    entry = None    # P4 still runs its grid and torus checks
            r = verify_P4_surrogate(p, horizon=args.horizon, tol=args.tol,
                                    seed=args.seed, entry=entry)
        em.report(r, _detail(r))


def cmd_trace(p, extra, args, em: Emitter) -> None:
    try:
        vals = [float(v) for v in args.start.split(",")]
        if len(vals) != 5:
            raise ValueError("expected five comma-separated numbers")
        q = PlugPoint(*vals)
        q.check(p)
    except ValueError as exc:
        raise UsageError(f"bad --start {args.start!r}: {exc}") from exc
    tr = integrate(p, q, args.horizon, args.tol, direction=-1 if args.backward else 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.txt").write_text(tr.to_table(p))
    summary = tr.summary()
    summary.update(params_hash=p.digest(), seed=args.seed, start=vals)
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, default=_plain) + "\n")
    ok = tr.status is not Status.INTEGRATION_FAILURE
    em.row("trace", ok, f"status={tr.status.value} arclength={tr.arclength:.4g} "
           f"-> {out / 'trajectory.txt'}", summary)


def cmd_embed(p, extra, args, em: Emitter) -> None:
    modes = ("analytic", "finite_difference") if args.mode == "both" else (args.mode,)
    for mode in modes:
        r = embedding_suite(p, args.samples, args.seed, mode)
        worst = max(v for k, v in r.metrics.items() if k.endswith("_max_err"))
        r.tag = f"EMBED[{mode[:2]}]"
        em.report(r, f"max_pullback_err={worst:.2e} max|y|={r.metrics['max_abs_y']:.3e}"
                  + (f" failed: {', '.join(r.witnesses)}" if r.witnesses else ""))
    r = homotopy_isotopy_check(p, args.samples, seed=args.seed)
    em.report(r, f"min_c1={r.metrics['min_c1_over_taus']:.3e} "
              f"collar_dev={r.metrics['max_collar_deviation']:.1e}")


def cmd_demo(p, extra, args, em: Emitter) -> None:
    try:
        L = args.L if args.L is not None else float(extra.get("L", 4.0))
        n = args.n_controls if args.n_controls is not None else int(extra.get("n_controls", 50))
    except ValueError as exc:
        raise UsageError(f"bad scene key: {exc}") from exc
    if not L > 2:
        raise UsageError(f"L must exceed 2, got {L}")
    r = demo_destroy_orbit(p, L, n, seed=args.seed, tol=args.tol, horizon=args.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, table in r.dumps.items():
        (out / f"{name}.txt").write_text(table)
    em.row("DEMO", r.passed,
           f"anchor={r.anchor_status} reclosed={r.n_reclosed}/{r.n_controls} "
           f"max_gap={r.max_gap:.1e} identity={r.anchor_identity_status}",
           json.loads(r.to_record()))


COMMANDS = {
    "validate": cmd_validate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "trace": cmd_trace,
    "embed-check": cmd_embed,
    "demo": cmd_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        bad = [q for q in getattr(args, "properties", []) if q not in PROPERTIES]
        if bad:
            parser.error(f"unknown properties {bad}; choose from {' '.join(PROPERTIES)}")
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    em = Emitter(args.format, args.seed)
    try:
        p, extra = _load(args)
        vr = validate_params(p)
        if not vr.passed:
            msg = "invalid parameters: " + "; ".join(vr.failures())
            # sweeps and verification double as negative controls on bad parameters
            if args.command in ("sweep", "verify"):
                print(f"symplug: warning: {msg}", file=sys.stderr)
            elif args.command != "validate":
                raise UsageError(msg)
        COMMANDS[args.command](p, extra, args, em)
    except UsageError as exc:
        print(f"symplug: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_PASS if em.all_passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
