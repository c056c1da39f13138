"""Runnable checks for the plug axioms P.1-P.4 and the t -> -t symmetry.

Every check returns a :class:`VerificationReport` whose ``passed`` flag is
derived from the recorded metrics and thresholds.  P.4 is checked through
horizon-bounded surrogates; nothing here is a proof of aperiodicity.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (
    TWO_PI,
    PlugParams,
    PlugPoint,
    collar_mask,
    sample_points,
    validate_params,
    wrap_angle,
)
from .flow import (
    DEGENERACY_RTOL,
    Status,
    TorusTag,
    closure_gap,
    integrate,
    kernel_direction,
    orient,
    torus_distance,
)
from .forms import eval_omega, pfaffian_cofactors


@dataclass
class VerificationReport:
    tag: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)
    params_hash: str = ""
    notes: str = ""

    def to_record(self, **extra) -> str:
        d = asdict(self)
        d.update(extra)
        return json.dumps(d, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, PlugPoint):
        return o.as_array().tolist()
    return str(o)


class SearchFailure(RuntimeError):
    def __init__(self, msg, stalled=None):
        super().__init__(msg)
        self.stalled = stalled


@dataclass(frozen=True)
class EntrySpec:
    """N-coordinates of a point on the entry face t = -1."""

    theta1: float
    theta2: float
    theta3: float
    x: float

    def point(self, t: float = -1.0) -> PlugPoint:
        return PlugPoint(self.theta1, self.theta2, self.theta3, self.x, t)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3, self.x])

    @classmethod
    def from_point(cls, q: PlugPoint) -> "EntrySpec":
        return cls(q.theta1, q.theta2, q.theta3, q.x)


def n_distance(a, b) -> float:
    """Flat distance between N-coordinates with periodic angles."""
    d = np.asarray(b, dtype=float)[..., :4] - np.asarray(a, dtype=float)[..., :4]
    d[..., :3] = wrap_angle(d[..., :3])
    return np.sqrt(np.sum(d * d, axis=-1))


def line_angle(a, b):
    """Angle between the lines spanned by unit vectors a and b (batched)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sgn = np.where(np.sum(a * b, axis=-1) < 0, -1.0, 1.0)[..., None]
    b = b * sgn
    return 2.0 * np.arctan2(
        np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1)
    )


def _refuse(tag, p, vr) -> VerificationReport:
    return VerificationReport(
        tag, False,
        metrics={"params_valid": 0.0},
        witnesses=[f"{name}: {vr.checks[name][1]}" for name in vr.failures()],
        params_hash=p.digest(),
        notes="parameter validation failed: " + ", ".join(vr.failures()),
    )


# ---------------------------------------------------------------------------
# P.1

def collar_samples(p: PlugParams, n: int, seed: int = 0) -> tuple[np.ndarray, int]:
    """``n`` quasi-random points of P lying in the boundary collar.

    Returns the points and how many interior candidates were filtered out.
    """
    k = 2 * n
    while True:
        pts = sample_points(p, k, seed)
        mask = collar_mask(p, pts[:, 3], pts[:, 4])
        if mask.sum() >= n:
            idx = np.flatnonzero(mask)[:n]
            return pts[idx], int(idx[-1] + 1 - n)
        k *= 2


def verify_P1(p: PlugParams, n_samples: int = 1000, seed: int = 0,
              max_angle: float = 1e-8) -> VerificationReport:
    """Kernel of w is the t-axis on the boundary collar."""
    vr = validate_params(p)
    if not vr.passed:
        return _refuse("P1", p, vr)
    pts, n_filtered = collar_samples(p, n_samples, seed)
    v = kernel_direction(eval_omega(p, pts))
    ang = np.arctan2(np.linalg.norm(v[:, :4], axis=1), np.abs(v[:, 4]))
    i = int(np.argmax(ang))
    return VerificationReport(
        "P1",
        bool(ang[i] <= max_angle),
        metrics={"worst_angle": float(ang[i]), "n_samples": len(pts),
                 "n_interior_filtered": n_filtered},
        thresholds={"max_angle": max_angle},
        witnesses=[pts[i].tolist()],
        params_hash=p.digest(),
    )


# ---------------------------------------------------------------------------
# P.2

def _candidate_offsets():
    for axis in (4, 3, 2):
        for sign in (-1.0, 1.0):
            e = np.zeros(5)
            e[axis] = sign
            yield e


def find_trapped_entry(
    p: PlugParams,
    backward_horizon: float = 200.0,
    tol: float = 1e-10,
    offset: float = 1e-3,
    direction=None,
    check_horizon: float = 400.0,
) -> EntrySpec:
    """Locate an entry point whose forward characteristic is trapped by T-.

    Starts next to the torus at t = -1/2, follows the reversed field back to
    t = -1 and re-integrates forward from the crossing to confirm trapping.
    Candidate offsets along +-t, +-x, +-theta3 are tried in order of how fast
    the backward flow carries them away from the torus, unless ``direction``
    (a 5-vector) fixes one.
    """
    base = np.array([0.0, 0.0, p.theta_tilde, 0.0, -0.5])
    if direction is not None:
        cands = [np.asarray(direction, dtype=float) / np.linalg.norm(direction)]
    else:
        scored = []
        for e in _candidate_offsets():
            q = PlugPoint.from_array(base + offset * e)
            tr = integrate(p, q, 1.0, tol, direction=-1, stop_on_trap=False, record=False)
            growth = float(torus_distance(p, tr.points[-1], TorusTag.MINUS))
            scored.append((-growth, len(scored), e))
        cands = [e for _, _, e in sorted(scored, key=lambda z: z[:2])]

    stalled = []
    for e in cands:
        q = PlugPoint.from_array(base + offset * e)
        back = integrate(p, q, backward_horizon, tol, direction=-1,
                         stop_on_trap=False, record=False)
        if back.status is not Status.EXITED_BOTTOM:
            stalled.append(back.final.as_array().tolist())
            continue
        entry = EntrySpec.from_point(back.exit_point)
        fwd = integrate(p, entry.point(), check_horizon, tol)
        d = float(torus_distance(p, fwd.points[-1], TorusTag.MINUS))
        if fwd.status is Status.TRAPPED_NEAR and fwd.torus_tag is TorusTag.MINUS and d < 1e-2:
            return entry
        stalled.append(back.final.as_array().tolist())
    raise SearchFailure("no candidate offset produced a trapped entry", stalled)


def verify_P2(p: PlugParams, entry: EntrySpec, horizon: float = 1000.0,
              tol: float = 1e-10, max_final_distance: float = 1e-2,
              tail_fraction: float = 0.2) -> VerificationReport:
    """The characteristic through ``entry`` never reaches t = 1."""
    tr = integrate(p, entry.point(), horizon, tol, stop_on_trap=False)
    d = torus_distance(p, tr.points, TorusTag.MINUS)
    tail = tr.s >= (1.0 - tail_fraction) * tr.arclength
    max_t_tail = float(np.max(tr.points[tail, 4]))
    max_rise = float(np.max(np.diff(d[tail]), initial=0.0))
    final_d = float(d[-1])
    status_ok = tr.status in (Status.TRAPPED_NEAR, Status.HORIZON_REACHED)
    passed = (
        status_ok
        and final_d < max_final_distance
        and max_t_tail < 1.0 - 1e-3
        and max_rise <= 0.0
    )
    notes = ""
    if tr.status is Status.HORIZON_REACHED and final_d >= max_final_distance:
        notes = "insufficient horizon: trajectory not yet near the torus"
    return VerificationReport(
        "P2",
        bool(passed),
        metrics={
            "final_torus_distance": final_d,
            "max_t": float(np.max(tr.points[:, 4])),
            "max_t_tail": max_t_tail,
            "tail_max_distance_increase": max_rise,
            "arclength": tr.arclength,
            "status": tr.status.value,
            "dwell": tr.info.get("dwell", 0.0),
            "distance_envelope": [float(d[k]) for k in np.linspace(0, len(d) - 1, 11).astype(int)],
        },
        thresholds={"max_final_distance": max_final_distance, "max_t_tail": 1 - 1e-3,
                    "tail_fraction": tail_fraction, "horizon": horizon, "tol": tol},
        witnesses=[entry.as_array().tolist()],
        params_hash=p.digest(),
        notes=notes,
    )


# ---------------------------------------------------------------------------
# P.3

def sample_entries(p: PlugParams, n: int, seed: int = 0,
                   exclusion: float = 1e-3) -> list[EntrySpec]:
    """Quasi-random entries whose theta3 lies in the support of the theta3-bump.

    Every such characteristic crosses the region where the profiles differ
    from the collar values.  Entries within ``exclusion`` of the trapped line
    ``{theta3 = trap angle, x = 0}`` are skipped.
    """
    box = [
        (0, TWO_PI), (0, TWO_PI),
        (p.theta_tilde - p.a_th, p.theta_tilde + p.a_th),
        (-p.eps, p.eps), (-1, -1),
    ]
    out = []
    k = n
    while len(out) < n:
        pts = sample_points(p, k, seed, box=box)
        out = [
            EntrySpec(*row[:4]) for row in pts
            if math.hypot(float(wrap_angle(row[2] - p.theta_tilde)), row[3]) >= exclusion
        ][:n]
        k += n
    return out


def classify_transit(p: PlugParams, entry: EntrySpec, horizon: float, tol: float):
    tr = integrate(p, entry.point(), horizon, tol)
    if tr.status is Status.EXITED_TOP:
        return "exit", float(n_distance(entry.as_array(), tr.exit_point.as_array())), tr
    if tr.status is Status.TRAPPED_NEAR:
        return "trapped", None, tr
    return "inconclusive", None, tr


def verify_P3(p: PlugParams, n_entries: int = 100, horizon: float = 1000.0,
              tol: float = 1e-10, seed: int = 0, match_tol: float = 1e-5,
              max_inconclusive_fraction: float = 0.05) -> VerificationReport:
    """Characteristics entering at (-1, p) and exiting do so at (1, p)."""
    if n_entries < 1:
        raise ValueError("n_entries must be >= 1")
    entries = sample_entries(p, n_entries, seed)
    mism, lengths, exited, trapped, inconclusive, witnesses = [], [], [], 0, 0, []
    for e in entries:
        kind, err, tr = classify_transit(p, e, horizon, tol)
        if kind == "exit":
            mism.append(err)
            lengths.append(tr.arclength)
            exited.append(e)
        elif kind == "trapped":
            trapped += 1
            witnesses.append({"trapped": e.as_array().tolist()})
        else:
            inconclusive += 1
            witnesses.append({"inconclusive": e.as_array().tolist(), "status": tr.status.value})
    worst = max(mism) if mism else float("nan")
    if mism:
        i = int(np.argmax(mism))
        witnesses.append({"worst_exit": exited[i].as_array().tolist(), "mismatch": mism[i]})
    passed = (
        bool(mism)
        and worst <= match_tol
        and inconclusive <= max_inconclusive_fraction * n_entries
    )
    return VerificationReport(
        "P3",
        bool(passed),
        metrics={
            "n_entries": len(entries),
            "n_exited": len(mism),
            "n_trapped": trapped,
            "n_inconclusive": inconclusive,
            "max_mismatch": worst,
            "max_arclength": max(lengths) if lengths else 0.0,
            "mismatch_per_arclength": max((m / l for m, l in zip(mism, lengths)), default=0.0),
        },
        thresholds={"match_tol": match_tol, "tol": tol, "horizon": horizon,
                    "max_inconclusive": max_inconclusive_fraction * n_entries},
        witnesses=witnesses,
        params_hash=p.digest(),
    )


# ---------------------------------------------------------------------------
# P.4 surrogate

def torus_probe_points(p: PlugParams, n: int, seed: int = 0,
                       offsets=(0.0, 1e-6, 1e-4, 1e-3)) -> np.ndarray:
    """Points on both tori and at small offsets from them in (theta3, x, t)."""
    rng = np.random.default_rng(seed)
    out = []
    for t0 in (0.5, -0.5):
        for r in offsets:
            ang = rng.uniform(0, TWO_PI, size=(n, 2))
            dirs = rng.normal(size=(n, 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            base = np.array([p.theta_tilde, 0.0, t0])
            out.append(np.column_stack([ang, base + r * dirs]))
    return np.vstack(out)


def _sign_check(p, pts, min_vt, nbhd):
    w = eval_omega(p, pts)
    v = pfaffian_cofactors(w)
    c1 = np.sum(v * v, axis=1)
    scale = np.sum(w * w, axis=(1, 2)) ** 2
    degenerate = ~(c1 > DEGENERACY_RTOL * scale)
    ok = ~degenerate
    u = np.zeros_like(v)
    # continuity reference for rule (ii): the cofactor field itself, which is
    # smooth on all of P; rule (iii) alone would flip the sign near T+
    unit = v[ok] / np.sqrt(c1[ok])[:, None]
    u[ok] = orient(p, unit, prev=unit)
    vt = u[:, 4]
    d = np.minimum(torus_distance(p, pts, TorusTag.PLUS), torus_distance(p, pts, TorusTag.MINUS))
    neg = ok & (vt < min_vt)
    zero_off_torus = ok & (d >= nbhd) & (vt <= 0)
    return degenerate, neg, zero_off_torus, vt, d


def verify_P4_surrogate(
    p: PlugParams,
    n_grid: int = 100_000,
    n_traj: int = 8,
    horizon: float = 1000.0,
    tol: float = 1e-10,
    seed: int = 0,
    min_gap: float = 1e-3,
    min_separation: float = 1.0,
    entry: EntrySpec | None = None,
) -> VerificationReport:
    """Three necessary conditions for the absence of closed characteristics.

    (i) v_t >= 0 everywhere and v_t > 0 away from the tori, (ii) the kernel on
    the tori is the linear flow of the trap angle, (iii) no sampled
    characteristic comes back near itself within the horizon.  If (i) finds a
    point where w is degenerate, (ii) and (iii) are skipped: the kernel line
    field is not defined there.
    """
    min_vt = -1e-9
    nbhd = 1e-2
    sub = {}
    metrics = {}
    witnesses = []

    grid = np.vstack([sample_points(p, n_grid, seed), torus_probe_points(p, 16, seed)])
    degenerate, neg, zero_off, vt, d = _sign_check(p, grid, min_vt, nbhd)
    sub["i"] = not (degenerate.any() or neg.any() or zero_off.any())
    metrics["i_n_points"] = len(grid)
    metrics["i_n_degenerate"] = int(degenerate.sum())
    metrics["i_min_vt"] = float(vt[~degenerate].min()) if (~degenerate).any() else float("nan")
    off = (~degenerate) & (d >= nbhd)
    metrics["i_min_vt_off_torus"] = float(vt[off].min()) if off.any() else float("nan")
    for name, mask in (("degenerate", degenerate), ("v_t<0", neg), ("v_t=0 off torus", zero_off)):
        for row in grid[mask][:5]:
            witnesses.append({name: row.tolist()})

    skipped = bool(degenerate.any())
    if skipped:
        sub["ii"] = None
        sub["iii"] = None
    else:
        rng = np.random.default_rng(seed + 1)
        k = max(1, n_grid // 1000)
        tp = []
        for t0 in (0.5, -0.5):
            ang = rng.uniform(0, TWO_PI, size=(k, 2))
            tp.append(np.column_stack([ang, np.full(k, p.theta_tilde), np.zeros(k), np.full(k, t0)]))
        tp = np.vstack(tp)
        u = orient(p, kernel_direction(eval_omega(p, tp)))
        target = np.array([math.cos(p.theta_tilde), math.sin(p.theta_tilde), 0, 0, 0])
        err = float(np.max(np.linalg.norm(u - target, axis=1)))
        sub["ii"] = err <= 1e-8
        metrics["ii_max_direction_error"] = err

        trajs = []
        for t0 in (-0.5, 0.5):
            q = PlugPoint(0.0, 0.0, p.theta_tilde, 0.0, t0)
            trajs.append((f"torus{'+' if t0 > 0 else '-'}", integrate(p, q, horizon, tol)))
        if entry is not None:
            trajs.append(("trapped", integrate(p, entry.point(), horizon, tol, stop_on_trap=False)))
        n_generic = max(0, n_traj - len(trajs))
        for e in sample_entries(p, n_generic, seed + 2):
            trajs.append(("entry", integrate(p, e.point(), horizon, tol)))
        gaps = []
        for name, tr in trajs:
            g = closure_gap(tr, min_separation)
            gaps.append(g)
            metrics[f"iii_gap_{name}_{len(gaps) - 1}"] = g
            if g < min_gap:
                witnesses.append({"near_closure": name, "gap": g,
                                  "start": tr.points[0].tolist()})
        metrics["iii_min_gap"] = float(min(gaps))
        metrics["iii_n_traj"] = len(trajs)
        sub["iii"] = bool(min(gaps) >= min_gap)

    passed = all(v is True for v in sub.values())
    metrics.update({f"sub_{k}": (None if v is None else bool(v)) for k, v in sub.items()})
    return VerificationReport(
        "P4",
        passed,
        metrics=metrics,
        thresholds={"min_vt": min_vt, "torus_nbhd": nbhd, "direction_tol": 1e-8,
                    "min_gap": min_gap, "min_separation": min_separation,
                    "horizon": horizon, "tol": tol},
        witnesses=witnesses,
        params_hash=p.digest(),
        notes="horizon-bounded surrogate for aperiodicity, not a proof"
              + ("; (ii),(iii) skipped: degenerate form" if skipped else ""),
    )


# ---------------------------------------------------------------------------
# symmetry

def symmetry_angles(p: PlugParams, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    mirrored = pts.copy()
    mirrored[..., 4] *= -1
    v = kernel_direction(eval_omega(p, pts))
    w = kernel_direction(eval_omega(p, mirrored))
    v[..., 4] *= -1          # d psi
    return line_angle(v, w)


def verify_symmetry(p: PlugParams, n_samples: int = 10_000, seed: int = 0,
                    max_angle: float = 1e-6) -> VerificationReport:
    """Kernel line at psi(q) is the d psi image of the kernel line at q."""
    pts = sample_points(p, n_samples, seed)
    ang = symmetry_angles(p, pts)
    i = int(np.argmax(ang))
    return VerificationReport(
        "SYM",
        bool(ang[i] <= max_angle),
        metrics={"worst_angle": float(ang[i]), "n_samples": n_samples},
        thresholds={"max_angle": max_angle},
        witnesses=[pts[i].tolist()],
        params_hash=p.digest(),
    )


def verify_trap_flow(p: PlugParams, entry: EntrySpec, horizon: float = 1000.0,
                     tol: float = 1e-10, max_angle: float = 1e-2) -> VerificationReport:
    """The trapped characteristic ends up moving like the flow on T-."""
    tr = integrate(p, entry.point(), horizon, tol, stop_on_trap=False)
    res = integrate(p, PlugPoint(0.0, 0.0, p.theta_tilde, 0.0, -0.5), horizon, tol)
    ang = float(line_angle(tr.velocities[-1], res.velocities[-1]))
    return VerificationReport(
        "TRAP_FLOW",
        ang <= max_angle,
        metrics={"final_direction_angle": ang,
                 "final_torus_distance": float(torus_distance(p, tr.points[-1], TorusTag.MINUS))},
        thresholds={"max_angle": max_angle},
        witnesses=[entry.as_array().tolist()],
        params_hash=p.digest(),
    )
