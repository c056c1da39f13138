"""Toy insertion of the plug into a periodic flow box.

The ambient manifold is ``S^1_L x N`` with the product form, so every
characteristic is a closed circle ``{n} x S^1_L``.  The plug occupies
``t_scene in [0, 2]`` with ``t = t_scene - 1``; outside it characteristics
move straight in ``t_scene``.  The anchor, the trapped entry found by the
verifier, is the one closed characteristic the insertion is meant to break.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

from .core import PlugParams
from .flow import Status, integrate
from .verifier import EntrySpec, find_trapped_entry, n_distance, sample_entries

RECLOSE_GAP = 1e-4
INTERFACE_TOL = 1e-8


class ConsistencyError(RuntimeError):
    """Ambient and plug segments do not meet."""


class CompositeStatus(enum.Enum):
    RECLOSED = "Reclosed"
    TRAPPED = "Trapped"
    HORIZON_REACHED = "HorizonReached"


@dataclass
class AmbientScene:
    params: PlugParams
    L: float
    anchor: EntrySpec
    inserted: bool = True

    @property
    def plug_interval(self) -> tuple[float, float]:
        return (0.0, 2.0)


@dataclass
class CompositeTrajectory:
    segments: list = field(default_factory=list)
    status: CompositeStatus = CompositeStatus.HORIZON_REACHED
    gap: float | None = None
    arclength: float = 0.0
    max_interface_mismatch: float = 0.0
    plug_trajectories: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "gap": self.gap,
            "arclength": self.arclength,
            "n_segments": len(self.segments),
            "max_interface_mismatch": self.max_interface_mismatch,
        }


def build_scene(p: PlugParams, L: float, anchor: EntrySpec | None = None,
                tol: float = 1e-10, inserted: bool = True) -> AmbientScene:
    if not L > 2:
        raise ValueError(f"period L must exceed 2 (the plug length), got {L}")
    if anchor is None:
        anchor = find_trapped_entry(p, tol=tol)
    return AmbientScene(p, float(L), anchor, inserted)


def trace_composite(scene: AmbientScene, start: EntrySpec, horizon: float = 1000.0,
                    tol: float = 1e-10, max_periods: int = 4) -> CompositeTrajectory:
    """Follow the characteristic through ``start`` on the section t_scene = 0.

    Alternates plug transits with straight ambient runs.  Stops when the
    curve comes back to its starting section point or a transit traps it;
    otherwise the horizon ends the trace.
    """
    p = scene.params
    out = CompositeTrajectory()
    n = start.as_array()
    s_total = 0.0
    for _ in range(max_periods):
        if scene.inserted:
            tr = integrate(p, EntrySpec(*n).point(), max(horizon - s_total, 1e-9), tol)
            out.plug_trajectories.append(tr)
            seg = {"kind": "plug", "start": n.tolist(), "status": tr.status.value,
                   "arclength": tr.arclength}
            s_total += tr.arclength
            if tr.status is Status.TRAPPED_NEAR:
                seg["end"] = tr.points[-1].tolist()
                out.segments.append(seg)
                out.status = CompositeStatus.TRAPPED
                break
            if tr.status is not Status.EXITED_TOP:
                seg["end"] = tr.points[-1].tolist()
                out.segments.append(seg)
                out.status = CompositeStatus.HORIZON_REACHED
                break
            exit_pt = tr.exit_point.as_array()
            seg["end"] = exit_pt.tolist()
            out.segments.append(seg)
            n_next = exit_pt[:4]
            # ambient run starts on t_scene = 2, i.e. t = 1 in plug coordinates
            mismatch = abs(exit_pt[4] - 1.0)
        else:
            out.segments.append({"kind": "box", "start": n.tolist(), "end": n.tolist(),
                                 "arclength": 2.0})
            s_total += 2.0
            n_next = n.copy()
            mismatch = 0.0
        out.max_interface_mismatch = max(out.max_interface_mismatch, mismatch)
        if mismatch > INTERFACE_TOL:
            raise ConsistencyError(f"plug exit off the face by {mismatch:.3e}")
        out.segments.append({"kind": "ambient", "start": n_next.tolist(),
                             "end": n_next.tolist(), "arclength": scene.L - 2.0})
        s_total += scene.L - 2.0
        gap = float(n_distance(start.as_array(), n_next))
        out.gap = gap
        if gap <= RECLOSE_GAP:
            out.status = CompositeStatus.RECLOSED
            break
        n = n_next
        if s_total >= horizon:
            out.status = CompositeStatus.HORIZON_REACHED
            break
    out.arclength = s_total
    return out


@dataclass
class DemoReport:
    passed: bool
    anchor_status: str
    anchor_identity_status: str
    n_controls: int
    n_reclosed: int
    n_inconclusive: int
    n_trapped_controls: int
    n_identity_reclosed: int
    n_through_anchor: int
    max_gap: float
    anchor: list
    params_hash: str
    thresholds: dict
    dumps: dict = field(default_factory=dict, repr=False)

    def to_record(self, **extra) -> str:
        d = asdict(self)
        d.pop("dumps")
        d.update(extra)
        return json.dumps(d, sort_keys=True)


def demo_destroy_orbit(p: PlugParams, L: float = 4.0, n_controls: int = 50,
                       seed: int = 0, tol: float = 1e-10, horizon: float = 1000.0,
                       controls: list[EntrySpec] | None = None,
                       max_inconclusive_fraction: float = 0.1) -> DemoReport:
    """Insert the plug, trace the anchor and control characteristics.

    The anchor must be trapped and at least 90% of the controls must
    re-close, with inconclusive controls within the cap.  Without the plug
    every traced characteristic, the anchor included, has to re-close.
    """
    scene = build_scene(p, L, tol=tol)
    bare = AmbientScene(p, scene.L, scene.anchor, inserted=False)
    if controls is None:
        controls = sample_entries(p, n_controls, seed + 7)
    anchor_tr = trace_composite(scene, scene.anchor, horizon, tol)
    anchor_bare = trace_composite(bare, scene.anchor, horizon, tol)

    gaps = []
    n_rec = n_inc = n_trap = n_bare = n_anchor = 0
    anchor_n = scene.anchor.as_array()
    for e in controls:
        ct = trace_composite(scene, e, horizon, tol)
        if ct.status is CompositeStatus.RECLOSED:
            n_rec += 1
            gaps.append(ct.gap)
            # a re-closed circle through the anchor would mean the orbit survived
            if n_distance(anchor_n, e.as_array()) <= RECLOSE_GAP:
                n_anchor += 1
        elif ct.status is CompositeStatus.TRAPPED:
            n_trap += 1
        else:
            n_inc += 1
        if trace_composite(bare, e, horizon, tol).status is CompositeStatus.RECLOSED:
            n_bare += 1

    k = len(controls)
    passed = (
        anchor_tr.status is CompositeStatus.TRAPPED
        and n_rec >= 0.9 * k
        and n_inc <= max_inconclusive_fraction * k
        and anchor_bare.status is CompositeStatus.RECLOSED
        and n_anchor == 0
        and n_bare == k
    )
    dumps = {}
    if anchor_tr.plug_trajectories:
        dumps["anchor_plug_transit"] = anchor_tr.plug_trajectories[-1].to_table(p)
    return DemoReport(
        passed=bool(passed),
        anchor_status=anchor_tr.status.value,
        anchor_identity_status=anchor_bare.status.value,
        n_controls=k,
        n_reclosed=n_rec,
        n_inconclusive=n_inc,
        n_trapped_controls=n_trap,
        n_identity_reclosed=n_bare,
        n_through_anchor=n_anchor,
        max_gap=float(max(gaps)) if gaps else float("nan"),
        anchor=scene.anchor.as_array().tolist(),
        params_hash=p.digest(),
        thresholds={"reclose_gap": RECLOSE_GAP, "min_reclosed_fraction": 0.9,
                    "max_inconclusive_fraction": max_inconclusive_fraction,
                    "tol": tol, "horizon": horizon, "L": scene.L},
        dumps=dumps,
    )
