"""Kernel line field of w and its integral curves.

The kernel of a rank-4 antisymmetric 5x5 matrix is spanned by the vector of
signed Pfaffians of its principal 4x4 blocks.  Characteristics are traced as
unit-speed curves with a Dormand-Prince 5(4) pair; events are located by
bisection on a cubic Hermite interpolant of each accepted step.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import TWO_PI, PlugParams, PlugPoint, profiles_scalar, wrap_angle
from .forms import eval_omega, eval_omega_raw, pfaffian_cofactors

DEGENERACY_RTOL = 1e-12
VT_THRESHOLD = 1e-8


class DegenerateFormError(ArithmeticError):
    """The form has rank below 4 at the requested point."""


def kernel_direction(w) -> np.ndarray:
    """Unit vector spanning the kernel of an antisymmetric 5x5 matrix.

    The sign is whatever the Pfaffian cofactors give; callers that need an
    orientation use :func:`oriented_kernel`.
    """
    w = np.asarray(w, dtype=float)
    v = pfaffian_cofactors(w)
    c1 = np.sum(v * v, axis=-1)
    scale = np.sum(w * w, axis=(-2, -1)) ** 2
    bad = ~(c1 > DEGENERACY_RTOL * scale)
    if np.any(bad):
        raise DegenerateFormError(
            f"rank < 4: c1 = {np.min(c1):.3e}, |m|^4 = {np.max(scale):.3e}"
        )
    return v / np.sqrt(c1)[..., None]


def orient(p: PlugParams, v: np.ndarray, prev=None) -> np.ndarray:
    """Apply the orientation rules to kernel vectors ``v`` (batched).

    1. if |v_t| > 1e-8, make v_t positive;
    2. otherwise agree with ``prev``;
    3. otherwise point along (cos, sin) of the trap angle.
    """
    v = np.array(v, dtype=float)
    vt = v[..., 4]
    if prev is not None:
        ref = np.sum(v * np.asarray(prev, dtype=float), axis=-1)
    else:
        th = p.theta_tilde
        ref = v[..., 0] * math.cos(th) + v[..., 1] * math.sin(th)
    sign = np.where(np.abs(vt) > VT_THRESHOLD, np.sign(vt), np.where(ref < 0, -1.0, 1.0))
    return v * sign[..., None]


def oriented_kernel(p: PlugParams, q, prev=None) -> np.ndarray:
    w = eval_omega(p, q.as_array() if isinstance(q, PlugPoint) else q)
    return orient(p, kernel_direction(w), prev)


def _pf(m, a, b, c, d):
    return m[a][b] * m[c][d] - m[a][c] * m[b][d] + m[a][d] * m[b][c]


def _field(p: PlugParams, y, prev):
    """Oriented unit kernel at one point, float arithmetic only.

    Builds the same matrix entries as :func:`eval_omega_raw` and applies
    :func:`kernel_direction` and :func:`orient` by hand.
    """
    th3, x, t = float(y[2]), float(y[3]), float(y[4])
    A, A_x, A_t, A_th, B_x = profiles_scalar(p, th3, x, t)
    c, sn, R = math.cos(th3), math.sin(th3), p.R
    m = [[0.0] * 5 for _ in range(5)]
    m[0][2] = -R * (A_th * c - A * sn)
    m[1][2] = -R * (A_th * sn + A * c)
    m[0][3] = -R * A_x * c
    m[1][3] = -R * A_x * sn
    m[0][4] = -R * A_t * c
    m[1][4] = -R * A_t * sn
    m[3][4] = B_x
    for i in range(5):
        for j in range(i + 1, 5):
            m[j][i] = -m[i][j]
    v = [
        _pf(m, 1, 2, 3, 4),
        -_pf(m, 0, 2, 3, 4),
        _pf(m, 0, 1, 3, 4),
        -_pf(m, 0, 1, 2, 4),
        _pf(m, 0, 1, 2, 3),
    ]
    c1 = sum(a * a for a in v)
    scale = sum(a * a for row in m for a in row) ** 2
    if not c1 > DEGENERACY_RTOL * scale:
        raise DegenerateFormError(f"rank < 4: c1 = {c1:.3e}")
    n = math.sqrt(c1)
    v = np.array(v) / n
    if abs(v[4]) > VT_THRESHOLD:
        sign = 1.0 if v[4] > 0 else -1.0
    elif prev is not None:
        sign = -1.0 if float(np.dot(v, prev)) < 0 else 1.0
    else:
        th = p.theta_tilde
        sign = -1.0 if v[0] * math.cos(th) + v[1] * math.sin(th) < 0 else 1.0
    return sign * v


class TorusTag(enum.IntEnum):
    PLUS = 1
    MINUS = -1


def torus_distance(p: PlugParams, q, tag) -> np.ndarray:
    """Distance in (theta3, x, t) to the torus at t = tag/2."""
    a = q.as_array() if isinstance(q, PlugPoint) else np.asarray(q, dtype=float)
    dth = wrap_angle(a[..., 2] - p.theta_tilde)
    return np.sqrt(dth**2 + a[..., 3] ** 2 + (a[..., 4] - 0.5 * int(tag)) ** 2)


# ---------------------------------------------------------------------------
# trajectories

class Status(enum.Enum):
    EXITED_TOP = "ExitedTop"
    EXITED_BOTTOM = "ExitedBottom"
    TRAPPED_NEAR = "TrappedNear"
    HORIZON_REACHED = "HorizonReached"
    INTEGRATION_FAILURE = "IntegrationFailure"


@dataclass
class Trajectory:
    s: np.ndarray
    points: np.ndarray          # (n, 5) with angles reduced mod 2 pi
    velocities: np.ndarray      # (n, 5) unit tangent d/ds of the curve
    status: Status
    horizon: float
    tol: float
    exit_point: PlugPoint | None = None
    torus_tag: TorusTag | None = None
    final_torus_distance: float | None = None
    failure: str | None = None
    n_rejected: int = 0
    info: dict = field(default_factory=dict)

    @property
    def final(self) -> PlugPoint:
        return PlugPoint.from_array(self.points[-1])

    @property
    def arclength(self) -> float:
        return float(self.s[-1])

    def to_table(self, p: PlugParams) -> str:
        cols = np.column_stack(
            [
                self.s,
                self.points,
                self.velocities[:, 4],
                torus_distance(p, self.points, TorusTag.MINUS),
                torus_distance(p, self.points, TorusTag.PLUS),
            ]
        )
        header = "s theta1 theta2 theta3 x t v_t torus_dist_minus torus_dist_plus"
        lines = [header] + [" ".join(f"{v:.17g}" for v in row) for row in cols]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        out = {
            "status": self.status.value,
            "arclength": self.arclength,
            "n_samples": int(len(self.s)),
            "horizon": self.horizon,
            "tol": self.tol,
        }
        if self.exit_point is not None:
            out["exit_point"] = self.exit_point.as_array().tolist()
        if self.torus_tag is not None:
            out["torus_tag"] = int(self.torus_tag)
        if self.final_torus_distance is not None:
            out["final_torus_distance"] = self.final_torus_distance
        if self.failure:
            out["failure"] = self.failure
        out.update(self.info)
        return out

    def summary_record(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4


def dopri_step(f, y, h, k1):
    """One Dormand-Prince step.  Returns (y_new, error_estimate, f(y_new))."""
    k = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * kj for a, kj in zip(_A[i], k))
        k.append(f(yi))
    y_new = y + h * sum(b * kj for b, kj in zip(_B5, k))
    err = h * sum(e * kj for e, kj in zip(_E, k))
    return y_new, err, k[6]


def hermite(y0, f0, y1, f1, h, theta):
    """Cubic Hermite interpolant on one step, theta in [0, 1]."""
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + theta
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _locate(y0, f0, y1, f1, h, level, comp=4, atol=1e-12):
    """Bisect for the step fraction where component ``comp`` hits ``level``."""
    lo, hi = 0.0, 1.0
    g_lo = y0[comp] - level
    y = y1
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        y = hermite(y0, f0, y1, f1, h, mid)
        g = y[comp] - level
        if abs(g) <= atol:
            return mid, y
        if (g < 0) == (g_lo < 0):
            lo, g_lo = mid, g
        else:
            hi = mid
    return mid, y


def _reduce(y):
    out = np.array(y, dtype=float)
    out[:3] = np.mod(out[:3], TWO_PI)
    return out


def integrate(
    p: PlugParams,
    start: PlugPoint,
    horizon: float,
    tol: float = 1e-10,
    *,
    direction: int = 1,
    stop_on_trap: bool = True,
    trap_radius: float = 1e-2,
    dwell: float = 100.0,
    h_max: float = 0.25,
    record: bool = True,
) -> Trajectory:
    """Trace the characteristic through ``start`` for arclength ``horizon``.

    ``direction=-1`` follows the reversed field.  The trajectory ends at the
    first of: crossing t = +-1 (located to 1e-12 and projected onto the face),
    a dwell of ``dwell`` arclength inside a torus neighbourhood of radius
    ``trap_radius`` with non-increasing distance (only if ``stop_on_trap``),
    the horizon, or a step-size underflow.
    """
    if horizon <= 0 or tol <= 0:
        raise ValueError("horizon and tol must be positive")
    start.check(p)
    eps_guard = p.eps + 1e-9
    sgn = 1.0 if direction >= 0 else -1.0

    y = start.as_array()
    try:
        v = _field(p, y, None)
    except DegenerateFormError as exc:
        return Trajectory(
            np.array([0.0]), y[None, :], np.zeros((1, 5)),
            Status.INTEGRATION_FAILURE, horizon, tol, failure=f"{exc} at {y.tolist()}",
        )
    ref = v.copy()

    def f(yy):
        return sgn * _field(p, yy, ref)

    k1 = sgn * v
    s = 0.0
    S = [0.0]
    P = [_reduce(y)]
    Vs = [k1.copy()]
    h = min(h_max, 1e-2, horizon)
    n_rej = 0

    tags = (TorusTag.MINUS, TorusTag.PLUS)
    d_prev = {tg: float(torus_distance(p, y, tg)) for tg in tags}
    # a curve that starts inside a neighbourhood is a resident, not trapped
    enter = {tg: None for tg in tags}
    seen_outside = {tg: d_prev[tg] >= trap_radius for tg in tags}

    status = Status.HORIZON_REACHED
    exit_point = None
    failure = None

    while s < horizon:
        h = min(h, horizon - s)
        if h < 1e-13 * max(1.0, s):
            if horizon - s <= 1e-12 * max(1.0, horizon):
                break
            status = Status.INTEGRATION_FAILURE
            failure = f"step-size underflow at {y.tolist()}"
            break
        try:
            y_new, err, k7 = dopri_step(f, y, h, k1)
        except DegenerateFormError as exc:
            status = Status.INTEGRATION_FAILURE
            failure = f"{exc} near {y.tolist()}"
            break
        e = float(np.max(np.abs(err)))
        if not np.isfinite(e):
            status = Status.INTEGRATION_FAILURE
            failure = f"non-finite step at {y.tolist()}"
            break
        if e > tol:
            h *= max(0.2, 0.9 * (tol / e) ** 0.2)
            n_rej += 1
            continue

        # accepted
        t_new = y_new[4]
        hit = None
        if t_new >= 1.0:
            hit = (1.0, Status.EXITED_TOP)
        elif t_new <= -1.0:
            hit = (-1.0, Status.EXITED_BOTTOM)
        if hit is not None:
            level, st = hit
            theta, y_ev = _locate(y, k1, y_new, k7, h, level)
            y_ev = np.array(y_ev)
            y_ev[4] = level
            s += theta * h
            k_ev = hermite_derivative(y, k1, y_new, k7, h, theta)
            S.append(s)
            P.append(_reduce(y_ev))
            Vs.append(k_ev)
            status = st
            exit_point = PlugPoint.from_array(y_ev)
            y = y_ev
            break

        s += h
        y = y_new
        k1 = k7
        ref = sgn * k7
        if abs(y[3]) > eps_guard:
            status = Status.INTEGRATION_FAILURE
            failure = f"x left [-eps, eps] at {y.tolist()}"
            break
        if record:
            S.append(s)
            P.append(_reduce(y))
            Vs.append(k7.copy())

        trapped = None
        for tg in tags:
            d = float(torus_distance(p, y, tg))
            if d < trap_radius and seen_outside[tg]:
                if enter[tg] is None or d > d_prev[tg] + 1e-14:
                    enter[tg] = s
                if s - enter[tg] >= dwell:
                    trapped = tg
            else:
                enter[tg] = None
                seen_outside[tg] = seen_outside[tg] or d >= trap_radius
            d_prev[tg] = d
        if trapped is not None and stop_on_trap:
            status = Status.TRAPPED_NEAR
            break

        fac = 5.0 if e == 0 else min(5.0, max(0.2, 0.9 * (tol / e) ** 0.2))
        h = min(h_max, h * fac)

    if not record and (S[-1] != s):
        S.append(s)
        P.append(_reduce(y))
        Vs.append(k1.copy())

    traj = Trajectory(
        np.array(S), np.array(P), np.array(Vs), status, horizon, tol,
        exit_point=exit_point, failure=failure, n_rejected=n_rej,
    )
    if status in (Status.HORIZON_REACHED, Status.TRAPPED_NEAR):
        dists = {tg: float(torus_distance(p, y, tg)) for tg in tags}
        near = min(dists, key=dists.get)
        traj.final_torus_distance = dists[near]
        traj.torus_tag = near
        if enter[near] is not None:
            traj.info["dwell"] = s - enter[near]
    return traj


def hermite_derivative(y0, f0, y1, f1, h, theta):
    t2 = theta * theta
    d00 = 6 * t2 - 6 * theta
    d10 = 3 * t2 - 4 * theta + 1
    d01 = -6 * t2 + 6 * theta
    d11 = 3 * t2 - 2 * theta
    return (d00 * y0 + d01 * y1) / h + d10 * f0 + d11 * f1


# ---------------------------------------------------------------------------
# near-return detection

def periodic_delta(a, b):
    """b - a with angle components wrapped into (-pi, pi]."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    d[..., :3] = wrap_angle(d[..., :3])
    return d


def closure_gap(traj: Trajectory, min_separation: float, align: float = 0.99,
                chunk: int = 512) -> float:
    """Smallest distance between a sample and a later piece of the same curve.

    Each sample point is compared with every chord between consecutive samples
    that starts at least ``min_separation`` further along in arclength and
    whose velocity makes an inner product above ``align`` with the sample's
    velocity.  Distances use the flat metric with periodic angles.  Returns
    ``inf`` when no pair qualifies.
    """
    pts = traj.points
    vel = traj.velocities
    s = traj.s
    n = len(s)
    if n < 2:
        raise ValueError("trajectory needs at least two samples")
    seg = periodic_delta(pts[:-1], pts[1:])
    seg_len2 = np.sum(seg * seg, axis=1)
    seg_s = s[:-1]
    best = np.inf
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        ok = seg_s[None, :] - s[lo:hi, None] >= min_separation
        ok &= vel[lo:hi] @ vel[:-1].T > align
        if not ok.any():
            continue
        d = periodic_delta(pts[lo:hi, None, :], pts[None, :-1, :])   # sample -> seg start
        lam = -np.sum(d * seg[None], axis=2) / np.where(seg_len2 > 0, seg_len2, 1.0)
        lam = np.clip(lam, 0.0, 1.0)
        r = d + lam[..., None] * seg[None]
        dist = np.sqrt(np.sum(r * r, axis=2))
        dist = np.where(ok, dist, np.inf)
        best = min(best, float(dist.min()))
    return best
