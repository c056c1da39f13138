"""Explicit embeddings j: P -> R^5, f: P -> R x P and J = f o j into R^6.

phi1 scales the momentum radially, ``(x, theta) -> (theta1, theta2,
(1+x) R cos theta3, (1+x) R sin theta3)``, so that the Liouville form pulls
back to ``(1+x) eta``.  phi2 is the action-angle chart onto a neighbourhood of
a Clifford torus, ``(x_j, y_j) = sqrt(2 (c_act + p_j)) (cos, sin)(theta_j)``.

Coordinate orders: R^5 is ``(t, x1, y1, x2, y2)``, R^6 is
``(y, t, x1, y1, x2, y2)`` and the model R x P is
``(y, theta1, theta2, theta3, x, t)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import (
    TWO_PI,
    PlugParams,
    PlugPoint,
    _beta,
    _delta,
    _gamma,
    check_domain,
    collar_mask,
    profile_A_raw,
    profile_B_raw,
    sample_points,
)
from .forms import _homotopy_profiles, eval_homotopy_omega, eval_omega, eval_rho, linear_coeff_c1
from .verifier import VerificationReport

# Omega_4 = sum dx_j ^ dy_j pulls back through phi2 to OMEGA4_SIGN * d lambda
OMEGA4_SIGN = 1.0

MAP_IDS = ("phi1", "phi2", "j", "f", "J")


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class CotangentPoint:
    theta1: float
    theta2: float
    p1: float
    p2: float

    def as_array(self):
        return np.array([self.theta1, self.theta2, self.p1, self.p2])


@dataclass(frozen=True)
class AmbientPoint:
    coords: tuple

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self):
        return np.array(self.coords)


@dataclass
class PullbackResult:
    computed: np.ndarray
    target: np.ndarray
    max_abs_diff: float

    def to_record(self, **extra) -> str:
        d = {"computed": self.computed.tolist(), "target": self.target.tolist(),
             "max_abs_diff": self.max_abs_diff}
        d.update(extra)
        return json.dumps(d, sort_keys=True)


def _arr(q):
    return q.as_array() if hasattr(q, "as_array") else np.asarray(q, dtype=float)


# ---------------------------------------------------------------------------
# maps on arrays (angles are not reduced so that finite differences work)

def _phi1_arr(p, pts):
    th1, th2, th3, x = pts[..., 0], pts[..., 1], pts[..., 2], pts[..., 3]
    r = (1.0 + x) * p.R
    return np.stack([th1, th2, r * np.cos(th3), r * np.sin(th3)], axis=-1)


def _phi2_arr(p, c):
    a1 = p.c_act + c[..., 2]
    a2 = p.c_act + c[..., 3]
    if np.any(a1 <= 0) or np.any(a2 <= 0):
        raise InvalidParameterError("negative action: need c_act + p_j > 0")
    r1 = np.sqrt(2.0 * a1)
    r2 = np.sqrt(2.0 * a2)
    return np.stack(
        [r1 * np.cos(c[..., 0]), r1 * np.sin(c[..., 0]),
         r2 * np.cos(c[..., 1]), r2 * np.sin(c[..., 1])], axis=-1)


def _j_arr(p, pts):
    return np.concatenate([pts[..., 4:5], _phi2_arr(p, _phi1_arr(p, pts))], axis=-1)


def _a_minus_one(p, th3, x, t, s=0.0):
    """A_s - 1 = x (1 - (1-s) beta gamma delta), exactly x where the bumps vanish."""
    b, _ = _beta(p, x)
    g, _ = _gamma(p, t)
    d, _ = _delta(p, th3)
    return x * (1.0 - (1.0 - s) * (b * g * d))


def _f_arr(p, pts, s=0.0):
    """Model coordinates (y, theta1, theta2, theta3, x', t) of f_s(q)."""
    th3, x, t = pts[..., 2], pts[..., 3], pts[..., 4]
    B = profile_B_raw(p, x, t).value * (1.0 - s)
    xp = _a_minus_one(p, th3, x, t, s)
    return np.stack([B, pts[..., 0], pts[..., 1], th3, xp, t], axis=-1)


def _J_arr(p, pts, s=0.0):
    fm = _f_arr(p, pts, s)
    return np.concatenate([fm[..., :1], _j_arr(p, fm[..., 1:])], axis=-1)


# ---------------------------------------------------------------------------
# public maps

def phi1(p: PlugParams, x: float, thetas) -> CotangentPoint:
    th1, th2, th3 = thetas
    r = (1.0 + x) * p.R
    return CotangentPoint(th1 % TWO_PI, th2 % TWO_PI, r * np.cos(th3), r * np.sin(th3))


def phi2(p: PlugParams, c: CotangentPoint) -> AmbientPoint:
    return AmbientPoint(tuple(float(v) for v in _phi2_arr(p, c.as_array())))


def embed_j(p: PlugParams, q: PlugPoint) -> AmbientPoint:
    q.check(p)
    return AmbientPoint(tuple(float(v) for v in _j_arr(p, q.as_array())))


def embed_f(p: PlugParams, q: PlugPoint) -> tuple[float, PlugPoint]:
    q.check(p)
    y, th1, th2, th3, x, t = _f_arr(p, q.as_array())
    return float(y), PlugPoint(th1, th2, th3, x, t)


def embed_J(p: PlugParams, q: PlugPoint) -> AmbientPoint:
    q.check(p)
    return AmbientPoint(tuple(float(v) for v in _J_arr(p, q.as_array())))


# ---------------------------------------------------------------------------
# Jacobians

def _jac_phi1(p, pts):
    th3, x = pts[..., 2], pts[..., 3]
    shape = th3.shape
    J = np.zeros(shape + (4, 5))
    J[..., 0, 0] = 1.0
    J[..., 1, 1] = 1.0
    r = (1.0 + x) * p.R
    J[..., 2, 2] = -r * np.sin(th3)
    J[..., 2, 3] = p.R * np.cos(th3)
    J[..., 3, 2] = r * np.cos(th3)
    J[..., 3, 3] = p.R * np.sin(th3)
    return J


def _jac_phi2(p, c):
    th1, th2 = c[..., 0], c[..., 1]
    r1 = np.sqrt(2.0 * (p.c_act + c[..., 2]))
    r2 = np.sqrt(2.0 * (p.c_act + c[..., 3]))
    J = np.zeros(th1.shape + (4, 4))
    J[..., 0, 0] = -r1 * np.sin(th1)
    J[..., 0, 2] = np.cos(th1) / r1
    J[..., 1, 0] = r1 * np.cos(th1)
    J[..., 1, 2] = np.sin(th1) / r1
    J[..., 2, 1] = -r2 * np.sin(th2)
    J[..., 2, 3] = np.cos(th2) / r2
    J[..., 3, 1] = r2 * np.cos(th2)
    J[..., 3, 3] = np.sin(th2) / r2
    return J


def _jac_j(p, pts):
    J = np.zeros(pts.shape[:-1] + (5, 5))
    J[..., 0, 4] = 1.0
    J[..., 1:, :] = _jac_phi2(p, _phi1_arr(p, pts)) @ _jac_phi1(p, pts)
    return J


def _jac_f(p, pts, s=0.0):
    th3, x, t = pts[..., 2], pts[..., 3], pts[..., 4]
    A, B = _homotopy_profiles(p, s, th3, x, t)
    J = np.zeros(pts.shape[:-1] + (6, 5))
    J[..., 0, 3] = B.d_x
    J[..., 0, 4] = B.d_t
    J[..., 1, 0] = 1.0
    J[..., 2, 1] = 1.0
    J[..., 3, 2] = 1.0
    J[..., 4, 2] = A.d_th3
    J[..., 4, 3] = A.d_x
    J[..., 4, 4] = A.d_t
    J[..., 5, 4] = 1.0
    return J


def _jac_J(p, pts, s=0.0):
    fm = _f_arr(p, pts, s)
    Jf = _jac_f(p, pts, s)
    Jj = _jac_j(p, fm[..., 1:])
    J = np.zeros(pts.shape[:-1] + (6, 5))
    J[..., 0, :] = Jf[..., 0, :]
    J[..., 1:, :] = Jj @ Jf[..., 1:, :]
    return J


def _fd_jacobian(fn, pts, h=1e-5):
    pts = np.asarray(pts, dtype=float)
    cols = []
    for k in range(pts.shape[-1]):
        e = np.zeros(pts.shape[-1])
        e[k] = h
        cols.append((fn(pts + e) - fn(pts - e)) / (2 * h))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# ambient forms

def _two_form(dim, pairs):
    """Constant form sum de_a ^ de_b over the given index pairs."""
    m = np.zeros((dim, dim))
    for a, b in pairs:
        m[a, b] += 1.0
        m[b, a] -= 1.0
    return m


D_LAMBDA = _two_form(4, [(2, 0), (3, 1)])        # dp_j ^ dtheta_j
OMEGA4 = _two_form(4, [(0, 1), (2, 3)])          # dx_j ^ dy_j
OMEGA4_ON_R5 = _two_form(5, [(1, 2), (3, 4)])
OMEGA6 = _two_form(6, [(0, 1), (2, 3), (4, 5)])  # dy^dt + Omega4


def _model_form(p, fm):
    """dy ^ dt + rho on the model R x P, evaluated at model points."""
    out = np.zeros(fm.shape[:-1] + (6, 6))
    out[..., 1:, 1:] = eval_rho(p, fm[..., 1:])
    out[..., 0, 5] += 1.0
    out[..., 5, 0] -= 1.0
    return out


def _pull(J, form):
    return np.swapaxes(J, -1, -2) @ form @ J


def pullback_form(map_id: str, p: PlugParams, q, mode: str = "analytic") -> PullbackResult:
    """Pull the ambient form of ``map_id`` back to P and compare with its target.

    ``phi1``: d lambda -> rho.  ``phi2``: Omega_4 -> d lambda, at the
    cotangent point phi1(q).  ``j``: Omega_4 on R^5 -> rho.  ``f``: the model
    form dy^dt + rho -> w.  ``J``: Omega_6 -> w.  ``q`` may be a batch.
    """
    if map_id not in MAP_IDS:
        raise ValueError(f"unknown map id {map_id!r}; expected one of {MAP_IDS}")
    if mode not in ("analytic", "finite_difference"):
        raise ValueError(f"unknown mode {mode!r}")
    pts = _arr(q)
    check_domain(p, pts[..., 3], pts[..., 4])
    fd = mode == "finite_difference"

    if map_id == "phi1":
        J = _fd_jacobian(lambda z: _phi1_arr(p, z), pts) if fd else _jac_phi1(p, pts)
        computed = _pull(J, D_LAMBDA)
        target = eval_rho(p, pts)
    elif map_id == "phi2":
        c = _phi1_arr(p, pts)
        J = _fd_jacobian(lambda z: _phi2_arr(p, z), c) if fd else _jac_phi2(p, c)
        computed = _pull(J, OMEGA4)
        target = OMEGA4_SIGN * np.broadcast_to(D_LAMBDA, computed.shape)
    elif map_id == "j":
        J = _fd_jacobian(lambda z: _j_arr(p, z), pts) if fd else _jac_j(p, pts)
        computed = _pull(J, OMEGA4_ON_R5)
        target = eval_rho(p, pts)
    elif map_id == "f":
        J = _fd_jacobian(lambda z: _f_arr(p, z), pts) if fd else _jac_f(p, pts)
        computed = _pull(J, _model_form(p, _f_arr(p, pts)))
        target = eval_omega(p, pts)
    else:
        J = _fd_jacobian(lambda z: _J_arr(p, z), pts) if fd else _jac_J(p, pts)
        computed = _pull(J, OMEGA6)
        target = eval_omega(p, pts)
    return PullbackResult(computed, np.asarray(target), float(np.max(np.abs(computed - target))))


def f_star_alpha(p: PlugParams, q) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of f^*(y dt + (1+x) eta) and of A eta + B dt."""
    pts = _arr(q)
    fm = _f_arr(p, pts)
    y, th3, xp = fm[..., 0], fm[..., 3], fm[..., 4]
    alpha = np.zeros(pts.shape[:-1] + (6,))
    alpha[..., 1] = (1.0 + xp) * p.R * np.cos(th3)
    alpha[..., 2] = (1.0 + xp) * p.R * np.sin(th3)
    alpha[..., 5] = y
    computed = np.einsum("...i,...ij->...j", alpha, _jac_f(p, pts))
    A = profile_A_raw(p, pts[..., 2], pts[..., 3], pts[..., 4]).value
    B = profile_B_raw(p, pts[..., 3], pts[..., 4]).value
    target = np.zeros_like(computed)
    target[..., 0] = A * p.R * np.cos(pts[..., 2])
    target[..., 1] = A * p.R * np.sin(pts[..., 2])
    target[..., 4] = B
    return computed, target


def j_pullback_residual(p: PlugParams, pts, target: str = "omega1") -> float:
    """max |j^* Omega_4 - target| with target ``omega1`` (w at tau=1) or ``omega``."""
    pts = _arr(pts)
    computed = _pull(_jac_j(p, pts), OMEGA4_ON_R5)
    ref = eval_homotopy_omega(p, 1.0, pts) if target == "omega1" else eval_omega(p, pts)
    return float(np.max(np.abs(computed - ref)))


# ---------------------------------------------------------------------------
# homotopy and isotopy

def deformed_J(p: PlugParams, pts, s: float) -> np.ndarray:
    """J_s built from ((1-s)A + s(1+x), (1-s)B); J_0 = J and J_1 = (0, j)."""
    return _J_arr(p, _arr(pts), s)


def fiber_monotonicity(p: PlugParams, n_fibers: int, s: float = 0.0, n_x: int = 401,
                       seed: int = 0) -> float:
    """Smallest increment of x -> A_s - 1 over sampled fibres (must be > 0)."""
    base = sample_points(p, n_fibers, seed)
    xs = np.linspace(-p.eps, p.eps, n_x)
    th3 = np.repeat(base[:, 2:3], n_x, axis=1)
    t = np.repeat(base[:, 4:5], n_x, axis=1)
    A, _ = _homotopy_profiles(p, s, th3, np.broadcast_to(xs, th3.shape), t)
    return float(np.min(np.diff(A.value, axis=1)))


def homotopy_isotopy_check(p: PlugParams, n_samples: int = 10_000, n_taus: int = 11,
                           seed: int = 0) -> VerificationReport:
    """Homotopy w_tau, isotopy J_s rel boundary, and j^* Omega_4 = w_1."""
    from scipy.spatial import cKDTree

    from .verifier import torus_probe_points

    pts = np.vstack([sample_points(p, n_samples, seed), torus_probe_points(p, 4, seed)])
    taus = np.linspace(0.0, 1.0, n_taus)
    metrics = {}

    min_c1 = min(float(np.min(linear_coeff_c1(p, pts, tau))) for tau in taus)
    metrics["min_c1_over_taus"] = min_c1

    collar = collar_mask(p, pts[:, 3], pts[:, 4])
    j_img = _j_arr(p, pts)
    min_nn = np.inf
    max_collar = 0.0
    min_incr = np.inf
    max_y = 0.0
    for s in taus:
        img = deformed_J(p, pts, s)
        d, _ = cKDTree(img).query(img, k=2)
        min_nn = min(min_nn, float(d[:, 1].min()))
        max_collar = max(max_collar, float(np.max(np.abs(img[collar, 1:] - j_img[collar]))),
                         float(np.max(np.abs(img[collar, 0]))))
        min_incr = min(min_incr, fiber_monotonicity(p, 1000, s, seed=seed))
        max_y = max(max_y, float(np.max(np.abs(img[:, 0]))))
    metrics.update(min_image_nn_distance=min_nn, max_collar_deviation=max_collar,
                   min_fiber_increment=min_incr, max_abs_y=max_y)
    metrics["j_pullback_vs_omega1"] = j_pullback_residual(p, pts, "omega1")

    passed = (
        min_c1 > 0
        and min_nn > 0
        and max_collar == 0.0
        and min_incr > 0
        and max_y <= p.delta
        and metrics["j_pullback_vs_omega1"] <= 1e-10
    )
    return VerificationReport(
        "HOMOTOPY",
        bool(passed),
        metrics=metrics,
        thresholds={"j_pullback": 1e-10, "delta": p.delta, "n_taus": n_taus},
        params_hash=p.digest(),
        notes="isotopy checked at sampled s values and sampled points only",
    )


def embedding_suite(p: PlugParams, n_samples: int = 10_000, seed: int = 0,
                    mode: str = "analytic") -> VerificationReport:
    """All pullback identities at quasi-random points of P.

    Tolerances: 1e-10 in analytic mode and 1e-6 with finite differences for
    the five map pullbacks and f^* alpha; j^* Omega_4 = w on the collar to
    1e-12; |y| <= delta everywhere.
    """
    from .verifier import collar_samples

    tol = 1e-10 if mode == "analytic" else 1e-6
    pts = sample_points(p, n_samples, seed)
    metrics = {}
    for map_id in MAP_IDS:
        metrics[f"{map_id}_max_err"] = pullback_form(map_id, p, pts, mode).max_abs_diff
    computed, target = f_star_alpha(p, pts)
    metrics["f_star_alpha_max_err"] = float(np.max(np.abs(computed - target)))
    collar, _ = collar_samples(p, max(1, n_samples // 10), seed)
    metrics["j_collar_vs_omega"] = j_pullback_residual(p, collar, "omega")
    metrics["max_abs_y"] = float(np.max(np.abs(_f_arr(p, pts)[..., 0])))

    failed = [k for k in metrics if k.endswith("_max_err") and not metrics[k] <= tol]
    if not metrics["j_collar_vs_omega"] <= 1e-12:
        failed.append("j_collar_vs_omega")
    if not metrics["max_abs_y"] <= p.delta:
        failed.append("max_abs_y")
    return VerificationReport(
        "EMBED",
        not failed,
        metrics=metrics,
        thresholds={"pullback": tol, "j_collar": 1e-12, "delta": p.delta, "mode": mode},
        witnesses=failed,
        params_hash=p.digest(),
    )
