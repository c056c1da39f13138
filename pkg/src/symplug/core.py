"""Plug parameters, coordinates on P and the profile functions A and B.

Coordinates on ``P = [-1, 1] x [-eps, eps] x T^3`` are kept in the fixed
order ``(theta1, theta2, theta3, x, t)`` everywhere in the package.

The profiles are

    A = 1 + x * (1 - beta(x) * gamma(t) * delta(theta3))
    B = c_B * x * beta(x) * gamma_odd(t)

where ``beta``, ``gamma`` and ``delta`` are compactly supported bumps that
equal one at their centres.  All functions accept floats or numpy arrays.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

CONFIG_KEYS = ("R", "eps", "theta_tilde_tan", "a_x", "a_t", "a_th", "c_B", "delta", "c_act")


class DomainError(ValueError):
    """A point lies outside P."""


@dataclass(frozen=True)
class PlugParams:
    """Numerical constants of the construction.

    The trap angle is stored through its tangent so that the choice of an
    irrational slope stays visible in configuration files.
    """

    R: float = 1.0
    eps: float = 0.25
    theta_tilde_tan: float = GOLDEN
    a_x: float = 0.1
    a_t: float = 0.1
    a_th: float = 0.5
    c_B: float = 0.05
    delta: float = 0.1
    c_act: float = 2.0

    @property
    def theta_tilde(self) -> float:
        # atan2(p2, p1) with (p1, p2) = (1, tan); lands in (-pi/2, pi/2)
        return math.atan2(self.theta_tilde_tan, 1.0) % TWO_PI

    def with_(self, **changes) -> "PlugParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path: str | Path) -> tuple[PlugParams, dict]:
    """Read a flat ``key = value`` file.

    Returns the plug parameters and a dict with any extra keys (scene keys
    such as ``L`` and ``n_controls``).  Unknown keys are returned untouched
    so callers can reject them.
    """
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string("[plug]\n" + text)
    values = dict(cp["plug"])
    kwargs = {}
    extra = {}
    for key, raw in values.items():
        if key in CONFIG_KEYS:
            kwargs[key] = float(raw)
        else:
            extra[key] = raw
    return PlugParams(**kwargs), extra


def dump_config(p: PlugParams, path: str | Path, extra: dict | None = None) -> None:
    lines = [f"{k} = {getattr(p, k)!r}" for k in CONFIG_KEYS]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ValidationReport:
    passed: bool
    checks: dict = field(default_factory=dict)   # name -> (ok, detail)

    def failures(self) -> list[str]:
        return [name for name, (ok, _) in self.checks.items() if not ok]


def validate_params(p: PlugParams) -> ValidationReport:
    """Check every invariant of :class:`PlugParams`; never raises."""
    c = {}

    def check(name, ok, detail):
        c[name] = (bool(ok), detail)

    check("R > 0", p.R > 0, f"R={p.R}")
    check("eps > 0", p.eps > 0, f"eps={p.eps}")
    check("eps <= 1/2", p.eps <= 0.5, f"eps={p.eps}")
    check("0 < a_x < eps", 0 < p.a_x < p.eps, f"a_x={p.a_x}, eps={p.eps}")
    check("0 < a_t < 1/4", 0 < p.a_t < 0.25, f"a_t={p.a_t}")
    check("0 < a_th < pi", 0 < p.a_th < math.pi, f"a_th={p.a_th}")
    check("c_B != 0", p.c_B != 0, f"c_B={p.c_B}")
    check("delta > 0", p.delta > 0, f"delta={p.delta}")
    check("|c_B| <= delta", abs(p.c_B) <= p.delta, f"c_B={p.c_B}, delta={p.delta}")
    check(
        "c_act > (1+eps)R",
        p.c_act > (1 + p.eps) * p.R,
        f"c_act={p.c_act}, (1+eps)R={(1 + p.eps) * p.R}",
    )
    check(
        "theta_tilde_tan finite",
        math.isfinite(p.theta_tilde_tan),
        f"theta_tilde_tan={p.theta_tilde_tan}",
    )
    return ValidationReport(all(ok for ok, _ in c.values()), c)


# ---------------------------------------------------------------------------
# points

@dataclass(frozen=True)
class PlugPoint:
    theta1: float
    theta2: float
    theta3: float
    x: float
    t: float

    def __post_init__(self):
        for name in ("theta1", "theta2", "theta3"):
            object.__setattr__(self, name, float(getattr(self, name)) % TWO_PI)
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_array(cls, a) -> "PlugPoint":
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3, self.x, self.t])

    def check(self, p: PlugParams) -> "PlugPoint":
        check_domain(p, self.x, self.t)
        return self


def check_domain(p: PlugParams, x, t) -> None:
    x = np.asarray(x)
    t = np.asarray(t)
    if np.any(np.abs(x) > p.eps) or np.any(np.abs(t) > 1.0):
        raise DomainError(f"point outside P: need |x| <= {p.eps} and |t| <= 1")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise DomainError("non-finite coordinate")


def psi(q: PlugPoint) -> PlugPoint:
    """The involution t -> -t."""
    return replace(q, t=-q.t)


def wrap_angle(a):
    """Reduce to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


# ---------------------------------------------------------------------------
# bumps

def bump(s, a):
    """``exp(1 - 1/(1 - (s/a)^2))`` on ``|s| < a``, zero elsewhere.

    Returns ``(value, first derivative)``.
    """
    s = np.asarray(s, dtype=float)
    z = (s / a) ** 2
    inside = z < 1.0
    w = np.where(inside, 1.0 - z, 1.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / w), 0.0)
    der = np.where(inside, val * (-2.0 * s / (a * a * w * w)), 0.0)
    return val, der


def _beta(p: PlugParams, x):
    return bump(x, p.a_x)


def _gamma(p: PlugParams, t, odd=False):
    up, dup = bump(np.asarray(t) - 0.5, p.a_t)
    dn, ddn = bump(np.asarray(t) + 0.5, p.a_t)
    if odd:
        return up - dn, dup - ddn
    return up + dn, dup + ddn


def _delta(p: PlugParams, theta3):
    return bump(wrap_angle(np.asarray(theta3) - p.theta_tilde), p.a_th)


@dataclass(frozen=True)
class ProfileValue:
    value: object
    d_x: object
    d_t: object
    d_th3: object


def profile_A_raw(p: PlugParams, theta3, x, t) -> ProfileValue:
    """A and its analytic partials without the domain check."""
    x = np.asarray(x, dtype=float)
    b, db = _beta(p, x)
    g, dg = _gamma(p, t)
    d, dd = _delta(p, theta3)
    gd = g * d
    value = 1.0 + x * (1.0 - b * gd)
    d_x = 1.0 - gd * (b + x * db)
    d_t = -x * b * dg * d
    d_th3 = -x * b * g * dd
    return ProfileValue(value, d_x, d_t, d_th3)


def profile_B_raw(p: PlugParams, x, t) -> ProfileValue:
    x = np.asarray(x, dtype=float)
    b, db = _beta(p, x)
    g, dg = _gamma(p, t, odd=True)
    value = p.c_B * x * b * g
    d_x = p.c_B * (b + x * db) * g
    d_t = p.c_B * x * b * dg
    return ProfileValue(value, d_x, d_t, np.zeros_like(value))


def profile_A(p: PlugParams, theta3, x, t) -> ProfileValue:
    check_domain(p, x, t)
    return profile_A_raw(p, theta3, x, t)


def profile_B(p: PlugParams, x, t) -> ProfileValue:
    check_domain(p, x, t)
    return profile_B_raw(p, x, t)


def collar_mask(p: PlugParams, x, t):
    """Points near the boundary of P where the bumps are identically off.

    This is the complement of the open support box of the bumps, restricted to
    the part adjacent to the faces ``t = +-1`` and ``x = +-eps``.
    """
    x = np.asarray(x)
    t = np.asarray(t)
    return (np.abs(x) >= p.a_x) | (np.abs(t) >= 0.5 + p.a_t)


def torus_locations(p: PlugParams) -> list[tuple[float, float, float]]:
    """(theta3, x, t) of the two invariant tori."""
    return [(p.theta_tilde, 0.0, 0.5), (p.theta_tilde, 0.0, -0.5)]


# ---------------------------------------------------------------------------
# axiom checks on a grid

@dataclass
class AxiomReport:
    passed: bool
    axioms: dict            # tag -> bool
    worst: dict             # tag -> (value, (theta3, x, t))
    grid_density: int


def check_profile_axioms(p: PlugParams, grid_density: int = 32) -> AxiomReport:
    """Sample a uniform (theta3, x, t) grid and test (A.1)-(A.4), (B.1)-(B.3).

    The grid always contains the two designated critical points so that the
    zero locus of A_x is probed where it must occur.
    """
    if grid_density < 8:
        raise ValueError("grid_density must be >= 8")
    n = grid_density
    th = np.concatenate([np.linspace(0, TWO_PI, n, endpoint=False), [p.theta_tilde]])
    xs = np.concatenate([np.linspace(-p.eps, p.eps, n), [0.0]])
    ts = np.concatenate([np.linspace(-1, 1, n), [0.5, -0.5]])
    TH, X, T = (a.ravel() for a in np.meshgrid(th, xs, ts, indexing="ij"))
    A = profile_A_raw(p, TH, X, T)
    B = profile_B_raw(p, X, T)
    Am = profile_A_raw(p, TH, X, -T)
    Bm = profile_B_raw(p, X, -T)

    cell = max(TWO_PI / n, 2 * p.eps / (n - 1), 2.0 / (n - 1))
    dist = np.minimum(
        _crit_distance(p, TH, X, T, 0.5), _crit_distance(p, TH, X, T, -0.5)
    )

    margin = p.eps / 8
    collar = (np.abs(T) >= 1 - p.a_t / 2) | (np.abs(X) >= p.eps - margin)

    def worst(values, mask=None, mode="min"):
        v = np.where(mask, values, np.nan) if mask is not None else values
        if np.all(np.isnan(v)):
            return (float("nan"), None)
        i = int(np.nanargmin(v) if mode == "min" else np.nanargmax(v))
        return (float(v[i]), (float(TH[i]), float(X[i]), float(T[i])))

    zero_ax = A.d_x <= 1e-12
    res = {
        "A.1": bool(np.all(A.value > 0)),
        "A.2": bool(np.all(A.d_x >= -1e-15) and np.all(dist[zero_ax] <= cell)),
        "A.3": bool(np.all(A.value[collar] - (1 + X[collar]) == 0)),
        "A.4": bool(np.max(np.abs(A.value - Am.value)) <= 1e-12),
        "B.1": bool(np.all(B.value[collar] == 0)),
        "B.2": bool(
            np.all(np.abs(profile_B_raw(p, 0.0, np.array([0.5, -0.5])).d_x) == abs(p.c_B))
            and p.c_B != 0
        ),
        "B.3": bool(np.max(np.abs(B.value + Bm.value)) <= 1e-12),
    }
    worst_d = {
        "A.1": worst(A.value),
        "A.2": worst(A.d_x),
        "A.3": worst(np.abs(A.value - (1 + X)), collar, "max"),
        "A.4": worst(np.abs(A.value - Am.value), None, "max"),
        "B.1": worst(np.abs(B.value), collar, "max"),
        "B.3": worst(np.abs(B.value + Bm.value), None, "max"),
    }
    return AxiomReport(all(res.values()), res, worst_d, grid_density)


def _crit_distance(p: PlugParams, theta3, x, t, t0):
    dth = wrap_angle(np.asarray(theta3) - p.theta_tilde)
    return np.sqrt(dth**2 + np.asarray(x) ** 2 + (np.asarray(t) - t0) ** 2)


# ---------------------------------------------------------------------------
# quasi-random sampling

def sample_points(p: PlugParams, n: int, seed: int = 0, box=None) -> np.ndarray:
    """Scrambled Halton points in P, shape (n, 5).

    ``box`` optionally overrides the per-coordinate ranges as a list of five
    ``(lo, hi)`` pairs.
    """
    from scipy.stats import qmc

    if box is None:
        box = [(0, TWO_PI), (0, TWO_PI), (0, TWO_PI), (-p.eps, p.eps), (-1, 1)]
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    u = qmc.Halton(d=5, scramble=True, seed=seed).random(n)
    pts = lo + u * (hi - lo)
    pts[:, :3] = np.mod(pts[:, :3], TWO_PI)
    return pts


def _bump_scalar(s: float, a: float) -> tuple[float, float]:
    z = (s / a) ** 2
    if z >= 1.0:
        return 0.0, 0.0
    w = 1.0 - z
    val = math.exp(1.0 - 1.0 / w)
    return val, val * (-2.0 * s / (a * a * w * w))


def profiles_scalar(p: PlugParams, theta3: float, x: float, t: float):
    """Float-only evaluation of (A, A_x, A_t, A_theta3, B_x).

    Same formulas as :func:`profile_A_raw` / :func:`profile_B_raw`; used on the
    integration hot path where numpy call overhead dominates.
    """
    b, db = _bump_scalar(x, p.a_x)
    up, dup = _bump_scalar(t - 0.5, p.a_t)
    dn, ddn = _bump_scalar(t + 0.5, p.a_t)
    dth = math.pi - (math.pi - (theta3 - p.theta_tilde)) % TWO_PI
    d, dd = _bump_scalar(dth, p.a_th)
    g, dg = up + dn, dup + ddn
    xb = b + x * db
    gd = g * d
    A = 1.0 + x * (1.0 - b * gd)
    A_x = 1.0 - gd * xb
    A_t = -x * b * dg * d
    A_th = -x * b * g * dd
    B_x = p.c_B * xb * (up - dn)
    return A, A_x, A_t, A_th, B_x
