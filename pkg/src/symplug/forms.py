"""Coefficient arrays of the forms on P and the nondegeneracy criterion.

A two-form is stored as an antisymmetric 5x5 matrix ``m[i, j] = w(e_i, e_j)``
in the basis ``(theta1, theta2, theta3, x, t)``; one-forms as length-5
vectors.  Every function broadcasts over leading axes, so a batch of points
gives a ``(..., 5, 5)`` array.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import (
    PlugParams,
    PlugPoint,
    ProfileValue,
    check_domain,
    profile_A_raw,
    profile_B_raw,
    sample_points,
    torus_locations,
)

TH1, TH2, TH3, X, T = range(5)

# Sign relating the Pfaffian of the (theta1, theta2, theta3, x) block to
# R^2 A A_x.  The coefficient of mu in w^w^dt is WEDGE_FACTOR times that
# Pfaffian; both constants are checked in the test-suite.
PFAFFIAN_SIGN = 1.0
WEDGE_FACTOR = 2.0


def _pt(q):
    if isinstance(q, PlugPoint):
        return q.as_array()
    return np.asarray(q, dtype=float)


def eval_eta(p: PlugParams, theta3):
    theta3 = np.asarray(theta3, dtype=float)
    out = np.zeros(theta3.shape + (5,))
    out[..., TH1] = p.R * np.cos(theta3)
    out[..., TH2] = p.R * np.sin(theta3)
    return out


def _omega_from_profiles(p, theta3, A: ProfileValue, Bx):
    """Matrix of d(A eta + B dt) given A, its partials and B_x.

    Only B_x enters: the dt-coefficient B depends on (x, t) alone.
    """
    theta3 = np.asarray(theta3, dtype=float)
    shape = np.broadcast(theta3, A.value).shape
    c = np.cos(theta3)
    s = np.sin(theta3)
    R = p.R
    m = np.zeros(shape + (5, 5))
    # a = (A R c, A R s, 0, 0, B);  m_ij = d_i a_j - d_j a_i
    m[..., TH1, TH3] = -R * (A.d_th3 * c - A.value * s)
    m[..., TH2, TH3] = -R * (A.d_th3 * s + A.value * c)
    m[..., TH1, X] = -R * A.d_x * c
    m[..., TH2, X] = -R * A.d_x * s
    m[..., TH1, T] = -R * A.d_t * c
    m[..., TH2, T] = -R * A.d_t * s
    m[..., X, T] = Bx
    return m - np.swapaxes(m, -1, -2)


def eval_omega_raw(p: PlugParams, pts) -> np.ndarray:
    pts = _pt(pts)
    th3, x, t = pts[..., TH3], pts[..., X], pts[..., T]
    A = profile_A_raw(p, th3, x, t)
    B = profile_B_raw(p, x, t)
    return _omega_from_profiles(p, th3, A, B.d_x)


def eval_omega(p: PlugParams, q) -> np.ndarray:
    """Matrix of w = d(A eta + B dt) at one point or a batch of points."""
    pts = _pt(q)
    check_domain(p, pts[..., X], pts[..., T])
    return eval_omega_raw(p, pts)


def _homotopy_profiles(p: PlugParams, tau, th3, x, t):
    A = profile_A_raw(p, th3, x, t)
    B = profile_B_raw(p, x, t)
    s = 1.0 - tau
    A_tau = ProfileValue(
        s * A.value + tau * (1.0 + np.asarray(x)),
        s * A.d_x + tau,
        s * A.d_t,
        s * A.d_th3,
    )
    B_tau = ProfileValue(s * B.value, s * B.d_x, s * B.d_t, s * B.d_th3)
    return A_tau, B_tau


def eval_homotopy_omega(p: PlugParams, tau: float, q) -> np.ndarray:
    """w_tau with A_tau = (1-tau)A + tau(1+x) and B_tau = (1-tau)B."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    pts = _pt(q)
    check_domain(p, pts[..., X], pts[..., T])
    th3, x, t = pts[..., TH3], pts[..., X], pts[..., T]
    A, B = _homotopy_profiles(p, tau, th3, x, t)
    return _omega_from_profiles(p, th3, A, B.d_x)


def eval_rho(p: PlugParams, q) -> np.ndarray:
    """rho = dx ^ eta + (1+x) d eta, i.e. the collar form (w at tau = 1)."""
    pts = _pt(q)
    th3, x = pts[..., TH3], pts[..., X]
    x = np.asarray(x, dtype=float)
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    A = ProfileValue(1.0 + x, one, zero, zero)
    return _omega_from_profiles(p, th3, A, zero)


def eval_d_eta(p: PlugParams, theta3) -> np.ndarray:
    """d eta = -R sin dtheta3^dtheta1 + R cos dtheta3^dtheta2."""
    theta3 = np.asarray(theta3, dtype=float)
    m = np.zeros(theta3.shape + (5, 5))
    m[..., TH3, TH1] = -p.R * np.sin(theta3)
    m[..., TH3, TH2] = p.R * np.cos(theta3)
    return m - np.swapaxes(m, -1, -2)


def basis_wedge(i: int, j: int) -> np.ndarray:
    m = np.zeros((5, 5))
    m[i, j] = 1.0
    m[j, i] = -1.0
    return m


# ---------------------------------------------------------------------------
# nondegeneracy

def linear_coeff_c1(p: PlugParams, q, tau: float = 0.0):
    """Closed-form linear coefficient of the characteristic polynomial.

    ``R^4 A^2 (A_x^2 + A_t^2) + R^2 B_x^2 (A^2 + A_theta3^2)``, evaluated on
    the homotopy profiles (tau = 0 gives w itself).
    """
    pts = _pt(q)
    th3, x, t = pts[..., TH3], pts[..., X], pts[..., T]
    A, B = _homotopy_profiles(p, tau, th3, x, t)
    R2 = p.R * p.R
    return R2 * R2 * A.value**2 * (A.d_x**2 + A.d_t**2) + R2 * B.d_x**2 * (
        A.value**2 + A.d_th3**2
    )


_PERMS4 = [
    (perm, 1 if sum(1 for a in range(4) for b in range(a + 1, 4) if perm[a] > perm[b]) % 2 == 0 else -1)
    for perm in itertools.permutations(range(4))
]


def _det4_leibniz(m):
    total = 0.0
    for perm, sign in _PERMS4:
        term = sign
        for row, col in enumerate(perm):
            term = term * m[..., row, col]
        total = total + term
    return total


def charpoly_c1_oracle(w) -> np.ndarray:
    """Linear coefficient of det(lambda I - m) by brute-force minor expansion.

    For a 5x5 matrix that coefficient is the sum of the five principal 4x4
    minors; each minor is expanded over all 24 permutations.
    """
    w = np.asarray(w, dtype=float)
    total = 0.0
    for k in range(5):
        keep = [i for i in range(5) if i != k]
        total = total + _det4_leibniz(w[..., keep, :][..., :, keep])
    return total


def pfaffian4(m):
    """Pfaffian of a 4x4 antisymmetric matrix (batched)."""
    return (
        m[..., 0, 1] * m[..., 2, 3]
        - m[..., 0, 2] * m[..., 1, 3]
        + m[..., 0, 3] * m[..., 1, 2]
    )


def pfaffian_cofactors(m):
    """Vector ``v_k = (-1)^k Pf(m with row/col k removed)``.

    For an antisymmetric 5x5 matrix of rank 4 this spans the kernel, and
    ``|v|^2`` equals the linear coefficient of the characteristic polynomial.
    """
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape[:-2] + (5,))
    for k in range(5):
        keep = [i for i in range(5) if i != k]
        out[..., k] = (-1) ** k * pfaffian4(m[..., keep, :][..., :, keep])
    return out


def top_block_pfaffian(w):
    """Pfaffian of the (theta1, theta2, theta3, x) block.

    Equals the coefficient of mu in w^w^dt divided by WEDGE_FACTOR.
    """
    w = np.asarray(w, dtype=float)
    return pfaffian4(w[..., :4, :4])


def wedge_ww_dt(w):
    """Coefficient of mu in w^w^dt by full antisymmetrisation.

    Independent of :func:`pfaffian4`: sums over all permutations of the four
    non-t indices.
    """
    w = np.asarray(w, dtype=float)
    total = 0.0
    for perm, sign in _PERMS4:
        total = total + sign * w[..., perm[0], perm[1]] * w[..., perm[2], perm[3]]
    return total / 4.0


def boundary_form_matrix(p: PlugParams, theta3, x) -> np.ndarray:
    """dx^eta + (1+x) d eta built directly from its two wedge terms."""
    eta = eval_eta(p, theta3)
    theta3 = np.asarray(theta3, dtype=float)
    x = np.asarray(x, dtype=float)
    dx = np.zeros(theta3.shape + (5,))
    dx[..., X] = 1.0
    wedge = dx[..., :, None] * eta[..., None, :] - eta[..., :, None] * dx[..., None, :]
    return wedge + (1.0 + x)[..., None, None] * eval_d_eta(p, theta3)


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepReport:
    params_hash: str
    tau: float
    n_samples: int
    min_c1: float
    argmin_point: list
    oracle_spot_check_max_err: float
    passed: bool
    c1_floor: float

    def to_record(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _torus_probe_points(p: PlugParams, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = []
    for th3, x, t in torus_locations(p):
        ang = rng.uniform(0, 2 * np.pi, size=(n, 2))
        pts.append(np.column_stack([ang, np.full(n, th3), np.full(n, x), np.full(n, t)]))
    return np.vstack(pts)


def nondegeneracy_sweep(
    p: PlugParams,
    samples: int,
    taus=(0.0,),
    seed: int = 0,
    c1_floor: float = 1e-12,
) -> list[SweepReport]:
    """Minimum of c1 over quasi-random points of P, one report per tau.

    The sample set is augmented with points on the two tori, the only places
    where c1 can approach zero.  A sweep passes when ``min c1 > c1_floor``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    pts = np.vstack([sample_points(p, samples, seed), _torus_probe_points(p, 8, seed)])
    n_spot = max(1, len(pts) // 100)
    spot = pts[:: max(1, len(pts) // n_spot)][:n_spot]
    digest = p.digest()
    reports = []
    for tau in taus:
        c1 = linear_coeff_c1(p, pts, tau)
        i = int(np.argmin(c1))
        oracle = charpoly_c1_oracle(eval_homotopy_omega(p, tau, spot))
        closed = linear_coeff_c1(p, spot, tau)
        err = float(np.max(np.abs(oracle - closed) / (1.0 + np.abs(closed))))
        reports.append(
            SweepReport(
                params_hash=digest,
                tau=float(tau),
                n_samples=int(len(pts)),
                min_c1=float(c1[i]),
                argmin_point=[float(v) for v in pts[i]],
                oracle_spot_check_max_err=err,
                passed=bool(c1[i] > c1_floor),
                c1_floor=c1_floor,
            )
        )
    return reports
