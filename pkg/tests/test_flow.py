import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import null_space

from symplug.core import PlugPoint, psi, sample_points
from symplug.flow import (
    DegenerateFormError,
    Status,
    Trajectory,
    TorusTag,
    _field,
    closure_gap,
    dopri_step,
    integrate,
    kernel_direction,
    orient,
    oriented_kernel,
    periodic_delta,
    torus_distance,
)
from symplug.forms import basis_wedge, boundary_form_matrix, eval_d_eta, eval_omega, X, T
from symplug.verifier import n_distance


def test_kernel_collar_and_torus(p):
    v = kernel_direction(boundary_form_matrix(p, 0.7, 0.1))
    assert np.allclose(np.abs(v), [0, 0, 0, 0, 1], atol=1e-15)
    th = p.theta_tilde
    w = 1.0 * eval_d_eta(p, th) + p.c_B * basis_wedge(X, T)
    v = kernel_direction(w)
    target = np.array([math.cos(th), math.sin(th), 0, 0, 0])
    assert min(np.linalg.norm(v - target), np.linalg.norm(v + target)) <= 1e-15


@settings(max_examples=200)
@given(arrays(np.float64, 25, elements=st.floats(-5, 5, allow_nan=False)))
def test_kernel_matches_null_space(a):
    m = a.reshape(5, 5)
    m = m - m.T
    try:
        v = kernel_direction(m)
    except DegenerateFormError:
        # only near-degenerate matrices may be rejected
        sv = np.linalg.svd(m, compute_uv=False)
        assert sv[3] <= 1e-4 * max(sv[0], 1e-300)
        return
    norm = np.linalg.norm(m)
    assert np.max(np.abs(m @ v)) <= 1e-10 * norm
    ns = null_space(m, rcond=1e-10)
    if ns.shape[1] == 1:
        assert abs(abs(float(ns[:, 0] @ v)) - 1) <= 1e-8


def test_degenerate_raises(p):
    with pytest.raises(DegenerateFormError):
        kernel_direction(np.zeros((5, 5)))
    w = eval_omega(p.with_(c_B=0.0), PlugPoint(0, 0, p.theta_tilde, 0.0, 0.5))
    with pytest.raises(DegenerateFormError):
        kernel_direction(w)


def test_oriented_kernel_rules(p):
    assert np.array_equal(oriented_kernel(p, PlugPoint(0, 0, 1, 0.2, 0.9)), [0, 0, 0, 0, 1])
    th = p.theta_tilde
    q = PlugPoint(0, 0, th, 0.0, -0.5)
    u = oriented_kernel(p, q)
    assert u[0] * math.cos(th) + u[1] * math.sin(th) > 0.999
    flipped = oriented_kernel(p, q, prev=-u)
    assert np.allclose(flipped, -u)
    # rule (i) ignores prev when v_t is clearly nonzero
    q2 = PlugPoint(0, 0, th + 0.1, 0.05, -0.45)
    a = oriented_kernel(p, q2)
    assert a[4] > 1e-8
    assert np.array_equal(oriented_kernel(p, q2, prev=-a), a)


def test_kernel_residual_bulk(p):
    pts = sample_points(p, 100_000, seed=12)
    w = eval_omega(p, pts)
    v = orient(p, kernel_direction(w))
    res = np.max(np.abs(np.einsum("nij,nj->ni", w, v)), axis=1)
    assert np.all(res <= 1e-10 * np.linalg.norm(w, axis=(1, 2)))
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-15)
    assert np.min(v[:, 4]) >= -1e-9
    assert np.max(np.abs(v[:, 2])) <= 1e-15     # theta3 is conserved


def test_scalar_field_matches_vectorized(p):
    pts = sample_points(p, 300, seed=13)
    ref = orient(p, kernel_direction(eval_omega(p, pts)))
    got = np.array([_field(p, y, None) for y in pts])
    assert np.max(np.abs(got - ref)) <= 1e-15


def test_torus_distance_examples(p):
    th = p.theta_tilde
    assert torus_distance(p, PlugPoint(1, 2, th, 0, 0.5), TorusTag.PLUS) == 0.0
    assert math.isclose(torus_distance(p, PlugPoint(0, 0, th + math.pi, 0, 0.5), TorusTag.PLUS),
                        math.pi, rel_tol=1e-14)
    rng = np.random.default_rng(1)
    for _ in range(50):
        q = PlugPoint(*rng.uniform(0, 6, 3), rng.uniform(-0.25, 0.25), rng.uniform(-1, 1))
        assert math.isclose(torus_distance(p, q, TorusTag.PLUS),
                            torus_distance(p, psi(q), TorusTag.MINUS), rel_tol=1e-14)


def test_straight_line_example(p):
    e = PlugPoint(0.5, 4.0, 3.0, 0.1, -1.0)
    tr = integrate(p, e, 50.0, 1e-10)
    assert tr.status is Status.EXITED_TOP
    assert tr.exit_point.t == 1.0
    assert np.all(tr.points[:, 2] == 3.0)
    assert n_distance(e.as_array(), tr.exit_point.as_array()) <= 1e-9


def test_outside_all_bumps_is_exactly_vertical(p):
    tr = integrate(p, PlugPoint(0.5, 4.0, 3.0, 0.2, -1.0), 50.0, 1e-10)
    assert np.all(tr.velocities[:, :4] == 0.0)
    assert math.isclose(tr.arclength, 2.0, rel_tol=1e-12)


def test_torus_resident(p):
    horizon, tol = 300.0, 1e-10
    for t0, tag in ((-0.5, TorusTag.MINUS), (0.5, TorusTag.PLUS)):
        tr = integrate(p, PlugPoint(0, 0, p.theta_tilde, 0.0, t0), horizon, tol)
        assert tr.status is Status.HORIZON_REACHED
        d = torus_distance(p, tr.points, tag)
        assert np.max(d) < 10 * tol * horizon
        slope = tr.velocities[:, 1] / tr.velocities[:, 0]
        assert np.allclose(slope, p.theta_tilde_tan, rtol=1e-12)


def test_trapped_entry_forward(p, trapped_entry):
    tr = integrate(p, trapped_entry.point(), 1000.0, 1e-10)
    assert tr.status is Status.TRAPPED_NEAR
    assert tr.torus_tag is TorusTag.MINUS
    assert tr.final_torus_distance < 1e-2
    assert tr.info["dwell"] >= 100


def test_monotone_t_along_trajectories(p):
    rng = np.random.default_rng(2)
    for k in range(6):
        th3 = p.theta_tilde + rng.uniform(-0.4, 0.4)
        q = PlugPoint(*rng.uniform(0, 6, 2), th3, rng.uniform(-0.2, 0.2), -1.0)
        tr = integrate(p, q, 500.0, 1e-10)
        assert np.min(tr.velocities[:, 4]) >= -1e-9
        assert np.all(np.diff(tr.s) > 0)
        assert np.all(np.diff(tr.points[:, 4]) >= -1e-12)
        assert np.max(np.abs(tr.points[:, 3])) <= p.eps


def test_exit_located_on_face(p):
    tr = integrate(p, PlugPoint(1, 1, p.theta_tilde + 0.3, 0.05, -1.0), 500.0, 1e-10)
    assert tr.status is Status.EXITED_TOP
    assert abs(tr.points[-1, 4] - 1.0) <= 1e-12
    back = integrate(p, tr.exit_point, 500.0, 1e-10, direction=-1)
    assert back.status is Status.EXITED_BOTTOM
    assert abs(back.points[-1, 4] + 1.0) <= 1e-12


def test_dopri_order():
    # y' = y on [0, 1]; fifth-order global error
    f = lambda y: y
    errs = []
    for n in (10, 20, 40):
        h = 1.0 / n
        y = np.array([1.0])
        for _ in range(n):
            y, _, _ = dopri_step(f, y, h, f(y))
        errs.append(abs(y[0] - math.e))
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 25 < r1 < 40 and 25 < r2 < 40


def test_tolerance_convergence(p):
    q = PlugPoint(1.0, 2.0, p.theta_tilde + 0.05, 0.02, -1.0)
    ref = integrate(p, q, 1000.0, 1e-13).exit_point.as_array()
    errs = {}
    for tol in (1e-6, 1e-8, 1e-10):
        tr = integrate(p, q, 1000.0, tol)
        assert tr.status is Status.EXITED_TOP
        errs[tol] = float(n_distance(ref, tr.exit_point.as_array()))
        assert errs[tol] <= 1e3 * tol * tr.arclength
    assert errs[1e-10] <= errs[1e-6]


def test_reversibility(p):
    tol = 1e-10
    rng = np.random.default_rng(5)
    for _ in range(4):
        q = PlugPoint(*rng.uniform(0, 6, 2), p.theta_tilde + rng.uniform(-0.3, 0.3),
                      rng.uniform(-0.15, 0.15), rng.uniform(-0.7, -0.3))
        s = 0.6
        fwd = integrate(p, q, s, tol, stop_on_trap=False)
        assert fwd.status is Status.HORIZON_REACHED
        # the psi-image of a forward curve is a backward curve
        mirror = integrate(p, psi(fwd.final), s, tol, stop_on_trap=False)
        gap = n_distance(psi(q).as_array(), mirror.final.as_array())
        assert gap <= 10 * tol * s


def test_closure_gap_straight(p):
    tr = integrate(p, PlugPoint(0.5, 4.0, 3.0, 0.1, -1.0), 50.0, 1e-10)
    assert closure_gap(tr, 1.9) >= 1.9 - 1e-9
    assert closure_gap(tr, 5.0) == math.inf


def test_closure_gap_synthetic_loop():
    s = np.linspace(0, 4 * math.pi, 801)
    pts = np.column_stack([s % (2 * math.pi), np.zeros_like(s), np.zeros_like(s),
                           0.1 * np.cos(s), 0.1 * np.sin(s)])
    vel = np.column_stack([np.ones_like(s), 0 * s, 0 * s, -0.1 * np.sin(s), 0.1 * np.cos(s)])
    vel /= np.linalg.norm(vel, axis=1)[:, None]
    tr = Trajectory(s, pts, vel, Status.HORIZON_REACHED, s[-1], 1e-10)
    assert closure_gap(tr, 1.0) <= 1e-12


def test_closure_gap_golden_torus(p):
    """Compare with the best rational approximation of the golden slope."""
    horizon = 1000.0
    tr = integrate(p, PlugPoint(0, 0, p.theta_tilde, 0.0, -0.5), horizon, 1e-10)
    gap = closure_gap(tr, 1.0)
    c = math.cos(p.theta_tilde)
    turns = int(horizon * c / (2 * math.pi))
    phi = p.theta_tilde_tan
    # perpendicular distance between strands after a theta1-windings
    predicted = min(2 * math.pi * c * abs(a * phi - round(a * phi)) for a in range(1, turns + 1))
    assert gap == pytest.approx(predicted, abs=1e-8)
    assert gap >= 1e-3


def test_closure_gap_rational_slope(p):
    q = p.with_(theta_tilde_tan=1.0)
    tr = integrate(q, PlugPoint(0, 0, q.theta_tilde, 0.0, -0.5), 100.0, 1e-10)
    assert closure_gap(tr, 1.0) <= 1e-6


def test_periodic_delta():
    d = periodic_delta(np.array([6.2, 0, 0, 0, 0]), np.array([0.1, 0, 0, 0.05, 0.1]))
    assert d[0] == pytest.approx(0.1 + 2 * math.pi - 6.2)
    assert d[3] == 0.05 and d[4] == 0.1


def test_trajectory_table_and_summary(p):
    tr = integrate(p, PlugPoint(0, 0, 3.0, 0.0, -1.0), 50.0, 1e-10)
    lines = tr.to_table(p).splitlines()
    assert lines[0].split() == ["s", "theta1", "theta2", "theta3", "x", "t", "v_t",
                                "torus_dist_minus", "torus_dist_plus"]
    assert len(lines) == len(tr.s) + 1
    assert all(len(row.split()) == 9 for row in lines[1:])
    rec = tr.summary()
    assert rec["status"] == "ExitedTop" and rec["exit_point"][4] == 1.0


def test_bad_arguments(p):
    with pytest.raises(ValueError):
        integrate(p, PlugPoint(0, 0, 0, 0, 0), -1.0)
    with pytest.raises(ValueError):
        integrate(p, PlugPoint(0, 0, 0, 0.5, 0), 1.0)


def test_degenerate_start_reports_failure(p):
    q = p.with_(c_B=0.0)
    tr = integrate(q, PlugPoint(0, 0, q.theta_tilde, 0.0, 0.5), 10.0)
    assert tr.status is Status.INTEGRATION_FAILURE
    assert "rank" in tr.failure
