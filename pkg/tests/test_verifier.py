import json
import math

import numpy as np
import pytest

from symplug.core import PlugPoint, collar_mask
from symplug.flow import Status, TorusTag, integrate
from symplug.verifier import (
    EntrySpec,
    SearchFailure,
    classify_transit,
    collar_samples,
    find_trapped_entry,
    line_angle,
    n_distance,
    sample_entries,
    symmetry_angles,
    verify_P1,
    verify_P2,
    verify_P3,
    verify_P4_surrogate,
    verify_symmetry,
    verify_trap_flow,
)


def test_line_angle():
    a = np.array([1.0, 0, 0, 0, 0])
    assert line_angle(a, -a) == 0.0
    assert line_angle(a, a) == 0.0
    assert line_angle(a, np.array([0, 1.0, 0, 0, 0])) == pytest.approx(math.pi / 2)


def test_n_distance_periodic():
    assert n_distance([0.01, 0, 0, 0], [2 * math.pi - 0.01, 0, 0, 0]) == pytest.approx(0.02)


def test_P1_default(p):
    r = verify_P1(p, 1000)
    assert r.passed and r.metrics["worst_angle"] < 1e-10
    assert r.params_hash == p.digest()
    assert r.thresholds["max_angle"] == 1e-8


def test_collar_filter(p):
    pts, n_filtered = collar_samples(p, 500, seed=0)
    assert len(pts) == 500 and n_filtered > 0
    assert np.all(collar_mask(p, pts[:, 3], pts[:, 4]))


def test_P1_refuses_invalid(p):
    r = verify_P1(p.with_(a_t=0.4))
    assert not r.passed
    assert "0 < a_t < 1/4" in r.notes


def test_trapped_entry(p, trapped_entry):
    tr = integrate(p, trapped_entry.point(), 1000.0, 1e-10)
    assert tr.status is Status.TRAPPED_NEAR and tr.torus_tag is TorusTag.MINUS
    bumped = EntrySpec(trapped_entry.theta1, trapped_entry.theta2,
                       trapped_entry.theta3 + 0.2, trapped_entry.x)
    assert integrate(p, bumped.point(), 1000.0, 1e-10).status is Status.EXITED_TOP


@pytest.mark.parametrize("direction", [
    [0, 0, 0, 0, 1.0], [0, 0, 0, 0, -1.0], [0, 0, 0, 1.0, 0], [0, 0, 0, -1.0, 0],
])
def test_trapped_entry_either_branch(p, direction):
    try:
        e = find_trapped_entry(p, direction=direction)
    except SearchFailure as exc:
        assert exc.stalled
        return
    tr = integrate(p, e.point(), 1000.0, 1e-10)
    assert tr.status is Status.TRAPPED_NEAR


def test_P2(p, trapped_entry):
    r = verify_P2(p, trapped_entry, horizon=1000.0)
    assert r.passed
    assert r.metrics["final_torus_distance"] < 1e-2
    assert r.metrics["tail_max_distance_increase"] <= 0
    assert r.metrics["max_t"] < 1


def test_P2_straight_entry_fails(p):
    r = verify_P2(p, EntrySpec(0.0, 0.0, 3.0, 0.0), horizon=100.0)
    assert not r.passed and r.metrics["status"] == "ExitedTop"


def test_P2_short_horizon(p, trapped_entry):
    # the trapped line reaches the 1e-2 neighbourhood after arclength ~0.5,
    # so "too short" has to be shorter than that
    r = verify_P2(p, trapped_entry, horizon=0.3)
    assert not r.passed
    assert r.metrics["status"] == "HorizonReached"
    assert "insufficient horizon" in r.notes


def test_sample_entries(p):
    es = sample_entries(p, 40, seed=1)
    assert len(es) == 40
    for e in es:
        dth = abs((e.theta3 - p.theta_tilde + math.pi) % (2 * math.pi) - math.pi)
        assert dth <= p.a_th + 1e-12 and abs(e.x) <= p.eps
        assert math.hypot(dth, e.x) >= 1e-3


def test_P3_default(p):
    r = verify_P3(p, 100)
    assert r.passed
    assert r.metrics["max_mismatch"] < 1e-5
    assert r.metrics["n_exited"] >= 95 and r.metrics["n_inconclusive"] <= 5


def test_P3_straight_and_near_torus(p):
    kind, err, _ = classify_transit(p, EntrySpec(1.0, 2.0, 3.0, 0.1), 100.0, 1e-10)
    assert kind == "exit" and err <= 1e-9
    near = EntrySpec(0.3, 0.4, p.theta_tilde + 1e-3, 0.0)
    kind, err, tr = classify_transit(p, near, 2000.0, 1e-10)
    assert kind == "exit"
    assert tr.arclength > 10
    assert err <= 1e-9 * tr.arclength


def test_P3_error_linear_in_arclength(p):
    for tol in (1e-8, 1e-10):
        r = verify_P3(p, 20, tol=tol, seed=3)
        assert r.passed
        assert r.metrics["mismatch_per_arclength"] <= 100 * tol


def test_P4_default(p, trapped_entry):
    r = verify_P4_surrogate(p, n_grid=20_000, n_traj=6, entry=trapped_entry)
    assert r.passed, r.metrics
    assert r.metrics["ii_max_direction_error"] <= 1e-8
    assert r.metrics["iii_min_gap"] >= 1e-3
    assert "not a proof" in r.notes


def test_P4_rational_slope(p):
    q = p.with_(theta_tilde_tan=1.0)
    r = verify_P4_surrogate(q, n_grid=20_000, n_traj=4)
    assert not r.passed
    m = r.metrics
    assert m["sub_i"] is True and m["sub_ii"] is True and m["sub_iii"] is False
    assert m["iii_gap_torus-_0"] <= 1e-6
    assert any("near_closure" in w for w in r.witnesses)


def test_P4_zero_cB(p):
    r = verify_P4_surrogate(p.with_(c_B=0.0), n_grid=20_000, n_traj=4)
    assert not r.passed
    assert r.metrics["sub_i"] is False
    assert r.metrics["i_n_degenerate"] > 0
    named = [w["degenerate"] for w in r.witnesses if "degenerate" in w]
    assert named and all(abs(abs(pt[4]) - 0.5) < 1e-2 and abs(pt[3]) < 1e-2 for pt in named)


def test_symmetry(p):
    r = verify_symmetry(p, 10_000)
    assert r.passed and r.metrics["worst_angle"] <= 1e-6
    coll = np.array([[0.1, 0.2, 0.3, 0.2, 0.9]])
    assert symmetry_angles(p, coll)[0] == 0.0
    fixed = np.array([[0.1, 0.2, p.theta_tilde + 0.1, 0.02, 0.0]])
    assert symmetry_angles(p, fixed)[0] <= 1e-12


def test_trap_flow(p, trapped_entry):
    r = verify_trap_flow(p, trapped_entry, horizon=1000.0)
    assert r.passed and r.metrics["final_direction_angle"] <= 1e-2


def test_reports_deterministic(p):
    a = verify_P1(p, 200, seed=4).to_record()
    b = verify_P1(p, 200, seed=4).to_record()
    assert a == b
    rec = json.loads(verify_P3(p, 5, seed=2).to_record(seed=2))
    assert rec["tag"] == "P3" and rec["seed"] == 2 and "thresholds" in rec
