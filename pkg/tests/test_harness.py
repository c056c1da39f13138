import numpy as np
import pytest

from symplug import harness
from symplug.flow import Status, Trajectory
from symplug.core import PlugPoint
from symplug.harness import (
    AmbientScene,
    CompositeStatus,
    ConsistencyError,
    build_scene,
    demo_destroy_orbit,
    trace_composite,
)
from symplug.verifier import EntrySpec, sample_entries


@pytest.fixture(scope="module")
def scene(p, trapped_entry):
    return build_scene(p, 4.0, anchor=trapped_entry)


def test_build_scene(p, scene, trapped_entry):
    assert scene.L == 4.0 and scene.plug_interval == (0.0, 2.0)
    assert scene.anchor == trapped_entry
    with pytest.raises(ValueError):
        build_scene(p, 2.0, anchor=trapped_entry)


def test_build_scene_finds_anchor(p, trapped_entry):
    assert build_scene(p, 3.0).anchor == trapped_entry


def test_no_insertion_recloses(p, scene):
    bare = AmbientScene(p, scene.L, scene.anchor, inserted=False)
    for e in [scene.anchor] + sample_entries(p, 10, seed=3):
        ct = trace_composite(bare, e)
        assert ct.status is CompositeStatus.RECLOSED
        assert ct.gap <= 1e-12
        assert ct.arclength == scene.L


def test_anchor_trapped(scene):
    ct = trace_composite(scene, scene.anchor)
    assert ct.status is CompositeStatus.TRAPPED
    assert [s["kind"] for s in ct.segments] == ["plug"]
    assert ct.plug_trajectories[0].status is Status.TRAPPED_NEAR


def test_straight_start_recloses(scene):
    ct = trace_composite(scene, EntrySpec(1.0, 2.0, 3.0, 0.1))
    assert ct.status is CompositeStatus.RECLOSED and ct.gap <= 1e-6


def test_generic_starts_reclose(p, scene):
    for e in sample_entries(p, 10, seed=9):
        ct = trace_composite(scene, e)
        assert ct.status is CompositeStatus.RECLOSED and ct.gap <= 1e-4
        kinds = [s["kind"] for s in ct.segments]
        assert kinds == ["plug", "ambient"]
        amb = ct.segments[1]
        # ambient segments keep N-coordinates fixed and meet the plug exit
        assert amb["start"] == amb["end"]
        assert np.allclose(amb["start"], ct.segments[0]["end"][:4], atol=1e-10, rtol=0)
        assert ct.max_interface_mismatch <= 1e-10


def test_interface_mismatch_detected(p, scene, monkeypatch):
    def fake(p_, start, horizon, tol):
        pt = start.as_array().copy()
        pt[4] = 0.9
        return Trajectory(np.array([0.0, 1.9]), np.vstack([start.as_array(), pt]),
                          np.zeros((2, 5)), Status.EXITED_TOP, horizon, tol,
                          exit_point=PlugPoint.from_array(pt))
    monkeypatch.setattr(harness, "integrate", fake)
    with pytest.raises(ConsistencyError):
        trace_composite(scene, EntrySpec(1.0, 2.0, 3.0, 0.1))


def test_demo_default(p):
    r = demo_destroy_orbit(p, 4.0, 50)
    assert r.passed
    assert r.anchor_status == "Trapped"
    assert r.n_reclosed == 50 and r.max_gap <= 1e-4
    assert r.anchor_identity_status == "Reclosed" and r.n_identity_reclosed == 50
    assert r.n_through_anchor == 0
    table = r.dumps["anchor_plug_transit"]
    assert table.startswith("s theta1")


def test_demo_controls_near_anchor(p, trapped_entry):
    rng = np.random.default_rng(0)
    a = trapped_entry
    controls = []
    for _ in range(10):
        d = rng.normal(size=2)
        d *= rng.uniform(2e-4, 1e-3) / np.linalg.norm(d)
        controls.append(EntrySpec(a.theta1, a.theta2, a.theta3 + d[0], a.x + d[1]))
    r = demo_destroy_orbit(p, 4.0, controls=controls)
    assert r.anchor_status == "Trapped"
    # near-anchor controls either re-close or end up counted as inconclusive
    assert r.n_reclosed + r.n_inconclusive + r.n_trapped_controls == 10
    assert r.n_inconclusive <= 1 and r.passed
