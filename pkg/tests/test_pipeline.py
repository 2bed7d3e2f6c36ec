import numpy as np
import pytest

from segflow.config import RunConfig
from segflow.data_core import Demonstration
from segflow.errors import InvalidDemonstration
from segflow.fusion import EndCondition
from segflow.gmm_segmenter import Source
from segflow.pipeline import prepare, segment_demonstration
from segflow.synth_oracle import generate


def test_setup1_plan(setup1, setup1_result):
    demo, truth = setup1
    plan = setup1_result.plan
    assert len(plan.segments) == 5
    assert [s.idle for s in plan.segments] == list(truth.idle_flags)
    assert [s.end_condition for s in plan.segments] == [
        EndCondition.GOAL_REACHED,
        EndCondition.GOAL_REACHED,
        EndCondition.CONTACT_CHANGE,
        EndCondition.GOAL_REACHED,
        EndCondition.CONTACT_CHANGE,
    ]
    contacts = [s.contact_time for s in plan.segments if s.is_contact]
    np.testing.assert_allclose(contacts, truth.contact_times, atol=0.05)
    for s in plan.segments:
        if s.is_contact:
            assert s.force_threshold >= 0.5
    assert plan.segments[2].label == "move -z until contact"


def test_segments_tile_span(setup1_result):
    plan = setup1_result.plan
    assert plan.segments[0].t_start == plan.demo_span[0]
    assert plan.segments[-1].t_end == plan.demo_span[1]
    for a, b in zip(plan.segments, plan.segments[1:]):
        assert a.t_end == b.t_start


def test_setup2_plan(setup2_script):
    demo, truth = generate(setup2_script)
    plan = segment_demonstration(demo).plan
    active = plan.active_segments
    assert len(active) == 4
    fused = [p for p in plan.points if p.source is Source.FUSED]
    assert len(fused) == 2
    np.testing.assert_allclose([p.t for p in fused], truth.contact_times, atol=0.05)


def test_normalizer_switch(setup1):
    demo, _ = setup1
    res = segment_demonstration(demo, RunConfig({"kalman.normalizer": "p_plus_r2"}))
    assert len(res.plan.segments) == 5


def test_prepare_rejects_nonfinite():
    t = np.arange(20) / 250
    q = np.zeros((20, 1))
    q[5, 0] = np.nan
    demo = Demonstration(t=t, q=q, w=np.zeros((20, 1)), q_names=["x"], w_names=["fx"])
    with pytest.raises(InvalidDemonstration) as err:
        prepare(demo)
    assert err.value.details["errors"][0]["index"] == 5


def test_prepare_resamples_jittered_time():
    rng = np.random.default_rng(0)
    t = np.arange(500) / 250 + rng.uniform(-1e-3, 1e-3, 500)
    t[0] = 0.0
    demo = Demonstration(t=t, q=np.zeros((500, 1)), w=np.zeros((500, 1)), q_names=["x"], w_names=["fx"])
    out = prepare(demo)
    assert np.allclose(np.diff(out.t), np.diff(out.t)[0])
