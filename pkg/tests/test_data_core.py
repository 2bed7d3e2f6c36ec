import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segflow.data_core import (
    Demonstration,
    format_demonstration,
    is_uniform,
    load_demonstration,
    parse_demonstration,
    resample_uniform,
    validate,
)
from segflow.errors import DegenerateSpan, MissingColumn, NonMonotonicTime, NonNumericCell

from conftest import FIXTURES


def make_demo(t, q, w=None, **kw):
    t = np.asarray(t, float)
    q = np.asarray(q, float).reshape(len(t), -1)
    w = np.zeros((len(t), 1)) if w is None else np.asarray(w, float).reshape(len(t), -1)
    names = kw.pop("q_names", [f"c{i}" for i in range(q.shape[1])])
    return Demonstration(t=t, q=q, w=w, q_names=names, w_names=[f"f{i}" for i in range(w.shape[1])], **kw)


# ---------------------------------------------------------------- loading


def test_three_row_csv_infers_250hz():
    demo = parse_demonstration("t,q:x,w:fx\n0,0.1,1\n0.004,0.2,2\n0.008,0.3,3\n")
    assert len(demo) == 3
    assert demo.rate_hz == pytest.approx(250.0)
    assert demo.q_names == ("x",) and demo.w_names == ("fx",)
    np.testing.assert_array_equal(demo.q[:, 0], [0.1, 0.2, 0.3])


def test_decreasing_time_reports_row():
    rows = ["t,q:x,w:fx"] + [f"{t},0,0" for t in (0.0, 0.004, 0.008, 0.012, 0.010, 0.02)]
    with pytest.raises(NonMonotonicTime) as err:
        parse_demonstration("\n".join(rows))
    assert err.value.details["row"] == 5


def test_fixture_loads_337_samples():
    demo = load_demonstration(FIXTURES / "setup1_nis.csv", schema={"value": ["q:nis", "w:nis"]})
    assert len(demo) == 337
    assert demo.rate_hz == pytest.approx(50.0)


def test_channels_keep_header_order_and_units():
    text = "t,w:fx,q:z,q:qx,w:tx,q:x\n0,1,2,3,4,5\n1,1,2,3,4,5\n"
    demo = parse_demonstration(text)
    assert demo.q_names == ("z", "qx", "x")
    assert demo.w_names == ("fx", "tx")
    assert demo.q_units == ("m", "1", "m")
    assert demo.w_units == ("N", "N*m")
    np.testing.assert_array_equal(demo.q[0], [2, 3, 5])


def test_schema_renames_columns():
    demo = parse_demonstration("time,pos,force\n0,1,2\n1,3,4\n", schema={"time": "t", "pos": "q:x", "force": "w:fx"})
    assert demo.q_names == ("x",)
    np.testing.assert_array_equal(demo.w[:, 0], [2, 4])


def test_crlf_and_bom_accepted():
    demo = parse_demonstration("﻿t,q:x,w:fx\r\n0,1,2\r\n1,3,4\r\n")
    assert len(demo) == 2


@pytest.mark.parametrize(
    "text, missing",
    [("q:x,w:fx\n1,2\n", "t"), ("t,w:fx\n0,1\n", "q:*"), ("t,q:x\n0,1\n", "w:*"), ("", "t")],
)
def test_missing_columns(text, missing):
    with pytest.raises(MissingColumn) as err:
        parse_demonstration(text)
    assert err.value.details["column"] == missing


def test_non_numeric_cell_names_row_and_column():
    with pytest.raises(NonNumericCell) as err:
        parse_demonstration("t,q:x,w:fx\n0,1,2\n0.004,1,oops\n")
    assert err.value.details == {"row": 2, "column": "w:fx"}


def test_format_round_trips_exactly():
    rng = np.random.default_rng(3)
    demo = make_demo(np.arange(20) * 0.004, rng.normal(size=(20, 2)), rng.normal(size=(20, 3)))
    back = parse_demonstration(format_demonstration(demo))
    np.testing.assert_array_equal(back.t, demo.t)
    np.testing.assert_array_equal(back.q, demo.q)
    np.testing.assert_array_equal(back.w, demo.w)


def test_arrays_are_read_only():
    demo = make_demo([0, 1], [0, 1])
    with pytest.raises(ValueError):
        demo.q[0, 0] = 5.0


# ---------------------------------------------------------------- resampling


def test_resample_two_points_to_4hz():
    out = resample_uniform(make_demo([0, 1], [0, 1]), 4.0)
    np.testing.assert_allclose(out.t, [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(out.q[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    assert out.rate_hz == 4.0


def test_resample_identity_on_uniform_input():
    rng = np.random.default_rng(0)
    t = np.arange(500) / 250.0
    demo = make_demo(t, rng.normal(size=(500, 3)), rng.normal(size=(500, 2)))
    out = resample_uniform(demo, 250.0)
    assert out.q.shape == demo.q.shape
    np.testing.assert_allclose(out.t, demo.t, atol=1e-12, rtol=0)
    np.testing.assert_allclose(out.q, demo.q, atol=1e-12, rtol=0)
    np.testing.assert_allclose(out.w, demo.w, atol=1e-12, rtol=0)


def test_resample_quadratic_error_bound():
    t = np.linspace(0, 1, 11)
    out = resample_uniform(make_demo(t, t**2), 100.0)
    # piecewise-linear interpolation error is at most h^2/8 * max|f''| = 0.01/8 * 2,
    # attained at interval midpoints (slack covers float rounding only)
    assert np.max(np.abs(out.q[:, 0] - out.t**2)) <= 0.0025 + 1e-12


def test_resample_degenerate_span():
    with pytest.raises(DegenerateSpan):
        resample_uniform(make_demo([1.0], [0.0]), 10.0)


@settings(max_examples=50, deadline=None)
@given(
    gaps=st.lists(st.floats(0.001, 0.1), min_size=2, max_size=30),
    slope=st.floats(-5, 5),
    offset=st.floats(-5, 5),
    rate=st.floats(5, 500),
)
def test_resample_exact_for_affine_signals(gaps, slope, offset, rate):
    t = np.concatenate([[0.0], np.cumsum(gaps)])
    q = np.column_stack([slope * t + offset, -slope * t])
    out = resample_uniform(make_demo(t, q, q[:, :1]), rate)
    assert out.n == 2 and out.m == 1 and out.q_names == ("c0", "c1")
    np.testing.assert_allclose(out.q[:, 0], slope * out.t + offset, atol=1e-12 * max(1, abs(slope) * 10, abs(offset)))
    assert is_uniform(out.t)


def test_load_validate_resample_idempotent(setup1):
    demo = setup1[0]
    assert validate(demo).ok
    out = resample_uniform(demo, demo.rate_hz)
    np.testing.assert_allclose(out.q, demo.q, atol=1e-12, rtol=0)
    np.testing.assert_allclose(out.w, demo.w, atol=1e-12, rtol=0)


# ---------------------------------------------------------------- validation


def test_clean_demo_validates(setup1):
    report = validate(setup1[0])
    assert report.errors == []


def test_nan_in_wrench_reported_at_index():
    w = np.zeros((10, 1))
    w[7, 0] = math.nan
    report = validate(make_demo(np.arange(10) * 0.004, np.zeros(10), w))
    assert (7, "non-finite wrench") in report.errors
    assert not report.ok


def test_duplicate_timestamp_reported():
    report = validate(make_demo([0, 0.004, 0.004, 0.008], np.zeros(4)))
    assert any("duplicate" in d for _, d in report.errors)


def test_validate_does_not_mutate():
    demo = make_demo([0, 0.004, 0.004], [1, 2, 3])
    before = demo.q.copy()
    validate(demo)
    np.testing.assert_array_equal(demo.q, before)


def test_non_uniform_is_a_warning_only():
    report = validate(make_demo([0, 0.004, 0.01], np.zeros(3)))
    assert report.ok and report.warnings
