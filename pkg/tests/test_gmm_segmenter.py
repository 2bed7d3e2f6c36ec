import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segflow.data_core import Demonstration
from segflow.errors import AllFitsFailed, SegflowError, TooFewSamples, UnorderedGmm
from segflow.gmm_segmenter import (
    CandidateInterval,
    EmConfig,
    GaussianComponent,
    Gmm,
    Source,
    candidate_intervals,
    fit_gmm,
    fit_gmm_array,
    initial_points,
    select_model,
)

from oracles import bic as oracle_bic, mixture_loglik


def demo_from(t, q):
    q = np.asarray(q, float).reshape(len(t), -1)
    return Demonstration(
        t=t, q=q, w=np.zeros((len(t), 1)), q_names=[f"c{i}" for i in range(q.shape[1])], w_names=["f"]
    )


def blobs(centers, n=150, sd_t=0.1, sd_q=0.05, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for ct, cq in centers:
        rows.append(np.column_stack([rng.normal(ct, sd_t, n), rng.normal(cq, sd_q, n)]))
    X = np.vstack(rows)
    return X[np.argsort(X[:, 0])]


def two_component(mu1, s1, mu2, s2):
    comps = tuple(
        GaussianComponent.from_full(0.5, [mu, 0.0], [[s, 0.0], [0.0, 1.0]]) for mu, s in ((mu1, s1), (mu2, s2))
    )
    return Gmm(components=comps, log_likelihood=0.0, n_iterations=0)


# ---------------------------------------------------------------- fit_gmm


def test_k1_closed_form_on_ramp():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 2, 400)
    q = 0.3 * t + 0.01 * rng.normal(size=t.size)
    cfg = EmConfig()
    g = fit_gmm(demo_from(t, q), 1, cfg)
    X = np.column_stack([t, q])
    c = g.components[0]
    np.testing.assert_allclose(c.mu_t, t.mean(), rtol=1e-12)
    np.testing.assert_allclose(c.mu_xi, [q.mean()], rtol=1e-12)
    # compare in the standardized units where the regularization acts
    scale = X.std(axis=0)
    fitted = c.cov / np.outer(scale, scale)
    expected = np.cov(X, rowvar=False, bias=True) / np.outer(scale, scale) + cfg.reg_eps * np.eye(2)
    np.testing.assert_allclose(fitted, expected, atol=2 * cfg.reg_eps, rtol=0)
    assert c.weight == 1.0


def test_two_stationary_blobs():
    rng = np.random.default_rng(2)
    t = np.concatenate([np.linspace(0, 1, 200), np.linspace(2, 3, 200)])
    q = np.concatenate([np.zeros(200), np.ones(200)]) + 1e-3 * rng.normal(size=400)
    g = fit_gmm(demo_from(t, q), 2)
    np.testing.assert_allclose([g.components[0].mu_t, g.components[0].mu_xi[0]], [0.5, 0.0], atol=0.05)
    np.testing.assert_allclose([g.components[1].mu_t, g.components[1].mu_xi[0]], [2.5, 1.0], atol=0.05)
    # brute-force hard assignment agrees with the fitted responsibilities
    X = np.column_stack([t, q])
    means = np.array([c.mean for c in g.components])
    labels = np.argmin(((X[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    np.testing.assert_array_equal(labels, (t > 1.5).astype(int))


def test_setup1_five_components_follow_phase_order(setup1):
    demo, truth = setup1
    g = fit_gmm(demo, 5)
    edges = [0.0, *truth.boundary_times, truth.t_end]
    for i, c in enumerate(g.components):
        assert edges[i] < c.mu_t < edges[i + 1]


def test_log_likelihood_matches_brute_force(setup1):
    demo = setup1[0]
    g = fit_gmm(demo, 3)
    X = np.column_stack([demo.t, demo.q])
    ll = mixture_loglik(X, g.weights, [c.mean for c in g.components], [c.cov for c in g.components])
    assert g.log_likelihood == pytest.approx(ll, rel=1e-9)


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        fit_gmm(demo_from(np.arange(5.0), np.arange(5.0)), 3)


def test_invariants_on_fitted_model(setup1):
    g = fit_gmm(setup1[0], 5)
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(g.mu_t) > 0)
    for c in g.components:
        np.testing.assert_array_equal(c.sigma_t_xi, c.sigma_xi_t)
        assert np.linalg.eigvalsh(c.cov).min() > 0


def test_determinism(setup1):
    a = fit_gmm(setup1[0], 4)
    b = fit_gmm(setup1[0], 4)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_shift_equivariance():
    X = blobs([(0.5, 0.0), (2.0, 1.0), (3.5, 0.2)], seed=4)
    shift = np.array([0.0, 0.37])
    a = fit_gmm_array(X, 3)
    b = fit_gmm_array(X + shift, 3)
    for ca, cb in zip(a.components, b.components):
        np.testing.assert_allclose(cb.mu_xi, ca.mu_xi + shift[1:], atol=1e-9)
        np.testing.assert_allclose(cb.cov, ca.cov, atol=1e-9)
    ia, ib = candidate_intervals(a), candidate_intervals(b)
    for x, y in zip(ia, ib):
        assert abs(x.t_b1 - y.t_b1) < 1e-9 and abs(x.t_b2 - y.t_b2) < 1e-9
    for p, r in zip(initial_points(ia), initial_points(ib)):
        assert abs(p.t - r.t) < 1e-9


def test_json_round_trip(setup1):
    g = fit_gmm(setup1[0], 2)
    back = Gmm.from_dict(json.loads(json.dumps(g.to_dict())))
    assert back.k == 2 and back.log_likelihood == g.log_likelihood
    for a, b in zip(g.components, back.components):
        np.testing.assert_array_equal(a.cov, b.cov)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 4), n=st.integers(60, 200))
def test_em_log_likelihood_never_decreases(seed, k, n):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.sort(rng.uniform(0, 5, n)), rng.normal(size=(n, 2)).cumsum(axis=0) * 0.1])
    g = fit_gmm_array(X, k)
    assert np.all(np.diff(g.ll_history) >= -1e-9)


# ---------------------------------------------------------------- select_model


def _bic_by_enumeration(X, k_range):
    scores = {}
    for k in k_range:
        try:
            g = fit_gmm_array(X, k)
        except SegflowError:
            continue
        ll = mixture_loglik(X, g.weights, [c.mean for c in g.components], [c.cov for c in g.components])
        scores[k] = oracle_bic(ll, k, X.shape[1], len(X))
    return min(scores, key=lambda k: (scores[k], k))


def test_three_blobs_select_three():
    X = blobs([(0.5, 0.0), (2.0, 1.0), (3.5, 0.2)], seed=5)
    g = select_model(demo_from(X[:, 0], X[:, 1:]), 1, 6)
    assert g.k == 3
    assert _bic_by_enumeration(X, range(1, 7)) == 3


def test_one_blob_selects_one():
    X = blobs([(1.0, 0.5)], n=300, seed=6)
    g = select_model(demo_from(X[:, 0], X[:, 1:]), 1, 4)
    assert g.k == 1
    assert _bic_by_enumeration(X, range(1, 5)) == 1


def test_setup1_selects_five(setup1):
    assert select_model(setup1[0], 2, 8).k == 5


def test_select_model_bad_range():
    with pytest.raises(ValueError):
        select_model(demo_from(np.arange(10.0), np.arange(10.0)), 3, 2)


def test_all_fits_failed():
    with pytest.raises(AllFitsFailed):
        select_model(demo_from(np.arange(6.0), np.arange(6.0)), 3, 4)


# ---------------------------------------------------------------- intervals and points


def test_interval_gap_case():
    (iv,) = candidate_intervals(two_component(1.0, 0.04, 2.0, 0.09))
    assert iv.t_b1 == pytest.approx(1.2) and iv.t_b2 == pytest.approx(1.7)
    assert not iv.overlapping
    assert (iv.left_index, iv.right_index) == (0, 1)


def test_interval_overlap_case():
    (iv,) = candidate_intervals(two_component(1.0, 0.25, 1.6, 0.04))
    assert iv.t_b1 == pytest.approx(1.5) and iv.t_b2 == pytest.approx(1.4)
    assert iv.overlapping


def test_unordered_gmm_rejected():
    with pytest.raises(UnorderedGmm):
        candidate_intervals(two_component(2.0, 0.04, 1.0, 0.04))


@settings(max_examples=200, deadline=None)
@given(
    mu1=st.floats(-10, 10),
    gap=st.floats(1e-3, 10),
    s1=st.floats(1e-6, 4),
    s2=st.floats(1e-6, 4),
)
def test_interval_arithmetic(mu1, gap, s1, s2):
    (iv,) = candidate_intervals(two_component(mu1, s1, mu1 + gap, s2))
    assert abs(iv.t_b1 - (mu1 + s1**0.5)) <= 1e-12 * max(1, abs(mu1))
    assert abs(iv.t_b2 - (mu1 + gap - s2**0.5)) <= 1e-12 * max(1, abs(mu1 + gap))
    assert iv.overlapping == (iv.t_b1 > iv.t_b2)


@pytest.mark.parametrize("b1, b2", [(1.2, 1.7), (1.5, 1.4)])
def test_midpoint_rule(b1, b2):
    (p,) = initial_points([CandidateInterval(b1, b2, 0, 1)])
    assert p.t == pytest.approx(1.45)
    assert p.source is Source.POSITION and p.strength == 0.0


def test_setup1_intervals_and_points(setup1):
    demo = setup1[0]
    g = fit_gmm(demo, 5)
    ivs = candidate_intervals(g)
    assert len(ivs) == 4
    t0, t1 = demo.span
    assert all(t0 <= min(iv.t_b1, iv.t_b2) and max(iv.t_b1, iv.t_b2) <= t1 for iv in ivs)
    pts = initial_points(ivs)
    assert len(pts) == 4 and all(a.t < b.t for a, b in zip(pts, pts[1:]))
