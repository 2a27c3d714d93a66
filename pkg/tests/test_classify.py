import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgaembed.classify import (DimensionMismatch, LogRegModel, Verdict, fit_batch, format_verdict,
                               parse_verdict, predict, sgd_step, verdict)
from dgaembed.embed import DomainVector, EmbedConfig, EmbeddingModel
from dgaembed.preprocess import Document, Verdict as Label


def test_zero_model_predicts_half():
    m = LogRegModel(4)
    for v in (np.zeros(4), np.ones(4) * 1e3, np.array([1.0, -2.0, 3.0, -4.0])):
        assert predict(m, v) == 0.5


def test_saturation():
    m = LogRegModel(2, weights=np.array([10.0, 0.0]), bias=10.0)
    assert abs(m.predict(np.array([2.0, 7.0])) - 1.0) < 1e-12  # margin 30
    assert m.predict(np.array([-70.0, 0.0])) > 0.0  # margin -690 still representable


def test_predict_matches_high_precision():
    mpmath.mp.dps = 50
    rng = np.random.default_rng(4)
    for _ in range(50):
        w, v, b = rng.normal(size=8) * 2, rng.normal(size=8) * 2, float(rng.normal())
        m = LogRegModel(8, weights=w, bias=b)
        z = mpmath.fsum(mpmath.mpf(float(x)) * mpmath.mpf(float(y)) for x, y in zip(w, v)) + b
        want = 1 / (1 + mpmath.e ** (-z))
        assert abs(m.predict(v) - float(want)) < 1e-12


def test_accepts_domain_vector_and_checks_dim():
    m = LogRegModel(3)
    assert m.predict(DomainVector("a", np.zeros(3))) == 0.5
    with pytest.raises(DimensionMismatch):
        m.predict(np.zeros(4))
    with pytest.raises(DimensionMismatch):
        m.sgd_step(np.zeros(2), 1)
    with pytest.raises(DimensionMismatch):
        LogRegModel(3, weights=np.zeros(2))


def sample_objective(m, x, y, w, b):
    z = float(w @ x) + b
    ce = math.log1p(math.exp(-abs(z))) + max(z, 0.0) - y * z
    return (m.pos_weight if y == 1 else 1.0) * ce + 0.5 * m.l2 * float(w @ w)


@pytest.mark.parametrize("y,pw", [(0, 1.0), (1, 1.0), (1, 3.0)])
def test_step_direction_matches_finite_differences(y, pw):
    rng = np.random.default_rng(7 + y)
    x = rng.normal(size=8)
    m = LogRegModel(8, lr=0.01, l2=0.3, pos_weight=pw, weights=rng.normal(size=8), bias=0.4)
    w0, b0 = m.weights.copy(), m.bias
    h = 1e-5
    num_w = np.array([(sample_objective(m, x, y, w0 + h * e, b0) - sample_objective(m, x, y, w0 - h * e, b0))
                      / (2 * h) for e in np.eye(8)])
    num_b = (sample_objective(m, x, y, w0, b0 + h) - sample_objective(m, x, y, w0, b0 - h)) / (2 * h)
    sgd_step(m, x, y)
    g_w = (w0 - m.weights) / m.lr
    g_b = (b0 - m.bias) / m.lr
    assert np.linalg.norm(g_w - num_w) / np.linalg.norm(num_w) < 1e-5
    assert abs(g_b - num_b) / abs(num_b) < 1e-5
    assert m.steps == 1


def test_no_change_when_prediction_exact():
    m = LogRegModel(2, l2=0.0)  # predicts 0.5; a soft label of 0.5 has zero gradient
    m.sgd_step(np.array([1.0, 2.0]), 0.5)
    assert np.all(m.weights == 0) and m.bias == 0


def test_zero_rate_changes_nothing():
    m = LogRegModel(3, lr=0.0, weights=np.array([1.0, 2.0, 3.0]), bias=1.0)
    m.sgd_step(np.ones(3), 0)
    assert m.weights.tolist() == [1.0, 2.0, 3.0] and m.bias == 1.0


def two_clusters(n=100, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, 4)) * 0.3
    X[:, 0] = np.where(y == 1, 1.0, -1.0) + rng.uniform(-0.5, 0.5, n)  # margin >= 1 along x0
    return X, y


def test_separable_clusters_reach_full_accuracy():
    X, y = two_clusters()
    m = LogRegModel(4)
    fit_batch(m, X, y, epochs=50, seed=1)
    assert np.array_equal(m.predict_many(X) >= 0.5, y == 1)


def test_fit_batch_deterministic_and_empty_noop():
    X, y = two_clusters()
    a, b = LogRegModel(4), LogRegModel(4)
    a.fit_batch(X, y, epochs=3, seed=5)
    b.fit_batch(X, y, epochs=3, seed=5)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias
    c = LogRegModel(4)
    c.fit_batch(np.empty((0, 4)), [], epochs=10)
    assert c.steps == 0 and np.all(c.weights == 0)
    with pytest.raises(ValueError):
        c.fit_batch(X, y + 2)


def test_duplicated_data_half_rate_same_boundary():
    X, y = two_clusters(seed=3)
    a = LogRegModel(4, lr=0.05)
    a.fit_batch(X, y, epochs=30, seed=2)
    b = LogRegModel(4, lr=0.025)
    b.fit_batch(np.vstack([X, X]), np.concatenate([y, y]), epochs=30, seed=2)
    g = np.stack(np.meshgrid(np.linspace(-2, 2, 9), np.linspace(-2, 2, 9)), -1).reshape(-1, 2)
    probe = np.hstack([g, np.zeros((len(g), 2))])
    probe = probe[np.abs(probe[:, 0]) > 0.2]  # stay off the boundary itself
    assert np.array_equal(a.predict_many(probe) >= 0.5, b.predict_many(probe) >= 0.5)


def test_objective_nonincreasing_in_epochs():
    X, y = two_clusters(seed=6)
    X[:10, 0] *= -0.3  # overlap so the optimum is interior
    losses = []
    for e in (1, 10, 50):
        m = LogRegModel(4, lr=0.05)
        m.fit_batch(X, y, epochs=e, seed=0)
        losses.append(m.objective(X, y))
    assert losses[1] <= losses[0] * (1 + 1e-9) and losses[2] <= losses[1] * (1 + 1e-9)


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.floats(1.0, 50.0))
def test_weights_bounded_under_ridge(seed, scale):
    rng = np.random.default_rng(seed)
    lr, l2 = 0.05, 0.1
    X = rng.uniform(-scale, scale, size=(400, 3))
    y = rng.integers(0, 2, 400)
    m = LogRegModel(3, lr=lr, l2=l2)
    xmax = np.sqrt(3) * scale
    # fixed point of |w| <- (1 - lr*l2)|w| + lr*xmax
    bound = xmax / l2
    for x, t in zip(X, y):
        m.sgd_step(x, int(t))
        assert np.linalg.norm(m.weights) <= bound + 1e-9
        assert np.all(np.isfinite(m.weights))


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_predict_monotone_and_open_interval(a, b):
    m = LogRegModel(1, weights=np.ones(1))
    pa, pb = m.predict(np.array([a])), m.predict(np.array([b]))
    # beyond |z| ~ 36 the upper tail rounds to 1.0 in double precision
    for z, p in ((a, pa), (b, pb)):
        assert 0.0 < p <= 1.0 and (p < 1.0 or z > 36)
    if a < b:
        assert pa <= pb


def embeddings():
    e = EmbeddingModel(EmbedConfig(dim=4, seed=1))
    e.train_batch([Document(0, "10.0.0.1", ("bad.com", "good.org"))])
    return e


def test_verdicts_threshold_tie_and_unknown():
    e = embeddings()
    v = e.lookup("bad.com").vector
    m = LogRegModel(4, weights=v / (v @ v) * math.log(0.98 / 0.02))
    hi = verdict(m, e, "bad.com")
    assert abs(hi.score - 0.98) < 1e-12 and hi.label is Label.MALICIOUS
    tie = verdict(m, e, "bad.com", threshold=hi.score)
    assert tie.label is Label.MALICIOUS
    assert verdict(m, e, "bad.com", threshold=0.99).label is Label.BENIGN
    unk = verdict(m, e, "never.seen")
    assert unk == Verdict("never.seen", None, Label.UNKNOWN, 0.5)


def test_verdict_line_round_trip():
    e = embeddings()
    m = LogRegModel(4, bias=0.3)
    for tok in ("bad.com", "never.seen"):
        v = verdict(m, e, tok)
        assert parse_verdict(format_verdict(v)) == v
    assert format_verdict(verdict(m, e, "never.seen")) == "never.seen\tnan\tUnknown"
