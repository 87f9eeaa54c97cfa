import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fnpcast import autodiff as ad
from fnpcast.encoder import (DiagonalGaussian, attention_scores, attention_summary, encode,
                             encode_all_prefixes, gru_forward, reparameterize, set_attention,
                             summarize)
from fnpcast.exceptions import ContractError
from fnpcast.model import as_constants, init_params, zero_params

from conftest import numeric_grad, rel_err

H = 5


@pytest.fixture
def P():
    return as_constants(init_params(np.random.default_rng(7), H))


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_gru(params, xs):
    """Plain-Python GRU recurrence, one unit and one step at a time."""
    Wx, Whzr, Whn, b = (params[k] for k in ("gru.W_x", "gru.W_hzr", "gru.W_hn", "gru.b"))
    h = [0.0] * H
    out = []
    for x in xs:
        z = [_sig(x * Wx[0, j] + sum(h[i] * Whzr[i, j] for i in range(H)) + b[j]) for j in range(H)]
        r = [_sig(x * Wx[0, H + j] + sum(h[i] * Whzr[i, H + j] for i in range(H)) + b[H + j])
             for j in range(H)]
        n = [math.tanh(x * Wx[0, 2 * H + j] + sum(r[i] * h[i] * Whn[i, j] for i in range(H))
                       + b[2 * H + j]) for j in range(H)]
        h = [z[j] * h[j] + (1 - z[j]) * n[j] for j in range(H)]
        out.append(list(h))
    return np.array(out)


def test_gru_matches_scalar_oracle():
    raw = init_params(np.random.default_rng(3), H)
    states = gru_forward(as_constants(raw), np.array([[0.5, 1.0, 0.3]]))
    got = np.stack([s.data[0] for s in states])
    np.testing.assert_allclose(got, scalar_gru(raw, [0.5, 1.0, 0.3]), rtol=0, atol=1e-12)


def test_gru_zero_weights_gives_zero_states():
    states = gru_forward(as_constants(zero_params(H)), np.array([[3.0, -2.0, 7.0]]))
    for s in states:
        np.testing.assert_array_equal(s.data, np.zeros((1, H)))


def test_gru_single_step(P):
    assert len(gru_forward(P, np.array([[1.0]]))) == 1


def test_gru_rejects_empty(P):
    with pytest.raises(ContractError):
        gru_forward(P, np.zeros((1, 0)))
    with pytest.raises(ContractError):
        encode(P, [[]])


def test_attention_single_step(P, rng):
    h = rng.normal(size=(1, H))
    alpha, h_bar = attention_summary(P, h)
    np.testing.assert_array_equal(alpha.data, [1.0])
    np.testing.assert_allclose(h_bar.data, h[0], atol=1e-15)


def test_attention_identical_states(P, rng):
    h = np.tile(rng.normal(size=H), (2, 1))
    alpha, _ = attention_summary(P, h)
    np.testing.assert_allclose(alpha.data, [0.5, 0.5], atol=1e-15)


def test_attention_scores_are_mean_pairwise_scores(P, rng):
    h = ad.constant(rng.normal(size=(4, H)))
    pairwise = attention_scores(P, "attn", h, h).data  # [query, key]
    pooled = attention_scores(P, "attn", h, ad.mean(h, axis=0, keepdims=True)).data[0]
    np.testing.assert_allclose(pooled, pairwise.mean(axis=0), atol=1e-12)


def test_attention_shift_invariance(rng):
    scores = rng.normal(size=6)
    a = ad.softmax(ad.constant(scores)).data
    b = ad.softmax(ad.constant(scores + 17.5)).data
    np.testing.assert_allclose(a, b, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.just(H)), elements=st.floats(-3, 3)))
def test_attention_weights_are_a_convex_combination(h):
    P = as_constants(init_params(np.random.default_rng(0), H))
    alpha, h_bar = attention_summary(P, h)
    assert np.all(alpha.data >= 0)
    assert abs(alpha.data.sum() - 1) < 1e-9
    assert np.all(h_bar.data >= h.min(axis=0) - 1e-12)
    assert np.all(h_bar.data <= h.max(axis=0) + 1e-12)


def test_prefix_summaries_match_per_prefix_pooling(P, rng):
    x = rng.uniform(0, 3, size=(2, 6))
    h_all = encode_all_prefixes(P, x).data
    for b in range(2):
        states = np.stack([s.data[0] for s in gru_forward(P, x[b:b + 1])])
        for t in range(6):
            _, h_bar = set_attention(P, "attn", ad.constant(states[: t + 1]))
            np.testing.assert_allclose(h_all[b, t], h_bar.data, atol=1e-12)


def test_ragged_batch_matches_individual(P, rng):
    seqs = [rng.uniform(0, 3, size=n) for n in (3, 7, 1)]
    batch = summarize(P, seqs).data
    for i, s in enumerate(seqs):
        np.testing.assert_allclose(batch[i], summarize(P, [s]).data[0], atol=1e-12)


def test_encode_zero_heads_is_standard_normal(rng):
    raw = init_params(np.random.default_rng(1), H)
    for k in raw:
        if k.startswith(("g1.", "g2.")):
            raw[k] = np.zeros_like(raw[k])
    g, _ = encode(as_constants(raw), [rng.uniform(size=5)])
    np.testing.assert_array_equal(g.mean.data, np.zeros((1, H)))
    np.testing.assert_array_equal(g.logvar.data, np.zeros((1, H)))


def test_encode_is_deterministic(P):
    a, _ = encode(P, [[0.1, 0.5, 0.9]])
    b, _ = encode(P, [[0.1, 0.5, 0.9]])
    np.testing.assert_array_equal(a.mean.data, b.mean.data)
    np.testing.assert_array_equal(a.logvar.data, b.logvar.data)


def test_encode_is_order_sensitive(P, rng):
    x = rng.uniform(0, 3, size=6)
    _, fwd = encode(P, [x])
    _, rev = encode(P, [x[::-1]])
    assert not np.allclose(fwd.data, rev.data)


def test_reparameterized_draws_match_moments(rng):
    mean, logvar = np.array([0.3, -1.0]), np.array([0.5, -0.7])
    g = DiagonalGaussian(ad.constant(np.tile(mean, (100_000, 1))), ad.constant(np.tile(logvar, (100_000, 1))))
    draws = g.sample(rng).data
    sd = np.exp(0.5 * logvar)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * sd / np.sqrt(1e5))
    # standard error of the sample variance is about var * sqrt(2 / n)
    assert np.all(np.abs(draws.var(axis=0) - sd ** 2) < 3 * sd ** 2 * np.sqrt(2 / 1e5))


def test_reparameterize_cases(rng):
    g = DiagonalGaussian(ad.constant([1.0, 2.0]), ad.constant([0.0, 0.0]))
    np.testing.assert_array_equal(reparameterize(g, np.zeros(2)).data, [1.0, 2.0])
    eps = rng.normal(size=2)
    np.testing.assert_array_equal(reparameterize(g, eps).data, [1.0, 2.0] + eps)
    with pytest.raises(ContractError):
        reparameterize(g, np.zeros(3))


def test_reparameterize_logvar_gradient(rng):
    mu, lv, eps = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
    tape = ad.Tape()
    m, l = tape.watch(mu), tape.watch(lv)
    root = ad.tsum(reparameterize(DiagonalGaussian(m, l), eps) * np.arange(1.0, 4.0))
    (g,) = tape.gradients(root, [l])
    num = numeric_grad(lambda v: float(np.sum((mu + np.exp(0.5 * v) * eps) * np.arange(1.0, 4.0))), lv)
    assert rel_err(g, num) < 1e-6
