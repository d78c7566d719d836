import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import oracles
from mater.neural import layers as L
from mater.neural import losses
from mater.neural.model import attentive_stat_pool, fit_ple_edges, lstm_encode, perceiver_fuse

rng0 = np.random.default_rng(0)
reals = st.floats(min_value=-50, max_value=50, allow_nan=False)


def _grad_check(f, x, analytic, tol=1e-4):
    num = oracles.numeric_grad(f, x)
    assert oracles.max_rel_err(analytic, num) < tol


# --- softmax and layer norm ----------------------------------------------------------


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 12)), elements=reals))
def test_softmax_rows_sum_to_one(z):
    assert np.all(np.abs(L.softmax(z).sum(-1) - 1) <= 1e-9)
    np.testing.assert_allclose(np.exp(L.log_softmax(z)), L.softmax(z), rtol=1e-12, atol=1e-300)


def test_sigmoid_is_overflow_free():
    with np.errstate(all="raise"):
        s = L.sigmoid(np.array([-1e4, -30.0, 0.0, 30.0, 1e4]))
    assert s[0] == 0.0 and s[2] == 0.5 and s[-1] == 1.0


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 16)), elements=reals))
def test_layer_norm_standardizes(x):
    # the eps term shifts the variance by eps / var; keep that below 1e-6
    assume(np.all(x.std(axis=1) > 0.2))
    d = x.shape[1]
    y, _ = L.layer_norm_forward(x, np.ones(d), np.zeros(d))
    assert np.all(np.abs(y.mean(axis=1)) <= 1e-6)
    assert np.all(np.abs(y.var(axis=1) - 1) <= 1e-6)


def test_layer_norm_gradient():
    x = rng0.normal(size=(3, 7))
    g, b = rng0.normal(size=7), rng0.normal(size=7)
    w = rng0.normal(size=(3, 7))
    y, cache = L.layer_norm_forward(x, g, b)
    dx, grads = L.layer_norm_backward(w, cache)
    f = lambda: float((L.layer_norm_forward(x, g, b)[0] * w).sum())
    _grad_check(f, x, dx)
    _grad_check(f, g, grads["g"])
    _grad_check(f, b, grads["b"])


def test_feed_forward_gradient():
    x = rng0.normal(size=(4, 5))
    P = [rng0.normal(size=s) for s in [(5, 10), (10,), (10, 5), (5,)]]
    w = rng0.normal(size=(4, 5))
    _, cache = L.feed_forward_forward(x, *P)
    dx, grads = L.feed_forward_backward(w, cache)
    f = lambda: float((L.feed_forward_forward(x, *P)[0] * w).sum())
    _grad_check(f, x, dx)
    for name, arr in zip(("W1", "b1", "W2", "b2"), P):
        _grad_check(f, arr, grads[name])


# --- attention ------------------------------------------------------------------------


def test_zero_logits_average_the_inputs():
    D = 6
    xq = rng0.normal(size=(4, D))
    xkv = rng0.normal(size=(9, D))
    eye = np.eye(D)
    out, cache = L.attention_forward(xq, xkv, np.zeros((D, D)), eye, eye, eye)
    np.testing.assert_allclose(out, np.broadcast_to(xkv.mean(axis=0), (4, D)), rtol=0, atol=1e-12)
    assert np.all(cache[9] == 1 / 9)


def test_attention_rows_and_gradient():
    xq, xkv = rng0.normal(size=(3, 4)), rng0.normal(size=(5, 4))
    W = [rng0.normal(size=(4, 4)) for _ in range(4)]
    out, cache = L.attention_forward(xq, xkv, *W)
    assert np.all(np.abs(cache[9].sum(axis=1) - 1) <= 1e-9)
    w = rng0.normal(size=out.shape)
    dxq, dxkv, grads = L.attention_backward(w, cache)
    f = lambda: float((L.attention_forward(xq, xkv, *W)[0] * w).sum())
    _grad_check(f, xq, dxq)
    _grad_check(f, xkv, dxkv)
    for name, arr in zip(("Wq", "Wk", "Wv", "Wo"), W):
        _grad_check(f, arr, grads[name])


def _perceiver_params(sources, D=8, latents=4, seed=0):
    r = np.random.default_rng(seed)
    P = {"latent": r.uniform(-1, 1, size=(latents, D))}
    for n, d in sources.items():
        P[f"proj.{n}.W"] = r.normal(size=(d, D)) / np.sqrt(d)
        P[f"proj.{n}.b"] = r.normal(size=D) * 0.1
    for ln in ("ln_x", "ln1", "ln2", "ln3", "ln_out"):
        P[f"{ln}.g"] = 1 + 0.1 * r.normal(size=D)
        P[f"{ln}.b"] = 0.1 * r.normal(size=D)
    for att in ("cross", "self"):
        for w in ("Wq", "Wk", "Wv", "Wo"):
            P[f"{att}.{w}"] = r.normal(size=(D, D)) / np.sqrt(D)
    P["ff.W1"], P["ff.b1"] = r.normal(size=(D, 2 * D)) / np.sqrt(D), np.zeros(2 * D)
    P["ff.W2"], P["ff.b2"] = r.normal(size=(2 * D, D)) / np.sqrt(2 * D), np.zeros(D)
    return P


def test_perceiver_token_permutation_invariance():
    P = _perceiver_params({"a": 5})
    E = rng0.normal(size=(11, 5))
    out, _ = perceiver_fuse({"a": E}, P)
    for seed in range(3):
        perm = np.random.default_rng(seed).permutation(11)
        np.testing.assert_allclose(perceiver_fuse({"a": E[perm]}, P)[0], out, rtol=1e-12, atol=1e-12)


def test_perceiver_concatenates_sources():
    """Two sources behave exactly like one identity-projected source holding all their tokens."""
    P = _perceiver_params({"a": 5, "b": 3})
    Ea, Eb = rng0.normal(size=(4, 5)), rng0.normal(size=(2, 3))
    out, _ = perceiver_fuse({"a": Ea, "b": Eb}, P)
    bias = np.vstack([np.broadcast_to(P["proj.a.b"], (4, 8)), np.broadcast_to(P["proj.b.b"], (2, 8))])
    X = np.vstack([Ea @ P["proj.a.W"], Eb @ P["proj.b.W"]]) + bias
    ident = dict(P, **{"proj.x.W": np.eye(8), "proj.x.b": np.zeros(8)})
    ref, _ = perceiver_fuse({"x": X}, ident)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        perceiver_fuse({}, P)


# --- LSTM -------------------------------------------------------------------------------


def test_lstm_empty_and_zero_fixed_point():
    layers = [(np.zeros((42, 64)), np.zeros((16, 64)), np.zeros(64)), (np.zeros((16, 64)), np.zeros((16, 64)), np.zeros(64))]
    h, cache = lstm_encode(np.zeros((0, 42)), layers)
    assert h.shape == (16,) and np.all(h == 0) and cache is None
    h, _ = lstm_encode(np.zeros((5, 42)), layers)
    assert np.all(h == 0)


def test_lstm_matches_scalar_recurrence():
    """One unit, one input: the gate equations written out with math.* by hand."""
    Wx = np.array([[0.3, -0.2, 0.5, 0.1]])
    Wh = np.array([[0.4, 0.2, -0.3, 0.6]])
    b = np.array([0.1, 1.0, -0.1, 0.0])
    xs = [0.5, -1.0, 2.0]
    sig = lambda z: 1 / (1 + math.exp(-z))
    h = c = 0.0
    for x in xs:
        z = [Wx[0, k] * x + Wh[0, k] * h + b[k] for k in range(4)]
        i, f, g, o = sig(z[0]), sig(z[1]), math.tanh(z[2]), sig(z[3])
        c = f * c + i * g
        h = o * math.tanh(c)
    out, _ = L.lstm_layer_forward(np.array(xs)[:, None], Wx, Wh, b)
    assert out[-1, 0] == pytest.approx(h, abs=1e-14)


# --- PLE -------------------------------------------------------------------------------


def test_ple_examples():
    e = np.array([[0.0, 1.0, 2.0]])
    comp, _ = L.ple_components(np.array([1.5]), e)
    assert comp.tolist() == [[1.0, 0.5]]
    assert L.ple_components(np.array([-3.0]), e)[0].tolist() == [[0.0, 0.0]]
    assert L.ple_components(np.array([0.0]), e)[0].tolist() == [[0.0, 0.0]]
    assert L.ple_components(np.array([2.0]), e)[0].tolist() == [[1.0, 1.0]]
    assert L.ple_components(np.array([9.0]), e)[0].tolist() == [[1.0, 1.0]]


def test_ple_zero_width_bin_is_a_step():
    e = np.array([[0.0, 1.0, 1.0, 2.0]])
    assert L.ple_components(np.array([0.999]), e)[0][0, 1] == 0.0
    assert L.ple_components(np.array([1.0]), e)[0][0, 1] == 1.0
    assert L.ple_components(np.array([1.5]), e)[0].tolist() == [[1.0, 1.0, 0.5]]


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40), st.floats(-8, 8), st.floats(0, 3))
@settings(max_examples=200, deadline=None)
def test_ple_bounded_and_monotone(train, x, dx):
    edges = fit_ple_edges(np.array(train)[:, None], 8)
    assert np.all(np.diff(edges, axis=1) >= 0)
    a, _ = L.ple_components(np.array([x]), edges)
    b, _ = L.ple_components(np.array([x + dx]), edges)
    assert np.all((a >= 0) & (a <= 1)) and np.all(b >= a)


def test_ple_edges_are_quantiles():
    v = np.arange(9.0)[:, None]
    np.testing.assert_array_equal(fit_ple_edges(v, 8), [np.arange(9.0)])
    assert fit_ple_edges(np.ones((5, 2)), 4).shape == (2, 5)


def test_ple_gradient():
    x = rng0.normal(size=4)
    edges = np.sort(rng0.normal(size=(4, 9)), axis=1)
    W, b = rng0.normal(size=(32, 3)), rng0.normal(size=3)
    w = rng0.normal(size=3)
    _, cache = L.ple_forward(x, edges, W, b)
    dx, grads = L.ple_backward(w, cache)
    f = lambda: float(L.ple_forward(x, edges, W, b)[0] @ w)
    _grad_check(f, x, dx)
    _grad_check(f, W, grads["W"])


# --- attentive pooling ----------------------------------------------------------------------


def test_pool_constant_and_single_frame():
    W, b, v = rng0.normal(size=(3, 4)), rng0.normal(size=4), rng0.normal(size=4)
    frame = np.array([0.5, -1.0, 2.0])
    out, cache = attentive_stat_pool(np.tile(frame, (6, 1)), W, b, v)
    np.testing.assert_allclose(out[:3], frame, rtol=1e-15)
    assert np.all(out[3:] == 1e-6)
    assert abs(cache[4].sum() - 1) <= 1e-12
    out, cache = attentive_stat_pool(frame[None, :], W, b, v)
    assert cache[4].tolist() == [1.0]
    with pytest.raises(ValueError):
        attentive_stat_pool(np.zeros((0, 3)), W, b, v)


# --- losses ------------------------------------------------------------------------------------


def test_weighted_ce_examples():
    assert losses.weighted_ce(np.zeros(8), 3) == pytest.approx(math.log(8), abs=1e-12)
    assert losses.weighted_ce(np.zeros(8), 3) == pytest.approx(2.07944, abs=1e-5)
    z = rng0.normal(size=8)
    q = L.softmax(z)
    entropy = -float((q * np.log(q)).sum())
    assert losses.weighted_ce(z, q) == pytest.approx(entropy, rel=1e-12)
    # no other logits do better against this target
    for _ in range(20):
        other = rng0.dirichlet(np.ones(8))
        assert losses.weighted_ce(np.log(other), q) >= entropy - 1e-12
    with pytest.raises(ValueError):
        losses.weighted_ce(z, np.full(8, 0.2))
    with pytest.raises(ValueError):
        losses.weighted_ce(z, 2, weights=np.zeros(8))


@given(hnp.arrays(np.float64, 8, elements=st.floats(-20, 20)), st.integers(0, 7))
def test_weighted_ce_nonnegative_for_hard_labels(z, k):
    assert losses.weighted_ce(z, k) >= 0


def test_class_weights():
    t = np.eye(8)[[0, 0, 0, 1]]
    w = losses.class_weights(t)
    assert w[0] == pytest.approx(4 / 24) and w[1] == pytest.approx(4 / 8) and w[2] == 1.0


def test_weighted_ce_gradient():
    z = rng0.normal(size=8)
    q = rng0.dirichlet(np.ones(8))
    w = rng0.uniform(0.5, 2, size=8)
    _grad_check(lambda: losses.weighted_ce(z, q, w), z, losses.weighted_ce_grad(z, q, w), tol=1e-6)


def test_ccc_examples():
    assert losses.ccc([1, 2, 3], [1, 2, 3]) == 1.0
    assert losses.ccc([1, 2, 3], [2, 3, 4]) == pytest.approx(4 / 7, abs=1e-15)
    assert losses.ccc([1, 2, 3], [2, 2, 2]) == 0.0
    assert losses.ccc([5, 5], [5, 5]) == 1.0
    with pytest.raises(ValueError):
        losses.ccc([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        losses.ccc([1], [1])


pairs = st.integers(2, 30).flatmap(
    lambda n: st.tuples(
        hnp.arrays(np.float64, n, elements=st.floats(-100, 100)),
        hnp.arrays(np.float64, n, elements=st.floats(-100, 100)),
    )
)


@given(pairs)
@settings(max_examples=200)
def test_ccc_symmetric_and_bounded_by_pearson(xy):
    x, y = xy
    assert losses.ccc(x, y) == losses.ccc(y, x)
    assert losses.ccc(x, y) == pytest.approx(oracles.ccc_direct(x, y), abs=1e-9)
    if x.std() > 1e-3 and y.std() > 1e-3:
        r = np.corrcoef(x, y)[0, 1]
        assert abs(losses.ccc(x, y)) <= abs(r) + 1e-12


def test_ccc_gradient():
    x, y = rng0.normal(size=10), rng0.normal(size=10) + 0.5
    _grad_check(lambda: losses.ccc(x, y), x, losses.ccc_grad(x, y), tol=1e-6)
    P, T = rng0.normal(size=(7, 3)), rng0.normal(size=(7, 3))
    _grad_check(lambda: losses.ccc_loss(P, T), P, losses.ccc_loss_grad(P, T), tol=1e-6)
