import numpy as np
import pytest
from hypothesis import given, strategies as st

from rehab3d.errors import ConfigError, DatasetError, DivergenceError, ModelError
from rehab3d.refiner import (LEAK, _loss_and_grad, WINDOW, PoseWindow, RefinerHyperparams, RefinerWeights, StreamingRefiner,
                             TrainResult, backward, batch_loss_grad, build_training_set, forward, loss_total,
                             param_shapes, predict, push_frame, refine, refine_sequence, train)
from rehab3d.skeleton import Pose3D


def poses(n, rng=None, start=0, dt=0.02):
    rng = rng or np.random.default_rng(0)
    return [Pose3D(rng.normal(size=(17, 3)), np.ones(17), start + i, (start + i) * dt) for i in range(n)]


# window -----------------------------------------------------------------------

def test_window_fills_after_nine():
    w = PoseWindow()
    ps = poses(9)
    assert not any(push_frame(w, p) for p in ps[:8])
    assert push_frame(w, ps[8])
    assert w.channels().shape == (51, 9)
    np.testing.assert_array_equal(w.channels()[:, 0], ps[0].joints.reshape(-1))


def test_window_gap_restarts():
    w = PoseWindow()
    for p in poses(5):
        w.push(p)
    assert not w.push(poses(1, start=9)[0])
    assert w.gaps == 1 and len(w.frames) == 1


# network ----------------------------------------------------------------------

def _leaky(x):
    return x if x > 0 else LEAK * x


def test_forward_matches_hand_unrolled():
    rng = np.random.default_rng(3)
    H = 3
    p = {k: rng.normal(size=s) for k, s in param_shapes(H).items()}
    x = rng.normal(size=(2, WINDOW))                        # two channels
    got = forward(p, x)
    for c in range(2):
        h = [_leaky(sum(x[c, i] * p["W_in"][i, j] for i in range(WINDOW)) + p["b_in"][j]) for j in range(H)]
        for b in range(2):
            r = [_leaky(sum(h[i] * p[f"W1_{b}"][i, j] for i in range(H)) + p[f"b1_{b}"][j]) for j in range(H)]
            h = [h[j] + sum(r[i] * p[f"W2_{b}"][i, j] for i in range(H)) + p[f"b2_{b}"][j] for j in range(H)]
        for o in range(2):
            ref = sum(h[i] * p["W_out"][i, o] for i in range(H)) + p["b_out"][o]
            assert got[c, o] == pytest.approx(ref, abs=1e-9)


def _rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(11)
    p = {k: rng.normal(0, 0.7, s) for k, s in param_shapes(5).items()}
    x = rng.normal(size=(4, WINDOW))
    c = rng.normal(size=(4, 2))
    out, cache = forward(p, x, cache=True)
    g = backward(p, cache, c)
    eps = 1e-5
    for k, v in p.items():
        fd = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + eps
            up = (forward(p, x) * c).sum()
            v[idx] = old - eps
            dn = (forward(p, x) * c).sum()
            v[idx] = old
            fd[idx] = (up - dn) / (2 * eps)
        assert _rel_err(g[k], fd) <= 1e-4, k


def test_training_gradient_matches_finite_differences():
    # full loss path: normalization, L1 position and velocity terms. The
    # previous-window prediction is a constant of the loss, so it is frozen
    # while differencing.
    rng = np.random.default_rng(5)
    w = RefinerWeights.init(rng, hidden=4)
    for k in w.params:
        w.params[k] = w.params[k] + rng.normal(0, 0.2, w.params[k].shape)
    x = rng.normal(size=(6, WINDOW))
    xp = rng.normal(size=(6, WINDOW))
    tgt = rng.normal(size=(6, 2))
    pg = rng.normal(size=6)
    prev_pred = predict(w, xp)[:, 1]

    def loss():
        return _loss_and_grad(predict(w, x), tgt, pg, prev_pred, 0.5)[0]

    _, g = batch_loss_grad(w, x, xp, tgt, pg, 0.5)
    eps = 1e-5
    for k, v in w.params.items():
        fd = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + eps
            up = loss()
            v[idx] = old - eps
            dn = loss()
            v[idx] = old
            fd[idx] = (up - dn) / (2 * eps)
        assert _rel_err(g[k], fd) <= 1e-4, k


def test_zero_weights_give_zero_pose():
    w = PoseWindow()
    for p in poses(9):
        w.push(p)
    refined, mid = refine(w, RefinerWeights.zeros())
    assert np.all(refined.joints == 0) and np.all(mid.joints == 0)
    assert refined.frame_index == 8 and mid.timestamp == pytest.approx(0.5 * (0.14 + 0.16))


def test_weights_validation_and_io(tmp_path):
    w = RefinerWeights.init(0)
    w.save(tmp_path / "w.json")
    back = RefinerWeights.load(tmp_path / "w.json")
    for k in w.params:
        np.testing.assert_array_equal(w.params[k], back.params[k])
    bad = dict(w.params)
    bad["W_in"] = np.zeros((8, 64))
    with pytest.raises(ModelError):
        RefinerWeights(bad)
    with pytest.raises(ModelError):
        predict(w, np.zeros((3, 8)))


def test_causality():
    rng = np.random.default_rng(2)
    ps = poses(12, rng)
    w = RefinerWeights.init(1)
    a = StreamingRefiner(w)
    outs = [a.push(p) for p in ps[:10]]
    b = StreamingRefiner(w)
    changed = ps[:10] + [Pose3D(ps[10].joints + 5.0, ps[10].confidence, 10, 0.2)]
    outs_b = [b.push(p) for p in changed]
    for x, y in zip(outs, outs_b[:10]):
        for p, q in zip(x, y):
            np.testing.assert_array_equal(p.joints, q.joints)


@given(st.integers(9, 40))
def test_output_cadence(n):
    out = refine_sequence(poses(n), RefinerWeights.zeros())
    assert len(out) == 2 * (n - 8)
    assert all(out[i].timestamp < out[i + 1].timestamp for i in range(len(out) - 1))


# loss -------------------------------------------------------------------------

def test_loss_examples():
    rng = np.random.default_rng(0)
    gt = rng.normal(size=(2, 51))
    prev = rng.normal(size=51)
    assert loss_total(gt, gt, prev, prev) == 0.0
    assert loss_total(gt + 0.002, gt, prev, prev, alpha_loss=1.0) == pytest.approx(0.002, abs=1e-15)
    const = np.ones((2, 51))
    assert loss_total(const * 3, const, np.ones(51), np.full(51, 3.0), alpha_loss=0.0) == 0.0
    with pytest.raises(ModelError):
        loss_total(gt, gt[:1], prev, prev)


@given(st.integers(0, 10000), st.floats(0.01, 1.0), st.sampled_from(["difference", "product"]))
def test_loss_non_negative_and_zero_iff_equal(seed, alpha, form):
    rng = np.random.default_rng(seed)
    gt, pred = rng.normal(size=(2, 2, 5)), rng.normal(size=(2, 2, 5))
    pg = rng.normal(size=(2, 5))
    assert loss_total(pred, gt, pg, pg, alpha, form) > 0.0
    assert loss_total(gt, gt, pg, pg, alpha, "difference") == 0.0


def test_product_form_literal():
    gt = np.array([[0.0], [1.0]])
    pred = np.array([[0.0], [3.0]])
    # velocities: gt (0, 1), pred (0, 3) from prev 0 -> |dg|*|dy| summed / 2 elements
    assert loss_total(pred, gt, np.zeros(1), np.zeros(1), 0.0, "product") == pytest.approx(1.5)
    assert loss_total(pred, gt, np.zeros(1), np.zeros(1), 0.0, "difference") == pytest.approx(1.0)


# training ---------------------------------------------------------------------

def sinusoids(rng, n_traj, frames, sigma):
    t = np.arange(frames) / 50.0
    out = []
    for _ in range(n_traj):
        base = rng.normal(0, 0.3, (1, 17, 3))
        amp = rng.uniform(0.02, 0.1, (1, 17, 3))
        f = rng.uniform(0.3, 1.0, (1, 17, 3))
        ph = rng.uniform(0, 2 * np.pi, (1, 17, 3))
        clean = base + amp * np.sin(2 * np.pi * f * t[:, None, None] + ph)
        out.append((clean, clean + rng.normal(0, sigma, clean.shape)))
    return out


def test_identity_fit():
    rng = np.random.default_rng(0)
    trajs = [(c, c) for c, _ in sinusoids(rng, 4, 60, 0.0)]
    data = build_training_set(trajs)
    res = train(data, RefinerHyperparams(epochs=40, learning_rate=1e-3, alpha_loss=1.0))
    pred = predict(res.weights, data.x.reshape(-1, WINDOW))
    assert np.abs(pred - data.target.reshape(-1, 2)).mean() < 1e-4
    assert res.loss_curve[-1] < res.loss_curve[0]


def test_constant_trajectories_pass_through():
    c = np.repeat(np.random.default_rng(1).normal(0, 0.3, (1, 17, 3)), 20, axis=0)
    res = train([(c, c)], RefinerHyperparams(epochs=5))
    out = refine_sequence([Pose3D(c[i], None, i) for i in range(12)], res.weights)
    for p in out:
        np.testing.assert_allclose(p.joints, c[0], atol=1e-6)


def test_dataset_errors():
    c = np.zeros((9, 17, 3))
    with pytest.raises(DatasetError):
        build_training_set([(c, c)])
    with pytest.raises(DatasetError):
        build_training_set([(np.zeros((12, 17, 3)), np.zeros((12, 16, 3)))])
    with pytest.raises(ConfigError):
        RefinerHyperparams(alpha_loss=1.5)
    with pytest.raises(ConfigError):
        RefinerHyperparams(velocity_form="sum")


def test_divergence_detected():
    rng = np.random.default_rng(0)
    with pytest.raises(DivergenceError):
        train(sinusoids(rng, 2, 30, 0.02), RefinerHyperparams(epochs=20, learning_rate=10.0))


def test_loss_curve_csv(tmp_path):
    TrainResult(RefinerWeights.zeros(), [1.0, 0.5]).write_curve(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text() == "epoch,loss\n0,1.0\n1,0.5\n"


def test_training_set_targets():
    c = np.arange(12 * 51, dtype=float).reshape(12, 17, 3)
    d = build_training_set([(c, c + 1.0)])
    assert d.x.shape == (3, 51, 9)
    np.testing.assert_array_equal(d.x[0, :, -1], c[9].reshape(-1) + 1.0)
    np.testing.assert_array_equal(d.x_prev[0, :, -1], c[8].reshape(-1) + 1.0)
    np.testing.assert_array_equal(d.target[0, :, 1], c[9].reshape(-1))
    np.testing.assert_array_equal(d.target[0, :, 0], 0.5 * (c[8] + c[9]).reshape(-1))
    np.testing.assert_array_equal(d.prev_gt[0], c[8].reshape(-1))
