import math

import numpy as np
import pytest

from braidkit.braid import CLASS_ORDER, CrossingClass
from braidkit.errors import MissingCurrentState, WidthMismatch
from braidkit.multitask import (
    BraidLossConfig,
    EdgeClassifierHead,
    EmbeddingSet,
    braid_loss,
    classify_edge,
    classify_edge_backward,
    classify_edge_from_encodings,
    combined_loss,
    edge_features,
    encoding_braid_loss,
    init_head,
    relative_feature,
    softmax,
)

from helpers import finite_difference, make_scene, relative_error


def _pose_scene(pose_i, pose_j):
    (xi, yi, hi), (xj, yj, hj) = pose_i, pose_j
    pts = {"i": [(0, xi, yi), (1, xi + 1, yi)], "j": [(0, xj, yj), (1, xj + 1, yj)]}
    headings = {"i": [hi, hi], "j": [hj, hj]}
    return make_scene(pts, future_horizon=1, headings=headings)


def test_relative_feature_coincident_pose():
    scene = _pose_scene((2.0, 3.0, 0.5), (2.0, 3.0, 0.5))
    np.testing.assert_allclose(relative_feature(scene, "i", "j"), [0, 0, 1, 0, 0], atol=1e-15)


def test_relative_feature_directly_ahead():
    scene = _pose_scene((10.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    np.testing.assert_allclose(relative_feature(scene, "i", "j"), [10, 0, 1, 0, 10], atol=1e-12)


def test_relative_feature_matches_trig_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        xi, yi, xj, yj = rng.uniform(-20, 20, size=4)
        hi, hj = rng.uniform(-math.pi + 1e-6, math.pi, size=2)
        scene = _pose_scene((xi, yi, hi), (xj, yj, hj))
        r = relative_feature(scene, "i", "j")
        gx, gy = xi - xj, yi - yj
        dx = math.cos(hj) * gx + math.sin(hj) * gy
        dy = -math.sin(hj) * gx + math.cos(hj) * gy
        dth = math.atan2(math.sin(hi - hj), math.cos(hi - hj))
        np.testing.assert_allclose(
            r, [dx, dy, math.cos(dth), math.sin(dth), math.hypot(dx, dy)], atol=1e-9
        )


def test_relative_feature_padding_and_width_check():
    scene = _pose_scene((1.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    r = relative_feature(scene, "i", "j", width=8)
    assert r.shape == (8,)
    assert np.all(r[5:] == 0.0)
    with pytest.raises(WidthMismatch):
        relative_feature(scene, "i", "j", width=4)


def test_relative_feature_requires_current_state():
    pts = {"i": [(1, 0.0, 0.0)], "j": [(0, 0.0, 0.0), (1, 1.0, 0.0)]}
    scene = make_scene(pts, future_horizon=1)
    with pytest.raises(MissingCurrentState):
        relative_feature(scene, "i", "j")


def test_edge_features_concatenation():
    emb = EmbeddingSet(width=2, vectors={"i": np.array([[1.0, 2.0]]), "j": np.array([[3.0, 4.0]])})
    f = edge_features(emb, np.array([5.0, 6.0]), "i", "j")
    np.testing.assert_array_equal(f, [[1, 2, 3, 4, 5, 6]])


def test_edge_features_mode_stacking_and_zero_case():
    emb = EmbeddingSet(
        width=2,
        vectors={"i": np.zeros((2, 2)), "j": np.zeros((2, 2))},
    )
    f = edge_features(emb, np.array([7.0, 8.0]), "i", "j")
    assert f.shape == (2, 6)
    np.testing.assert_array_equal(f[:, 4:], [[7, 8], [7, 8]])
    np.testing.assert_array_equal(f[:, :4], 0.0)


def test_classify_edge_zero_head_gives_uniform_softmax():
    head = EdgeClassifierHead(w1=np.zeros((6, 4)), b1=np.zeros(4), w2=np.zeros((4, 3)), b2=np.zeros(3))
    logits = classify_edge(head, np.ones((2, 6)))
    np.testing.assert_array_equal(logits, 0.0)
    np.testing.assert_allclose(softmax(logits[0]), [1 / 3] * 3)


def test_classify_edge_linear_passthrough():
    # hidden relu wired as identity on one unit: logit = selected weight entry
    w1 = np.zeros((3, 1))
    w1[1, 0] = 1.0
    w2 = np.zeros((1, 3))
    w2[0, 2] = 4.0
    head = EdgeClassifierHead(w1=w1, b1=np.zeros(1), w2=w2, b2=np.zeros(3))
    logits = classify_edge(head, np.array([[0.0, 2.0, 0.0]]))
    np.testing.assert_array_equal(logits, [[0.0, 0.0, 8.0]])


def _reference_forward(head, f):
    # straight-line loop evaluation, no matrix ops
    out = np.zeros((f.shape[0], 3))
    for k in range(f.shape[0]):
        hidden = []
        for h in range(head.w1.shape[1]):
            acc = head.b1[h]
            for i in range(head.w1.shape[0]):
                acc += f[k, i] * head.w1[i, h]
            hidden.append(max(acc, 0.0))
        for c in range(3):
            acc = head.b2[c]
            for h in range(head.w2.shape[0]):
                acc += hidden[h] * head.w2[h, c]
            out[k, c] = acc
    return out


def test_classify_edge_matches_reference_forward():
    rng = np.random.default_rng(10)
    for _ in range(20):
        head = init_head(9, 5, rng)
        f = rng.normal(size=(3, 9))
        np.testing.assert_allclose(classify_edge(head, f), _reference_forward(head, f), atol=1e-12)


def test_classify_edge_width_check():
    head = init_head(6, 4, np.random.default_rng(0))
    with pytest.raises(WidthMismatch):
        classify_edge(head, np.ones((2, 5)))


def test_braid_loss_uniform_logits_closed_form():
    cfg = BraidLossConfig()
    loss, grad = braid_loss(np.zeros((4, 3)), CrossingClass.OVER, 1, cfg)
    assert abs(loss - 8.0 * math.log(3.0)) < 1e-12
    # gradient only in the gated row
    assert np.all(grad[[0, 2, 3]] == 0.0)
    np.testing.assert_allclose(grad[1], 8.0 * (np.ones(3) / 3 - np.eye(3)[CrossingClass.OVER.index]))


def test_braid_loss_vanishes_with_large_margin():
    cfg = BraidLossConfig()
    logits = np.zeros((2, 3))
    logits[0, CrossingClass.BELOW.index] = 60.0
    loss, _ = braid_loss(logits, CrossingClass.BELOW, 0, cfg)
    assert loss < 1e-12


def test_braid_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    cfg = BraidLossConfig(class_weights=(8.0, 8.0, 1.0))
    for trial in range(100):
        k = int(rng.integers(1, 6))
        logits = rng.normal(0.0, 2.0, size=(k, 3))
        true = CLASS_ORDER[int(rng.integers(0, 3))]
        k_star = int(rng.integers(0, k))
        _, grad = braid_loss(logits, true, k_star, cfg)
        fd = finite_difference(
            lambda v: braid_loss(v.reshape(k, 3), true, k_star, cfg)[0], logits.ravel().copy()
        )
        assert relative_error(grad.ravel(), fd) < 1e-4, trial


def test_k_star_gating_is_exact():
    rng = np.random.default_rng(8)
    cfg = BraidLossConfig()
    logits = rng.normal(size=(4, 3))
    loss, grad = braid_loss(logits, CrossingClass.BELOW, 2, cfg)
    bumped = logits.copy()
    bumped[[0, 1, 3]] += rng.normal(0, 10, size=(3, 3))
    loss2, grad2 = braid_loss(bumped, CrossingClass.BELOW, 2, cfg)
    assert loss2 == loss
    np.testing.assert_array_equal(grad2[2], grad[2])
    assert np.all(grad2[[0, 1, 3]] == 0.0)


def test_class_weight_scaling_is_linear():
    rng = np.random.default_rng(9)
    logits = rng.normal(size=(3, 3))
    base = BraidLossConfig(class_weights=(2.0, 3.0, 1.0))
    alpha = 3.5
    scaled = BraidLossConfig(class_weights=(2.0 * alpha, 3.0, 1.0))
    l0, g0 = braid_loss(logits, CrossingClass.BELOW, 1, base)
    l1, g1 = braid_loss(logits, CrossingClass.BELOW, 1, scaled)
    assert l1 == alpha * l0
    np.testing.assert_array_equal(g1, alpha * g0)


def test_mode_permutation_consistency():
    rng = np.random.default_rng(12)
    cfg = BraidLossConfig()
    logits = rng.normal(size=(5, 3))
    perm = rng.permutation(5)
    k_star = 3
    l0, _ = braid_loss(logits, CrossingClass.OVER, k_star, cfg)
    l1, _ = braid_loss(logits[perm], CrossingClass.OVER, int(np.nonzero(perm == k_star)[0][0]), cfg)
    assert l1 == l0


def test_combined_loss_arithmetic():
    assert combined_loss(1.0, 0.5, 2.0, 1.0) == 3.5
    assert combined_loss(1.0, 0.5, 2.0, 0.0) == 1.5  # ablation arm unchanged
    assert combined_loss(1.0, 0.5, 2.0, 10.0) - combined_loss(1.0, 0.5, 0.0, 10.0) == 20.0


def test_encoding_variant_uniform_and_k1_equivalence():
    head = EdgeClassifierHead(w1=np.zeros((6, 4)), b1=np.zeros(4), w2=np.zeros((4, 3)), b2=np.zeros(3))
    row = classify_edge_from_encodings(np.zeros(2), np.zeros(2), np.zeros(2), head)
    np.testing.assert_allclose(softmax(row), [1 / 3] * 3)

    rng = np.random.default_rng(15)
    head = init_head(6, 4, rng)
    enc_i, enc_j, r = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)
    emb = EmbeddingSet(width=2, vectors={"i": enc_i[None], "j": enc_j[None]})
    via_modes = classify_edge(head, edge_features(emb, r, "i", "j"))[0]
    via_encodings = classify_edge_from_encodings(enc_i, enc_j, r, head)
    np.testing.assert_array_equal(via_modes, via_encodings)


def test_encoding_variant_matches_reference_forward():
    rng = np.random.default_rng(16)
    head = init_head(9, 7, rng)
    enc_i, enc_j, r = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
    got = classify_edge_from_encodings(enc_i, enc_j, r, head)
    want = _reference_forward(head, np.concatenate([enc_i, enc_j, r])[None])[0]
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_encoding_braid_loss_gradient():
    rng = np.random.default_rng(18)
    cfg = BraidLossConfig()
    for _ in range(30):
        row = rng.normal(size=3)
        true = CLASS_ORDER[int(rng.integers(0, 3))]
        _, grad = encoding_braid_loss(row, true, cfg)
        fd = finite_difference(lambda v: encoding_braid_loss(v, true, cfg)[0], row.copy())
        assert relative_error(grad, fd) < 1e-4


def test_classify_edge_backward_matches_finite_differences():
    rng = np.random.default_rng(21)
    for trial in range(100):
        head = init_head(6, 4, rng)
        f = rng.normal(size=(2, 6))
        dlogits = rng.normal(size=(2, 3))

        def scalar(head_=head, f_=f):
            return float((classify_edge(head_, f_) * dlogits).sum())

        df, grads = classify_edge_backward(head, f, dlogits)
        fd_f = finite_difference(
            lambda v: float((classify_edge(head, v.reshape(2, 6)) * dlogits).sum()),
            f.ravel().copy(),
        )
        assert relative_error(df.ravel(), fd_f) < 1e-4, trial
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(head, name)

            def loss_of(v, name=name):
                parts = {k: getattr(head, k) for k in ("w1", "b1", "w2", "b2")}
                parts[name] = v.reshape(arr.shape)
                return float((classify_edge(EdgeClassifierHead(**parts), f) * dlogits).sum())

            fd = finite_difference(loss_of, arr.ravel().copy())
            assert relative_error(getattr(grads, name).ravel(), fd) < 1e-4, (trial, name)


def test_braid_loss_config_validation():
    with pytest.raises(ValueError):
        BraidLossConfig(lam=-0.1)
    with pytest.raises(ValueError):
        BraidLossConfig(class_weights=(1.0, 0.0, 1.0))
    cfg = BraidLossConfig()
    assert cfg.lam == 1.0
    assert cfg.class_weights == (8.0, 8.0, 1.0)
