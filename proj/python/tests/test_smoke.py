import numpy as np
import pytest

import cunet

cunet.set_log_level("warn")


def test_phantoms_roundtrip():
    cases = cunet.generate_phantoms(3, size=16, q_tumor=1.0, seed=5)
    assert len(cases) == 3
    s = cases[0]
    assert s.image.shape == (4, 16, 16) and s.image.dtype == np.float32
    assert set(np.unique(s.labels)) <= {0, 1, 2, 4}
    assert cunet.Sample.decode(s.encode()) == s
    again = cunet.Sample(s.id, s.image, s.labels, s.brain_mask)
    assert again == s


def test_partition_covers_grid():
    s = cunet.generate_phantoms(1, size=32, q_tumor=1.0, seed=1)[0]
    parts = cunet.partition_regions(s.labels, s.brain_mask, 4)
    total = sum(p.astype(int) for p in parts)
    assert (total == 1).all()
    assert (parts[0].astype(bool) == ~s.brain_mask.astype(bool)).all()


def test_compute_p2_example():
    assert cunet.compute_p2(1.5, 1.0, 1000, 30000) == 0.05


def test_sample_weights_seeded():
    s = cunet.generate_phantoms(1, size=32, q_tumor=1.0, seed=2)[0]
    a = cunet.sample_weights(s.labels, s.brain_mask, seed=9)
    b = cunet.sample_weights(s.labels, s.brain_mask, seed=9)
    assert a.shape == (32, 32)
    assert np.array_equal(a, b)


def test_metrics_worked_example():
    p = np.array([[1, 1, 1, 1, 0, 0, 0, 0, 0, 0]], dtype=np.uint8)
    t = np.array([[0, 1, 1, 1, 1, 1, 1, 0, 0, 0]], dtype=np.uint8)
    assert cunet.dice(p, t) == pytest.approx(0.6, abs=0)
    assert cunet.sensitivity(p, t) == 0.5
    assert cunet.specificity(p, t) == 0.75
    empty = np.zeros((2, 2), dtype=np.uint8)
    assert cunet.dice(empty, empty) == 1.0
    assert cunet.dice(empty, empty, empty="undefined") is None


def test_conv_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 5, 5))
    k = rng.standard_normal((3, 2, 3, 3))
    y = cunet.conv2d(x, k, pad=1)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 5, 5))
    for i in range(5):
        for j in range(5):
            ref[0, :, i, j] = np.tensordot(k, xp[0, :, i:i + 3, j:j + 3], axes=3)
    assert np.abs(y - ref).max() < 1e-12


def test_weighted_ce_unit_weights():
    rng = np.random.default_rng(1)
    probs = cunet.softmax_channels(rng.standard_normal((1, 2, 4, 4)))
    cls = rng.integers(0, 2, (4, 4))
    target = np.stack([cls == 0, cls == 1]).astype(float)[None]
    loss = cunet.weighted_cross_entropy(probs, target, np.ones((4, 4)))
    ref = -np.mean(np.log(np.where(cls == 1, probs[0, 1], probs[0, 0])))
    assert loss == pytest.approx(ref, rel=1e-12)


def test_model_forward_shapes():
    net = cunet.CUNet(depth=2, base_channels=4, seed=0)
    assert net.aux_head_count == 4
    out = net.forward(np.zeros((1, 4, 16, 16)))
    assert out["branch1"].shape == (1, 2, 16, 16)
    assert out["branch2"].shape == (1, 4, 16, 16)
    assert len(out["aux"]) == 4
    assert np.allclose(out["branch2"].sum(axis=1), 1.0, atol=1e-12)


def test_train_predict_evaluate(tmp_path):
    cases = cunet.generate_phantoms(6, size=16, q_tumor=1.0, seed=3)
    net = cunet.CUNet(depth=2, base_channels=4, seed=1)
    state = cunet.train(net, cases[:4], cases[4:], {"max_epochs": 2, "batch_size": 2, "contour_width": 2})
    assert len(state["history"]) == 2
    labels = cunet.predict(net, cases[0])
    assert labels.shape == (16, 16)
    report = cunet.evaluate(net, cases[4:])
    assert report["cases"] == 2
    path = str(tmp_path / "m.ckpt")
    net.save(path)
    other = cunet.CUNet(depth=2, base_channels=4, seed=9)
    other.load(path)
    assert other.checkpoint_bytes() == net.checkpoint_bytes()


def test_errors_map_to_python():
    with pytest.raises(cunet.ConfigError):
        cunet.train(cunet.CUNet(depth=1, base_channels=2), [], [], {"bogus": 1})
    with pytest.raises(cunet.FormatError):
        cunet.Sample.decode(b"nonsense")
    with pytest.raises(ValueError):
        cunet.dice(np.zeros((2, 2), np.uint8), np.zeros((3, 3), np.uint8))


def test_gradcheck_passes():
    results = cunet.gradcheck(seeds=1)
    assert results
    assert all(r["max_rel_error"] <= 1e-4 for r in results)
