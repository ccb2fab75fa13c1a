import json

import numpy as np
import pytest

import negtome


def test_merge_worked_example():
    src = np.array([[[0.6, 0.8]]], dtype=np.float32)
    ref = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    out = negtome.merge(src, ref, alpha=0.5, tau=0.7)
    np.testing.assert_allclose(out, [[[0.9, 0.7]]], atol=1e-6)
    pulled = negtome.merge(src, ref, alpha=-0.5, tau=0.7)
    np.testing.assert_allclose(pulled, [[[0.3, 0.9]]], atol=1e-6)


def test_merge_alpha_zero_is_identity():
    rng = np.random.default_rng(3)
    src = rng.standard_normal((2, 5, 4)).astype(np.float32)
    ref = rng.standard_normal((7, 4)).astype(np.float32)
    out = negtome.merge(src, ref, alpha=0.0)
    assert (out == src).all()


def test_mask_bias_flips_the_match():
    src = np.array([[[0.6, 0.8]]], dtype=np.float32)
    ref = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    plain = negtome.merge_detailed(src, ref, alpha=0.5)
    masked = negtome.merge_detailed(
        src, ref, alpha=0.5, mask=np.array([1.0, 0.0], dtype=np.float32)
    )
    assert plain["target_index"] == [1]
    assert masked["target_index"] == [0]


def test_merge_joint_keeps_text():
    rng = np.random.default_rng(11)
    joint = rng.standard_normal((2, 8, 6)).astype(np.float32)
    ref = rng.standard_normal((5, 6)).astype(np.float32)
    out = negtome.merge_joint(joint, 3, ref, alpha=0.8, tau=0.0)
    assert (out[:, :3, :] == joint[:, :3, :]).all()
    text, img = negtome.split_joint(joint, 3)
    assert text.shape == (2, 3, 6) and img.shape == (2, 5, 6)


def test_alpha_schedule():
    assert negtome.alpha_at(800, 0.9) == pytest.approx(0.9)
    assert negtome.alpha_at(500, 0.9) == 0.0
    assert negtome.alpha_at(800, 0.9, t_window=(1000, 600), schedule="linear-decay") == pytest.approx(0.45)


def test_entropy_and_diversity():
    assert negtome.entropy_score([1, 1]) == pytest.approx(np.log(2), abs=1e-9)
    assert negtome.entropy_score([1, 1, 1, 1]) == pytest.approx(np.log(4), abs=1e-9)
    same = np.tile(np.array([0.3, -1.2, 0.7], dtype=np.float32), (3, 1))
    assert negtome.pairwise_diversity(same)["diversity"] == 0.0


def test_resize_mask():
    grid = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    np.testing.assert_allclose(negtome.resize_mask(grid, 1), [0.5])
    np.testing.assert_allclose(negtome.resize_mask(grid, 4), grid.reshape(-1))


def test_tensor_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    t = rng.standard_normal((2, 3, 4)).astype(np.float32)
    path = str(tmp_path / "t.ntf")
    negtome.write_tensor(path, t)
    back = negtome.read_tensor(path)
    assert (back == t).all()


def test_bad_magic_raises(tmp_path):
    path = tmp_path / "bad.ntf"
    path.write_bytes(b"XXXXjunk")
    with pytest.raises(ValueError, match="offset 0"):
        negtome.read_tensor(str(path))


def test_simulate_is_deterministic():
    config = json.dumps(
        {
            "batch": 2,
            "steps": 3,
            "tokens": 16,
            "features": 8,
            "seeds": [1],
            "ref_mode": "first-in-batch",
            "merge": {"alpha": 0.8, "tau": 0.0},
        }
    )
    a = negtome.simulate(config, seed=1)
    b = negtome.simulate(config, seed=1)
    assert a.shape == (2, 16, 8)
    assert (a == b).all()
    assert (negtome.simulate(config, seed=2) != a).any()


def test_select_reference_rag():
    rng = np.random.default_rng(7)
    src = rng.standard_normal((6, 4)).astype(np.float32)
    other = rng.standard_normal((6, 4)).astype(np.float32)
    idx, score = negtome.select_reference_rag(src, [other, src])
    assert idx == 1
    assert score == pytest.approx(1.0, abs=1e-6)
