import json

import numpy as np
import pytest

import sacc

TINY = {
    "seed": 7,
    "corpus": {"train_count": 40, "test_count": 20},
    "training": {
        "codebook_size": 6,
        "head_hidden": 16,
        "backbone": {"widths": [4, 6, 6, 8]},
        "classifier": {"steps": 10, "batch": 8},
        "phase_n": {"steps": 10, "batch": 8},
        "phase_l": {"steps": 10, "batch": 8, "optimizer": "adam", "lr": 0.001},
        "finetune": {"steps": 5, "batch": 8},
    },
}


def test_integral_operator_shape_and_rows():
    d = sacc.integral_operator(16, 2)
    assert d.shape == (16, 15)
    assert np.all(d[0] == 0.0)
    assert np.all(d >= 0.0)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_build_curve_is_valid_and_anchored(order):
    rng = np.random.default_rng(0)
    v = rng.random((3, 255))
    lut = sacc.build_curve(v, order)
    assert lut.shape == (3, 256)
    np.testing.assert_allclose(lut[:, 0], 0.0, atol=1e-12)
    np.testing.assert_allclose(lut[:, -1], 1.0, atol=1e-12)
    assert np.all(np.diff(lut, axis=1) >= -1e-12)
    assert sacc.curve_is_valid(lut, require_concave=order >= 2)


def test_build_curve_matches_normalised_integral():
    rng = np.random.default_rng(1)
    v = rng.random((2, 63))
    d = sacc.integral_operator(64, 2)
    raw = v @ d.T
    expected = raw / raw[:, -1:]
    np.testing.assert_allclose(sacc.build_curve(v, 2), expected, rtol=0, atol=1e-12)


def test_apply_identity_curve_is_lossless_on_grid():
    img = np.arange(4 * 4 * 3, dtype=float).reshape(4, 4, 3) / 255.0
    lut = np.tile(np.linspace(0.0, 1.0, 256), (3, 1))
    out = sacc.apply_curve(img, lut)
    np.testing.assert_allclose(out, img, atol=1e-12)


def test_apply_curve_uses_per_channel_lookup():
    img = np.full((2, 2, 3), 10 / 255.0)
    lut = np.tile(np.linspace(0.0, 1.0, 256), (3, 1))
    lut[1] = np.sqrt(lut[1])
    out = sacc.apply_curve(img, lut)
    assert out[0, 0, 0] == pytest.approx(10 / 255.0)
    assert out[0, 0, 1] == pytest.approx(np.sqrt(10 / 255.0))


def test_apply_curve_rejects_out_of_range():
    lut = np.tile(np.linspace(0.0, 1.0, 256), (3, 1))
    with pytest.raises(sacc.InputError):
        sacc.apply_curve(np.full((2, 2, 3), 1.5), lut)


def test_darken_noise_free_is_power_law():
    img = np.linspace(0.0, 1.0, 48).reshape(4, 4, 3)
    out = sacc.darken(img, gamma=4.0, sigma=0.0)
    assert out.shape == img.shape
    assert out.mean() < img.mean()
    np.testing.assert_allclose(out, np.round(img**4 * 255) / 255, atol=1.0 / 255 + 1e-12)


def test_synthetic_crfs_are_all_concave():
    stats = sacc.analyze_crf(sacc.synthetic_concave_crfs(256))
    assert stats["negative_fraction"] == 1.0
    assert sacc.analyze_crf([list(np.linspace(0, 1, 50) ** 2)])["negative_fraction"] == 0.0


def test_codebook_and_puzzle():
    book = sacc.build_codebook(10, 3)
    assert len(book["permutations"]) == 10
    img = np.random.default_rng(2).random((48, 48, 3))
    puzzle = sacc.make_puzzle(img, book, 4, 90)
    assert puzzle.shape == img.shape
    np.testing.assert_array_equal(np.sort(puzzle.ravel()), np.sort(img.ravel()))


def test_config_rejects_unknown_keys():
    with pytest.raises(sacc.ConfigError):
        sacc.resolve_config({"training": {"not_a_key": 1}})
    cfg = sacc.resolve_config({"seed": 3})
    assert cfg["seed"] == 3
    assert cfg == sacc.resolve_config(cfg)


def test_train_enhance_eval_roundtrip(tmp_path):
    model = tmp_path / "model"
    report = sacc.train(str(model), TINY)
    assert {"classifier", "phaseN", "phaseL", "evaluation"} <= report.keys()
    assert (model / "model.ckpt").exists()

    frames = sacc.darken(np.random.default_rng(3).random((2, 48, 48, 3)), sigma=0.0)
    curves = sacc.predict_curves(str(model), frames)
    assert len(curves) == 2
    for lut in curves:
        assert sacc.curve_is_valid(lut)

    ev = sacc.evaluate(str(model))
    assert 0.0 <= ev["accuracy"]["sacc"] <= 1.0

    with pytest.raises(sacc.ConfigError):
        sacc.train(str(model), TINY)
    again = sacc.train(str(tmp_path / "again"), TINY)
    assert json.dumps(again["checksums_final"]) == json.dumps(report["checksums_final"])
    assert (model / "model.ckpt").read_bytes() == (tmp_path / "again" / "model.ckpt").read_bytes()
