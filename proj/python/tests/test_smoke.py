import math

import numpy as np
import pytest

import asl


def test_fractional_delay_recovered_by_gcc_phat():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(1280)
    y = asl.fractional_delay(x, 3.7)
    assert np.dot(y, y) == pytest.approx(np.dot(x, x), rel=1e-9)
    lags, values, peak = asl.gcc_phat(y, x, max_lag=32, upsample=16)
    assert lags.shape == values.shape
    assert abs(peak - 3.7) < 0.05


def test_integer_delay_is_a_circular_shift():
    x = np.arange(16, dtype=float)
    np.testing.assert_allclose(asl.fractional_delay(x, 3), np.roll(x, 3), atol=1e-12)


def test_srp_recovers_a_clean_source():
    geom = asl.Geometry(all_pairs=True)
    assert geom.mic_ids == [1, 5, 11, 15]
    assert geom.positions.shape == (4, 3)
    source = (2.1, 3.3, 1.2)
    window = asl.simulate_window(geom, source, snr_db=20.0, tone_gain=0.0, seed=5)
    assert window.shape == (4, 1280)
    estimate = asl.srp_localize(window, geom, resolution=0.05, refine=True)
    assert math.dist(estimate, source) < 0.05


def test_metrics():
    assert round(asl.relative_improvement(1.020, 0.795), 1) == 22.1
    est = np.array([[0.3, 0.0, 0.0], [1.0, 1.0, 1.5]])
    truth = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    assert asl.motp(est, truth) == pytest.approx(0.4)


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(FileNotFoundError):
        asl.Checkpoint.load(str(tmp_path / "missing.aslc"))
    bad = tmp_path / "bad.aslc"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        asl.Checkpoint.load(str(bad))
    with pytest.raises(ArithmeticError):
        asl.gcc_phat(np.zeros(64), np.ones(64))


def _asl_tool():
    import os
    import pathlib

    candidates = [os.environ.get("ASL_TOOL", ""), pathlib.Path(__file__).parents[2] / "build" / "tools" / "asl"]
    for c in candidates:
        if c and pathlib.Path(c).is_file():
            return str(c)
    return None


@pytest.mark.skipif(_asl_tool() is None, reason="asl command-line tool not built")
def test_checkpoint_predict_matches_shape(tmp_path):
    import pathlib
    import subprocess

    tool = _asl_tool()
    fixtures = str(pathlib.Path(tool).with_name("asl-fixtures"))
    subprocess.run([fixtures, "corpus", "--out", str(tmp_path / "corpus"), "--clips", "2", "--seconds", "1"],
                   check=True, capture_output=True)
    config = tmp_path / "tiny.json"
    config.write_text('{"training": {"epochs": 1, "batch_size": 4, "clips_per_epoch": 2, '
                      '"windows_per_clip": 4, "validation_fraction": 0}}')
    subprocess.run([tool, "train", "--config", str(config), "--corpus", str(tmp_path / "corpus" / "corpus.txt"),
                    "--out", str(tmp_path / "model"), "--deterministic"], check=True, capture_output=True)
    ckpt = asl.Checkpoint.load(str(tmp_path / "model" / "model.aslc"))
    assert ckpt.window_ms == pytest.approx(80.0)
    assert (ckpt.channels, ckpt.samples) == (4, 1280)
    geom = asl.Geometry()
    window = asl.simulate_window(geom, (2.0, 3.0, 1.2))
    first = ckpt.predict(window)
    assert len(first) == 3 and all(math.isfinite(v) for v in first)
    assert ckpt.predict(window) == first
    with pytest.raises(ValueError):
        ckpt.predict(np.zeros((3, 1280)))
