import math

import numpy as np
import pytest

import siamdecon as sd


def test_psf_and_convolution_backends_agree():
    k = sd.gaussian_psf(2, 9, 1.5)
    assert k.shape == (9, 9)
    assert abs(k.sum() - 1.0) < 1e-5
    x = np.random.default_rng(0).random((40, 36), dtype=np.float32)
    direct = sd.convolve(x, k, backend="direct")
    fft = sd.convolve(x, k, backend="fft")
    assert np.abs(direct - fft).max() <= 1e-4


def test_inputs_are_copied():
    x = np.zeros((16, 16), dtype=np.float32)
    k = np.zeros((3, 3), dtype=np.float32)
    k[1, 1] = 1
    y = sd.convolve(x, k)
    y[0, 0] = 5
    assert x[0, 0] == 0


def test_phantom_degrade_lr_metrics():
    clean = sd.texture_phantom((128, 128), seed=3)
    psf = sd.gaussian_psf(2, 17, 2.0)
    noisy = sd.degrade(clean, psf, seed=4)
    assert noisy.shape == clean.shape
    assert np.array_equal(noisy, sd.degrade(clean, psf, seed=4))
    restored = sd.lucy_richardson(noisy, psf, 2)
    row = sd.evaluate(restored, clean)
    assert list(row) == ["PSNR", "SSIM", "MI", "SMI", "RMSE"]
    assert math.isclose(row["PSNR"], -20 * math.log10(row["RMSE"]), rel_tol=1e-9)
    assert sd.ssim(clean, clean) == pytest.approx(1.0)


def test_volume_phantom():
    vol = sd.microtubules_phantom((32, 48, 48), n_fibers=4, seed=1)
    assert vol.shape == (32, 48, 48)
    assert 0 <= vol.min() and vol.max() <= 1


def test_errors_are_raised_as_exceptions():
    with pytest.raises(sd.Error):
        sd.gaussian_psf(2, 4, 1.0)
    with pytest.raises(sd.ConfigError):
        sd.run_experiment({"unknown": 1})


def test_train_predict_and_checkpoint(tmp_path):
    clean = sd.texture_phantom((64, 64), seed=5)
    psf = sd.gaussian_psf(2, 9, 1.5)
    noisy = sd.degrade(clean, psf, seed=6)
    cfg = {"patch_size": 32, "batch_size": 2, "total_steps": 4, "model": {"base_features": 4}}
    model = sd.train(noisy, psf, cfg, seed=7, output_dir=str(tmp_path))
    assert model.step == 4
    assert (tmp_path / "checkpoint.pt").exists()
    assert (tmp_path / "train_log.csv").exists()
    pred = model.predict(noisy)
    assert pred.shape == noisy.shape
    assert 0 <= pred.min() and pred.max() <= 1
    again = sd.load_model(str(tmp_path / "checkpoint.pt")).predict(noisy)
    assert np.array_equal(pred, again)


def test_image_io_round_trip(tmp_path):
    img = sd.texture_phantom((64, 64), seed=8)
    for name in ("a.tif", "a.npy"):
        sd.write_image(str(tmp_path / name), img)
        assert np.array_equal(sd.read_image(str(tmp_path / name)), img)
    assert np.array_equal(np.load(tmp_path / "a.npy"), img)


def test_run_experiment_report(tmp_path):
    report = sd.run_experiment(
        {
            "name": "py",
            "seed": 1,
            "output_dir": str(tmp_path),
            "phantom": {"shape": [64, 64]},
            "methods": ["input", "lr:2"],
        }
    )
    assert [r["method"] for r in report["rows"]] == ["input", "LR n=2"]
    assert (tmp_path / "report.csv").exists()
    text = sd.render_report(report)
    assert "PSNR" in text and "*" in text
