"""Self-supervised PSF-aware deconvolution.

Arrays are float32 numpy arrays, copied across the C++ boundary.
"""

import json

import torch  # noqa: F401  loads libtorch before the extension

from ._siamdecon import (
    ConfigError,
    Error,
    Model,
    convolve,
    degrade,
    evaluate,
    gaussian_psf,
    load_model,
    lucy_richardson,
    microtubules_phantom,
    mutual_information,
    normalize_psf,
    psnr,
    read_image,
    rmse,
    spectral_mutual_information,
    ssim,
    texture_phantom,
    write_image,
)
from ._siamdecon import report_render as _report_render
from ._siamdecon import run_experiment_json as _run_experiment_json
from ._siamdecon import train as _train


def train(image, psf, config=None, seed=0, output_dir=""):
    """Train on a single degraded image. `config` is a dict shaped like the
    "train" section of an experiment config."""
    return _train(image, psf, json.dumps(config or {}), seed, output_dir)


def run_experiment(config):
    """Run an experiment config (dict) and return the report as a dict."""
    return json.loads(_run_experiment_json(json.dumps(config)))


def render_report(report):
    return _report_render(json.dumps(report))


__all__ = [
    "ConfigError",
    "Error",
    "Model",
    "convolve",
    "degrade",
    "evaluate",
    "gaussian_psf",
    "load_model",
    "lucy_richardson",
    "microtubules_phantom",
    "mutual_information",
    "normalize_psf",
    "psnr",
    "read_image",
    "render_report",
    "rmse",
    "run_experiment",
    "spectral_mutual_information",
    "ssim",
    "texture_phantom",
    "train",
    "write_image",
]
