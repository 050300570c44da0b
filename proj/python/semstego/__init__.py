"""Python access to the semstego simulator core."""

import json

from . import _core
from ._core import (
    DimensionError,
    Error,
    InvalidKeyError,
    NotFoundError,
    RangeError,
    alpha_bars,
    awgn,
    cfg_combine,
    ddim_forward_step,
    ddim_reverse_step,
    ddim_timesteps,
    empirical_snr_db,
    key_tokens,
    kl_divergence,
    load_array,
    lpips,
    mse,
    noise_variance,
    psnr,
    psnr_from_mse,
    save_array,
    ssim,
)


def default_config():
    """The default RunConfig as a dict."""
    return json.loads(_core.default_config_json())


def validate_config(config):
    """Fill defaults and check invariants; returns the completed dict."""
    return json.loads(_core.validate_config_json(json.dumps(config)))


def sweep_csv(config, snr_train, snr_test, codec="small", images=4):
    """Run a sweep with already trained models and return the results CSV text."""
    return _core.sweep_csv(json.dumps(config), list(snr_train), list(snr_test), codec, images)
