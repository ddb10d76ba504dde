import numpy as np
import pytest

from kmace.core import ConfigInvalid, RngSpec
from kmace.oracle import MomentConfig, check_moments, random_config


def test_zero_scatter_is_exact():
    cfg = MomentConfig(np.arange(8.0).reshape(4, 2), np.zeros((4, 2)), draws=1000)
    checks = check_moments(cfg)
    assert all(c.passed and c.std_error == 0.0 for c in checks)
    assert checks[1].closed_form == 0.0 and checks[3].closed_form == 0.0


def test_perturbed_closed_form_fails():
    cfg = random_config(RngSpec(1), draws=50_000)
    assert all(c.passed for c in check_moments(cfg))
    assert not any(c.passed for c in check_moments(cfg, perturb=0.1))


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        MomentConfig(np.zeros((3, 2)), np.zeros((3, 1)))
    with pytest.raises(ConfigInvalid):
        MomentConfig(np.zeros((3, 2)), -np.ones((3, 2)))
    with pytest.raises(ConfigInvalid):
        MomentConfig.from_dict({"n": 2})
    cfg = MomentConfig.from_dict({"n": 3, "d": 2, "spectra": [2.0, 1.0], "draws": 10})
    assert cfg.spectra.shape == (3, 2)
    assert MomentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
