import numpy as np
import pytest

from transitbench.errors import ConfigError
from transitbench.synth import SynthConfig, synth_generate, travel_survey_config


def _cfg(**kw):
    base = dict(
        n=10_000,
        columns=[{"name": "x1", "kind": "uniform", "low": -1, "high": 1}],
        count_coefs={"intercept": 0.5, "x1": 1.0},
        zero_coefs={"intercept": np.log(0.3 / 0.7)},
        theta=2.0,
        seed=11,
    )
    base.update(kw)
    return SynthConfig(**base)


def test_full_inflation_gives_all_zero():
    ds = synth_generate(_cfg(zero_coefs={"intercept": 50.0}, n=500))
    assert np.all(ds.y == 0)


def test_large_theta_mean():
    n = 10_000
    ds = synth_generate(_cfg(count_coefs={"intercept": np.log(2.0)}, zero_coefs={"intercept": -60.0}, theta=1e6))
    se = np.sqrt(2.0 / n)  # variance -> mean as theta grows
    assert abs(ds.y.mean() - 2.0) < 3 * se


def test_determinism():
    a, b = synth_generate(_cfg(n=300)), synth_generate(_cfg(n=300))
    assert a.frame.equals(b.frame)
    assert not a.frame.equals(synth_generate(_cfg(n=300, seed=12)).frame)


def test_zero_fraction_matches_mixture():
    n, pi, theta, mu = 20_000, 0.3, 2.0, np.exp(0.5)
    ds = synth_generate(_cfg(n=n, columns=[{"name": "x1", "kind": "normal", "sd": 0.0}],
                             count_coefs={"intercept": 0.5}))
    p0 = pi + (1 - pi) * (theta / (theta + mu)) ** theta
    assert abs((ds.y == 0).mean() - p0) < 3 * np.sqrt(p0 * (1 - p0) / n)


def test_targets_bounded():
    ds = synth_generate(_cfg(count_coefs={"intercept": 4.0}, n=2000))
    assert ds.y.max() <= 25 and ds.y.min() >= 0


def test_hurdle_mode_zero_probability():
    n = 20_000
    ds = synth_generate(_cfg(mode="hurdle", n=n))
    assert abs((ds.y == 0).mean() - 0.3) < 3 * np.sqrt(0.21 / n)


@pytest.mark.parametrize("bad", [{"theta": 0}, {"mode": "poisson"}, {"terms": [{"kind": "spline"}]}])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        _cfg(**bad)


def test_unknown_coefficient_name():
    with pytest.raises(ConfigError, match="x9"):
        synth_generate(_cfg(count_coefs={"x9": 1.0}, n=10))


def test_travel_survey_config_schema():
    cfg = travel_survey_config(n=400, seed=3)
    ds = synth_generate(cfg)
    assert ds.n == 400
    assert ds.schema.coords == ("x", "y") and ds.coords.shape == (400, 2)
    assert ds.weights is not None and np.all(ds.weights > 0)
    assert 0.2 < (ds.y > 0).mean() < 0.9
    assert SynthConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
