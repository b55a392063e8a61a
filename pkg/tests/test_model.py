import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimofl.model import (
    ChannelInstance, ConfigError, SystemConfig, generate_network, mmse_variance, pathloss_db,
)


def test_same_seed_bitwise_identical(default_cfg):
    a, b = generate_network(default_cfg, 7), generate_network(default_cfg, 7)
    for name in ("positions", "beta_nk", "sigma_hat_sq_nk", "sigma_bar_sq_nk"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_different_seeds_differ(default_cfg):
    assert not np.array_equal(generate_network(default_cfg, 1).beta_nk,
                              generate_network(default_cfg, 2).beta_nk)


def test_zf_precondition_rejected():
    with pytest.raises(ConfigError):
        SystemConfig.default_scenario(M=29, N=3, K=10)


@pytest.mark.parametrize("change", [dict(tau_dp=20), dict(tau_up=200), dict(t_qos=0.0),
                                    dict(B=-1.0), dict(p_d=0.0)])
def test_invalid_configs_rejected(change):
    with pytest.raises(ConfigError):
        SystemConfig.default_scenario(**change)


def test_geometry(default_cfg, default_ch):
    pos = default_ch.positions
    assert pos.shape == (30, 2)
    assert np.all(np.abs(pos) <= default_cfg.area_D / 2)
    assert np.all(default_ch.distances >= default_cfg.min_distance_km)


def test_variances_below_beta(default_ch):
    ch = default_ch
    assert np.all((ch.sigma_hat_sq_nk > 0) & (ch.sigma_hat_sq_nk < ch.beta_nk))
    assert np.all((ch.sigma_bar_sq_nk > 0) & (ch.sigma_bar_sq_nk < ch.beta_nk))
    # equal pilot lengths -> equal fields
    np.testing.assert_array_equal(ch.sigma_hat_sq_nk, ch.sigma_bar_sq_nk)


def test_unequal_pilots_use_their_own_length():
    cfg = SystemConfig.default_scenario(tau_dp=30, tau_up=60)
    ch = generate_network(cfg, 3)
    rho_p = cfg.powers.rho_p
    np.testing.assert_allclose(ch.sigma_hat_sq_nk, mmse_variance(ch.beta_nk, 30, rho_p), rtol=1e-14)
    np.testing.assert_allclose(ch.sigma_bar_sq_nk, mmse_variance(ch.beta_nk, 60, rho_p), rtol=1e-14)
    assert np.all(ch.sigma_bar_sq_nk > ch.sigma_hat_sq_nk)


def test_pathloss_doubling_and_intercept():
    assert pathloss_db(1.0) == pytest.approx(-140.6, abs=1e-12)
    drop = pathloss_db(0.05) - pathloss_db(0.1)
    assert drop == pytest.approx(10 * 3.67 * np.log10(2), abs=1e-12)


def test_pathloss_hand_value():
    # -140.6 - 36.7 * log10(0.1)
    assert pathloss_db(0.1) == pytest.approx(-103.9, abs=1e-9)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_pathloss_rejects_nonpositive(d):
    with pytest.raises(ValueError):
        pathloss_db(d)


def test_pathloss_monte_carlo():
    """Mean shadowed gain in dB tracks the curve at the mean UE distance."""
    cfg = SystemConfig.default_scenario()
    gains, dists = [], []
    for seed in range(10_000):
        ch = generate_network(cfg, seed)
        gains.append(10 * np.log10(ch.beta_nk))
        dists.append(ch.distances)
    mean_gain = np.mean(gains)
    assert abs(mean_gain - pathloss_db(np.mean(dists))) <= 3.0


def test_mmse_limits():
    assert mmse_variance(0.0, 30, 1.0) == 0.0
    assert mmse_variance(1e-10, 1, 1e22) == pytest.approx(1e-10, rel=1e-6)
    with pytest.raises(ValueError):
        mmse_variance(-1.0, 30, 1.0)


def test_mmse_hand_value():
    # beta = 1e-10, tau = 30, rho_p = 0.2 W / 10^(-12.2) W, evaluated separately
    rho_p = SystemConfig.default_scenario().powers.rho_p
    assert mmse_variance(1e-10, 30, rho_p) == pytest.approx(9.989495091e-11, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(beta=st.floats(1e-16, 1e-3), snr=st.floats(1e-3, 1e12), factor=st.floats(1.01, 100.0))
def test_mmse_monotone_and_below_beta(beta, snr, factor):
    lo = mmse_variance(beta, 1, snr)
    hi = mmse_variance(beta, 1, snr * factor)
    assert 0 <= lo < hi < beta


def test_json_roundtrip(tmp_path):
    cfg = SystemConfig.default_scenario(M=64, K=4, c_nk=30.0)
    path = tmp_path / "c.json"
    import json
    path.write_text(json.dumps(cfg.to_dict()))
    assert SystemConfig.from_json(path) == cfg


def test_shipped_default_config_matches_builtin():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1]
    assert SystemConfig.from_json(root / "configs" / "default.json") == SystemConfig.default_scenario()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        SystemConfig.from_dict(dict(M=100, N=1, K_n=[2], tau_dp=2, tau_up=2, bogus=1))


def test_from_beta():
    cfg = SystemConfig.default_scenario(M=50, N=1, K=2)
    ch = ChannelInstance.from_beta([1e-9, 1e-11], cfg)
    assert np.all(ch.sigma_hat_sq_nk < ch.beta_nk)
