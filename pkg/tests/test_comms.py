import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimofl import comms
from mimofl.comms import Allocation, ZeroRateError
from mimofl.model import ChannelInstance, SystemConfig, generate_network


def perfect_csi(cfg, sigma):
    sigma = np.asarray(sigma, float)
    return ChannelInstance(np.zeros((len(sigma), 2)), sigma, sigma, sigma)


def alloc(eta, zeta, f):
    return Allocation(np.asarray(eta, float), np.asarray(zeta, float), np.asarray(f, float))


def test_zero_power_zero_sinr(default_cfg, default_ch):
    a = alloc(np.zeros(30), np.zeros(30), np.full(30, 1e9))
    assert np.all(comms.sinr_downlink(a, default_ch, default_cfg) == 0)
    assert np.all(comms.sinr_uplink(a, default_ch, default_cfg) == 0)
    assert np.all(comms.rate_downlink(a, default_ch, default_cfg) == 0)


def test_perfect_csi_no_interference():
    cfg = SystemConfig.default_scenario(M=50, N=1, K=2)
    ch = perfect_csi(cfg, [2e-12, 5e-13])
    a = alloc([0.3, 0.6], [0.4, 1.0], [1e9, 1e9])
    rd, ru = cfg.powers.rho_d, cfg.powers.rho_u
    np.testing.assert_allclose(comms.sinr_downlink(a, ch, cfg), 48 * rd * ch.sigma_hat_sq_nk * a.eta_nk, rtol=1e-14)
    np.testing.assert_allclose(comms.sinr_uplink(a, ch, cfg), 48 * ru * ch.sigma_bar_sq_nk * a.zeta_nk, rtol=1e-14)


def test_downlink_single_ue_hand_value():
    cfg = SystemConfig.default_scenario(M=50, N=1, K=1)
    rho_d = cfg.powers.rho_d
    sig = 10.0 / rho_d
    ch = ChannelInstance(np.zeros((1, 2)), [1.1 * sig], [sig], [sig])
    a = alloc([0.5], [1.0], [1e9])
    # 49 * 10 * 0.5 / (0.1 * 10 * 0.5 + 1)
    assert comms.sinr_downlink(a, ch, cfg)[0] == pytest.approx(245 / 1.5, rel=1e-12)


def test_uplink_two_ue_hand_value():
    cfg = SystemConfig.default_scenario(M=50, N=1, K=2)
    rho_u = cfg.powers.rho_u
    beta = np.array([4.0, 2.0]) / rho_u
    sig = np.array([3.0, 1.0]) / rho_u
    ch = ChannelInstance(np.zeros((2, 2)), beta, sig, sig)
    a = alloc([0.5, 0.5], [0.5, 1.0], [1e9, 1e9])
    # interference: 1*0.5 + 1*1.0 = 1.5 -> denominators 2.5
    expect = [48 * 3.0 * 0.5 / 2.5, 48 * 1.0 * 1.0 / 2.5]
    np.testing.assert_allclose(comms.sinr_uplink(a, ch, cfg), expect, rtol=1e-12)


def test_rate_at_unit_sinr():
    cfg = SystemConfig.default_scenario(M=50, N=1, K=1, tau_dp=30, tau_up=30)
    rho_d = cfg.powers.rho_d
    sig = 1.0 / (49 * rho_d)
    ch = perfect_csi(cfg, [sig])
    a = alloc([1.0], [1.0], [1e9])
    # 170/200 * 20 MHz * log2(2)
    assert comms.rate_downlink(a, ch, cfg)[0] == pytest.approx(17.0e6, rel=1e-12)
    ch2 = comms.rate_downlink(a, ch, cfg.replace(B=40e6))[0]
    assert ch2 == pytest.approx(34.0e6, rel=1e-12)


def test_delays_hand_values():
    cfg = SystemConfig.default_scenario(M=50, N=1, K=1, tau_dp=30, tau_up=30)
    rho_d = cfg.powers.rho_d
    # choose SINR so that R_d = 1.6e8 bit/s exactly
    sinr = 2 ** (1.6e8 / (0.85 * 20e6)) - 1
    ch = perfect_csi(cfg, [sinr / (49 * rho_d)])
    a = alloc([1.0], [1.0], [4e9])
    t = comms.delays(a, ch, cfg)
    assert t.t_d_nk[0] == pytest.approx(1.0, rel=1e-12)
    assert t.t_C_nk[0] == pytest.approx(1.25, rel=1e-15)
    t2 = comms.delays(alloc([1.0], [1.0], [2e9]), ch, cfg)
    assert t2.t_C_nk[0] == pytest.approx(2.5, rel=1e-15)


def test_compute_energy_hand_value():
    cfg = SystemConfig.default_scenario(M=50, N=1, K=1)
    ch = perfect_csi(cfg, [1e-12])
    e = comms.energies(alloc([1.0], [1.0], [4e9]), ch, cfg)
    # 0.5 * 5e-30 * 50 * 20 * 5e6 * (4e9)^2
    assert e.E_C_nk[0] == pytest.approx(0.2, rel=1e-12)


def test_zero_powers_leave_compute_only(default_cfg, default_ch):
    # zero power -> zero rate -> delays are undefined; energies refuse
    a = alloc(np.zeros(30), np.zeros(30), np.full(30, 1e9))
    with pytest.raises(ZeroRateError) as err:
        comms.energies(a, default_ch, default_cfg)
    assert err.value.ues == list(range(30))


def test_zero_frequency_flagged(default_cfg, default_ch):
    f = np.full(30, 1e9)
    f[[3, 7]] = 0
    with pytest.raises(ZeroRateError) as err:
        comms.delays(alloc(np.full(30, 1 / 30), np.ones(30), f), default_ch, default_cfg)
    assert err.value.ues == [3, 7]


def test_uplink_energy_linear_in_zeta_at_fixed_rate():
    # perfect CSI and a single UE: doubling zeta while halving sigma keeps the rate
    cfg = SystemConfig.default_scenario(M=50, N=1, K=1)
    e1 = comms.energies(alloc([1.0], [0.4], [1e9]), perfect_csi(cfg, [2e-12]), cfg)
    e2 = comms.energies(alloc([1.0], [0.8], [1e9]), perfect_csi(cfg, [1e-12]), cfg)
    assert e2.E_u_nk[0] == pytest.approx(2 * e1.E_u_nk[0], rel=1e-12)


def test_energy_additivity(default_cfg, default_ch):
    a = alloc(np.full(30, 1 / 30), np.ones(30), np.full(30, 2e9))
    e = comms.energies(a, default_ch, default_cfg)
    assert e.E_total == e.E_d + e.E_C_nk.sum() + e.E_u_nk.sum()
    assert e.E_d >= 0 and np.all(e.E_C_nk >= 0) and np.all(e.E_u_nk >= 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(0, 29), other=st.integers(0, 29))
def test_sinr_monotone_in_powers(seed, k, other):
    cfg = SystemConfig.default_scenario()
    ch = generate_network(cfg, seed)
    eta = np.random.default_rng(seed).uniform(0.005, 0.03, 30)
    base = comms.sinr_downlink(alloc(eta, np.ones(30), np.ones(30)), ch, cfg)
    up = eta.copy()
    up[k] *= 1.01
    s = comms.sinr_downlink(alloc(up, np.ones(30), np.ones(30)), ch, cfg)
    assert s[k] > base[k]
    if other != k:
        assert s[other] < base[other]


def test_scale_consistency(default_cfg, default_ch):
    a = alloc(np.full(30, 1 / 30), np.ones(30), np.full(30, 2e9))
    big = default_cfg.replace(S_d_n=3 * 1.6e8, S_u_n=3 * 1.6e8)
    t1, t3 = comms.delays(a, default_ch, default_cfg), comms.delays(a, default_ch, big)
    np.testing.assert_allclose(t3.t_d_nk, 3 * t1.t_d_nk, rtol=1e-13)
    np.testing.assert_allclose(t3.t_u_nk, 3 * t1.t_u_nk, rtol=1e-13)
    e1, e3 = comms.energies(a, default_ch, default_cfg), comms.energies(a, default_ch, big)
    assert e3.E_d == pytest.approx(3 * e1.E_d, rel=1e-13)
    np.testing.assert_allclose(e3.E_u_nk, 3 * e1.E_u_nk, rtol=1e-13)


# ---- feasibility checkers

def two_ue_setup(t_qos=5.0):
    cfg = SystemConfig.default_scenario(M=50, N=1, K=2, t_qos=t_qos)
    return cfg, perfect_csi(cfg, [1e-12, 1e-12])


def test_single_ue_mode_switch_is_compute_time():
    cfg = SystemConfig.default_scenario(M=50, N=1, K=1)
    ch = perfect_csi(cfg, [1e-12])
    a = alloc([1.0], [1.0], [3e9])
    rep = comms.check_async(a, ch, cfg)
    assert rep.slacks["mode_switch"] == pytest.approx(comms.delays(a, ch, cfg).t_C_nk[0], rel=1e-12)
    assert rep.feasible
    # and sync gives the same deadline verdict
    assert comms.check_sync(a, ch, cfg).slacks["deadline"] == pytest.approx(rep.slacks["deadline"][0], rel=1e-12)


def test_deadline_boundary_feasible():
    cfg0, ch = two_ue_setup()
    a = alloc([0.5, 0.5], [1.0, 1.0], [2e9, 2e9])
    total = comms.delays(a, ch, cfg0).total_nk[0]
    cfg = cfg0.replace(t_qos=total)
    rep = comms.check_async(a, ch, cfg)
    assert abs(rep.slacks["deadline"][0]) <= 1e-12 * total
    assert rep.feasible


def test_mode_switch_violation():
    cfg, ch = two_ue_setup()
    # UE0 gets almost no downlink power (long t_d), UE1 computes for only 10 ms
    eta = np.array([0.002, 0.998])
    t_d = comms.delays(alloc(eta, [1, 1], [1e9, 1e9]), ch, cfg).t_d_nk
    f1 = cfg.cycles[1] / 0.01
    a = alloc(eta, [1, 1], [1e9, f1 if f1 <= cfg.f_max else cfg.f_max])
    t = comms.delays(a, ch, cfg)
    assume_gap = t.t_d_nk[0] > t.t_d_nk[1] + t.t_C_nk[1]
    assert assume_gap, (t_d, t.t_C_nk)
    rep = comms.check_async(a, ch, cfg)
    assert "mode_switch" in rep.violations


def test_staggered_bottlenecks_async_only():
    cfg0, ch = two_ue_setup()
    # UE0: slow downlink, fast compute; UE1: fast downlink, slow compute
    eta = np.array([0.05, 0.95])
    f = np.array([4e9, 1.5e9])
    a = alloc(eta, [1, 1], f)
    t = comms.delays(a, ch, cfg0)
    per_ue = t.total_nk.max()
    step = t.t_d_nk.max() + t.t_C_nk.max() + t.t_u_nk.max()
    assert step > per_ue
    cfg = cfg0.replace(t_qos=0.5 * (per_ue + step))
    assert comms.check_async(a, ch, cfg).slacks["deadline"].min() >= 0
    assert not comms.check_sync(a, ch, cfg).feasible


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 1000), t_qos=st.floats(0.5, 20.0))
def test_sync_feasible_implies_per_ue_deadline(seed, t_qos):
    cfg = SystemConfig.default_scenario(M=60, N=2, K=3, t_qos=t_qos)
    ch = generate_network(cfg, seed)
    r = np.random.default_rng(seed)
    eta = r.dirichlet(np.ones(6)) * r.uniform(0.5, 1)
    a = alloc(eta, r.uniform(0.1, 1, 6), r.uniform(0.3, 1, 6) * cfg.f_max)
    if comms.check_sync(a, ch, cfg).feasible:
        assert comms.check_async(a, ch, cfg).slacks["deadline"].min() >= -1e-9 * t_qos


def test_rate_inversion_roundtrip(default_cfg, default_ch):
    eta = np.full(30, 0.9 / 30)
    zeta = np.linspace(0.2, 0.9, 30)
    a = alloc(eta, zeta, np.ones(30))
    rd = comms.rate_downlink(a, default_ch, default_cfg)
    ru = comms.rate_uplink(a, default_ch, default_cfg)
    np.testing.assert_allclose(comms.eta_for_rates(rd, default_ch, default_cfg), eta, rtol=1e-9)
    np.testing.assert_allclose(comms.zeta_for_rates(ru, default_ch, default_cfg), zeta, rtol=1e-9)


def test_maxmin_equalizes(default_cfg, default_ch):
    eta = comms.maxmin_downlink(default_ch, default_cfg)
    zeta = comms.maxmin_uplink(default_ch, default_cfg)
    assert eta.sum() == pytest.approx(1.0) and zeta.max() == pytest.approx(1.0)
    a = alloc(eta, zeta, np.ones(30))
    s = comms.sinr_downlink(a, default_ch, default_cfg)
    u = comms.sinr_uplink(a, default_ch, default_cfg)
    assert np.ptp(s) <= 1e-9 * s.max() and np.ptp(u) <= 1e-9 * u.max()


def test_zf_needs_spare_antenna():
    cfg = SystemConfig.default_scenario(M=2, N=1, K=2)
    ch = perfect_csi(cfg, [1e-12, 1e-12])
    with pytest.raises(ValueError):
        comms.sinr_downlink(alloc([0.5, 0.5], [1, 1], [1, 1]), ch, cfg)
