"""Zero-forcing rates, stage delays, energies and scheme feasibility checks.

All quantities are per UE in group-major order (length ``K_total``) unless
noted. Rates are in bit/s, times in s, energies in J.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelInstance, SystemConfig

FEAS_RTOL = 1e-9


class ZeroRateError(ValueError):
    """A delay was requested for a UE with zero rate or zero CPU frequency."""

    def __init__(self, message: str, ues):
        super().__init__(f"{message}: UEs {list(ues)}")
        self.ues = list(ues)


@dataclass(frozen=True, eq=False)
class Allocation:
    eta_nk: np.ndarray
    zeta_nk: np.ndarray
    f_nk: np.ndarray

    def __post_init__(self):
        for name in ("eta_nk", "zeta_nk", "f_nk"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def satisfies_box(self, cfg: SystemConfig, tol: float = FEAS_RTOL) -> bool:
        """Power and frequency bounds: sum eta <= 1, 0 <= zeta <= 1, 0 <= f <= f_max."""
        return bool(
            np.all(self.eta_nk >= 0)
            and self.eta_nk.sum() <= 1 + tol
            and np.all((self.zeta_nk >= 0) & (self.zeta_nk <= 1 + tol))
            and np.all((self.f_nk >= 0) & (self.f_nk <= cfg.f_max * (1 + tol)))
        )


@dataclass(frozen=True, eq=False)
class TimingBreakdown:
    t_d_nk: np.ndarray
    t_C_nk: np.ndarray
    t_u_nk: np.ndarray

    @property
    def total_nk(self) -> np.ndarray:
        return self.t_d_nk + self.t_C_nk + self.t_u_nk


@dataclass(frozen=True, eq=False)
class EnergyBreakdown:
    E_d: float
    E_C_nk: np.ndarray
    E_u_nk: np.ndarray

    @property
    def E_total(self) -> float:
        return float(self.E_d + self.E_C_nk.sum() + self.E_u_nk.sum())


@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    """Constraint slacks; nonnegative means satisfied."""

    scheme: str
    slacks: dict
    scales: dict

    @property
    def violations(self) -> dict:
        out = {}
        for name, s in self.slacks.items():
            s = np.atleast_1d(s)
            bad = s < -FEAS_RTOL * self.scales[name]
            if np.any(bad):
                out[name] = float(s.min())
        return out

    @property
    def feasible(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.feasible


def _zf_gain(cfg: SystemConfig) -> int:
    gain = cfg.M - cfg.K_total
    if gain <= 0:
        raise ValueError(f"zero-forcing rates need M > K_total (M={cfg.M}, K_total={cfg.K_total})")
    return gain


def rate_prefactor(cfg: SystemConfig, link: str) -> float:
    """Fraction of the coherence block carrying payload, times bandwidth (bit/s per bit/channel-use)."""
    tau_p = cfg.tau_dp if link == "d" else cfg.tau_up
    return (cfg.tau_c - tau_p) / cfg.tau_c * cfg.B


def downlink_coefficients(ch: ChannelInstance, cfg: SystemConfig):
    """(signal gain, interference weight): SINR_k = a_k eta_k / (b_k sum(eta) + 1)."""
    rho_d = cfg.powers.rho_d
    a = _zf_gain(cfg) * rho_d * ch.sigma_hat_sq_nk
    b = rho_d * (ch.beta_nk - ch.sigma_hat_sq_nk)
    return a, b


def uplink_coefficients(ch: ChannelInstance, cfg: SystemConfig):
    """(signal gain, interferer weights): SINR_k = a_k zeta_k / (w . zeta + 1)."""
    rho_u = cfg.powers.rho_u
    a = _zf_gain(cfg) * rho_u * ch.sigma_bar_sq_nk
    w = rho_u * (ch.beta_nk - ch.sigma_bar_sq_nk)
    return a, w


def sinr_downlink(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> np.ndarray:
    a, b = downlink_coefficients(ch, cfg)
    eta = alloc.eta_nk
    return a * eta / (b * eta.sum() + 1.0)


def sinr_uplink(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> np.ndarray:
    a, w = uplink_coefficients(ch, cfg)
    zeta = alloc.zeta_nk
    return a * zeta / (w @ zeta + 1.0)


def rate_downlink(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> np.ndarray:
    return rate_prefactor(cfg, "d") * np.log2(1.0 + sinr_downlink(alloc, ch, cfg))


def rate_uplink(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> np.ndarray:
    return rate_prefactor(cfg, "u") * np.log2(1.0 + sinr_uplink(alloc, ch, cfg))


def _stage_times(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> TimingBreakdown:
    """Delays with inf where a rate or frequency is zero."""
    with np.errstate(divide="ignore"):
        return TimingBreakdown(
            t_d_nk=cfg.S_d / rate_downlink(alloc, ch, cfg),
            t_C_nk=cfg.cycles / alloc.f_nk,
            t_u_nk=cfg.S_u / rate_uplink(alloc, ch, cfg),
        )


def delays(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> TimingBreakdown:
    times = _stage_times(alloc, ch, cfg)
    for name, t in (("zero downlink rate", times.t_d_nk), ("zero CPU frequency", times.t_C_nk),
                    ("zero uplink rate", times.t_u_nk)):
        bad = np.flatnonzero(~np.isfinite(t))
        if bad.size:
            raise ZeroRateError(name, bad)
    return times


def energies(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> EnergyBreakdown:
    t = delays(alloc, ch, cfg)
    E_d = float(np.sum(cfg.p_d * alloc.eta_nk * t.t_d_nk))
    E_C = cfg.kappa * alloc.f_nk**2
    E_u = cfg.p_u * alloc.zeta_nk * t.t_u_nk
    return EnergyBreakdown(E_d=E_d, E_C_nk=E_C, E_u_nk=E_u)


def _common_slacks(alloc: Allocation, cfg: SystemConfig):
    slacks = {
        "power_dl": 1.0 - alloc.eta_nk.sum(),
        "power_ul": 1.0 - alloc.zeta_nk,
        "nonneg": np.concatenate([alloc.eta_nk, alloc.zeta_nk, alloc.f_nk / cfg.f_max]),
        "f_max": (cfg.f_max - alloc.f_nk) / cfg.f_max,
    }
    scales = {"power_dl": 1.0, "power_ul": 1.0, "nonneg": 1.0, "f_max": 1.0}
    return slacks, scales


def check_async(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> FeasibilityReport:
    """Per-UE deadline plus the single downlink-to-uplink mode switch.

    ``mode_switch`` is ``min_k(t_d + t_C) - max_k t_d``: every UE must still
    be computing when the slowest downlink finishes.
    """
    slacks, scales = _common_slacks(alloc, cfg)
    t = _stage_times(alloc, ch, cfg)
    with np.errstate(invalid="ignore"):
        slacks["deadline"] = np.nan_to_num(cfg.t_qos - t.total_nk, nan=-np.inf)
        mode = np.min(t.t_d_nk + t.t_C_nk) - np.max(t.t_d_nk)
    slacks["mode_switch"] = float(np.nan_to_num(mode, nan=-np.inf))
    scales.update(deadline=cfg.t_qos, mode_switch=cfg.t_qos)
    return FeasibilityReport("async", slacks, scales)


def check_sync(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig) -> FeasibilityReport:
    """Step-by-step deadline: the slowest UE of each stage sets its duration."""
    slacks, scales = _common_slacks(alloc, cfg)
    t = _stage_times(alloc, ch, cfg)
    with np.errstate(invalid="ignore"):
        total = t.t_d_nk.max() + t.t_C_nk.max() + t.t_u_nk.max()
    slacks["deadline"] = float(np.nan_to_num(cfg.t_qos - total, nan=-np.inf))
    scales["deadline"] = cfg.t_qos
    return FeasibilityReport("sync", slacks, scales)


def check(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig, scheme: str) -> FeasibilityReport:
    if scheme == "async":
        return check_async(alloc, ch, cfg)
    if scheme == "sync":
        return check_sync(alloc, ch, cfg)
    raise ValueError(f"unknown scheme {scheme!r}")


def sinr_for_rate(rate, cfg: SystemConfig, link: str):
    return np.exp2(np.asarray(rate, dtype=float) / rate_prefactor(cfg, link)) - 1.0


def eta_for_rates(rate_d, ch: ChannelInstance, cfg: SystemConfig) -> np.ndarray:
    """Smallest downlink coefficients that deliver exactly the requested rates.

    Returns an array with ``inf`` entries when the targets cannot be met at
    any power (interference-limited).
    """
    a, b = downlink_coefficients(ch, cfg)
    g = sinr_for_rate(rate_d, cfg, "d")
    load = np.sum(g * b / a)
    if load >= 1.0:
        return np.full_like(g, np.inf)
    total = np.sum(g / a) / (1.0 - load)
    return g * (b * total + 1.0) / a


def zeta_for_rates(rate_u, ch: ChannelInstance, cfg: SystemConfig) -> np.ndarray:
    """Uplink counterpart of :func:`eta_for_rates`."""
    a, w = uplink_coefficients(ch, cfg)
    g = sinr_for_rate(rate_u, cfg, "u")
    load = np.sum(w * g / a)
    if load >= 1.0:
        return np.full_like(g, np.inf)
    interference = load / (1.0 - load)
    return g * (interference + 1.0) / a


def maxmin_downlink(ch: ChannelInstance, cfg: SystemConfig, budget: float = 1.0) -> np.ndarray:
    """Downlink coefficients equalizing all SINRs with ``sum(eta) = budget``."""
    a, b = downlink_coefficients(ch, cfg)
    gamma = budget / np.sum((b * budget + 1.0) / a)
    return gamma * (b * budget + 1.0) / a


def maxmin_uplink(ch: ChannelInstance, cfg: SystemConfig, cap: float = 1.0) -> np.ndarray:
    """Uplink coefficients equalizing all SINRs with ``max(zeta) = cap``."""
    a, w = uplink_coefficients(ch, cfg)
    s = np.sum(w / a)
    # zeta_k = gamma / (a_k (1 - gamma s)); the weakest UE hits the cap
    a_min = a.min()
    gamma = cap * a_min / (1.0 + cap * a_min * s)
    return gamma / (a * (1.0 - gamma * s))
