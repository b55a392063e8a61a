"""Scenario configuration, network geometry and large-scale fading."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised when a SystemConfig violates its invariants."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


NOISE_POWER_W = dbm_to_watt(-92.0)


def _as_tuple(value: Any, length: int, name: str, cast=float) -> tuple:
    if np.isscalar(value):
        return tuple(cast(value) for _ in range(length))
    out = tuple(cast(v) for v in value)
    if len(out) != length:
        raise ConfigError(f"{name} has length {len(out)}, expected {length}")
    return out


@dataclass(frozen=True)
class SystemConfig:
    """All constants of one scenario.

    Per-group quantities (``S_d_n``, ``S_u_n``, ``D_n``) have length ``N``;
    ``c_nk`` has one entry per UE in group-major order. Scalars passed for any
    of these are broadcast. Units are SI: bits, seconds, Watts, Hz, cycles;
    ``area_D`` and the pathloss distances are in km.
    """

    M: int
    N: int
    K_n: tuple[int, ...] | int
    B: float = 20e6
    tau_c: int = 200
    tau_dp: int = 30
    tau_up: int = 30
    p_d: float = 6.0
    p_u: float = 0.2
    p_p: float = 0.2
    N0: float = NOISE_POWER_W
    S_d_n: tuple[float, ...] | float = 1.6e8
    S_u_n: tuple[float, ...] | float = 1.6e8
    D_n: tuple[float, ...] | float = 5e6
    c_nk: tuple[float, ...] | float = 20.0
    L: int = 50
    alpha: float = 5e-30
    f_max: float = 4e9
    t_qos: float = 5.0
    area_D: float = 0.25
    pl0_db: float = -140.6
    pl_exponent: float = 3.67
    shadowing_std_db: float = 4.0
    min_distance_km: float = 0.01

    def __post_init__(self):
        K_n = _as_tuple(self.K_n, self.N, "K_n", int)
        object.__setattr__(self, "K_n", K_n)
        object.__setattr__(self, "M", int(self.M))
        for name in ("S_d_n", "S_u_n", "D_n"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name), self.N, name))
        object.__setattr__(self, "c_nk", _as_tuple(self.c_nk, sum(K_n), "c_nk"))
        self.validate()

    def validate(self) -> None:
        if self.N < 1 or any(k < 1 for k in self.K_n):
            raise ConfigError("need at least one group and one UE per group")
        kt = self.K_total
        if self.M < kt:
            raise ConfigError(f"zero-forcing needs M >= K_total (M={self.M}, K_total={kt})")
        if self.tau_dp < kt or self.tau_up < kt:
            raise ConfigError(f"pilot lengths must be >= K_total={kt}")
        if not (self.tau_dp < self.tau_c and self.tau_up < self.tau_c):
            raise ConfigError("pilot lengths must be shorter than the coherence block")
        positive = dict(
            B=self.B, p_d=self.p_d, p_u=self.p_u, p_p=self.p_p, N0=self.N0, L=self.L,
            alpha=self.alpha, f_max=self.f_max, t_qos=self.t_qos, area_D=self.area_D,
            min_distance_km=self.min_distance_km,
        )
        positive.update({f"S_d_n[{i}]": v for i, v in enumerate(self.S_d_n)})
        positive.update({f"S_u_n[{i}]": v for i, v in enumerate(self.S_u_n)})
        positive.update({f"D_n[{i}]": v for i, v in enumerate(self.D_n)})
        positive.update({f"c_nk[{i}]": v for i, v in enumerate(self.c_nk)})
        bad = [k for k, v in positive.items() if not (np.isfinite(v) and v > 0)]
        if bad:
            raise ConfigError(f"must be strictly positive: {', '.join(bad)}")
        if self.shadowing_std_db < 0:
            raise ConfigError("shadowing_std_db must be nonnegative")
        if self.min_distance_km >= self.area_D / 2:
            raise ConfigError("min_distance_km leaves no room for UEs in the area")

    @property
    def K_total(self) -> int:
        return sum(self.K_n)

    @property
    def group_of_ue(self) -> np.ndarray:
        return np.repeat(np.arange(self.N), self.K_n)

    def per_ue(self, name: str) -> np.ndarray:
        """Expand a per-group field to one entry per UE."""
        return np.asarray(getattr(self, name), dtype=float)[self.group_of_ue]

    @property
    def S_d(self) -> np.ndarray:
        return self.per_ue("S_d_n")

    @property
    def S_u(self) -> np.ndarray:
        return self.per_ue("S_u_n")

    @property
    def cycles(self) -> np.ndarray:
        """L * D_n * c_nk, the CPU cycles each UE spends per FL iteration."""
        return self.L * self.per_ue("D_n") * np.asarray(self.c_nk)

    @property
    def kappa(self) -> np.ndarray:
        """Coefficient of f^2 in the compute energy: L * (alpha/2) * c * D."""
        return self.L * 0.5 * self.alpha * np.asarray(self.c_nk) * self.per_ue("D_n")

    @property
    def powers(self) -> "NormalizedPowers":
        return NormalizedPowers(self.p_d / self.N0, self.p_u / self.N0, self.p_p / self.N0)

    def replace(self, **changes) -> "SystemConfig":
        data = self.to_dict()
        data.update(changes)
        return SystemConfig.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"M", "N", "K_n"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def default_scenario(cls, M: int = 100, N: int = 3, K: int = 10, **overrides) -> "SystemConfig":
        """Default scenario: N equal groups of K UEs, pilots of length N*K."""
        kt = N * K
        params: dict[str, Any] = dict(M=M, N=N, K_n=[K] * N, tau_dp=kt, tau_up=kt)
        params.update(overrides)
        return cls.from_dict(params)


@dataclass(frozen=True)
class NormalizedPowers:
    rho_d: float
    rho_u: float
    rho_p: float


@dataclass(frozen=True, eq=False)
class ChannelInstance:
    positions: np.ndarray  # (K_total, 2), km, BS at the origin
    beta_nk: np.ndarray
    sigma_hat_sq_nk: np.ndarray
    sigma_bar_sq_nk: np.ndarray
    seed: int | None = field(default=None)

    def __post_init__(self):
        for name in ("positions", "beta_nk", "sigma_hat_sq_nk", "sigma_bar_sq_nk"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])

    @classmethod
    def from_beta(cls, beta, cfg: SystemConfig, positions=None) -> "ChannelInstance":
        """Build an instance from given large-scale fading values."""
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (cfg.K_total,):
            raise ConfigError(f"beta must have shape ({cfg.K_total},)")
        rho_p = cfg.powers.rho_p
        if positions is None:
            positions = np.full((cfg.K_total, 2), np.nan)
        return cls(
            positions=positions,
            beta_nk=beta,
            sigma_hat_sq_nk=mmse_variance(beta, cfg.tau_dp, rho_p),
            sigma_bar_sq_nk=mmse_variance(beta, cfg.tau_up, rho_p),
        )


def pathloss_db(distance_km, pl0_db: float = -140.6, exponent: float = 3.67):
    """Log-distance pathloss gain in dB (negative), referenced at 1 km."""
    d = np.asarray(distance_km, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be strictly positive")
    out = pl0_db - 10.0 * exponent * np.log10(d)
    return float(out) if out.ndim == 0 else out


def mmse_variance(beta, tau_p: float, rho_p: float):
    """Variance of the MMSE channel estimate from an orthogonal pilot.

    ``tau_p * rho_p * beta**2 / (tau_p * rho_p * beta + 1)``, always in
    ``[0, beta)``.
    """
    b = np.asarray(beta, dtype=float)
    if np.any(b < 0):
        raise ValueError("beta must be nonnegative")
    if tau_p < 1 or rho_p <= 0:
        raise ValueError("need tau_p >= 1 and rho_p > 0")
    snr = tau_p * rho_p * b
    out = snr * b / (snr + 1.0)
    return float(out) if out.ndim == 0 else out


def sample_positions(rng: np.random.Generator, n: int, side_km: float, min_km: float) -> np.ndarray:
    """Uniform points in a side x side square centred on the BS, outside a small disc."""
    out = np.empty((0, 2))
    while len(out) < n:
        pts = rng.uniform(-side_km / 2, side_km / 2, size=(2 * (n - len(out)) + 4, 2))
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) >= min_km]
        out = np.vstack([out, pts])
    return out[:n]


def generate_network(config: SystemConfig, seed: int) -> ChannelInstance:
    """Draw one scenario realization; identical (config, seed) give identical output."""
    config.validate()
    rng = np.random.default_rng(seed)
    pos = sample_positions(rng, config.K_total, config.area_D, config.min_distance_km)
    d = np.hypot(pos[:, 0], pos[:, 1])
    shadow = config.shadowing_std_db * rng.standard_normal(config.K_total)
    beta_db = pathloss_db(d, config.pl0_db, config.pl_exponent) + shadow
    beta = 10.0 ** (beta_db / 10.0)
    rho_p = config.powers.rho_p
    return ChannelInstance(
        positions=pos,
        beta_nk=beta,
        sigma_hat_sq_nk=mmse_variance(beta, config.tau_dp, rho_p),
        sigma_bar_sq_nk=mmse_variance(beta, config.tau_up, rho_p),
        seed=seed,
    )
