"""Fixed-rule allocations used as comparison anchors for the optimizer.

Both heuristics split the BS power equally (``eta = 1/K_total``), let every
UE transmit at full power (``zeta = 1``) and spend all remaining time of the
deadline on local computation. They differ only in which delays enter the
frequency rule: the UE's own (async) or the slowest UE's (sync).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import comms
from .comms import Allocation, FeasibilityReport
from .model import ChannelInstance, SystemConfig


@dataclass(frozen=True, eq=False)
class HeuristicResult:
    scheme: str
    allocation: Allocation
    report: FeasibilityReport
    energy: comms.EnergyBreakdown
    # True when the frequency rule asked for more than f_max (or for a
    # nonpositive compute window) and f was clamped to f_max
    flagged: bool
    flagged_ues: tuple = ()

    @property
    def feasible(self) -> bool:
        return self.report.feasible

    @property
    def E_total(self) -> float:
        return self.energy.E_total


def _equal_power(cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    K = cfg.K_total
    return np.full(K, 1.0 / K), np.ones(K)


def _link_delays(ch, cfg, eta, zeta):
    probe = Allocation(eta, zeta, np.full(len(eta), cfg.f_max))
    t = comms.delays(probe, ch, cfg)
    return t.t_d_nk, t.t_u_nk


def _clamped_frequency(cycles, window, f_max):
    """cycles / window, with f_max wherever that is above f_max or the window is not positive."""
    with np.errstate(divide="ignore"):
        f = np.where(window > 0, cycles / np.where(window > 0, window, 1.0), np.inf)
    bad = ~(f <= f_max)
    return np.where(bad, f_max, f), bad


def _result(scheme, alloc, ch, cfg, bad) -> HeuristicResult:
    return HeuristicResult(scheme, alloc, comms.check(alloc, ch, cfg, scheme), comms.energies(alloc, ch, cfg),
                           bool(bad.any()), tuple(int(k) for k in np.flatnonzero(bad)))


def heuristic_async(ch: ChannelInstance, cfg: SystemConfig) -> HeuristicResult:
    """Equal BS power, full UE power, f from each UE's own leftover time."""
    eta, zeta = _equal_power(cfg)
    t_d, t_u = _link_delays(ch, cfg, eta, zeta)
    f, bad = _clamped_frequency(cfg.cycles, cfg.t_qos - t_d - t_u, cfg.f_max)
    return _result("async", Allocation(eta, zeta, f), ch, cfg, bad)


def heuristic_sync(ch: ChannelInstance, cfg: SystemConfig) -> HeuristicResult:
    """As :func:`heuristic_async` but the window uses the slowest downlink and uplink."""
    eta, zeta = _equal_power(cfg)
    t_d, t_u = _link_delays(ch, cfg, eta, zeta)
    window = np.full(cfg.K_total, cfg.t_qos - t_d.max() - t_u.max())
    f, bad = _clamped_frequency(cfg.cycles, window, cfg.f_max)
    return _result("sync", Allocation(eta, zeta, f), ch, cfg, bad)


HEURISTICS = {"async": heuristic_async, "sync": heuristic_sync}
