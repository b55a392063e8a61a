"""Convex inner approximations used by the SCA subproblems.

The rate constraints get concave quadratic lower bounds in the square-root
power variables ``v = sqrt(eta)``, ``u = sqrt(zeta)``; the four bilinear
constraints get convex quadratic upper bounds from the identity
``xy = ((x + y)^2 - (x - y)^2) / 4`` with the concave square linearized at
the expansion point.

Each bilinear bound takes an optional per-UE ``scale`` ``s``: the pair
``(x, y)`` is replaced by ``(x * s, y / s)`` before bounding, which leaves the
product unchanged. ``scale=None`` is the literal form; the optimizer uses
:func:`balanced_scale` so both factors have equal magnitude at the point,
otherwise a rate of 1e8 bit/s against an energy-per-bit of 1e-10 makes the
bound nearly rigid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .comms import downlink_coefficients, rate_prefactor, uplink_coefficients
from .model import ChannelInstance, SystemConfig


@dataclass(frozen=True, eq=False)
class ExpansionPoint:
    v: np.ndarray
    u: np.ndarray
    f: np.ndarray
    r_d: np.ndarray
    r_u: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    q1: np.ndarray | None = None
    q2: np.ndarray | None = None
    q: float = 0.0

    def __post_init__(self):
        for f_ in fields(self):
            val = getattr(self, f_.name)
            if val is None:
                continue
            arr = np.array(val, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"expansion point has non-finite {f_.name}")
            object.__setattr__(self, f_.name, arr if arr.ndim else float(arr))
        for name in ("v", "u", "f", "r_d", "r_u"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"expansion point has negative {name}")


@dataclass(frozen=True, eq=False)
class AuxFunctionals:
    """Signal amplitudes and interference-plus-noise terms in (v, u).

    ``SINR_d = Upsilon^2 / Pi`` and ``SINR_u = Psi^2 / Xi``.
    """

    sig_d: np.ndarray   # Upsilon_k = sqrt(sig_d_k) * v_k
    intf_d: np.ndarray  # Pi_k = intf_d_k * sum(v^2) + 1
    sig_u: np.ndarray   # Psi_k = sqrt(sig_u_k) * u_k
    intf_u: np.ndarray  # Xi = intf_u . u^2 + 1 (same for every UE)

    @classmethod
    def from_channel(cls, ch: ChannelInstance, cfg: SystemConfig) -> "AuxFunctionals":
        a_d, b_d = downlink_coefficients(ch, cfg)
        a_u, w_u = uplink_coefficients(ch, cfg)
        return cls(a_d, b_d, a_u, w_u)

    def Pi(self, v):
        return self.intf_d * np.sum(np.square(v)) + 1.0

    def Upsilon(self, v):
        return np.sqrt(self.sig_d) * v

    def Xi(self, u):
        return np.full_like(self.sig_u, self.intf_u @ np.square(u) + 1.0)

    def Psi(self, u):
        return np.sqrt(self.sig_u) * u


@dataclass(frozen=True, eq=False)
class RateBound:
    """Per-UE concave quadratic ``const_k + lin_k x_k - sum_j neg_quad[k, j] x_j^2``.

    Values are in bit/s. ``neg_quad`` is elementwise nonnegative, so each row
    is a concave function of the whole power vector.
    """

    const: np.ndarray
    lin: np.ndarray
    neg_quad: np.ndarray

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.const + self.lin * x - self.neg_quad @ np.square(x)

    def quadratic_form(self, k: int):
        """(Q, g, c) with bound_k(x) = 0.5 x'Qx + g'x + c over the full vector."""
        n = len(self.const)
        g = np.zeros(n)
        g[k] = self.lin[k]
        return -2.0 * np.diag(self.neg_quad[k]), g, float(self.const[k])


def _rate_bound(amp_i, intf_i, sig, cross, prefactor) -> RateBound:
    """Lower bound on C*ln(1 + s^2/p) expanded at (amp_i, intf_i).

    ``sig`` maps the power variable to the squared amplitude; ``cross[k, j]``
    is the weight of x_j^2 inside UE k's interference term.
    """
    ratio = amp_i**2 / intf_i
    curv = amp_i**2 / (intf_i * (amp_i**2 + intf_i))
    C = prefactor / np.log(2.0)
    const = C * (np.log1p(ratio) - ratio - curv)
    lin = C * 2.0 * amp_i * np.sqrt(sig) / intf_i
    neg_quad = (C * curv)[:, None] * (np.diag(sig) + cross)
    return RateBound(const, lin, neg_quad)


def rate_dl_bound(point: ExpansionPoint, ch: ChannelInstance, cfg: SystemConfig) -> RateBound:
    aux = AuxFunctionals.from_channel(ch, cfg)
    K = len(aux.sig_d)
    amp = aux.Upsilon(point.v)
    intf = aux.Pi(point.v)
    cross = np.repeat(aux.intf_d[:, None], K, axis=1)
    return _rate_bound(amp, intf, aux.sig_d, cross, rate_prefactor(cfg, "d"))


def rate_ul_bound(point: ExpansionPoint, ch: ChannelInstance, cfg: SystemConfig) -> RateBound:
    aux = AuxFunctionals.from_channel(ch, cfg)
    K = len(aux.sig_u)
    amp = aux.Psi(point.u)
    intf = aux.Xi(point.u)
    cross = np.repeat(aux.intf_u[None, :], K, axis=0)
    return _rate_bound(amp, intf, aux.sig_u, cross, rate_prefactor(cfg, "u"))


def rate_dl_lb(v, point: ExpansionPoint, ch: ChannelInstance, cfg: SystemConfig):
    """Downlink rate lower bound at ``v``; returns (values, RateBound)."""
    bound = rate_dl_bound(point, ch, cfg)
    return bound.value(v), bound


def rate_ul_lb(u, point: ExpansionPoint, ch: ChannelInstance, cfg: SystemConfig):
    bound = rate_ul_bound(point, ch, cfg)
    return bound.value(u), bound


@dataclass(frozen=True, eq=False)
class QuadBound:
    """Batch of small convex quadratics ``0.5 z'Qz + g'z + c`` (one per UE)."""

    Q: np.ndarray  # (K, m, m), PSD
    g: np.ndarray  # (K, m)
    c: np.ndarray  # (K,)

    def value(self, *cols) -> np.ndarray:
        z = np.stack([np.broadcast_to(np.asarray(c_, float), self.c.shape) for c_ in cols], axis=1)
        return 0.5 * np.einsum("ki,kij,kj->k", z, self.Q, z) + np.einsum("ki,ki->k", self.g, z) + self.c


def balanced_scale(x_i, y_i, floor: float = 1e-300) -> np.ndarray:
    """Scale s with x_i * s == y_i / s, so the rescaled factors match at the point."""
    return np.sqrt(np.maximum(y_i, floor) / np.maximum(x_i, floor))


def _scale(s, n):
    return np.ones(n) if s is None else np.broadcast_to(np.asarray(s, float), (n,))


def _product_lower(x_i, y_i, s, extra_sq=None) -> QuadBound:
    """Convex upper bound of ``extra - x*y`` where extra = coefficient * w^2.

    Rows are ordered ``[w, x, y]`` when ``extra_sq`` is given, else ``[x, y]``.
    """
    K = len(x_i)
    p = x_i * s + y_i / s
    lead = 0 if extra_sq is None else 1
    m = lead + 2
    Q = np.zeros((K, m, m))
    g = np.zeros((K, m))
    if extra_sq is not None:
        Q[:, 0, 0] = 2.0 * extra_sq
    Q[:, lead, lead] = 0.5 * s**2
    Q[:, lead + 1, lead + 1] = 0.5 / s**2
    Q[:, lead, lead + 1] = Q[:, lead + 1, lead] = -0.5
    g[:, lead] = -0.5 * p * s
    g[:, lead + 1] = -0.5 * p / s
    return QuadBound(Q, g, 0.25 * p**2)


def _product_upper(x_i, y_i, s, rhs) -> QuadBound:
    """Convex upper bound of ``x*y - rhs``, rows ``[x, y]``."""
    K = len(x_i)
    d = x_i * s - y_i / s
    Q = np.zeros((K, 2, 2))
    Q[:, 0, 0] = 0.5 * s**2
    Q[:, 1, 1] = 0.5 / s**2
    Q[:, 0, 1] = Q[:, 1, 0] = 0.5
    g = np.stack([-0.5 * d * s, 0.5 * d / s], axis=1)
    return QuadBound(Q, g, 0.25 * d**2 - rhs)


def h1_form(point: ExpansionPoint, scale=None) -> QuadBound:
    """Bound on ``v^2 - r_d * omega``; variable order (v, r_d, omega)."""
    K = len(point.v)
    s = _scale(scale, K)
    # x = omega * s, y = r_d / s  ->  reorder columns to (v, r_d, omega)
    qb = _product_lower(point.omega, point.r_d, s, extra_sq=np.ones(K))
    perm = [0, 2, 1]
    return QuadBound(qb.Q[:, perm][:, :, perm], qb.g[:, perm], qb.c)


def h2_form(point: ExpansionPoint, scale=None) -> QuadBound:
    """Bound on ``u^2 - r_u * theta``; variable order (u, r_u, theta)."""
    K = len(point.u)
    s = _scale(scale, K)
    qb = _product_lower(point.theta, point.r_u, s, extra_sq=np.ones(K))
    perm = [0, 2, 1]
    return QuadBound(qb.Q[:, perm][:, :, perm], qb.g[:, perm], qb.c)


def h3_form(point: ExpansionPoint, S_d, scale=None) -> QuadBound:
    """Bound on ``q1 * r_d - S_d``; variable order (q1, r_d)."""
    s = _scale(scale, len(point.q1))
    return _product_upper(point.q1, point.r_d, s, np.asarray(S_d, float))


def h4_form(point: ExpansionPoint, cycles, scale=None) -> QuadBound:
    """Bound on ``q2 * f - L * D * c``; variable order (q2, f)."""
    s = _scale(scale, len(point.q2))
    return _product_upper(point.q2, point.f, s, np.asarray(cycles, float))


def h1(v, r_d, omega, point: ExpansionPoint, scale=None) -> np.ndarray:
    return h1_form(point, scale).value(v, r_d, omega)


def h2(u, r_u, theta, point: ExpansionPoint, scale=None) -> np.ndarray:
    return h2_form(point, scale).value(u, r_u, theta)


def h3(q1, r_d, point: ExpansionPoint, S_d, scale=None) -> np.ndarray:
    return h3_form(point, S_d, scale).value(q1, r_d)


def h4(q2, f, point: ExpansionPoint, cycles, scale=None) -> np.ndarray:
    return h4_form(point, cycles, scale).value(q2, f)
