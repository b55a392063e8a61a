"""Successive convex approximation for the async and sync energy problems.

Both schemes optimize the square-root powers ``v``, ``u``, the CPU
frequencies ``f`` and epigraph variables: rates ``r_d``, ``r_u`` and
energy-per-bit proxies ``omega >= eta / r_d``, ``theta >= zeta / r_u``. The
async scheme adds the mode-switch time ``q`` with per-UE splits ``q1``
(downlink part) and ``q2`` (compute part); the sync scheme adds the three
stage durations ``t_d``, ``t_C``, ``t_u``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import comms
from .comms import Allocation, EnergyBreakdown
from .convex_solver import (
    ConvexProgram,
    HyperbolicConstraints,
    InverseSumConstraints,
    LinearConstraints,
    QuadraticConstraints,
    SolverOptions,
    SolverSolution,
    solve,
)
from .model import ChannelInstance, SystemConfig
from .surrogate import (
    ExpansionPoint,
    balanced_scale,
    h1_form,
    h2_form,
    h3_form,
    h4_form,
    rate_dl_bound,
    rate_ul_bound,
)

log = logging.getLogger(__name__)

SCHEMES = ("async", "sync")
PER_UE = {
    "async": ("v", "u", "f", "r_d", "r_u", "omega", "theta", "q1", "q2"),
    "sync": ("v", "u", "f", "r_d", "r_u", "omega", "theta"),
}
SCALARS = {"async": ("q",), "sync": ("t_d", "t_C", "t_u")}


def reported_sync_var_count(K: int) -> int:
    """Sync variable count quoted by the complexity analysis (ours is 7K + 3)."""
    return 6 * K + 3

# relative margin used when building strictly feasible starting points
MARGIN = 1e-3


class InfeasibleStart(RuntimeError):
    """No strictly feasible starting point could be constructed."""


class ScaSolverError(RuntimeError):
    def __init__(self, iteration: int, solution: SolverSolution):
        super().__init__(f"inner solver failed at SCA iteration {iteration}: {solution.status}")
        self.iteration = iteration
        self.solution = solution


@dataclass(frozen=True, eq=False)
class ScaIterate:
    scheme: str
    v: np.ndarray
    u: np.ndarray
    f: np.ndarray
    r_d: np.ndarray
    r_u: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    q1: np.ndarray | None = None
    q2: np.ndarray | None = None
    q: float | None = None
    t_d: float | None = None
    t_C: float | None = None
    t_u: float | None = None

    @property
    def K(self) -> int:
        return len(self.v)

    def to_vector(self) -> np.ndarray:
        parts = [getattr(self, n) for n in PER_UE[self.scheme]]
        parts += [[getattr(self, n)] for n in SCALARS[self.scheme]]
        return np.concatenate([np.asarray(p, float) for p in parts])

    @classmethod
    def from_vector(cls, scheme: str, x: np.ndarray) -> "ScaIterate":
        layout = Layout(scheme, (len(x) - len(SCALARS[scheme])) // len(PER_UE[scheme]))
        kw = {n: x[layout.slice(n)].copy() for n in PER_UE[scheme]}
        kw.update({n: float(x[layout.index(n)]) for n in SCALARS[scheme]})
        return cls(scheme=scheme, **kw)

    def expansion_point(self) -> ExpansionPoint:
        return ExpansionPoint(
            v=self.v, u=self.u, f=self.f, r_d=self.r_d, r_u=self.r_u, omega=self.omega,
            theta=self.theta, q1=self.q1, q2=self.q2, q=self.q or 0.0,
        )

    def surrogate_energy(self, cfg: SystemConfig) -> float:
        """Epigraph objective: BS energy via omega, compute energy, UE uplink via theta."""
        return float(np.sum(cfg.p_d * cfg.S_d * self.omega)
                     + np.sum(cfg.kappa * self.f**2 + cfg.p_u * cfg.S_u * self.theta))


class Layout:
    """Index map of an iterate flattened into the solver's variable vector."""

    def __init__(self, scheme: str, K: int):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.scheme = scheme
        self.K = K
        self.per_ue = PER_UE[scheme]
        self.scalars = SCALARS[scheme]
        self.n_vars = len(self.per_ue) * K + len(self.scalars)

    def slice(self, name: str) -> slice:
        i = self.per_ue.index(name)
        return slice(i * self.K, (i + 1) * self.K)

    def idx(self, name: str) -> np.ndarray:
        return np.arange(self.n_vars)[self.slice(name)]

    def index(self, name: str) -> int:
        return len(self.per_ue) * self.K + self.scalars.index(name)

    def names(self) -> list[str]:
        out = [f"{n}[{k}]" for n in self.per_ue for k in range(self.K)]
        return out + list(self.scalars)


def extract_allocation(iterate: ScaIterate) -> Allocation:
    return Allocation(eta_nk=iterate.v**2, zeta_nk=iterate.u**2, f_nk=iterate.f.copy())


def _scales(it: ScaIterate, cfg: SystemConfig, layout: Layout) -> np.ndarray:
    """Characteristic magnitudes: the current point, floored within each group."""
    x = np.abs(it.to_vector())
    d = np.empty_like(x)
    for name in layout.per_ue:
        sl = layout.slice(name)
        grp = x[sl]
        d[sl] = np.maximum(grp, 1e-3 * max(grp.max(), 1e-300))
    for name in layout.scalars:
        i = layout.index(name)
        d[i] = max(x[i], 1e-3 * cfg.t_qos)
    return np.where(d > 0, d, 1.0)


def _add_common(prog: ConvexProgram, it: ScaIterate, ch: ChannelInstance, cfg: SystemConfig,
                lay: Layout) -> None:
    """Objective plus the families shared by both schemes."""
    K = lay.K
    v, u, f = lay.idx("v"), lay.idx("u"), lay.idx("f")
    r_d, r_u = lay.idx("r_d"), lay.idx("r_u")
    om, th = lay.idx("omega"), lay.idx("theta")

    prog.c[om] = cfg.p_d * cfg.S_d
    prog.c[th] = cfg.p_u * cfg.S_u
    prog.P[f, f] = 2.0 * cfg.kappa

    prog.lb[:] = 0.0
    prog.ub[f] = cfg.f_max

    pt = it.expansion_point()
    # every surrogate is tight at the point, so the row values there are exact
    # and cheap; expanding around it avoids cancelling terms of size ~1e11
    alloc = extract_allocation(it)
    rates = {"dl": comms.rate_downlink(alloc, ch, cfg), "ul": comms.rate_uplink(alloc, ch, cfg)}
    x0 = it.to_vector()
    for link, var, rvar, bound in (("dl", v, r_d, rate_dl_bound(pt, ch, cfg)),
                                   ("ul", u, r_u, rate_ul_bound(pt, ch, cfg))):
        # r_k - bound_k(x) <= 0 over (x_0..x_{K-1}, r_k)
        idx = np.hstack([np.tile(var, (K, 1)), rvar[:, None]])
        Q = np.zeros((K, K + 1, K + 1))
        Q[:, np.arange(K), np.arange(K)] = 2.0 * bound.neg_quad
        g = np.zeros((K, K + 1))
        g[np.arange(K), np.arange(K)] = -bound.lin
        g[:, K] = 1.0
        rows = QuadraticConstraints(idx, Q, g, -bound.const, tag=f"rate_{link}_lb")
        prog.add(rows.recentered(x0[idx], x0[rvar] - rates[link]))

    for tag, form, cols, at_point in (
        ("h1", h1_form(pt, balanced_scale(it.omega, it.r_d)), (v, r_d, om), it.v**2 - it.r_d * it.omega),
        ("h2", h2_form(pt, balanced_scale(it.theta, it.r_u)), (u, r_u, th), it.u**2 - it.r_u * it.theta),
    ):
        idx = np.stack(cols, axis=1)
        rows = QuadraticConstraints(idx, form.Q, form.g, form.c, tag=tag)
        prog.add(rows.recentered(x0[idx], at_point))

    prog.add(QuadraticConstraints(v[None, :], 2.0 * np.eye(K)[None], np.zeros((1, K)), [-1.0],
                                  tag="power_dl"))
    prog.add(QuadraticConstraints(u[:, None], np.full((K, 1, 1), 2.0), np.zeros((K, 1)),
                                  -np.ones(K), tag="power_ul"))


def build_async_subproblem(it: ScaIterate, ch: ChannelInstance, cfg: SystemConfig) -> ConvexProgram:
    K = cfg.K_total
    lay = Layout("async", K)
    prog = ConvexProgram(lay.n_vars, names=lay.names())
    _add_common(prog, it, ch, cfg, lay)
    f, r_d, r_u = lay.idx("f"), lay.idx("r_d"), lay.idx("r_u")
    q1, q2, q = lay.idx("q1"), lay.idx("q2"), lay.index("q")
    pt = it.expansion_point()

    prog.add(InverseSumConstraints(np.stack([r_d, f, r_u], axis=1),
                                   np.stack([cfg.S_d, cfg.cycles, cfg.S_u], axis=1),
                                   np.full(K, cfg.t_qos), tag="deadline"))
    prog.add(HyperbolicConstraints(r_d, np.full(K, q), cfg.S_d, tag="switch_after_downlink"))
    A = np.zeros((K, lay.n_vars))
    A[np.arange(K), q] = 1.0
    A[np.arange(K), q1] = -1.0
    A[np.arange(K), q2] = -1.0
    prog.add(LinearConstraints(A, np.zeros(K), tag="switch_split"))
    x0 = it.to_vector()
    for tag, form, cols, at_point in (
        ("h3", h3_form(pt, cfg.S_d, balanced_scale(it.q1, it.r_d)), (q1, r_d), it.q1 * it.r_d - cfg.S_d),
        ("h4", h4_form(pt, cfg.cycles, balanced_scale(it.q2, it.f)), (q2, f), it.q2 * it.f - cfg.cycles),
    ):
        idx = np.stack(cols, axis=1)
        rows = QuadraticConstraints(idx, form.Q, form.g, form.c, tag=tag)
        prog.add(rows.recentered(x0[idx], at_point))
    prog.scale = _scales(it, cfg, lay)
    return prog


def build_sync_subproblem(it: ScaIterate, ch: ChannelInstance, cfg: SystemConfig) -> ConvexProgram:
    K = cfg.K_total
    lay = Layout("sync", K)
    prog = ConvexProgram(lay.n_vars, names=lay.names())
    _add_common(prog, it, ch, cfg, lay)
    log.debug("sync subproblem: %d variables (complexity analysis lists %d)",
              lay.n_vars, reported_sync_var_count(K))
    f, r_d, r_u = lay.idx("f"), lay.idx("r_d"), lay.idx("r_u")
    td, tc, tu = lay.index("t_d"), lay.index("t_C"), lay.index("t_u")
    A = np.zeros((1, lay.n_vars))
    A[0, [td, tc, tu]] = 1.0
    prog.add(LinearConstraints(A, [cfg.t_qos], tag="deadline"))
    for tag, var, a, t in (("stage_downlink", r_d, cfg.S_d, td),
                           ("stage_compute", f, cfg.cycles, tc),
                           ("stage_uplink", r_u, cfg.S_u, tu)):
        prog.add(InverseSumConstraints(var[:, None], a[:, None], np.zeros(K),
                                       lin_idx=np.full((K, 1), t), lin_coef=-np.ones((K, 1)), tag=tag))
    prog.scale = _scales(it, cfg, lay)
    return prog


def build_subproblem(it: ScaIterate, ch: ChannelInstance, cfg: SystemConfig) -> ConvexProgram:
    if it.scheme == "async":
        return build_async_subproblem(it, ch, cfg)
    return build_sync_subproblem(it, ch, cfg)


def iterate_from_allocation(alloc: Allocation, ch: ChannelInstance, cfg: SystemConfig, scheme: str,
                            margin: float = MARGIN) -> ScaIterate:
    """Auxiliary variables around a physical allocation, with strict slack.

    Rates sit a relative ``margin`` below the achievable ones and the energy
    proxies a ``margin`` above their floors. The caller is responsible for
    the allocation meeting the deadline with room for those margins.
    """
    r_d = comms.rate_downlink(alloc, ch, cfg) * (1 - margin)
    r_u = comms.rate_uplink(alloc, ch, cfg) * (1 - margin)
    eta, zeta, f = alloc.eta_nk, alloc.zeta_nk, alloc.f_nk
    common = dict(
        v=np.sqrt(eta), u=np.sqrt(zeta), f=f.copy(), r_d=r_d, r_u=r_u,
        omega=eta / r_d * (1 + margin), theta=zeta / r_u * (1 + margin),
    )
    t_d, t_C, t_u = cfg.S_d / r_d, cfg.cycles / f, cfg.S_u / r_u
    if scheme == "async":
        q1 = t_d * (1 - margin)
        q2 = t_C * (1 - margin)
        q = 0.5 * (t_d.max() + np.min(q1 + q2))
        return ScaIterate("async", q1=q1, q2=q2, q=float(q), **common)
    T_d, T_C, T_u = t_d.max(), t_C.max(), t_u.max()
    # keep a sliver of the spare time unassigned so the deadline is strict too
    spare = (cfg.t_qos - T_d - T_C - T_u) * (1 - margin)
    return ScaIterate("sync", t_d=T_d + spare / 3, t_C=T_C + spare / 3, t_u=T_u + spare / 3, **common)


def _frequencies_for(eta, zeta, ch, cfg, scheme, margin=MARGIN):
    """CPU frequencies making the deadline hold with margin at given powers, or None."""
    probe = Allocation(eta, zeta, np.full(len(eta), cfg.f_max))
    r_d = comms.rate_downlink(probe, ch, cfg) * (1 - margin)
    r_u = comms.rate_uplink(probe, ch, cfg) * (1 - margin)
    if np.any(r_d <= 0) or np.any(r_u <= 0):
        return None
    t_d, t_u = cfg.S_d / r_d, cfg.S_u / r_u
    budget = cfg.t_qos * (1 - margin)
    t_min = cfg.cycles / (cfg.f_max * (1 - margin))
    if scheme == "async":
        hi = budget - t_d - t_u
        lo = np.maximum(t_d.max() - t_d, t_min)
        # mode switch needs t_C comfortably above (max t_d - t_d)
        lo = lo + margin * cfg.t_qos
    else:
        hi = np.full_like(t_d, budget - t_d.max() - t_u.max())
        lo = t_min
    if np.any(hi <= lo):
        return None
    t_C = hi - margin * (hi - lo)
    if scheme == "sync":
        t_C = np.full_like(t_C, t_C.min())
    return cfg.cycles / t_C


def _strict_iterate(eta, zeta, ch, cfg, scheme) -> ScaIterate | None:
    f = _frequencies_for(eta, zeta, ch, cfg, scheme)
    if f is None:
        return None
    it = iterate_from_allocation(Allocation(eta, zeta, f), ch, cfg, scheme)
    prog = build_subproblem(it, ch, cfg)
    return it if prog.strictly_feasible(it.to_vector()) else None


def candidate_powers(ch: ChannelInstance, cfg: SystemConfig) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Power profiles tried for the initial point, in order of preference."""
    K = cfg.K_total
    top = 1 - MARGIN
    return [
        ("heuristic", np.full(K, top / K), np.full(K, top)),
        ("maxmin", comms.maxmin_downlink(ch, cfg, top), comms.maxmin_uplink(ch, cfg, top)),
    ]


def initial_point(ch: ChannelInstance, cfg: SystemConfig, scheme: str,
                  rng: np.random.Generator | None = None, start: int = 0) -> ScaIterate:
    """Strictly feasible starting iterate.

    Starts from the heuristic power split and falls back to max-min fair
    powers. ``start > 0`` jitters the powers of the first feasible profile by
    up to 10% and, if that breaks the deadline, bisects back toward it.
    """
    base = None
    for name, eta, zeta in candidate_powers(ch, cfg):
        it = _strict_iterate(eta, zeta, ch, cfg, scheme)
        if it is not None:
            base = (name, eta, zeta, it)
            break
    if base is None:
        raise InfeasibleStart("no power profile meets the deadline even at f_max")
    _, eta0, zeta0, it0 = base
    if start == 0:
        return it0
    rng = rng or np.random.default_rng(start)
    K = cfg.K_total
    top = 1 - MARGIN
    eta_j = eta0 * rng.uniform(0.9, 1.1, K)
    eta_j *= min(1.0, top / eta_j.sum())
    zeta_j = np.minimum(zeta0 * rng.uniform(0.9, 1.1, K), top)
    lam_ok, lam_bad = 0.0, 1.0
    best = it0
    for _ in range(30):
        lam = lam_bad if lam_ok == 0.0 and lam_bad == 1.0 else 0.5 * (lam_ok + lam_bad)
        it = _strict_iterate(eta0 + lam * (eta_j - eta0), zeta0 + lam * (zeta_j - zeta0), ch, cfg, scheme)
        if it is not None:
            best, lam_ok = it, lam
            if lam == 1.0:
                break
        else:
            lam_bad = lam
        if lam_bad - lam_ok < 1e-3:
            break
    return best


@dataclass
class ScaOptions:
    epsilon: float = 1e-4
    max_outer_iters: int = 50
    restarts: int = 3
    # extrapolate along each SCA step and keep the result when it is better
    extrapolate: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iters < 1 or self.restarts < 1:
            raise ValueError("max_outer_iters and restarts must be >= 1")


@dataclass
class ScaResult:
    scheme: str
    allocation: Allocation | None
    energy: EnergyBreakdown | None
    objective_trace: list
    status: str  # converged | iter-limit | infeasible-start | solver-failure
    kkt_residual: float = np.nan
    iterate: ScaIterate | None = None
    iterations: int = 0
    restarts_run: int = 0
    slater_slack: float = np.nan
    extrapolated: int = 0
    message: str = ""

    @property
    def E_total(self) -> float:
        return self.energy.E_total if self.energy is not None else np.nan


def rate_matched(it: ScaIterate, ch: ChannelInstance, cfg: SystemConfig) -> Allocation:
    """Lowest powers that deliver exactly the iterate's rates ``r_d``, ``r_u``."""
    eta = comms.eta_for_rates(it.r_d, ch, cfg)
    zeta = comms.zeta_for_rates(it.r_u, ch, cfg)
    return Allocation(np.minimum(eta, it.v**2), np.minimum(zeta, it.u**2), it.f)


# margin for iterates rebuilt from an allocation during the SCA loop; only
# strictness matters there, so it can be far smaller than MARGIN
POLISH_MARGIN = 1e-6


def polished_iterate(eta, zeta, ch: ChannelInstance, cfg: SystemConfig, scheme: str,
                     margin: float = POLISH_MARGIN) -> ScaIterate | None:
    """Strictly feasible iterate for given powers with the cheapest frequencies.

    Powers are clipped into the boxes. In the sync scheme every UE is then
    slowed to the stage bottleneck (its own minimal power for the slowest
    UE's rate), since finishing early saves nothing. Frequencies are the
    smallest that meet the deadline and the mode switch.
    """
    top = 1.0 - margin
    eta, zeta = np.asarray(eta, float), np.asarray(zeta, float)
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(zeta)) and np.all(eta > 0) and np.all(zeta > 0)):
        return None
    eta = eta * min(1.0, top / np.sum(eta))
    zeta = np.minimum(zeta, top)
    if scheme == "sync":
        probe = Allocation(eta, zeta, np.ones_like(eta))
        with np.errstate(divide="ignore"):
            T_d = np.max(cfg.S_d / comms.rate_downlink(probe, ch, cfg))
            T_u = np.max(cfg.S_u / comms.rate_uplink(probe, ch, cfg))
        if not (np.isfinite(T_d) and np.isfinite(T_u)):
            return None
        eta_m = comms.eta_for_rates(cfg.S_d / T_d, ch, cfg)
        zeta_m = comms.zeta_for_rates(cfg.S_u / T_u, ch, cfg)
        if np.all(np.isfinite(eta_m)) and np.all(np.isfinite(zeta_m)):
            eta, zeta = np.minimum(eta, eta_m), np.minimum(zeta, zeta_m)
    f = _frequencies_for(eta, zeta, ch, cfg, scheme, margin=margin)
    if f is None or np.any(f > cfg.f_max * (1 - margin)):
        return None
    it = iterate_from_allocation(Allocation(eta, zeta, f), ch, cfg, scheme, margin=margin)
    return it if build_subproblem(it, ch, cfg).strictly_feasible(it.to_vector()) else None


# per-UE extrapolation factors tried in the async scheme
PER_UE_LADDER = np.concatenate([[0.0], 2.0 ** np.arange(-1.0, 16.25, 0.5)])


def _async_ue_energy(eta, zeta, ch: ChannelInstance, cfg: SystemConfig,
                     margin: float = POLISH_MARGIN) -> np.ndarray:
    """Per-UE energy with each UE's cheapest deadline-meeting frequency (inf if none)."""
    if np.sum(eta) >= 1.0:
        return np.full(len(eta), np.inf)
    probe = Allocation(eta, np.minimum(zeta, 1.0 - margin), np.ones_like(eta))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_d = cfg.S_d / comms.rate_downlink(probe, ch, cfg)
        t_u = cfg.S_u / comms.rate_uplink(probe, ch, cfg)
        t_C = cfg.t_qos * (1.0 - margin) - t_d - t_u
        ok = np.isfinite(t_C) & (t_C > cfg.cycles / cfg.f_max)
        f = cfg.cycles / np.where(ok, t_C, 1.0)
        e = cfg.p_d * eta * t_d + cfg.kappa * f**2 + cfg.p_u * probe.zeta_nk * t_u
    return np.where(ok, e, np.inf)


def extrapolate(prev: ScaIterate, new: ScaIterate, ch: ChannelInstance, cfg: SystemConfig,
                max_factor: float = 65536.0) -> tuple[ScaIterate, float]:
    """Push the powers further along the last SCA move, in log space.

    The surrogates are tight only near the expansion point, so at high SINR
    each SCA step shrinks the powers by a nearly constant ratio. Candidates
    ``new * (new / prev) ** g`` for g = 0, 1, 2, 4, ... are rebuilt with
    :func:`polished_iterate` and the doubling stops at the first one that is
    infeasible or not cheaper. In the async scheme the energy separates over
    UEs once the interference is fixed, so each UE also gets its own factor
    from :data:`PER_UE_LADDER`. Returns (best iterate, its objective);
    ``new`` itself when nothing beats it.
    """
    best, best_e = new, new.surrogate_energy(cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        step_eta = np.nan_to_num(np.log(new.v**2 / prev.v**2))
        step_zeta = np.nan_to_num(np.log(new.u**2 / prev.u**2))
    with np.errstate(over="ignore", under="ignore"):
        best, best_e = _extrapolate(new, best, best_e, step_eta, step_zeta, ch, cfg, max_factor)
    return best, best_e


def _extrapolate(new, best, best_e, step_eta, step_zeta, ch, cfg, max_factor):
    g = 0.0
    while g <= max_factor:
        cand = polished_iterate(new.v**2 * np.exp(g * step_eta), new.u**2 * np.exp(g * step_zeta),
                                ch, cfg, new.scheme)
        if cand is None:
            break
        e = cand.surrogate_energy(cfg)
        if e >= best_e:
            break
        best, best_e = cand, e
        g = max(2.0 * g, 1.0)
    if new.scheme == "async":
        ladder = PER_UE_LADDER[PER_UE_LADDER <= max_factor]
        table = np.array([_async_ue_energy(new.v**2 * np.exp(g * step_eta), new.u**2 * np.exp(g * step_zeta),
                                           ch, cfg) for g in ladder])
        g_k = ladder[np.argmin(table, axis=0)]
        cand = polished_iterate(new.v**2 * np.exp(g_k * step_eta), new.u**2 * np.exp(g_k * step_zeta),
                                ch, cfg, "async")
        if cand is not None and cand.surrogate_energy(cfg) < best_e:
            best, best_e = cand, cand.surrogate_energy(cfg)
    return best, best_e


def sca_run(start: ScaIterate, ch: ChannelInstance, cfg: SystemConfig,
            opts: ScaOptions | None = None) -> ScaResult:
    """Algorithm loop from one starting iterate.

    Each iteration solves the convex subproblem at the current point; with
    ``opts.extrapolate`` the solution may then be replaced by a cheaper
    extrapolated iterate. Stops once an iteration lowers the objective by
    less than ``epsilon`` relative.
    """
    opts = opts or ScaOptions()
    scheme = start.scheme
    it = start
    trace = [it.surrogate_energy(cfg)]
    status = "iter-limit"
    sol = None
    n_extra = 0
    first = build_subproblem(it, ch, cfg)
    slater = float(np.min(-first.all_values(it.to_vector()) / np.maximum(first.scale.max(), 1.0)))
    for i in range(1, opts.max_outer_iters + 1):
        prog = first if i == 1 else build_subproblem(it, ch, cfg)
        sol = solve(prog, it.to_vector(), options=opts.solver)
        if sol.status == "numerical_failure" and max(sol.kkt) > 1e3 * opts.solver.tol:
            raise ScaSolverError(i, sol)
        new = ScaIterate.from_vector(scheme, sol.x)
        energy = new.surrogate_energy(cfg)
        if opts.extrapolate:
            new_x, energy_x = extrapolate(it, new, ch, cfg)
            if new_x is not new:
                n_extra += 1
                new, energy = new_x, energy_x
        # the solver never returns a point worse than its start; guard rounding
        if energy > trace[-1]:
            new, energy = it, trace[-1]
        it = new
        trace.append(energy)
        if (trace[-2] - trace[-1]) <= opts.epsilon * abs(trace[-2]):
            status = "converged"
            break
    alloc = extract_allocation(it)
    if not comms.check(alloc, ch, cfg, scheme):
        # the rate bounds are tight only at the point; deliver exactly r instead
        alloc = rate_matched(it, ch, cfg)
    return ScaResult(
        scheme=scheme, allocation=alloc, energy=comms.energies(alloc, ch, cfg),
        objective_trace=trace, status=status, kkt_residual=sol.kkt_max if sol else np.nan,
        iterate=it, iterations=len(trace) - 1, slater_slack=slater, extrapolated=n_extra,
    )


def sca_solve(ch: ChannelInstance, cfg: SystemConfig, scheme: str, opts: ScaOptions | None = None,
              seed: int = 0) -> ScaResult:
    """Multi-start SCA; keeps the lowest-energy feasible run."""
    opts = opts or ScaOptions()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    try:
        starts = [initial_point(ch, cfg, scheme)]
    except InfeasibleStart as exc:
        return ScaResult(scheme, None, None, [], "infeasible-start", message=str(exc))
    for s in range(1, opts.restarts):
        starts.append(initial_point(ch, cfg, scheme, rng=rng, start=s))
    best = None
    for start in starts:
        res = sca_run(start, ch, cfg, opts)
        if not comms.check(res.allocation, ch, cfg, scheme):
            continue
        if best is None or res.E_total < best.E_total:
            best = res
    if best is None:
        return ScaResult(scheme, None, None, [], "solver-failure", message="no feasible run")
    best.restarts_run = len(starts)
    return best
