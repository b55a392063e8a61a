"""Monte Carlo experiments, a brute-force oracle for tiny instances, and the CLI.

Every trial draws one network per sweep value from a trial-specific seed and
runs all requested schemes on it, so comparisons between schemes are paired.
Rows are written in (trial, sweep value, scheme) order whatever the worker
count, and numbers are formatted with a fixed precision, so the same spec
and seed reproduce the CSV byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import comms
from .baselines import HEURISTICS
from .comms import Allocation
from .model import ChannelInstance, ConfigError, SystemConfig, generate_network
from .optimizer import ScaOptions, ScaSolverError, sca_solve

log = logging.getLogger(__name__)

SCHEME_NAMES = ("opt_async", "opt_sync", "heur_async", "heur_sync")
SWEEP_AXES = ("M", "K")
# statuses whose energies enter the summary statistics
OK_STATUSES = ("converged", "iter-limit", "feasible")
SOLVER_ERROR = "solver-error"


@dataclass
class ExperimentSpec:
    base: SystemConfig
    sweep_axis: str | None = None   # "M" or "K" (UEs per group); None runs the base config only
    sweep_values: tuple = ()
    schemes: tuple = SCHEME_NAMES
    trials: int = 50
    seed: int = 0
    out: str | None = None
    restarts: int = 3
    epsilon: float = 1e-4
    max_outer_iters: int = 50
    workers: int = 1
    # wall-clock times differ between runs; off by default so the CSV is reproducible
    record_wall_time: bool = False

    def __post_init__(self):
        self.schemes = tuple(self.schemes)
        self.sweep_values = tuple(int(v) for v in self.sweep_values)
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        unknown = set(self.schemes) - set(SCHEME_NAMES)
        if unknown or not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {SCHEME_NAMES}, got {self.schemes}")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
            if not self.sweep_values:
                raise ConfigError("sweep needs at least one value")
        for value in self.values():
            self.config_for(value)  # raises ConfigError, e.g. when M < K_total
        ScaOptions(epsilon=self.epsilon, max_outer_iters=self.max_outer_iters, restarts=self.restarts)

    def values(self) -> tuple:
        return self.sweep_values if self.sweep_axis else (None,)

    def config_for(self, value) -> SystemConfig:
        """Config of one sweep point. Pilot lengths follow N * K in a K sweep."""
        cfg = self.base
        try:
            if self.sweep_axis == "M":
                return cfg.replace(M=value)
            if self.sweep_axis == "K":
                kt = cfg.N * value
                return cfg.replace(K_n=[value] * cfg.N, tau_dp=kt, tau_up=kt,
                                   c_nk=_resize_per_ue(cfg.c_nk, kt))
        except (ConfigError, ValueError) as exc:
            raise ConfigError(f"sweep {self.sweep_axis}={value}: {exc}") from exc
        return cfg

    def sca_options(self) -> ScaOptions:
        return ScaOptions(epsilon=self.epsilon, max_outer_iters=self.max_outer_iters, restarts=self.restarts)


def _resize_per_ue(values, n):
    vals = tuple(values)
    if len(set(vals)) == 1:
        return vals[0]
    raise ConfigError("a K sweep needs a uniform c_nk")


@dataclass
class ResultRow:
    trial: int
    seed: int
    scheme: str
    M: int
    N: int
    K: int
    E_total: float
    E_d: float
    sum_E_C: float
    sum_E_u: float
    sca_iterations: int | None
    status: str
    wall_time: float | None


CSV_FIELDS = tuple(f.name for f in fields(ResultRow))


def trial_seed(master: int, trial: int) -> int:
    """Independent 32-bit stream for one trial, shared by all its schemes."""
    return int(np.random.SeedSequence([master, trial]).generate_state(1)[0])


def _row(trial, seed, scheme, cfg, energy, iters, status, wall) -> ResultRow:
    nan = float("nan")
    if energy is None:
        e = (nan, nan, nan, nan)
    else:
        e = (energy.E_total, energy.E_d, float(energy.E_C_nk.sum()), float(energy.E_u_nk.sum()))
    K = cfg.K_n[0] if len(set(cfg.K_n)) == 1 else cfg.K_total
    return ResultRow(trial, seed, scheme, cfg.M, cfg.N, K, *e, iters, status, wall)


def run_scheme(scheme: str, ch: ChannelInstance, cfg: SystemConfig, opts: ScaOptions,
               trial: int = 0, seed: int = 0) -> ResultRow:
    """One scheme on one instance; failures become a status, never an exception."""
    start = time.perf_counter()
    kind, link = scheme.split("_")
    if kind == "heur":
        res = HEURISTICS[link](ch, cfg)
        status = "feasible" if res.feasible and not res.flagged else "infeasible"
        return _row(trial, seed, scheme, cfg, res.energy, None, status, time.perf_counter() - start)
    try:
        res = sca_solve(ch, cfg, link, opts, seed=seed)
    except ScaSolverError as exc:
        log.warning("trial %d %s: %s", trial, scheme, exc)
        return _row(trial, seed, scheme, cfg, None, exc.iteration, SOLVER_ERROR, time.perf_counter() - start)
    return _row(trial, seed, scheme, cfg, res.energy, res.iterations, res.status, time.perf_counter() - start)


def _run_trial(args) -> list[ResultRow]:
    spec, trial = args
    seed = trial_seed(spec.seed, trial)
    rows = []
    for value in spec.values():
        cfg = spec.config_for(value)
        ch = generate_network(cfg, seed)
        for scheme in spec.schemes:
            row = run_scheme(scheme, ch, cfg, spec.sca_options(), trial, seed)
            if not spec.record_wall_time:
                row.wall_time = None
            rows.append(row)
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".10g")
    return str(value)


def write_csv(rows, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_FIELDS])


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """All trials of ``spec``; writes ``spec.out`` when set."""
    spec.validate()
    out = Path(spec.out) if spec.out else None
    if out is not None and not out.parent.exists():
        raise ConfigError(f"output directory {out.parent} does not exist")
    work = [(spec, t) for t in range(spec.trials)]
    if spec.workers == 1:
        chunks = [_run_trial(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_run_trial, work))  # map keeps trial order
    rows = [r for chunk in chunks for r in chunk]
    if out is not None:
        buf = io.StringIO()
        write_csv(rows, buf)
        try:
            out.write_text(buf.getvalue())
        except OSError as exc:
            raise ConfigError(f"cannot write {out}: {exc}") from exc
    return rows


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ConfigError(f"{path}: header does not match {CSV_FIELDS}")
        return list(reader)


# pairs (baseline, candidate) reported as percentage reductions
REDUCTION_PAIRS = (("heur_async", "opt_async"), ("heur_sync", "opt_sync"), ("opt_sync", "opt_async"))


@dataclass
class SchemeStats:
    scheme: str
    M: int
    K: int
    n: int
    n_failed: int
    mean: float
    stderr: float


@dataclass
class Reduction:
    baseline: str
    candidate: str
    M: int
    K: int
    n_pairs: int
    mean_pct: float
    stderr_pct: float
    min_pct: float
    max_pct: float
    frac_not_worse: float


@dataclass
class Summary:
    stats: list = field(default_factory=list)
    reductions: list = field(default_factory=list)

    def format(self) -> str:
        out = io.StringIO()
        out.write("scheme      M    K    n  failed  mean_E[J]     stderr\n")
        for s in self.stats:
            out.write(f"{s.scheme:<10} {s.M:>4} {s.K:>4} {s.n:>4} {s.n_failed:>6}  {s.mean:<10.5g} {s.stderr:.3g}\n")
        out.write("\nbaseline -> candidate       M    K  pairs  mean_red%  stderr  min%    max%    not_worse\n")
        for r in self.reductions:
            out.write(f"{r.baseline + ' -> ' + r.candidate:<25} {r.M:>4} {r.K:>4} {r.n_pairs:>5}  "
                      f"{r.mean_pct:>8.2f}  {r.stderr_pct:>6.2f}  {r.min_pct:>6.2f}  {r.max_pct:>6.2f}  "
                      f"{r.frac_not_worse:.3f}\n")
        return out.getvalue()


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(np.mean(x)), se


def summarize(rows) -> Summary:
    """Mean and standard error per (scheme, M, K), plus paired reductions.

    ``rows`` is a CSV path or a list of dicts/ResultRows. Only rows with an
    OK status enter the statistics; a reduction pair needs both schemes OK on
    the same (trial, M, K).
    """
    if isinstance(rows, (str, Path)):
        rows = read_csv(rows)
    recs = [asdict(r) if isinstance(r, ResultRow) else dict(r) for r in rows]
    energy: dict = {}
    failed: dict = {}
    for r in recs:
        key = (r["scheme"], int(r["M"]), int(r["K"]))
        if r["status"] in OK_STATUSES:
            energy.setdefault(key, {})[int(r["trial"])] = float(r["E_total"])
        else:
            failed[key] = failed.get(key, 0) + 1
    summary = Summary()
    keys = sorted(set(energy) | set(failed), key=lambda k: (k[1], k[2], SCHEME_NAMES.index(k[0])
                                                           if k[0] in SCHEME_NAMES else 99, k[0]))
    for key in keys:
        vals = list(energy.get(key, {}).values())
        mean, se = _mean_se(vals)
        summary.stats.append(SchemeStats(key[0], key[1], key[2], len(vals), failed.get(key, 0), mean, se))
    points = sorted({(k[1], k[2]) for k in keys})
    for base, cand in REDUCTION_PAIRS:
        for M, K in points:
            b, c = energy.get((base, M, K)), energy.get((cand, M, K))
            if not b or not c:
                continue
            trials = sorted(set(b) & set(c))
            if not trials:
                continue
            pct = np.array([(b[t] - c[t]) / b[t] * 100.0 for t in trials])
            mean, se = _mean_se(pct)
            summary.reductions.append(Reduction(base, cand, M, K, len(trials), mean, se, float(pct.min()),
                                                float(pct.max()), float(np.mean(pct >= 0))))
    return summary


# ---------------------------------------------------------------- oracle


@dataclass
class OracleResult:
    E_total: float
    allocation: Allocation | None
    error_bound: float    # spread of the objective over the final grid cell
    evaluations: int


def _cheapest_frequencies(eta, zeta, ch, cfg, scheme):
    """Smallest f meeting the deadline (and mode switch), per grid point; nan where none.

    ``eta``/``zeta`` have shape (P, K). E_C grows with f, so the smallest
    feasible frequency is optimal for fixed powers.
    """
    a_d, b_d = comms.downlink_coefficients(ch, cfg)
    a_u, w_u = comms.uplink_coefficients(ch, cfg)
    with np.errstate(divide="ignore"):
        r_d = comms.rate_prefactor(cfg, "d") * np.log2(1 + a_d * eta / (eta.sum(1, keepdims=True) * b_d + 1))
        r_u = comms.rate_prefactor(cfg, "u") * np.log2(1 + a_u * zeta / ((zeta @ w_u)[:, None] + 1))
        t_d, t_u = cfg.S_d / r_d, cfg.S_u / r_u
    if scheme == "async":
        window = cfg.t_qos - t_d - t_u
        # mode switch: t_d + t_C >= max t_d, i.e. t_qos - t_u >= max t_d at this window
        ok = (cfg.t_qos - t_u) >= t_d.max(1, keepdims=True)
    else:
        window = np.repeat(cfg.t_qos - t_d.max(1, keepdims=True) - t_u.max(1, keepdims=True), eta.shape[1], 1)
        ok = np.ones_like(window, bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = cfg.cycles / window
    ok &= (window > 0) & (f <= cfg.f_max) & np.isfinite(t_d) & np.isfinite(t_u)
    return np.where(ok, f, np.nan), t_d, t_u


def _grid_energy(eta, zeta, f, ch, cfg, scheme):
    """Exact energies at grid points (P, K); inf where infeasible.

    ``f`` None means the cheapest feasible frequency; otherwise f has shape
    (P, K) and the deadline, mode switch and f_max are checked directly.
    """
    f_best, t_d, t_u = _cheapest_frequencies(eta, zeta, ch, cfg, scheme)
    if f is None:
        f = f_best
    else:
        tol = comms.FEAS_RTOL * cfg.t_qos
        with np.errstate(divide="ignore"):
            t_C = cfg.cycles / f
        if scheme == "async":
            ok = np.all(t_d + t_C + t_u <= cfg.t_qos + tol, axis=1)
            ok &= np.min(t_d + t_C, axis=1) >= np.max(t_d, axis=1) - tol
        else:
            ok = t_d.max(1) + t_C.max(1) + t_u.max(1) <= cfg.t_qos + tol
        ok &= np.all((f > 0) & (f <= cfg.f_max), axis=1)
        f = np.where(ok[:, None], f, np.nan)
    power_ok = (eta.sum(1) <= 1.0) & np.all(zeta <= 1.0, axis=1)
    with np.errstate(invalid="ignore"):
        E = np.sum(cfg.p_d * eta * t_d + cfg.kappa * f**2 + cfg.p_u * zeta * t_u, axis=1)
    return np.where(power_ok & np.all(np.isfinite(f), axis=1), E, np.inf), f


def grid_oracle(ch: ChannelInstance, cfg: SystemConfig, scheme: str, resolution: int = 17,
                refinements: int = 3, grids: dict | None = None, min_power: float = 1e-6) -> OracleResult:
    """Exhaustive search over per-UE power grids for K_total <= 2.

    Powers are searched on log-spaced grids over [min_power, 1] per UE. By
    default the frequencies are not gridded: for fixed powers the cheapest
    deadline-meeting f is optimal and is computed exactly. ``grids`` may fix
    explicit 1-D value lists for "eta", "zeta" and/or "f" (shared by all UEs);
    fixed lists are not refined. Each refinement pass re-grids half the
    previous span around the incumbent. The returned error bound is the
    objective spread over the final cell around the incumbent.
    """
    K = cfg.K_total
    if K > 2:
        raise ValueError(f"grid oracle supports K_total <= 2, got {K}")
    if scheme not in ("async", "sync"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if resolution < 3:
        raise ValueError("resolution must be >= 3")
    grids = dict(grids or {})
    names = ["eta", "zeta"] + (["f"] if "f" in grids else [])
    fixed = {n: np.asarray(grids[n], float) for n in names if n in grids}
    # log-space bounds per dimension; entries are None for fixed lists
    span = {n: (np.log(min_power), 0.0) for n in ("eta", "zeta") if n not in fixed}
    evaluations = 0
    best = None
    centre = None
    for level in range(refinements + 1):
        axes = []
        for n in names:
            if n in fixed:
                axes.append([fixed[n]] * K)
                continue
            lo, hi = span[n]
            if centre is not None:
                half = (hi - lo) / 4.0 * 2.0 ** -(level - 1)
                axes.append([np.exp(np.linspace(max(lo, c - half), min(hi, c + half), resolution))
                             for c in centre[n]])
            else:
                axes.append([np.exp(np.linspace(lo, hi, resolution))] * K)
        flat = [ax for per_ue in axes for ax in per_ue]
        mesh = np.stack(np.meshgrid(*flat, indexing="ij"), -1).reshape(-1, len(flat))
        cols = {n: mesh[:, i * K:(i + 1) * K] for i, n in enumerate(names)}
        E, f = _grid_energy(cols["eta"], cols["zeta"], cols.get("f"), ch, cfg, scheme)
        evaluations += len(E)
        i = int(np.argmin(E))
        if not np.isfinite(E[i]):
            if best is None:
                return OracleResult(np.inf, None, np.nan, evaluations)
            break
        if best is None or E[i] <= best[0]:
            best = (float(E[i]), cols["eta"][i].copy(), cols["zeta"][i].copy(), f[i].copy(), E, mesh, i,
                    [np.asarray(ax) for ax in flat])
            centre = {n: np.log(cols[n][i]) for n in names if n not in fixed}
    E_best, eta, zeta, f_star, E_grid, mesh, i, flat = best
    # neighbours within one grid step in every coordinate
    step = np.array([np.max(np.abs(np.diff(ax))) if len(ax) > 1 else 0.0 for ax in flat])
    near = np.all(np.abs(mesh - mesh[i]) <= step * (1 + 1e-9), axis=1) & np.isfinite(E_grid)
    spread = float(E_grid[near].max() - E_grid[near].min())
    alloc = Allocation(eta, zeta, f_star)
    return OracleResult(E_best, alloc, spread, evaluations)


# ---------------------------------------------------------------- CLI


def parse_sweep(text: str) -> tuple[str, tuple]:
    """``m=50:150:25`` or ``k=2:10:2`` (inclusive stop), or a comma list ``m=50,100``."""
    try:
        axis, rng = text.split("=", 1)
        axis = axis.strip().upper()
        if axis not in SWEEP_AXES:
            raise ValueError
        if ":" in rng:
            parts = [int(p) for p in rng.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step <= 0 or stop < start:
                raise ValueError
            values = tuple(range(start, stop + 1, step))
        else:
            values = tuple(int(p) for p in rng.split(","))
    except ValueError:
        raise ConfigError(f"bad sweep {text!r}; expected e.g. m=50:150:25 or k=2:10:2") from None
    return axis, values


def load_config(path) -> SystemConfig:
    return SystemConfig.from_json(path)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    axis, values = parse_sweep(args.sweep) if args.sweep else (None, ())
    spec = ExperimentSpec(
        base=cfg, sweep_axis=axis, sweep_values=values, schemes=tuple(s.strip() for s in args.schemes.split(",")),
        trials=args.trials, seed=args.seed, out=args.out, restarts=args.restarts, epsilon=args.epsilon,
        max_outer_iters=args.max_iters, workers=args.workers, record_wall_time=args.wall_time,
    )
    rows = run_experiment(spec)
    if args.out is None:
        write_csv(rows, sys.stdout)
    n_err = sum(r.status == SOLVER_ERROR for r in rows)
    if n_err:
        print(f"{n_err} solver failure(s); see status column", file=sys.stderr)
        return 2
    return 0


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    if cfg.K_total > 2:
        raise ConfigError(f"oracle needs K_total <= 2, config has {cfg.K_total}")
    ch = generate_network(cfg, args.seed)
    res = grid_oracle(ch, cfg, args.scheme, resolution=args.resolution)
    out = {"scheme": args.scheme, "seed": args.seed, "oracle_E_total": res.E_total,
           "error_bound": res.error_bound, "evaluations": res.evaluations}
    if res.allocation is not None:
        out.update(eta=res.allocation.eta_nk.tolist(), zeta=res.allocation.zeta_nk.tolist(),
                   f=res.allocation.f_nk.tolist())
    status = 0
    if args.compare:
        try:
            sca = sca_solve(ch, cfg, args.scheme, ScaOptions(restarts=args.restarts))
            out.update(sca_E_total=sca.E_total, sca_status=sca.status)
        except ScaSolverError as exc:
            out.update(sca_status=SOLVER_ERROR, sca_error=str(exc))
            status = 2
    print(json.dumps(out, indent=2))
    return status


def _cmd_summarize(args) -> int:
    print(summarize(args.input).format(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mimofl", description="Energy-minimal FL over massive MIMO: experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="Monte Carlo experiment, one CSV row per (trial, sweep value, scheme)")
    r.add_argument("--config", required=True)
    r.add_argument("--sweep", help="m=START:STOP:STEP or k=START:STOP:STEP (inclusive)")
    r.add_argument("--trials", type=int, default=50)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--schemes", default=",".join(SCHEME_NAMES))
    r.add_argument("--out", help="CSV path (stdout when omitted)")
    r.add_argument("--restarts", type=int, default=3)
    r.add_argument("--epsilon", type=float, default=1e-4)
    r.add_argument("--max-iters", type=int, default=50)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--wall-time", action="store_true", help="fill wall_time (makes the CSV run-dependent)")
    r.set_defaults(func=_cmd_run)

    o = sub.add_parser("oracle", help="brute-force grid optimum of a tiny instance (K_total <= 2)")
    o.add_argument("--config", required=True)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--scheme", choices=("async", "sync"), default="async")
    o.add_argument("--resolution", type=int, default=17)
    o.add_argument("--compare", action="store_true", help="also run sca_solve on the instance")
    o.add_argument("--restarts", type=int, default=3)
    o.set_defaults(func=_cmd_oracle)

    s = sub.add_parser("summarize", help="means, standard errors and paired reductions of a results CSV")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=_cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ScaSolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
