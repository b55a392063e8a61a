"""Primal log-barrier solver for smooth convex programs.

Canonical form::

    minimize    0.5 x'Px + c'x + const
    subject to  lb <= x <= ub
                A x <= b                                   (linear)
                0.5 z'Qz + g'z + h <= 0,   z = x[idx]      (convex quadratic)
                x_i * x_j >= c,  x_i, x_j > 0              (hyperbolic)
                sum_j a_j / x_j + l'x <= b,  x_j > 0       (inverse-sum)

Constraints are stored in homogeneous batches so derivatives are assembled
with array operations. The hyperbolic family is handled through the concave
form ``log x_i + log x_j >= log c``.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve


def _first_crossing(a0, a1, a2):
    """Smallest alpha > 0 with a0 + a1*alpha + a2*alpha^2 = 0, given a0 < 0 (inf if none).

    With a0 < 0 every case (a2 of either sign or zero) reduces to the
    cancellation-free root -2 a0 / (a1 + sqrt(a1^2 - 4 a2 a0)), valid when
    the discriminant is nonnegative and the denominator positive.
    """
    a0 = np.asarray(a0, float)
    a1 = np.asarray(a1, float)
    disc = a1 * a1 - 4.0 * np.asarray(a2, float) * a0
    with np.errstate(invalid="ignore", divide="ignore"):
        den = a1 + np.sqrt(disc)
        return np.where((disc >= 0) & (den > 0), -2.0 * a0 / den, np.inf)


class ConstraintBatch:
    kind = "abstract"

    def __init__(self, tag: str):
        self.tag = tag

    def __len__(self):
        return len(self.rhs_like())

    def values(self, x: np.ndarray) -> np.ndarray:
        """Constraint functions f(x), feasible when <= 0."""
        raise NotImplementedError

    def slacks(self, x: np.ndarray) -> np.ndarray:
        """Slack in the constraint's natural units (>= 0 when satisfied)."""
        return -self.values(x)

    def local(self, x: np.ndarray):
        """(f, idx, grad, hess) with grad (m, k) and hess (m, k, k) or None."""
        raise NotImplementedError

    def jacobian(self, x: np.ndarray, n: int) -> np.ndarray:
        f, idx, G, _ = self.local(x)
        J = np.zeros((len(f), n))
        np.add.at(J, (np.arange(len(f))[:, None], idx), G)
        return J

    def in_domain(self, x: np.ndarray) -> bool:
        return True

    def scaled(self, d: np.ndarray) -> "ConstraintBatch":
        """The same constraints written in z = x / d."""
        raise NotImplementedError


class LinearConstraints(ConstraintBatch):
    kind = "linear"

    def __init__(self, A, b, tag=""):
        super().__init__(tag)
        self.A = np.atleast_2d(np.asarray(A, float))
        self.b = np.atleast_1d(np.asarray(b, float))
        # rows are usually sparse: keep the nonzero columns, padded with
        # zero coefficients on column 0
        nnz = np.count_nonzero(self.A, axis=1)
        width = max(int(nnz.max(initial=0)), 1)
        self._cols = np.zeros((len(self.b), width), int)
        for r, row in enumerate(self.A):
            nz = np.flatnonzero(row)
            self._cols[r, :len(nz)] = nz
        self._vals = np.take_along_axis(self.A, self._cols, axis=1)

    def rhs_like(self):
        return self.b

    def values(self, x):
        return self.A @ x - self.b

    def local(self, x):
        return self.values(x), self._cols, self._vals, None

    def jacobian(self, x, n):
        return self.A.copy()

    def along(self, x, dx):
        f0, f1 = self.values(x), self.A @ dx
        return (lambda a: f0 + a * f1), float(_first_crossing(f0, f1, 0.0).min(initial=np.inf))

    def scaled(self, d):
        return LinearConstraints(self.A * d, self.b, self.tag)


class QuadraticConstraints(ConstraintBatch):
    """Rows ``0.5 z'Qz + g'z + c <= 0`` with ``z = x[idx] - center``.

    ``center`` defaults to zero. Expanding around a point where the row is
    nearly tight keeps the value accurate when the raw terms are huge.
    """

    kind = "quadratic"

    def __init__(self, idx, Q, g, c, tag="", center=None):
        super().__init__(tag)
        self.idx = np.atleast_2d(np.asarray(idx, int))
        self.Q = np.asarray(Q, float).reshape(self.idx.shape + (self.idx.shape[1],))
        self.g = np.asarray(g, float).reshape(self.idx.shape)
        self.c = np.atleast_1d(np.asarray(c, float))
        self.center = (np.zeros(self.idx.shape) if center is None
                       else np.asarray(center, float).reshape(self.idx.shape))

    def rhs_like(self):
        return self.c

    def values(self, x):
        z = x[self.idx] - self.center
        return 0.5 * np.einsum("mi,mij,mj->m", z, self.Q, z) + np.einsum("mi,mi->m", self.g, z) + self.c

    def local(self, x):
        z = x[self.idx] - self.center
        Qz = np.einsum("mij,mj->mi", self.Q, z)
        f = 0.5 * np.einsum("mi,mi->m", z, Qz) + np.einsum("mi,mi->m", self.g, z) + self.c
        return f, self.idx, Qz + self.g, self.Q

    def along(self, x, dx):
        z, dz = x[self.idx] - self.center, dx[self.idx]
        Qdz = np.einsum("mij,mj->mi", self.Q, dz)
        f0 = self.values(x)
        f1 = np.einsum("mi,mi->m", Qdz, z) + np.einsum("mi,mi->m", self.g, dz)
        f2 = 0.5 * np.einsum("mi,mi->m", Qdz, dz)
        return (lambda a: f0 + a * (f1 + a * f2)), float(_first_crossing(f0, f1, f2).min(initial=np.inf))

    def scaled(self, d):
        dz = d[self.idx]
        return QuadraticConstraints(self.idx, self.Q * dz[:, :, None] * dz[:, None, :], self.g * dz,
                                    self.c, self.tag, center=self.center / dz)

    def recentered(self, center, value=None) -> "QuadraticConstraints":
        """Same rows expanded around ``center``; ``value`` overrides the computed row values there."""
        center = np.asarray(center, float).reshape(self.idx.shape)
        z = center - self.center
        g = np.einsum("mij,mj->mi", self.Q, z) + self.g
        if value is None:
            value = 0.5 * np.einsum("mi,mij,mj->m", z, self.Q, z) + np.einsum("mi,mi->m", self.g, z) + self.c
        return QuadraticConstraints(self.idx, self.Q, g, value, self.tag, center=center)

    def min_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.Q).min(axis=1)


class HyperbolicConstraints(ConstraintBatch):
    kind = "hyperbolic"

    def __init__(self, i, j, c, tag=""):
        super().__init__(tag)
        self.i = np.atleast_1d(np.asarray(i, int))
        self.j = np.atleast_1d(np.asarray(j, int))
        self.c = np.atleast_1d(np.asarray(c, float))
        if np.any(self.c <= 0):
            raise ValueError("hyperbolic constraints need c > 0")

    def rhs_like(self):
        return self.c

    def in_domain(self, x):
        return bool(np.all(x[self.i] > 0) and np.all(x[self.j] > 0))

    def values(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.c) - np.log(x[self.i]) - np.log(x[self.j])

    def slacks(self, x):
        return x[self.i] * x[self.j] - self.c

    def local(self, x):
        xi, xj = x[self.i], x[self.j]
        f = np.log(self.c) - np.log(xi) - np.log(xj)
        idx = np.stack([self.i, self.j], axis=1)
        G = np.stack([-1.0 / xi, -1.0 / xj], axis=1)
        H = np.zeros((len(f), 2, 2))
        H[:, 0, 0] = 1.0 / xi**2
        H[:, 1, 1] = 1.0 / xj**2
        return f, idx, G, H

    def along(self, x, dx):
        xi, xj, di, dj = x[self.i], x[self.j], dx[self.i], dx[self.j]
        # c - (xi + a di)(xj + a dj) as a quadratic in a
        cross = _first_crossing(self.c - xi * xj, -(xi * dj + xj * di), -di * dj)
        pos = _first_crossing(-np.concatenate([xi, xj]), -np.concatenate([di, dj]), 0.0)
        lc, li, lj = np.log(self.c), xi, xj

        def vals(a):
            with np.errstate(invalid="ignore", divide="ignore"):
                return lc - np.log(li + a * di) - np.log(lj + a * dj)

        return vals, float(min(cross.min(initial=np.inf), pos.min(initial=np.inf)))

    def scaled(self, d):
        return HyperbolicConstraints(self.i, self.j, self.c / (d[self.i] * d[self.j]), self.tag)


class InverseSumConstraints(ConstraintBatch):
    kind = "inverse_sum"

    def __init__(self, idx, a, b, lin_idx=None, lin_coef=None, tag=""):
        super().__init__(tag)
        self.idx = np.atleast_2d(np.asarray(idx, int))
        self.a = np.asarray(a, float).reshape(self.idx.shape)
        self.b = np.atleast_1d(np.asarray(b, float))
        m = len(self.b)
        if lin_idx is None:
            self.lin_idx = np.zeros((m, 0), int)
            self.lin_coef = np.zeros((m, 0))
        else:
            self.lin_idx = np.asarray(lin_idx, int).reshape(m, -1)
            self.lin_coef = np.asarray(lin_coef, float).reshape(m, -1)
        if np.any(self.a < 0):
            raise ValueError("inverse-sum coefficients must be nonnegative")

    def rhs_like(self):
        return self.b

    def in_domain(self, x):
        return bool(np.all(x[self.idx] > 0))

    def values(self, x):
        with np.errstate(divide="ignore"):
            inv = np.sum(self.a / x[self.idx], axis=1)
        return inv + np.sum(self.lin_coef * x[self.lin_idx], axis=1) - self.b

    def local(self, x):
        z = x[self.idx]
        f = self.values(x)
        idx = np.concatenate([self.idx, self.lin_idx], axis=1)
        G = np.concatenate([-self.a / z**2, self.lin_coef], axis=1)
        k1, k = self.idx.shape[1], idx.shape[1]
        H = np.zeros((len(f), k, k))
        H[:, np.arange(k1), np.arange(k1)] = 2.0 * self.a / z**3
        return f, idx, G, H

    def along(self, x, dx):
        z, dz = x[self.idx], dx[self.idx]
        lz, ldz = x[self.lin_idx], dx[self.lin_idx]
        pos = _first_crossing(-z.ravel(), -dz.ravel(), 0.0).min(initial=np.inf)

        def vals(a):
            with np.errstate(divide="ignore"):
                inv = np.sum(self.a / (z + a * dz), axis=1)
            return inv + np.sum(self.lin_coef * (lz + a * ldz), axis=1) - self.b

        return vals, float(pos)

    def scaled(self, d):
        return InverseSumConstraints(self.idx, self.a / d[self.idx], self.b, self.lin_idx,
                                     self.lin_coef * d[self.lin_idx], self.tag)


@dataclass
class ConvexProgram:
    n_vars: int
    P: np.ndarray | None = None
    c: np.ndarray | None = None
    const: float = 0.0
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    constraints: list = field(default_factory=list)
    scale: np.ndarray | None = None
    names: list | None = None

    def __post_init__(self):
        n = self.n_vars
        self.P = np.zeros((n, n)) if self.P is None else np.asarray(self.P, float)
        self.c = np.zeros(n) if self.c is None else np.asarray(self.c, float)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float)
        self.scale = np.ones(n) if self.scale is None else np.asarray(self.scale, float)

    def add(self, batch: ConstraintBatch) -> ConstraintBatch:
        self.constraints.append(batch)
        return batch

    def objective(self, x) -> float:
        return float(0.5 * x @ self.P @ x + self.c @ x + self.const)

    def objective_grad(self, x) -> np.ndarray:
        return self.P @ x + self.c

    @property
    def n_constraints(self) -> int:
        bounds = np.isfinite(self.lb).sum() + np.isfinite(self.ub).sum()
        return int(sum(len(b) for b in self.constraints) + bounds)

    def validate(self, tol: float = 1e-10) -> None:
        """Check convexity of every quadratic form and the shapes."""
        n = self.n_vars
        if self.P.shape != (n, n) or self.c.shape != (n,):
            raise ValueError("objective has wrong shape")
        if not np.allclose(self.P, self.P.T):
            raise ValueError("objective Hessian is not symmetric")
        pscale = max(1.0, np.abs(self.P).max())
        if np.linalg.eigvalsh(self.P).min() < -tol * pscale:
            raise ValueError("objective is not convex")
        for batch in self.constraints:
            if isinstance(batch, QuadraticConstraints) and len(batch):
                qscale = np.maximum(1.0, np.abs(batch.Q).max(axis=(1, 2)))
                if np.any(batch.min_eigenvalues() < -tol * qscale):
                    raise ValueError(f"constraint batch {batch.tag!r} is not convex")
        if np.any(self.scale <= 0):
            raise ValueError("variable scales must be positive")

    def all_values(self, x) -> np.ndarray:
        """Every constraint as f_i(x) <= 0, bounds last (lb rows then ub rows)."""
        parts = [b.values(x) for b in self.constraints]
        lo, hi = np.isfinite(self.lb), np.isfinite(self.ub)
        parts += [(self.lb - x)[lo], (x - self.ub)[hi]]
        return np.concatenate(parts) if parts else np.zeros(0)

    def all_jacobian(self, x) -> np.ndarray:
        n = self.n_vars
        parts = [b.jacobian(x, n) for b in self.constraints]
        eye = np.eye(n)
        parts += [-eye[np.isfinite(self.lb)], eye[np.isfinite(self.ub)]]
        return np.vstack(parts) if parts else np.zeros((0, n))

    def strictly_feasible(self, x) -> bool:
        if np.any(x <= self.lb) or np.any(x >= self.ub):
            return False
        for b in self.constraints:
            if not b.in_domain(x):
                return False
            with np.errstate(all="ignore"):
                if not np.all(b.values(x) < 0):
                    return False
        return True

    def slack_report(self, x) -> dict:
        """Minimum natural-unit slack per constraint tag."""
        out: dict = {}
        for b in self.constraints:
            s = float(np.min(b.slacks(x))) if len(b) else np.inf
            out[b.tag] = min(out.get(b.tag, np.inf), s)
        return out

    def scaled(self) -> "ConvexProgram":
        """Equivalent program in z = x / scale."""
        d = self.scale
        return ConvexProgram(
            n_vars=self.n_vars,
            P=self.P * d[:, None] * d[None, :],
            c=self.c * d,
            const=self.const,
            lb=self.lb / d,
            ub=self.ub / d,
            constraints=[b.scaled(d) for b in self.constraints],
            scale=np.ones(self.n_vars),
            names=self.names,
        )

    def dump(self, stream=None) -> str:
        """Plain-text listing of variables and constraint batches."""
        out = io.StringIO()
        names = self.names or [f"x{i}" for i in range(self.n_vars)]
        out.write(f"# convex program: {self.n_vars} variables, {self.n_constraints} constraints\n")
        out.write("[variables] name lb ub scale c P_ii\n")
        for i, nm in enumerate(names):
            out.write(f"{nm} {self.lb[i]:.6g} {self.ub[i]:.6g} {self.scale[i]:.6g} "
                      f"{self.c[i]:.6g} {self.P[i, i]:.6g}\n")
        for b in self.constraints:
            out.write(f"[{b.kind}] tag={b.tag} rows={len(b)}\n")
            if isinstance(b, LinearConstraints):
                for row, rhs in zip(b.A, b.b):
                    nz = np.flatnonzero(row)
                    terms = " ".join(f"{row[j]:+.6g}*{names[j]}" for j in nz)
                    out.write(f"  {terms} <= {rhs:.6g}\n")
            elif isinstance(b, QuadraticConstraints):
                for r in range(len(b)):
                    vs = ",".join(names[j] for j in b.idx[r])
                    out.write(f"  vars=({vs}) Q={np.array2string(b.Q[r], precision=6).replace(chr(10), '')}"
                              f" g={np.array2string(b.g[r], precision=6)} c={b.c[r]:.6g}\n")
            elif isinstance(b, HyperbolicConstraints):
                for i, j, c in zip(b.i, b.j, b.c):
                    out.write(f"  {names[i]}*{names[j]} >= {c:.6g}\n")
            elif isinstance(b, InverseSumConstraints):
                for r in range(len(b)):
                    terms = " + ".join(f"{a:.6g}/{names[j]}" for a, j in zip(b.a[r], b.idx[r]))
                    lin = "".join(f" {cf:+.6g}*{names[j]}" for cf, j in zip(b.lin_coef[r], b.lin_idx[r]))
                    out.write(f"  {terms}{lin} <= {b.b[r]:.6g}\n")
        text = out.getvalue()
        if stream is not None:
            stream.write(text)
        return text


@dataclass
class SolverOptions:
    tol: float = 1e-7          # target relative duality gap m/t, and KKT target
    mu: float = 10.0
    t0: float | None = None    # barrier weight on the objective / obj_scale
    newton_tol: float = 1e-8   # stop centering when lambda^2 / 2 below this
    final_newton_tol: float = 1e-20
    max_newton: int = 300      # per centering stage
    max_iter: int = 2000       # total Newton steps
    alpha: float = 0.01        # Armijo fraction
    beta: float = 0.5          # backtracking factor


@dataclass
class SolverSolution:
    x: np.ndarray
    objective_value: float
    status: str  # optimal | max_iter | numerical_failure
    kkt: tuple
    iterations: int
    wall_time: float
    duals: np.ndarray
    t: float
    stage_objectives: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (t, newton steps, last decrement, exit reason)

    @property
    def kkt_max(self) -> float:
        return max(self.kkt)


def kkt_residual(p: ConvexProgram, x, duals) -> tuple[float, float, float]:
    """(stationarity, primal infeasibility, complementarity), scaled.

    ``duals`` follow the row order of :meth:`ConvexProgram.all_values`.
    Stationarity is measured in the scaled variables and normalized by the
    objective gradient; complementarity by the objective magnitude.
    """
    x = np.asarray(x, float)
    lam = np.asarray(duals, float)
    d = p.scale
    f = p.all_values(x)
    J = p.all_jacobian(x)
    g0 = p.objective_grad(x)
    stat = np.abs(d * (g0 + J.T @ lam)).max(initial=0.0) / max(1.0, np.abs(d * g0).max(initial=0.0))
    row_norm = np.maximum(np.abs(J * d).max(axis=1, initial=0.0), 1e-300)
    with np.errstate(invalid="ignore"):
        prim = float(np.nan_to_num(np.max(np.maximum(f, 0.0) / row_norm, initial=0.0), nan=np.inf))
    dual_inf = float(np.max(np.maximum(-lam, 0.0), initial=0.0))
    comp = np.abs(lam * f).max(initial=0.0) / max(1.0, abs(p.objective(x)))
    return float(stat + dual_inf), prim, float(comp)


START_GAP = 1e-2
QUADRATIC_REGION = 1e-3  # squared Newton decrement below which full steps are taken


class _Barrier:
    """Barrier derivatives of a scaled program."""

    def __init__(self, p: ConvexProgram):
        self.p = p
        self.n = p.n_vars
        self.lo = np.isfinite(p.lb)
        self.hi = np.isfinite(p.ub)
        self.m = p.n_constraints
        # the sparsity pattern is fixed, so the scatter indices are built once
        x = np.where(np.isfinite(p.lb), p.lb, 0.0) + 1.0
        pats = [b.local(x)[1] for b in p.constraints]
        n = self.n
        self._gidx = np.concatenate([np.asarray(i).ravel() for i in pats]) if pats else np.zeros(0, int)
        self._hidx = (np.concatenate([(i[:, :, None] * n + i[:, None, :]).ravel() for i in pats])
                      if pats else np.zeros(0, int))

    def feasible(self, x) -> bool:
        return self.p.strictly_feasible(x)

    def value(self, x) -> float:
        p = self.p
        with np.errstate(all="ignore"):
            total = -np.sum(np.log((x - p.lb)[self.lo])) - np.sum(np.log((p.ub - x)[self.hi]))
            for b in p.constraints:
                total -= np.sum(np.log(-b.values(x)))
        return float(total)

    def derivs(self, x):
        p, n = self.p, self.n
        gap_lo = (x - p.lb)[self.lo]
        gap_hi = (p.ub - x)[self.hi]
        gvals, hvals = [], []
        for b in p.constraints:
            f, _, G, H = b.local(x)
            w = -1.0 / f
            gvals.append((G * w[:, None]).ravel())
            blocks = (w**2)[:, None, None] * G[:, :, None] * G[:, None, :]
            if H is not None:
                blocks += w[:, None, None] * H
            hvals.append(blocks.ravel())
        grad = np.bincount(self._gidx, np.concatenate(gvals), minlength=n) if gvals else np.zeros(n)
        hess = (np.bincount(self._hidx, np.concatenate(hvals), minlength=n * n) if hvals
                else np.zeros(n * n)).reshape(n, n)
        grad[self.lo] -= 1.0 / gap_lo
        grad[self.hi] += 1.0 / gap_hi
        diag = np.zeros(n)
        diag[self.lo] += 1.0 / gap_lo**2
        diag[self.hi] += 1.0 / gap_hi**2
        hess[np.diag_indices(n)] += diag
        return grad, hess

    def line(self, x, dx, t, obj_scale):
        """Barrier objective restricted to x + a*dx, and the largest safe a."""
        p = self.p
        models = [b.along(x, dx) for b in p.constraints]
        gap_lo, d_lo = (x - p.lb)[self.lo], dx[self.lo]
        gap_hi, d_hi = (p.ub - x)[self.hi], -dx[self.hi]
        amax = min([m[1] for m in models] + [
            _first_crossing(-gap_lo, -d_lo, 0.0).min(initial=np.inf),
            _first_crossing(-gap_hi, -d_hi, 0.0).min(initial=np.inf),
        ])
        o1 = p.objective_grad(x) @ dx
        o2 = 0.5 * dx @ p.P @ dx
        base = [vals(0.0) for vals, _ in models]

        def psi(a):
            """psi(x + a dx) - psi(x), computed without cancellation."""
            with np.errstate(all="ignore"):
                val = t * a * (o1 + a * o2) / obj_scale
                val -= np.sum(np.log1p(a * d_lo / gap_lo)) + np.sum(np.log1p(a * d_hi / gap_hi))
                for (vals, _), f0 in zip(models, base):
                    val -= np.sum(np.log(vals(a) / f0))
            return float(val) if np.isfinite(val) else np.inf

        return psi, float(amax)


def _initial_weight(bar: _Barrier, p: ConvexProgram, z, obj_scale) -> float:
    """Barrier weight making x0 closest to centred (least squares in the Hessian norm)."""
    g_b, H_b = bar.derivs(z)
    g0 = p.objective_grad(z) / obj_scale
    try:
        cf = cho_factor(H_b + 1e-12 * np.abs(np.diag(H_b)).max() * np.eye(len(z)), check_finite=False)
        a = cho_solve(cf, g0, check_finite=False)
    except (LinAlgError, ValueError):
        return 1.0
    t = -(a @ g_b) / (a @ g0)
    return float(t) if np.isfinite(t) and t > 0 else 1.0


def _pull_inside(p: ConvexProgram, x0, x):
    """``x`` moved a hair toward the strictly feasible ``x0`` until it passes.

    Unscaling can push rows that are tight to the last bits over the edge.
    """
    if p.strictly_feasible(x):
        return x
    for k in range(12, 2, -1):
        theta = 10.0 ** -k
        cand = x + theta * (x0 - x)
        if p.strictly_feasible(cand):
            return cand
    return x0


def _duals(p: ConvexProgram, sp: ConvexProgram, bar: _Barrier, x, t, obj_scale, tol):
    """Multipliers at ``x`` and their KKT residual.

    Central-path multipliers ``obj_scale / (t * -f)`` are exact only at an
    exactly centred point; the first-order correction along the Newton step
    removes most of the centring error. Whichever estimate has the smaller
    residual is returned. (The barrier is invariant to the variable scaling,
    so both are computed on the unscaled rows.)
    """
    with np.errstate(divide="ignore"):
        f = p.all_values(x)
        lam0 = obj_scale / (t * -f)
    best = (lam0, kkt_residual(p, x, lam0))
    z = x / p.scale
    g_b, H_b = bar.derivs(z)
    g = t * sp.objective_grad(z) / obj_scale + g_b
    H = t * sp.P / obj_scale + H_b
    try:
        dx = -cho_solve(cho_factor(H, check_finite=False), g, check_finite=False) * p.scale
    except (LinAlgError, ValueError):
        return best
    with np.errstate(all="ignore"):
        lam1 = np.maximum(lam0 * (1.0 + (p.all_jacobian(x) @ dx) / -f), 0.0)
    if np.all(np.isfinite(lam1)):
        kkt1 = kkt_residual(p, x, lam1)
        if max(kkt1) < max(best[1]):
            best = (lam1, kkt1)
    # both estimates inherit the rounding error of rows that are tight to
    # ~1e-9 relative; the smallest relative correction lam * (1 + delta)
    # that restores stationarity absorbs it without touching complementarity
    lam = best[0]
    if max(best[1]) <= 1e-3 * tol:
        return best
    A = p.all_jacobian(x).T * p.scale[:, None]
    resid = -p.scale * p.objective_grad(x) - A @ lam
    try:
        delta = np.linalg.lstsq(A * lam, resid, rcond=None)[0]
    except LinAlgError:
        return best
    if np.all(np.isfinite(delta)) and np.abs(delta).max(initial=0.0) < 1e-3:
        lam2 = np.maximum(lam * (1.0 + delta), 0.0)
        kkt2 = kkt_residual(p, x, lam2)
        if max(kkt2) < max(best[1]):
            best = (lam2, kkt2)
    return best


def solve(p: ConvexProgram, x0, tol: float | None = None, options: SolverOptions | None = None) -> SolverSolution:
    """Minimize ``p`` from the strictly feasible start ``x0``.

    Returns the best iterate found; ``status`` is ``numerical_failure`` when
    Newton steps stop making progress before the gap target is met.
    """
    opts = options or SolverOptions()
    if tol is not None:
        opts = SolverOptions(**{**opts.__dict__, "tol": tol})
    start = time.perf_counter()
    x0 = np.asarray(x0, float)
    d = p.scale
    sp = p.scaled()
    z = x0 / d
    if not sp.strictly_feasible(z):
        raise ValueError("x0 is not strictly feasible")
    bar = _Barrier(sp)
    m = max(bar.m, 1)
    f_start = sp.objective(z)
    # gaps are relative to this; the gradient term covers starts where the
    # objective happens to vanish (scaled variables are O(1))
    obj_scale = max(abs(f_start), np.abs(sp.objective_grad(z)).max(initial=0.0), 1e-12)
    t = opts.t0 if opts.t0 is not None else max(_initial_weight(bar, sp, z, obj_scale), 1e-3)
    t_final = m / opts.tol
    # start no closer than a 1e-2 relative gap: Newton started off-centre at
    # a large weight crawls along curved rows
    t = min(t, m / START_GAP)
    iters = 0
    status = "optimal"
    stage_obj = []
    trace = []
    extra = 0
    lam = kkt = None

    while True:
        final = t >= t_final
        tol_dec = opts.final_newton_tol if final else opts.newton_tol
        prev_dec = np.inf
        reason, n0, dec = "max_newton", iters, np.nan
        for _ in range(opts.max_newton):
            g_b, H_b = bar.derivs(z)
            g = t * sp.objective_grad(z) / obj_scale + g_b
            H = t * sp.P / obj_scale + H_b
            try:
                dz = -cho_solve(cho_factor(H, check_finite=False), g, check_finite=False)
            except (LinAlgError, ValueError):
                reg = 1e-12 * max(1.0, np.abs(np.diag(H)).max())
                try:
                    dz = -np.linalg.solve(H + reg * np.eye(len(z)), g)
                except LinAlgError:
                    status, reason = "numerical_failure", "singular"
                    break
            dec = -g @ dz
            if not np.isfinite(dec):
                status, reason = "numerical_failure", "nonfinite"
                break
            if dec / 2 <= tol_dec:
                reason = "centred"
                break
            psi, amax = bar.line(z, dz, t, obj_scale)
            iters += 1
            if dec < QUADRATIC_REGION and amax > 1.0 and sp.strictly_feasible(z + dz):
                # full Newton steps converge quadratically here; psi itself is
                # too noisy to judge changes this small
                if dec >= prev_dec:
                    reason = "stalled"
                    break
                prev_dec = dec
                z = z + dz
                continue
            step = min(1.0, 0.99 * amax)
            accepted = False
            while step > 1e-14:
                # the line model and the row evaluation can disagree in the last bits
                if psi(step) <= -opts.alpha * step * dec and sp.strictly_feasible(z + step * dz):
                    accepted = True
                    break
                step *= opts.beta
            if not accepted:
                reason = "line_search"
                break
            z = z + step * dz
            if iters >= opts.max_iter:
                status, reason = "max_iter", "max_iter"
                break
        stage_obj.append(sp.objective(z))
        trace.append((t, iters - n0, float(dec), reason))
        if status != "optimal":
            break
        if final:
            lam, kkt = _duals(p, sp, bar, z * d, t, obj_scale, opts.tol)
            comp = kkt[2]
            if comp <= opts.tol or max(kkt[0], kkt[1]) > opts.tol or extra >= 3:
                break
            # the gap was sized on the starting objective; tighten for the final one
            extra += 1
            t_final = t * 2.0 * comp / opts.tol
        t = min(t * opts.mu, t_final)

    x = _pull_inside(p, x0, z * d)
    if p.objective(x) > p.objective(x0):
        # the gap target can exceed the remaining decrease when x0 is already near-optimal
        x = x0
    if lam is None or not np.array_equal(x, z * d):
        lam, kkt = _duals(p, sp, bar, x, t, obj_scale, opts.tol)
    if status == "optimal" and t < t_final:
        status = "max_iter"
    if status == "optimal" and max(kkt) > opts.tol:
        # centred as far as float64 allows, but not to the requested accuracy
        status = "numerical_failure"
    return SolverSolution(
        x=x, objective_value=p.objective(x), status=status, kkt=kkt, iterations=iters,
        wall_time=time.perf_counter() - start, duals=lam, t=t, stage_objectives=stage_obj, trace=trace,
    )
