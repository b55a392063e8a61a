import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mimofl.convex_solver import (
    ConvexProgram, HyperbolicConstraints, InverseSumConstraints, LinearConstraints,
    QuadraticConstraints, _first_crossing, kkt_residual, solve,
)


def test_scalar_qp_lower_bound():
    p = ConvexProgram(1, P=[[2.0]], lb=[1.0])
    sol = solve(p, [3.0])
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-6)
    assert max(sol.kkt) < 1e-6


def test_hyperbolic_boundary():
    for c in (0.5, 1.0, 7.0):
        p = ConvexProgram(2, c=[c, 0.0], lb=[0.0, 0.0], ub=[np.inf, 2.0])
        p.add(HyperbolicConstraints([0], [1], [1.0]))
        sol = solve(p, [3.0, 1.0])
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.x, [0.5, 2.0], rtol=1e-6)


def test_inverse_sum():
    # min x + y  s.t. 1/x + 1/y <= 1  ->  x = y = 2
    p = ConvexProgram(2, c=[1.0, 1.0], lb=[0.0, 0.0])
    p.add(InverseSumConstraints([[0, 1]], [[1.0, 1.0]], [1.0]))
    sol = solve(p, [5.0, 5.0])
    np.testing.assert_allclose(sol.x, [2.0, 2.0], rtol=1e-6)


def test_inverse_sum_with_linear_part():
    # 1/x + y <= 2, minimize x - y over y <= 1.5  ->  y = 1.5 - ... solve numerically
    p = ConvexProgram(2, c=[1.0, -1.0], lb=[0.0, -np.inf], ub=[np.inf, 1.5])
    p.add(InverseSumConstraints([[0]], [[1.0]], [2.0], lin_idx=[[1]], lin_coef=[[1.0]]))
    sol = solve(p, [4.0, 0.0])
    # on the curve y = 2 - 1/x the objective x - 2 + 1/x is minimized at x = 1 (y = 1 < 1.5)
    np.testing.assert_allclose(sol.x, [1.0, 1.0], rtol=1e-6)


def test_quadratic_constraint_disc():
    p = ConvexProgram(2, c=[-1.0, -1.0])
    p.add(QuadraticConstraints([[0, 1]], [2 * np.eye(2)], [[0.0, 0.0]], [-1.0]))
    sol = solve(p, [0.0, 0.0])
    np.testing.assert_allclose(sol.x, [2**-0.5, 2**-0.5], rtol=1e-6)


def test_quadratic_constraint_center():
    # same disc written around center (1, 1)
    c0 = np.array([1.0, 1.0])
    # |z + c0|^2 - 1 = |z|^2 + 2 c0.z + 1
    p = ConvexProgram(2, c=[-1.0, -1.0])
    p.add(QuadraticConstraints([[0, 1]], [2 * np.eye(2)], [2 * c0], [1.0], center=[c0]))
    sol = solve(p, [0.0, 0.0])
    np.testing.assert_allclose(sol.x, [2**-0.5, 2**-0.5], rtol=1e-6)


def test_rejects_infeasible_start():
    p = ConvexProgram(1, P=[[2.0]], lb=[1.0])
    with pytest.raises(ValueError):
        solve(p, [1.0])


def test_validate_rejects_nonconvex():
    p = ConvexProgram(2, P=np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        p.validate()
    q = ConvexProgram(2)
    q.add(QuadraticConstraints([[0, 1]], [np.diag([1.0, -1.0])], [[0, 0]], [-1.0]))
    with pytest.raises(ValueError):
        q.validate()


def projected_gradient(P, c, lo, hi, iters=200_000):
    """Slow reference: projected gradient on a box, step 1/L."""
    step = 1.0 / np.linalg.eigvalsh(P).max()
    x = np.clip(np.zeros(len(c)), lo, hi)
    for _ in range(iters):
        x_new = np.clip(x - step * (P @ x + c), lo, hi)
        if np.max(np.abs(x_new - x)) < 1e-15:
            break
        x = x_new
    return x


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_box_qp_matches_reference(seed):
    r = np.random.default_rng(seed)
    n = 20
    A = r.normal(size=(n, n))
    P = A @ A.T / n + 0.1 * np.eye(n)
    c = r.normal(size=n) * 3
    lo, hi = -np.ones(n), np.ones(n)
    ref = projected_gradient(P, c, lo, hi)
    p = ConvexProgram(n, P=P, c=c, lb=lo, ub=hi)
    sol = solve(p, np.zeros(n))
    assert sol.status == "optimal"
    f_ref = 0.5 * ref @ P @ ref + c @ ref
    assert sol.objective_value == pytest.approx(f_ref, rel=1e-5)
    np.testing.assert_allclose(sol.x, ref, atol=1e-4)


def test_random_qp_general_constraints_vs_scipy():
    from scipy.optimize import minimize

    r = np.random.default_rng(5)
    n = 20
    A = r.normal(size=(n, n))
    P = A @ A.T / n + 0.1 * np.eye(n)
    c = r.normal(size=n)
    G = r.normal(size=(10, n))
    h = np.abs(r.normal(size=10)) + 0.5
    p = ConvexProgram(n, P=P, c=c)
    p.add(LinearConstraints(G, h))
    p.add(QuadraticConstraints([np.arange(n)], [2 * np.eye(n)], [np.zeros(n)], [-4.0]))
    sol = solve(p, np.zeros(n))
    ref = minimize(lambda x: 0.5 * x @ P @ x + c @ x, np.zeros(n), jac=lambda x: P @ x + c,
                   constraints=[{"type": "ineq", "fun": lambda x: h - G @ x, "jac": lambda x: -G},
                                {"type": "ineq", "fun": lambda x: 4 - x @ x, "jac": lambda x: -2 * x}],
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000})
    assert sol.objective_value == pytest.approx(ref.fun, rel=1e-5)


def test_two_starts_agree():
    r = np.random.default_rng(9)
    n = 6
    A = r.normal(size=(n, n))
    p = ConvexProgram(n, P=A @ A.T, c=r.normal(size=n), lb=np.zeros(n))
    p.add(InverseSumConstraints([np.arange(n)], [np.ones(n)], [10.0]))
    s1 = solve(p, np.full(n, 1.0))
    s2 = solve(p, r.uniform(2, 5, n))
    assert s1.objective_value == pytest.approx(s2.objective_value, rel=1e-6)


def test_objective_not_above_start():
    p = ConvexProgram(2, P=np.eye(2), c=[-3.0, 1.0], lb=[0, 0], ub=[2, 2])
    x0 = np.array([1.0, 1.0])
    sol = solve(p, x0)
    assert sol.objective_value <= p.objective(x0)
    # central path: stage objectives nonincreasing
    so = np.array(sol.stage_objectives)
    assert np.all(np.diff(so) <= 1e-9 * np.abs(so[:-1]).clip(1.0))
    assert np.all(p.all_values(sol.x) <= 1e-8)


def test_variable_scaling_invariance():
    # a problem in units differing by 1e9 gives the same answer as its rescaled copy
    d = np.array([1e9, 1e-3])
    p = ConvexProgram(2, P=np.diag(1.0 / d**2), c=-1.0 / d, lb=[0, 0], ub=d * 1.5, scale=d)
    sol = solve(p, d * 0.5)
    np.testing.assert_allclose(sol.x / d, [1.0, 1.0], rtol=1e-6)


# ---- kkt residual

def _scalar_program():
    p = ConvexProgram(1, P=[[2.0]])
    p.add(LinearConstraints([[-1.0]], [-1.0]))  # x >= 1
    return p


def test_kkt_residual_known_multiplier():
    p = _scalar_program()
    assert max(kkt_residual(p, [1.0], [2.0])) < 1e-10


def test_kkt_residual_grows_linearly():
    p = _scalar_program()
    r1 = kkt_residual(p, [1.0 + 1e-4], [2.0])
    r2 = kkt_residual(p, [1.0 + 2e-4], [2.0])
    assert max(r1) > 0
    assert max(r2) == pytest.approx(2 * max(r1), rel=1e-3)
    # infeasible direction shows up as primal residual
    assert kkt_residual(p, [1.0 - 1e-4], [2.0])[1] == pytest.approx(1e-4, rel=1e-6)


def test_dump_lists_everything():
    p = ConvexProgram(2, c=[1, 1], lb=[0, 0], names=["a", "b"])
    p.add(HyperbolicConstraints([0], [1], [1.0], tag="hyp"))
    p.add(LinearConstraints([[1.0, 1.0]], [5.0], tag="sum"))
    text = p.dump()
    assert "a*b >= 1" in text and "tag=hyp" in text and "+1*a +1*b <= 5" in text


# ---- step-length helper

@settings(max_examples=300, deadline=None)
@given(a0=st.floats(-1e3, -1e-6), a1=st.floats(-1e3, 1e3, allow_subnormal=False),
       a2=st.floats(-1e3, 1e3, allow_subnormal=False))
def test_first_crossing_matches_roots(a0, a1, a2):
    got = float(_first_crossing(a0, a1, a2))
    roots = np.roots([a2, a1, a0]) if abs(a2) > 1e-12 else np.roots([a1, a0])
    pos = [z.real for z in roots if abs(z.imag) <= 1e-9 * max(1.0, abs(z)) and z.real > 0]
    assume(not pos or min(pos) < 1e8)
    if not pos:
        assert got == np.inf or got > 1e8
    else:
        assert got == pytest.approx(min(pos), rel=1e-6)
