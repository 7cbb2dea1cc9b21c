import numpy as np
import pytest

from fransim import powerorth, wmmse
from fransim.errors import NumericFailure
from fransim.netmodel import SolverParams
from fransim.wmmse import WmmseProblem, WmmseState

LN2 = np.log(2.0)


def scalar_problem(**kw):
    fields = dict(
        a=np.array([[1.0]]),
        noise=np.array([1.0]),
        weights=np.array([1.0]),
        costs=np.array([1.0]),
        p_max=np.array([1.0]),
        gamma=np.array([0.0]),
    )
    fields.update(kw)
    return WmmseProblem(**fields)


def interfering_problem(gamma=(0.0, 0.0, 0.0), **kw):
    a = np.array([[1.0, 0.2, 0.3], [0.25, 0.9, 0.1], [0.2, 0.2, 1.1]])
    fields = dict(
        a=a,
        noise=np.array([0.1, 0.1, 0.1]),
        weights=np.array([1.0, 2.0, 0.0]),
        costs=np.array([1.0, 1.0, 1.0]),
        p_max=np.array([1.0, 1.0, 1.0]),
        gamma=np.asarray(gamma, dtype=float),
    )
    fields.update(kw)
    return WmmseProblem(**fields)


def test_mse_scalar():
    p = scalar_problem()
    assert wmmse.mse(p, WmmseState(q=np.array([1.0]), u=np.array([0.5]), w=np.ones(1))) == (
        pytest.approx([0.5])
    )
    assert wmmse.mse(p, WmmseState(q=np.array([1.0]), u=np.array([0.0]), w=np.ones(1))) == (
        pytest.approx([1.0])
    )


def test_optimal_receiver_scalar():
    p = scalar_problem()
    assert wmmse.optimal_receiver(p, [1.0]) == pytest.approx([0.5])
    assert wmmse.optimal_receiver(p, [0.0]) == pytest.approx([0.0])


def test_optimal_weight():
    assert wmmse.optimal_weight([0.5, 1.0]) == pytest.approx([2.0, 1.0])
    with pytest.raises(NumericFailure):
        wmmse.optimal_weight([0.0])


def test_optimal_receiver_minimizes_mse():
    p = interfering_problem()
    q = np.array([0.6, 0.8, 0.4])
    u = wmmse.optimal_receiver(p, q)
    best = wmmse.mse(p, WmmseState(q=q, u=u, w=np.ones(3)))
    for delta in (0.05, -0.05, 0.05j):
        e = wmmse.mse(p, WmmseState(q=q, u=u + delta, w=np.ones(3)))
        assert np.all(e >= best - 1e-12)


def test_mmse_weight_gives_log_rate():
    # at the optimal receiver, e = 1 / (1 + SINR)
    p = interfering_problem()
    q = np.array([0.6, 0.8, 0.4])
    e = wmmse.mse(p, WmmseState(q=q, u=wmmse.optimal_receiver(p, q), w=np.ones(3)))
    assert e == pytest.approx(1.0 / (1.0 + wmmse.sinr(p, q)))


def test_problem_validation():
    with pytest.raises(ValueError):
        scalar_problem(noise=np.array([0.0]))
    with pytest.raises(ValueError):
        scalar_problem(a=np.array([[0.0]]))
    with pytest.raises(ValueError):
        scalar_problem(a=np.ones((2, 2)))


def _state(p, q):
    u = wmmse.optimal_receiver(p, q)
    w = wmmse.optimal_weight(wmmse.mse(p, WmmseState(q=q, u=u, w=np.ones(p.size))))
    return WmmseState(q=q, u=u, w=w)


def test_power_step_zero_weight_no_qos():
    p = scalar_problem(weights=np.array([0.0]))
    q = wmmse.power_step(p, _state(p, np.array([0.5])))
    assert q == pytest.approx([0.0])


def test_power_step_single_link_qos():
    p = scalar_problem(a=np.array([[2.0]]), weights=np.array([0.0]), gamma=np.array([2.0]))
    q = wmmse.power_step(p, _state(p, np.array([0.5])))
    assert q[0] ** 2 == pytest.approx(2.0 * 1.0 / 4.0, rel=1e-4)
    assert wmmse.qos_satisfied(p, q)


def test_power_step_beats_random_feasible_points():
    p = interfering_problem(gamma=(0.5, 0.0, 1.0))
    state = _state(p, np.full(3, 0.5))
    q = wmmse.power_step(p, state)
    assert q is not None
    assert wmmse.qos_satisfied(p, q)
    d, b = wmmse.quadratic_coefficients(p, state)

    def f(x):
        return float(d @ x**2 + b @ x)

    best = f(q)
    rng = np.random.default_rng(3)
    checked = 0
    for x in rng.uniform(0.0, 1.0, size=(5000, 3)):
        if wmmse.qos_satisfied(p, x):
            checked += 1
            assert best <= f(x) + 1e-6 * abs(f(x)) + 1e-8
    assert checked > 100


def test_power_step_infeasible_qos():
    p = interfering_problem(gamma=(1e6, 0.0, 0.0), p_max=np.array([1e-3, 1.0, 1.0]))
    assert wmmse.power_step(p, _state(p, np.full(3, 0.01))) is None
    result = wmmse.bcd_solve(p)
    assert not result.feasible


def test_bcd_descends():
    p = interfering_problem(kappa=1e-10, max_iter=500)
    result = wmmse.bcd_solve(p)
    steps = np.diff(result.trace[1:])
    assert np.all(steps <= 1e-7 * np.abs(np.asarray(result.trace[1:-1])) + 1e-9)
    assert result.feasible


def test_bcd_leaves_zero_start():
    # Q g W0 / (V0 ln2) > 1: moving off zero lowers the objective
    p = scalar_problem(weights=np.array([4.0]))
    result = wmmse.bcd_solve(p, initial=np.zeros(1))
    assert result.trace[1] < result.trace[0]
    assert result.q[0] > 0


def test_bcd_matches_orthogonal_solution(make_synthetic, assign):
    ctx = make_synthetic(
        [2.0, 3.0], [2.0 * LN2, 1.5 * LN2], p_max=2.0, solver=SolverParams(kappa=1e-10)
    )
    a = assign(ctx, (0, 0), (1, 2))
    problem = wmmse.build_problem(ctx, a)
    result = wmmse.bcd_solve(problem)
    orth = powerorth.build_problem(ctx, a)
    p = powerorth.restore_feasibility(powerorth.extreme_point(orth), orth)
    expected = powerorth.objective(orth, p.allocation.p[orth.users, orth.subchannels])
    assert result.pmr == pytest.approx(expected, rel=1e-4)
    assert result.allocation.user_power(0) == pytest.approx(1.5, rel=1e-3)


def test_build_problem_normalizes_receivers(make_synthetic, assign):
    ctx = make_synthetic([2.0, 3.0], [1.0, 1.0], num_rrh=3, cross=0.5, noise=0.5)
    problem = wmmse.build_problem(ctx, assign(ctx, (0, 1), (0, 1)))
    direct = np.diag(problem.a)
    assert np.allclose(direct.imag, 0.0)
    assert np.all(direct.real > 0)
    assert np.allclose(problem.noise, 1.0)
    assert problem.weights == pytest.approx(np.array([1.0, 1.0]) / LN2)


def test_bcd_stops_at_compute_budget():
    p = interfering_problem(
        scale=1.0,
        mu1=1.0,
        d_cpu=np.array([0.5]),
        nodes=np.zeros(3, dtype=int),
        charged=np.ones(3, dtype=bool),
        fixed_load=np.zeros(3),
    )
    result = wmmse.bcd_solve(p, initial=np.full(3, 0.01))
    assert result.compute_limited
    assert wmmse.within_budget(p, result.q)


def random_problem(rng, size, cross, **kw):
    """Real channels: direct amplitudes in [0.8, 2], cross amplitudes below `cross`."""
    a = rng.uniform(0.0, cross, size=(size, size))
    np.fill_diagonal(a, rng.uniform(0.8, 2.0, size=size))
    fields = dict(
        a=a,
        noise=rng.uniform(0.1, 0.5, size=size),
        weights=rng.uniform(0.5, 3.0, size=size),
        costs=rng.uniform(0.5, 2.0, size=size),
        p_max=rng.uniform(0.5, 3.0, size=size),
        gamma=np.zeros(size),
    )
    fields.update(kw)
    return WmmseProblem(**fields)


@pytest.mark.slow
def test_bcd_descends_on_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = random_problem(rng, int(rng.integers(2, 5)), 0.5, kappa=1e-10, max_iter=500)
        trace = np.asarray(wmmse.bcd_solve(p).trace[1:])
        assert np.all(np.diff(trace) <= 1e-9 * np.abs(trace[:-1]) + 1e-12)


@pytest.mark.slow
def test_bcd_ends_at_a_fixed_point():
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = random_problem(rng, 3, 0.3, kappa=1e-14, max_iter=5000)
        state = _state(p, wmmse.bcd_solve(p).q)
        again = _state(p, wmmse.power_step(p, state))
        assert np.linalg.norm(again.u - state.u) <= 1e-6 * np.linalg.norm(state.u)
        assert np.linalg.norm(again.w - state.w) <= 1e-6 * np.linalg.norm(state.w)


@pytest.mark.slow
def test_two_user_solution_matches_grid_search():
    rng = np.random.default_rng(13)
    for _ in range(20):
        p = random_problem(rng, 2, 0.1, kappa=1e-12, max_iter=2000)
        result = wmmse.bcd_solve(p)
        P1, P2 = np.meshgrid(
            np.linspace(0.0, p.p_max[0], 200), np.linspace(0.0, p.p_max[1], 200), indexing="ij"
        )
        g = p.gain
        s1 = g[0, 0] * P1 / (g[0, 1] * P2 + p.noise[0])
        s2 = g[1, 1] * P2 / (g[1, 0] * P1 + p.noise[1])
        F = p.costs[0] * P1 + p.costs[1] * P2
        F = F - p.weights[0] * np.log1p(s1) - p.weights[1] * np.log1p(s2)
        i, j = np.unravel_index(np.argmin(F), F.shape)
        cell = np.max(np.abs(F[max(i - 1, 0) : i + 2, max(j - 1, 0) : j + 2] - F[i, j]))
        assert abs(result.pmr - F[i, j]) <= cell + 1e-9
