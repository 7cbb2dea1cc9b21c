"""
Power allocation when subchannels are reused.

With detection vectors v held fixed, each served UE i sees the scalar channels a[i, j] = v_i^H h_j
(j on the same subchannel).  The weighted power-minus-rate problem is solved through its weighted
MMSE equivalent by block coordinate descent over receivers u, MSE weights w and amplitudes
q = sqrt(P).  The q block is a convex quadratic with second-order-cone QoS constraints.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import cvxpy as cp
import numpy as np

from . import config_base
from .errors import NumericFailure
from .netmodel import (
    ModeAssignment,
    PowerAllocation,
    SlotContext,
    charged_loads,
    qos_sinr_threshold,
    required_rates,
    served_links,
)
from .topology import mmse_receiver

log = logging.getLogger(__name__)

LN2 = np.log(2.0)

# Relative tightening of the SOC QoS constraints, absorbing conic-solver tolerance.
D2_MARGIN = 1e-7


@dataclass(frozen=True)
class WmmseProblem:
    """
    One slot's multiplexed power problem over U served users.  `weights` are the objective's
    rate weights Q_i W0 slot / ln2 (0 for F-UEs) and `gamma` the QoS SINR thresholds (0 means no
    requirement).  `scale` converts log2(1 + SINR) into bits per slot for the computing loads.
    The trailing fields describe computing charges and placement; left unset they describe an
    uncharged problem with no slot behind it.
    """

    a: np.ndarray
    noise: np.ndarray
    weights: np.ndarray
    costs: np.ndarray
    p_max: np.ndarray
    gamma: np.ndarray
    kappa: float = config_base.WMMSE_KAPPA
    max_iter: int = config_base.WMMSE_MAX_ITER
    constant: float = 0.0
    scale: float = 1.0
    mu1: float = 0.0
    d_cpu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nodes: Optional[np.ndarray] = None
    charged: Optional[np.ndarray] = None
    fixed_load: Optional[np.ndarray] = None
    users: Optional[np.ndarray] = None
    assignment: Optional[ModeAssignment] = None
    p_max_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        size = len(self.noise)
        if self.a.shape != (size, size):
            raise ValueError(f"Channel matrix shape {self.a.shape} does not match {size} users")
        if np.any(self.noise <= 0) or np.any(self.p_max < 0) or np.any(self.gamma < 0):
            raise ValueError("Noise must be positive; power caps and thresholds non-negative")
        if np.any(self.weights < 0) or np.any(self.costs < 0):
            raise ValueError("Objective weights and costs must be non-negative")
        if np.any(np.abs(np.diag(self.a)) == 0):
            raise ValueError("Every user needs a non-zero direct channel")
        if not (self.kappa > 0 and self.max_iter >= 1):
            raise ValueError(f"Invalid precision {self.kappa} or iteration cap {self.max_iter}")
        defaults = {
            "nodes": np.zeros(size, dtype=int),
            "charged": np.zeros(size, dtype=bool),
            "fixed_load": np.zeros(size),
            "users": np.arange(size),
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)

    @property
    def size(self) -> int:
        return len(self.noise)

    @property
    def q_max(self) -> np.ndarray:
        return np.sqrt(self.p_max)

    @property
    def gain(self) -> np.ndarray:
        """|a_ij|^2"""
        return np.abs(self.a) ** 2

    @property
    def constrained(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.gamma > 0))


@dataclass(frozen=True)
class WmmseState:
    q: np.ndarray
    u: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class WmmseResult:
    q: np.ndarray
    allocation: Optional[PowerAllocation]
    pmr: float
    iterations: int
    converged: bool
    feasible: bool
    compute_limited: bool
    trace: List[float]

    @property
    def powers(self) -> np.ndarray:
        return self.q**2


def build_problem(ctx: SlotContext, assignment: ModeAssignment) -> WmmseProblem:
    """
    Fixes the detection vectors at their P^max-surrogate MMSE values, rotated so that v_i^H h_i is
    real and positive and scaled so that sigma^2 ||v_i||^2 = 1.
    """
    links = served_links(ctx, assignment)
    channels = ctx.channels
    surrogate = ctx.surrogate_powers(assignment)
    sigma = np.sqrt(channels.noise_power)
    size = len(links.users)
    a = np.zeros((size, size), dtype=complex)
    for i, k in enumerate(links.users):
        m, n = int(links.nodes[i]), int(links.subchannels[i])
        v = mmse_receiver(channels, assignment, surrogate, k, m, n)
        v = v / np.linalg.norm(v)
        own = np.vdot(v, channels.link(k, m, n))
        v = v * (own / abs(own)) / sigma
        for j, other in enumerate(links.users):
            if links.subchannels[j] == n:
                a[i, j] = np.vdot(v, channels.link(other, m, n))

    required = required_rates(assignment, ctx.queues.prev_rates, ctx.rate)[links.users]
    return WmmseProblem(
        a=a,
        noise=np.ones(size),
        weights=np.array([ctx.weight(k) for k in links.users]) * ctx.rate.scale / LN2,
        costs=np.array([ctx.cost(k) for k in links.users]),
        p_max=np.asarray(ctx.p_max, dtype=float)[links.users],
        gamma=np.array([qos_sinr_threshold(r, ctx.rate) for r in required]),
        kappa=ctx.solver.kappa,
        max_iter=ctx.solver.max_iter,
        constant=ctx.power.V * ctx.power.p_fronthaul * links.cran_links,
        scale=ctx.rate.scale,
        mu1=ctx.budget.mu1,
        d_cpu=np.asarray(ctx.budget.d_cpu, dtype=float),
        nodes=links.nodes,
        charged=links.charged,
        fixed_load=links.fixed_load,
        users=links.users,
        assignment=assignment,
        p_max_matrix=ctx.p_max_matrix,
    )


def sinr(problem: WmmseProblem, q) -> np.ndarray:
    received = problem.gain * np.asarray(q, dtype=float) ** 2
    signal = np.diag(received)
    return signal / (received.sum(axis=1) - signal + problem.noise)


def pmr(problem: WmmseProblem, q) -> float:
    """Power-minus-rate at amplitudes q, in the objective's bit units."""
    q = np.asarray(q, dtype=float)
    rate_term = problem.weights @ np.log1p(sinr(problem, q))
    return float(problem.costs @ q**2 + problem.constant - rate_term)


def loads(problem: WmmseProblem, q) -> np.ndarray:
    """Per-node computing load implied by the rates at amplitudes q."""
    bits = problem.scale * np.log2(1.0 + sinr(problem, q))
    return charged_loads(
        problem.nodes, problem.charged, problem.fixed_load, problem.mu1, bits, len(problem.d_cpu)
    )


def within_budget(problem: WmmseProblem, q) -> bool:
    if not problem.charged.any():
        return True
    return bool(np.all(loads(problem, q) <= problem.d_cpu * (1.0 + 1e-9) + 1e-9))


def mse(problem: WmmseProblem, state: WmmseState) -> np.ndarray:
    """
    e_k = |u_k|^2 (sum_k' |a_kk'|^2 q_k'^2 + noise_k) - 2 Re{u_k a_kk} q_k + 1 for every user.
    Interferers contribute independently, so cross terms between different symbols vanish.
    """
    q = np.asarray(state.q, dtype=float)
    u = np.asarray(state.u)
    total = problem.gain @ q**2 + problem.noise
    direct = np.real(u * np.diag(problem.a)) * q
    return np.abs(u) ** 2 * total - 2.0 * direct + 1.0


def optimal_receiver(problem: WmmseProblem, q) -> np.ndarray:
    """u_k = conj(a_kk) q_k / (sum_k' |a_kk'|^2 q_k'^2 + noise_k); a_kk is real once built."""
    q = np.asarray(q, dtype=float)
    total = problem.gain @ q**2 + problem.noise
    return np.conj(np.diag(problem.a)) * q / total


def optimal_weight(e) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if np.any(e <= 0):
        raise NumericFailure(f"Non-positive MSE {e}: cannot form MSE weights")
    return 1.0 / e


def quadratic_coefficients(problem: WmmseProblem, state: WmmseState):
    """
    The q-block objective sum_i w_i omega_i e_i + sum_k c_k q_k^2, up to a constant, as
    sum_k d_k q_k^2 + b_k q_k.
    """
    ww = problem.weights * np.asarray(state.w)
    u2 = np.abs(state.u) ** 2
    d = problem.costs + (ww * u2) @ problem.gain
    b = -2.0 * ww * np.real(np.asarray(state.u) * np.diag(problem.a))
    return d, b


def qos_satisfied(problem: WmmseProblem, q) -> bool:
    need = problem.gamma > 0
    if not need.any():
        return True
    s = sinr(problem, q)
    return bool(np.all(s[need] >= problem.gamma[need] * (1.0 - 1e-9)))


@lru_cache(maxsize=256)
def _soc_program(size: int, constrained: Tuple[int, ...]):
    """A DPP problem over q for one (size, QoS-constrained set) structure, re-solved per call."""
    q = cp.Variable(size, nonneg=True)
    d = cp.Parameter(size, nonneg=True)
    b = cp.Parameter(size)
    q_max = cp.Parameter(size, nonneg=True)
    rows = {i: cp.Parameter(size, nonneg=True) for i in constrained}
    floors = {i: cp.Parameter(1, nonneg=True) for i in constrained}
    constraints = [q <= q_max]
    for i in constrained:
        # ||(|a_ij| q_j)_j, sqrt(noise_i)|| <= sqrt(1 + 1/gamma_i) |a_ii| q_i, divided through
        constraints.append(cp.SOC(q[i], cp.hstack([cp.multiply(rows[i], q), floors[i]])))
    objective = cp.Minimize(cp.sum(cp.multiply(d, cp.square(q))) + b @ q)
    return cp.Problem(objective, constraints), q, (d, b, q_max, rows, floors)


def power_step(problem: WmmseProblem, state: WmmseState) -> Optional[np.ndarray]:
    """
    Minimizes the q-block objective over 0 <= q <= sqrt(P^max) and the SOC QoS constraints.
    Returns None when the QoS constraints admit no point.  The box minimizer is closed-form and is
    returned directly whenever it already meets every QoS constraint.
    """
    d, b = quadratic_coefficients(problem, state)
    with np.errstate(divide="ignore", invalid="ignore"):
        box = np.where(d > 0, -b / (2.0 * d), np.where(b < 0, np.inf, 0.0))
    box = np.clip(box, 0.0, problem.q_max)
    if qos_satisfied(problem, box):
        return box

    constrained = problem.constrained
    program, q, (d_par, b_par, qmax_par, rows, floors) = _soc_program(problem.size, constrained)
    norm = max(float(np.max(np.abs(d))), float(np.max(np.abs(b))), 1e-300)
    d_par.value = d / norm
    b_par.value = b / norm
    qmax_par.value = problem.q_max
    direct = np.abs(np.diag(problem.a))
    for i in constrained:
        slope = np.sqrt(1.0 + 1.0 / problem.gamma[i]) * direct[i] / (1.0 + D2_MARGIN)
        rows[i].value = np.abs(problem.a[i]) / slope
        floors[i].value = np.array([np.sqrt(problem.noise[i]) / slope])
    try:
        program.solve()
    except cp.SolverError as e:
        raise NumericFailure(f"Conic power subproblem failed: {e}")
    if program.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return None
    if q.value is None:
        raise NumericFailure(f"Conic power subproblem ended with status {program.status}")
    return np.clip(np.asarray(q.value, dtype=float), 0.0, problem.q_max)


def _seed_zero_amplitudes(problem: WmmseProblem, q) -> np.ndarray:
    q = q.copy()
    received = problem.gain * q**2
    floor = received.sum(axis=1) - np.diag(received) + problem.noise
    direct = np.diag(problem.gain)
    slope = problem.costs - problem.weights * direct / floor
    for k in np.flatnonzero((q == 0) & (slope < 0)):
        if problem.costs[k] > 0:
            target = problem.weights[k] / problem.costs[k] - floor[k] / direct[k]
        else:
            target = problem.p_max[k]
        q[k] = np.sqrt(np.clip(target, 0.0, problem.p_max[k]))
    return q


def bcd_solve(problem: WmmseProblem, initial=None) -> WmmseResult:
    """
    Block coordinate descent: u, then w = 1/e, then q, until the power-minus-rate settles within
    kappa relative.  An iterate that breaks the computing budget ends the descent and the last
    budget-feasible iterate is returned.  Amplitudes start at sqrt(P^max) / 2 unless `initial` is
    given.
    A zero amplitude whose power-minus-rate slope at zero is negative is moved to its
    interference-free optimum first, since u = 0 would otherwise pin it at zero.
    """
    q = problem.q_max / 2.0 if initial is None else np.asarray(initial, dtype=float)
    trace = [pmr(problem, q)]
    q = _seed_zero_amplitudes(problem, q)
    current = pmr(problem, q)
    feasible, converged, compute_limited = True, False, False
    iterations = 0
    while iterations < problem.max_iter:
        iterations += 1
        cached_q, cached_pmr = q, current
        u = optimal_receiver(problem, q)
        w = optimal_weight(mse(problem, WmmseState(q=q, u=u, w=np.ones(problem.size))))
        stepped = power_step(problem, WmmseState(q=q, u=u, w=w))
        if stepped is None:
            feasible = False
            break
        if not within_budget(problem, stepped):
            compute_limited = True
            if iterations == 1 and not within_budget(problem, cached_q):
                q, current, feasible = stepped, pmr(problem, stepped), False
            else:
                q, current = cached_q, cached_pmr
            break
        q, current = stepped, pmr(problem, stepped)
        trace.append(current)
        if abs(current - cached_pmr) <= problem.kappa * abs(cached_pmr):
            converged = True
            break

    if not converged and feasible and not compute_limited:
        log.warning(f"WMMSE stopped after {iterations} iterations without converging")
    if feasible and not qos_satisfied(problem, q):
        feasible = False
    allocation = None
    if problem.assignment is not None:
        per_ue = np.zeros(problem.p_max_matrix.shape[0])
        per_ue[problem.users] = q**2
        allocation = PowerAllocation.on_links(problem.assignment, per_ue, problem.p_max_matrix)
    return WmmseResult(
        q=q,
        allocation=allocation,
        pmr=current,
        iterations=iterations,
        converged=converged,
        feasible=feasible,
        compute_limited=compute_limited,
        trace=trace,
    )


def solve(ctx: SlotContext, assignment: ModeAssignment) -> WmmseResult:
    return bcd_solve(build_problem(ctx, assignment))
