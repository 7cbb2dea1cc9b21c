"""
Power allocation when no subchannel is reused.  Rates are then interference-free and the objective

    sum_k c_k P_k - sum_i Q_i W0 slot log2(1 + g_i P_i)      (c = V0 or V1)

is convex and separable, so the stationary point is closed-form.  When that point breaks the
computing budget, powers are stepped down by a fixed dP, one UE at a time, until C1 holds.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .netmodel import (
    ModeAssignment,
    PowerAllocation,
    SlotContext,
    charged_loads,
    required_rates,
    served_links,
)

log = logging.getLogger(__name__)

LN2 = np.log(2.0)


@dataclass(frozen=True)
class OrthPowerProblem:
    assignment: ModeAssignment
    users: np.ndarray
    subchannels: np.ndarray
    nodes: np.ndarray
    gains: np.ndarray
    weights: np.ndarray
    costs: np.ndarray
    p_max: np.ndarray
    required: np.ndarray
    charged: np.ndarray
    fixed_load: np.ndarray
    mu1: float
    d_cpu: np.ndarray
    scale: float
    step: np.ndarray
    constant: float
    p_max_matrix: np.ndarray

    def __post_init__(self):
        if np.any(self.gains <= 0):
            raise ValueError("Link gains must be positive")
        if np.any(self.step <= 0):
            raise ValueError("Power step must be positive")


@dataclass(frozen=True)
class OrthResult:
    allocation: PowerAllocation
    feasible: bool
    compute_feasible: bool
    qos_infeasible: np.ndarray
    steps: int


def build_problem(ctx: SlotContext, assignment: ModeAssignment) -> OrthPowerProblem:
    if assignment.reuses_subchannels():
        raise ValueError("Orthogonal power allocation needs an assignment without subchannel reuse")
    links = served_links(ctx, assignment)
    users = links.users
    gains = ctx.channels.gains[users, links.nodes, links.subchannels] / ctx.channels.noise_power
    p_max = np.asarray(ctx.p_max, dtype=float)[users]
    return OrthPowerProblem(
        assignment=assignment,
        users=users,
        subchannels=links.subchannels,
        nodes=links.nodes,
        gains=gains,
        weights=np.array([ctx.weight(k) for k in users]),
        costs=np.array([ctx.cost(k) for k in users]),
        p_max=p_max,
        required=required_rates(assignment, ctx.queues.prev_rates, ctx.rate)[users],
        charged=links.charged,
        fixed_load=links.fixed_load,
        mu1=ctx.budget.mu1,
        d_cpu=np.asarray(ctx.budget.d_cpu, dtype=float),
        scale=ctx.rate.scale,
        step=p_max * ctx.solver.step_fraction,
        constant=ctx.power.V * ctx.power.p_fronthaul * links.cran_links,
        p_max_matrix=ctx.p_max_matrix,
    )


def user_rates(problem: OrthPowerProblem, p) -> np.ndarray:
    return problem.scale * np.log2(1.0 + problem.gains * p)


def objective(problem: OrthPowerProblem, p) -> float:
    return float(
        problem.costs @ p - problem.weights @ user_rates(problem, p) + problem.constant
    )


def derivative(problem: OrthPowerProblem, p) -> np.ndarray:
    """f'(P_k) for every assigned UE."""
    return problem.costs - problem.weights * problem.scale * problem.gains / (
        (1.0 + problem.gains * p) * LN2
    )


def qos_power(problem: OrthPowerProblem) -> np.ndarray:
    """The power at which each UE exactly meets its C2/C3 rate requirement."""
    return np.expm1(problem.required / problem.scale * LN2) / problem.gains


def qos_infeasible(problem: OrthPowerProblem) -> np.ndarray:
    return qos_power(problem) > problem.p_max * (1.0 + 1e-12)


def loads(problem: OrthPowerProblem, p) -> np.ndarray:
    return charged_loads(
        problem.nodes,
        problem.charged,
        problem.fixed_load,
        problem.mu1,
        user_rates(problem, p),
        len(problem.d_cpu),
    )


def _allocation(problem: OrthPowerProblem, p) -> PowerAllocation:
    per_ue = np.zeros(problem.p_max_matrix.shape[0])
    per_ue[problem.users] = p
    return PowerAllocation.on_links(problem.assignment, per_ue, problem.p_max_matrix)


def _user_powers(problem: OrthPowerProblem, allocation: PowerAllocation) -> np.ndarray:
    return allocation.p[problem.users, problem.subchannels].copy()


def extreme_point(problem: OrthPowerProblem) -> PowerAllocation:
    """
    The unconstrained stationary point, clamped to [0, P^max]: Q W0 slot / (c ln2) - 1/g for
    traditional UEs, and the QoS power for F-UEs (their objective term has no rate reward).
    """
    k0 = problem.assignment.num_tue
    traditional = problem.users < k0
    with np.errstate(divide="ignore", invalid="ignore"):
        stationary = np.where(
            problem.costs > 0,
            problem.weights * problem.scale / (problem.costs * LN2) - 1.0 / problem.gains,
            np.where(problem.weights > 0, np.inf, 0.0),
        )
    p = np.where(traditional, stationary, qos_power(problem))
    return _allocation(problem, np.clip(p, 0.0, problem.p_max))


def restore_feasibility(start: PowerAllocation, problem: OrthPowerProblem) -> OrthResult:
    """
    Steps powers down by dP until every node's computing load fits its budget.  Each step lowers
    the UE with the smallest partial derivative f'(P_k) among those computing at an overloaded
    node; ties go to the lowest UE index.  No power is pushed below its C2/C3 power.  If every
    candidate sits at that floor and C1 still fails, the result is declared compute-infeasible.
    """
    floor = np.minimum(qos_power(problem), problem.p_max)
    p = np.maximum(_user_powers(problem, start), floor)
    budget = problem.d_cpu * (1.0 + 1e-9) + 1e-9
    steps = 0
    compute_ok = True
    while True:
        over = loads(problem, p) > budget
        if not over.any():
            break
        candidates = problem.charged & over[problem.nodes] & (p > floor)
        if not candidates.any():
            compute_ok = False
            log.debug(f"Computing budget unreachable for nodes {np.flatnonzero(over).tolist()}")
            break
        slopes = derivative(problem, p)
        idx = np.flatnonzero(candidates)
        k = idx[np.argmin(slopes[idx])]
        p[k] = max(p[k] - problem.step[k], floor[k])
        steps += 1

    infeasible = np.zeros(problem.p_max_matrix.shape[0], dtype=bool)
    infeasible[problem.users] = qos_infeasible(problem)
    return OrthResult(
        allocation=_allocation(problem, p),
        feasible=compute_ok and not infeasible.any(),
        compute_feasible=compute_ok,
        qos_infeasible=infeasible,
        steps=steps,
    )


def solve(ctx: SlotContext, assignment: ModeAssignment) -> OrthResult:
    problem = build_problem(ctx, assignment)
    return restore_feasibility(extreme_point(problem), problem)
