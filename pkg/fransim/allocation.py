"""
Power dispatch and outcome evaluation shared by every mode-selection policy.

An assignment without subchannel reuse is solved by the orthogonal solver; one with reuse by
WMMSE.  Whatever the solver, the outcome is scored on realized rates: MMSE receivers are rebuilt
with the final powers.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import netmodel, powerorth, wmmse
from .netmodel import ModeAssignment, PowerAllocation, SlotContext, Verdicts

log = logging.getLogger(__name__)

SOLVER_NONE = "none"
SOLVER_ORTHOGONAL = "orthogonal"
SOLVER_WMMSE = "wmmse"


@dataclass(frozen=True)
class Outcome:
    assignment: ModeAssignment
    powers: PowerAllocation
    rates: np.ndarray
    power: float
    pmr: float
    verdicts: Verdicts
    qos_infeasible: np.ndarray
    solver: str
    solver_feasible: bool
    iterations: int = 0
    converged: bool = True

    @property
    def feasible(self) -> bool:
        return self.solver_feasible and self.verdicts.ok

    def user_power(self, k: int) -> float:
        return self.powers.user_power(k)


def evaluate(ctx: SlotContext, assignment: ModeAssignment, powers: PowerAllocation, **solver_info):
    """Scores fixed powers on realized rates, system power and the constraint verdicts."""
    achieved = netmodel.rates(ctx.channels, assignment, powers, ctx.rate)
    verdicts = netmodel.check_constraints(
        assignment, powers, ctx.channels, ctx.queues, ctx.budget, ctx.rate, ctx.topology, achieved
    )
    info = dict(solver=SOLVER_NONE, solver_feasible=True)
    info.update(solver_info)
    if "qos_infeasible" not in info:
        missed = ~np.concatenate([verdicts.c2_ues, verdicts.c3_ues])
        served = np.array([link is not None for link in assignment.links])
        info["qos_infeasible"] = missed & served
    return Outcome(
        assignment=assignment,
        powers=powers,
        rates=achieved,
        power=netmodel.system_power(assignment, powers, ctx.power),
        pmr=netmodel.power_minus_rate(
            assignment, powers, ctx.queues, ctx.channels, ctx.power, ctx.rate, achieved
        ),
        verdicts=verdicts,
        **info,
    )


def allocate(ctx: SlotContext, assignment: ModeAssignment) -> Outcome:
    if all(link is None for link in assignment.links):
        return evaluate(ctx, assignment, PowerAllocation.zeros(ctx.p_max_matrix))

    if not assignment.reuses_subchannels():
        result = powerorth.solve(ctx, assignment)
        return evaluate(
            ctx,
            assignment,
            result.allocation,
            solver=SOLVER_ORTHOGONAL,
            solver_feasible=result.feasible,
            qos_infeasible=result.qos_infeasible,
            iterations=result.steps,
        )

    result = wmmse.solve(ctx, assignment)
    if not result.feasible:
        log.debug(f"WMMSE found no feasible powers for {assignment.links}")
    return evaluate(
        ctx,
        assignment,
        result.allocation,
        solver=SOLVER_WMMSE,
        solver_feasible=result.feasible,
        iterations=result.iterations,
        converged=result.converged,
    )
