"""
Comparison policies: All-to-RRHs, PL-First, exhaustive search and particle swarm optimization.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import config_base
from .allocation import Outcome, allocate
from .errors import ConfigError
from .netmodel import ORTHOGONAL, ModeAssignment, PowerAllocation, SlotContext
from .qlearn import decode_action
from .topology import NetworkTopology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PsoParams:
    particles: int = config_base.PSO_PARTICLES
    iterations: int = config_base.PSO_ITERATIONS
    inertia: float = config_base.PSO_INERTIA
    c1: float = config_base.PSO_C1
    c2: float = config_base.PSO_C2

    def __post_init__(self):
        if self.particles < 1 or self.iterations < 1:
            raise ValueError("PSO needs at least one particle and one iteration")
        if self.inertia < 0 or self.c1 < 0 or self.c2 < 0:
            raise ValueError("PSO inertia and acceleration coefficients must be non-negative")


def _subchannels(num_ues: int, num_subchannels: int, strategy: str, rng) -> List[Optional[int]]:
    """
    Uniformly random subchannels.  Under the orthogonal strategy they are drawn without
    replacement; when there are more UEs than subchannels the UEs left over stay idle.
    """
    if strategy != ORTHOGONAL:
        return [int(n) for n in rng.integers(0, num_subchannels, size=num_ues)]
    out: List[Optional[int]] = [None] * num_ues
    served = rng.permutation(num_ues)[:num_subchannels]
    for k, n in zip(served, rng.permutation(num_subchannels)):
        out[int(k)] = int(n)
    return out


def _assignment(ctx: SlotContext, nodes, subchannels) -> ModeAssignment:
    topo = ctx.topology
    links = tuple(None if n is None else (int(m), n) for m, n in zip(nodes, subchannels))
    return ModeAssignment(links, topo.num_tue, topo.num_nodes, topo.num_subchannels)


def all_to_rrhs(ctx: SlotContext, rng: np.random.Generator) -> ModeAssignment:
    """Every UE is served by C-RAN on a random subchannel."""
    topo = ctx.topology
    subchannels = _subchannels(topo.num_ues, topo.num_subchannels, ctx.strategy, rng)
    return _assignment(ctx, [0] * topo.num_ues, subchannels)


def pl_first(ctx: SlotContext, rng: np.random.Generator) -> ModeAssignment:
    """
    Every UE picks the C-RAN or F-AP node with the lowest pathloss (for C-RAN, that of the nearest
    RRH); ties go to the lowest node index.  Subchannels are random, as for All-to-RRHs.
    """
    topo = ctx.topology
    nodes = []
    for k in range(topo.num_ues):
        d = [topo.node_distance(k, m) for m in range(topo.num_fap + 1)]
        nodes.append(int(np.argmin(d)))
    subchannels = _subchannels(topo.num_ues, topo.num_subchannels, ctx.strategy, rng)
    return _assignment(ctx, nodes, subchannels)


def _link_options(topo: NetworkTopology, k: int) -> List[Optional[Tuple[int, int]]]:
    options: List[Optional[Tuple[int, int]]] = [None]
    for m in range(topo.num_nodes):
        if m == topo.relay_node(k):
            continue
        options.extend((m, n) for n in range(topo.num_subchannels))
    return options


def count_assignments(topo: NetworkTopology) -> int:
    """Number of C5-C7-valid assignments of a topology, the all-idle one included."""
    return math.prod(len(_link_options(topo, k)) for k in range(topo.num_ues))


def search_space_size(ctx: SlotContext) -> int:
    """The number of assignments the exhaustive search enumerates for this slot."""
    return count_assignments(ctx.topology)


@dataclass(frozen=True)
class ExhaustiveResult:
    assignment: ModeAssignment
    powers: PowerAllocation
    objective: float
    worst: float
    evaluated: int
    feasible: bool
    outcome: Outcome


def exhaustive_search(ctx: SlotContext, limit: int = config_base.EXHAUSTIVE_LIMIT):
    """
    Solves powers for every valid assignment and keeps the lowest power-minus-rate among the
    feasible ones (or among all, when none is feasible).  Under the orthogonal strategy
    assignments that share a subchannel are skipped.  Raises ConfigError above `limit` candidates.
    """
    size = search_space_size(ctx)
    if size > limit:
        log.warning(f"Refusing exhaustive search over {size} assignments (limit {limit})")
        raise ConfigError(f"Exhaustive search space of {size} assignments exceeds limit {limit}")

    topo = ctx.topology
    options = [_link_options(topo, k) for k in range(topo.num_ues)]
    best: Optional[Outcome] = None
    fallback: Optional[Outcome] = None
    worst = -np.inf
    evaluated = 0
    for links in itertools.product(*options):
        assignment = ModeAssignment(links, topo.num_tue, topo.num_nodes, topo.num_subchannels)
        if ctx.strategy == ORTHOGONAL and assignment.reuses_subchannels():
            continue
        outcome = allocate(ctx, assignment)
        evaluated += 1
        worst = max(worst, outcome.pmr)
        if fallback is None or outcome.pmr < fallback.pmr:
            fallback = outcome
        if outcome.feasible and (best is None or outcome.pmr < best.pmr):
            best = outcome

    chosen = best if best is not None else fallback
    log.info(f"Exhaustive search evaluated {evaluated} of {size} assignments")
    return ExhaustiveResult(
        assignment=chosen.assignment,
        powers=chosen.powers,
        objective=chosen.pmr,
        worst=worst,
        evaluated=evaluated,
        feasible=best is not None,
        outcome=chosen,
    )


@dataclass(frozen=True)
class PsoResult:
    assignment: ModeAssignment
    objective: float
    trace: List[float]
    evaluations: int


def decode_position(ctx: SlotContext, x) -> Optional[ModeAssignment]:
    """
    Maps a particle position to an assignment through a = floor(x_k).  Returns None for a position
    that decodes outside the code range, onto an F-UE's own relay, or (orthogonal strategy) onto a
    shared subchannel.
    """
    topo = ctx.topology
    N = topo.num_subchannels
    links = []
    for k, xk in enumerate(x):
        a = int(np.floor(xk))
        if not 1 <= a <= N * topo.num_nodes:
            return None
        m, n = decode_action(a, N)
        if m == topo.relay_node(k):
            return None
        links.append((m, n))
    assignment = ModeAssignment(tuple(links), topo.num_tue, topo.num_nodes, N)
    if ctx.strategy == ORTHOGONAL and assignment.reuses_subchannels():
        return None
    return assignment


def pso_optimize(ctx: SlotContext, params: PsoParams, rng: np.random.Generator) -> PsoResult:
    """
    Particle swarm search over assignments.  Fitness is the power-minus-rate of the solved
    assignment, or +inf for an invalid decode or a constraint violation.  Identical decodes share
    one evaluation.  `trace` holds the global-best fitness after each iteration.
    """
    topo = ctx.topology
    dims = topo.num_ues
    low, high = 1.0, float(topo.num_subchannels * topo.num_nodes + 1)
    top = np.nextafter(high, low)
    x = rng.uniform(low, high, size=(params.particles, dims))
    v = rng.uniform(-1.0, 1.0, size=(params.particles, dims)) * (high - low) / 2.0
    memo: Dict[Tuple, float] = {}

    def fitness(position) -> float:
        assignment = decode_position(ctx, position)
        if assignment is None:
            return np.inf
        if assignment.links not in memo:
            outcome = allocate(ctx, assignment)
            memo[assignment.links] = outcome.pmr if outcome.feasible else np.inf
        return memo[assignment.links]

    p_best = x.copy()
    p_fit = np.full(params.particles, np.inf)
    g_best = x[0].copy()
    g_fit = np.inf
    trace = []
    for it in range(params.iterations):
        for e in range(params.particles):
            f = fitness(x[e])
            if f < p_fit[e] or it == 0:
                p_fit[e], p_best[e] = f, x[e].copy()
            if f < g_fit:
                g_fit, g_best = f, x[e].copy()
        trace.append(float(g_fit))
        if it == params.iterations - 1:
            break
        r1 = rng.uniform(size=x.shape)
        r2 = rng.uniform(size=x.shape)
        v = params.inertia * v + r1 * params.c1 * (p_best - x) + r2 * params.c2 * (g_best - x)
        x = np.clip(x + v, low, top)

    assignment = decode_position(ctx, g_best)
    if assignment is None:
        log.warning("PSO found no valid assignment; every UE stays idle")
        assignment = ModeAssignment.idle(topo)
    return PsoResult(
        assignment=assignment, objective=float(g_fit), trace=trace, evaluations=len(memo)
    )
