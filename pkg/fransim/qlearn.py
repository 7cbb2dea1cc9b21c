"""
Mode selection by tabular Q-learning.

Every UE k owns a table over action codes a = n + m*N (n 1-based), i.e. one value per
(node, subchannel) pair it may use.  The centralized learner (orthogonal strategy) lets one UE at
a time reselect while the others hold their choice; distributed agents (multiplexed strategy)
select simultaneously, each within its neighbor scope.  Tables persist across slots.
"""

import csv
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config_base
from .allocation import Outcome, allocate
from .netmodel import (
    MULTIPLEXED,
    ORTHOGONAL,
    ModeAssignment,
    PowerParams,
    RateParams,
    SlotContext,
)
from .topology import NetworkTopology
from .utils import fmt

log = logging.getLogger(__name__)

SCHEDULES = ("log", "fixed")
SWEEP_ORDERS = ("random", "fixed")
EMIT_RULES = ("final", "best")


@dataclass(frozen=True)
class LearnerParams:
    alpha: float = config_base.LEARNING_RATE
    tau0: float = config_base.INITIAL_TEMPERATURE
    schedule: str = config_base.TEMPERATURE_SCHEDULE
    episodes: int = config_base.EPISODES_PER_SLOT
    sweep_order: str = config_base.SWEEP_ORDER
    emit: str = config_base.EMIT

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"Invalid learning rate {self.alpha}: must be in (0, 1)")
        if not self.tau0 > 0:
            raise ValueError(f"Invalid initial temperature {self.tau0}: must be positive")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"Unknown temperature schedule '{self.schedule}'")
        if self.sweep_order not in SWEEP_ORDERS:
            raise ValueError(f"Unknown sweep order '{self.sweep_order}'")
        if self.emit not in EMIT_RULES:
            raise ValueError(f"Unknown emission rule '{self.emit}'")
        if self.episodes < 1:
            raise ValueError(f"Invalid episode count {self.episodes}: must be at least 1")


def encode_action(m: int, n: int, num_subchannels: int) -> int:
    """a = n + m*N with the subchannel `n` given 0-based."""
    if not 0 <= n < num_subchannels or m < 0:
        raise ValueError(f"Invalid node/subchannel pair ({m}, {n})")
    return (n + 1) + m * num_subchannels


def decode_action(
    a: int, num_subchannels: int, num_nodes: Optional[int] = None
) -> Tuple[int, int]:
    """Inverts `encode_action`: returns (m, n) with n 0-based.  Raises ValueError out of range."""
    if a < 1 or (num_nodes is not None and a > num_subchannels * num_nodes):
        raise ValueError(f"Action code {a} is out of range")
    n = (a - 1) % num_subchannels
    return (a - 1 - n) // num_subchannels, n


@dataclass
class QTable:
    """
    One agent's action values, indexed by code - 1.  `scope` masks the admissible codes; the
    episode counter t starts at 1 so the logarithmic temperature tau0 / ln(1 + t) is finite.
    """

    values: np.ndarray
    scope: np.ndarray
    num_subchannels: int
    alpha: float = config_base.LEARNING_RATE
    tau0: float = config_base.INITIAL_TEMPERATURE
    schedule: str = config_base.TEMPERATURE_SCHEDULE
    episode: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"Invalid learning rate {self.alpha}: must be in (0, 1)")
        if not self.tau0 > 0:
            raise ValueError(f"Invalid initial temperature {self.tau0}: must be positive")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"Unknown temperature schedule '{self.schedule}'")
        if self.values.shape != self.scope.shape:
            raise ValueError("Action values and scope must have the same shape")
        if not self.scope.any():
            raise ValueError("A Q-table needs at least one admissible action")

    @classmethod
    def for_nodes(cls, nodes: Sequence[int], num_nodes: int, num_subchannels: int, **kwargs):
        """A zero-initialized table admitting every subchannel of the listed nodes."""
        scope = np.zeros((num_nodes, num_subchannels), dtype=bool)
        scope[list(nodes)] = True
        scope = scope.reshape(-1)
        return cls(np.zeros(len(scope)), scope, num_subchannels, **kwargs)

    @property
    def temperature(self) -> float:
        if self.schedule == "fixed":
            return self.tau0
        return self.tau0 / np.log(1.0 + self.episode)

    def codes(self) -> np.ndarray:
        return np.flatnonzero(self.scope) + 1

    def value(self, a: int) -> float:
        return float(self.values[a - 1])

    def probabilities(self) -> np.ndarray:
        """Softmax over the admissible codes, in `codes()` order."""
        z = self.values[self.scope] / self.temperature
        z = np.exp(z - z.max())
        return z / z.sum()


def softmax_select(table: QTable, rng: np.random.Generator) -> int:
    return int(rng.choice(table.codes(), p=table.probabilities()))


def q_update(table: QTable, a: int, reward: float) -> QTable:
    """Q <- (1 - alpha) Q + alpha W, in place; returns the table."""
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"Invalid reward {reward}: must be in [0, 1]")
    if not table.scope[a - 1]:
        raise ValueError(f"Action {a} is outside the agent's scope")
    table.values[a - 1] = (1.0 - table.alpha) * table.values[a - 1] + table.alpha * reward
    return table


def reward(
    traditional: bool,
    node: int,
    power: float,
    rate: float,
    queue: float,
    p_max: float,
    params: PowerParams,
    rate_params: RateParams,
) -> float:
    """
    1 - (power-minus-rate of the choice) / (power-minus-rate at P^max and minimum rate), clamped
    to [0, 1].  When the reference is not positive (a large backlog), the reward is the gain over
    the reference relative to its magnitude, again clamped.
    """
    fronthaul = params.V * params.p_fronthaul if node == 0 else 0.0
    if traditional:
        num = params.V0 * power + fronthaul - queue * rate
        den = params.V0 * p_max + fronthaul - queue * rate_params.r_min
    else:
        num = params.V1 * power + fronthaul
        den = params.V1 * p_max + fronthaul
    if den > 0:
        w = 1.0 - num / den
    elif den < 0:
        w = (den - num) / abs(den)
    else:
        w = 1.0 if num <= 0 else 0.0
    return float(np.clip(w, 0.0, 1.0))


def assignment_rewards(ctx: SlotContext, outcome: Outcome, strategy: str) -> np.ndarray:
    """
    Per-UE rewards of an evaluated assignment; idle UEs get 0.  Zero cases: under the orthogonal
    strategy a UE sharing its subchannel, a UE whose rate requirement is out of reach, or one at a
    node whose computing budget is exceeded; under the multiplexed strategy any C1/C2/C3 failure
    for the UE's own mode, or a power problem with no feasible point.
    """
    assignment = outcome.assignment
    verdicts = outcome.verdicts
    out = np.zeros(assignment.num_ues)
    for k, link in enumerate(assignment.links):
        if link is None:
            continue
        m = link[0]
        if strategy == ORTHOGONAL:
            c1_ok = m >= len(verdicts.c1_nodes) or bool(verdicts.c1_nodes[m])
            if assignment.collides(k) or outcome.qos_infeasible[k] or not c1_ok:
                continue
        elif not outcome.solver_feasible or not verdicts.ue_ok(k, m):
            continue
        traditional = assignment.is_traditional(k)
        out[k] = reward(
            traditional,
            m,
            outcome.user_power(k),
            float(outcome.rates[k]),
            ctx.weight(k),
            float(ctx.p_max[k]),
            ctx.power,
            ctx.rate,
        )
    return out


@dataclass(frozen=True)
class LearnerState:
    """(k0, s): the UE currently reselecting and every UE's current action code (None = idle)."""

    k0: int
    codes: Tuple[Optional[int], ...]

    @classmethod
    def initial(cls, num_ues: int) -> "LearnerState":
        return cls(0, (None,) * num_ues)

    def with_code(self, k: int, a: Optional[int]) -> "LearnerState":
        codes = list(self.codes)
        codes[k] = a
        return LearnerState(k, tuple(codes))

    def assignment(self, topology: NetworkTopology) -> ModeAssignment:
        N = topology.num_subchannels
        links = tuple(None if a is None else decode_action(a, N) for a in self.codes)
        return ModeAssignment(links, topology.num_tue, topology.num_nodes, N)


OutcomeCache = Dict[Tuple, Outcome]


def _evaluate(ctx: SlotContext, assignment: ModeAssignment, cache: OutcomeCache) -> Outcome:
    key = assignment.links
    if key not in cache:
        cache[key] = allocate(ctx, assignment)
    return cache[key]


def centralized_episode(
    state: LearnerState,
    tables: List[QTable],
    ctx: SlotContext,
    rng: np.random.Generator,
    params: LearnerParams,
    cache: Optional[OutcomeCache] = None,
):
    """
    One sweep in which every UE reselects once.  A choice that collides with another UE's
    subchannel earns 0 and leaves the state unchanged; any other choice becomes the new state and
    earns its reward.  Returns (state, best state of the sweep, its total reward).
    """
    cache = {} if cache is None else cache
    topology = ctx.topology
    order = np.arange(topology.num_ues)
    if params.sweep_order == "random":
        order = rng.permutation(order)
    best, best_total = None, -np.inf
    for k in order:
        k = int(k)
        table = tables[k]
        a = softmax_select(table, rng)
        m, n = decode_action(a, topology.num_subchannels)
        current = state.assignment(topology)
        holders = [u for u in current.users_on(n) if u != k]
        if holders:
            q_update(table, a, 0.0)
            state = replace(state, k0=k)
            continue
        state = state.with_code(k, a)
        outcome = _evaluate(ctx, state.assignment(topology), cache)
        rewards = assignment_rewards(ctx, outcome, ORTHOGONAL)
        q_update(table, a, rewards[k])
        if rewards.sum() > best_total:
            best, best_total = state, float(rewards.sum())
    for table in tables:
        table.episode += 1
    if best is None:
        outcome = _evaluate(ctx, state.assignment(topology), cache)
        best, best_total = state, float(assignment_rewards(ctx, outcome, ORTHOGONAL).sum())
    return state, best, best_total


def distributed_episode(
    tables: List[QTable],
    ctx: SlotContext,
    rng: np.random.Generator,
    cache: Optional[OutcomeCache] = None,
):
    """
    Every agent selects within its scope at once; the joint assignment is evaluated once and each
    agent learns from its own reward.  Returns (assignment, per-UE rewards).
    """
    cache = {} if cache is None else cache
    topology = ctx.topology
    codes = tuple(softmax_select(table, rng) for table in tables)
    assignment = LearnerState(0, codes).assignment(topology)
    outcome = _evaluate(ctx, assignment, cache)
    rewards = assignment_rewards(ctx, outcome, MULTIPLEXED)
    for k, table in enumerate(tables):
        q_update(table, codes[k], rewards[k])
        table.episode += 1
    return assignment, rewards


class Learner:
    """Per-UE tables and the learner state, carried from slot to slot."""

    def __init__(self, topology: NetworkTopology, params: LearnerParams, strategy: str):
        self.topology = topology
        self.params = params
        self.strategy = strategy
        self.state = LearnerState.initial(topology.num_ues)
        settings = dict(alpha=params.alpha, tau0=params.tau0, schedule=params.schedule)
        self.tables = []
        for k in range(topology.num_ues):
            if strategy == ORTHOGONAL:
                nodes = [m for m in range(topology.num_nodes) if m != topology.relay_node(k)]
            else:
                nodes = topology.neighbors(k)
            self.tables.append(
                QTable.for_nodes(nodes, topology.num_nodes, topology.num_subchannels, **settings)
            )

    def select(self, ctx: SlotContext, rng: np.random.Generator):
        """
        Runs the slot's learning episodes and returns (assignment, total reward) under the emission
        rule: the final state, or the best-rewarded state seen during the slot.
        """
        cache: OutcomeCache = {}
        best, best_total = None, -np.inf
        for _ in range(self.params.episodes):
            if self.strategy == ORTHOGONAL:
                self.state, visited, total = centralized_episode(
                    self.state, self.tables, ctx, rng, self.params, cache
                )
                candidate = visited.assignment(self.topology)
            else:
                candidate, rewards = distributed_episode(self.tables, ctx, rng, cache)
                total = float(rewards.sum())
            if total > best_total:
                best, best_total = candidate, total

        if self.params.emit == "best":
            return best, best_total
        if self.strategy == ORTHOGONAL:
            final = self.state.assignment(self.topology)
        else:
            final = candidate
        outcome = _evaluate(ctx, final, cache)
        log.debug(f"Learner emitted {final.links} after {len(cache)} distinct evaluations")
        return final, float(assignment_rewards(ctx, outcome, self.strategy).sum())


def export_tables(tables: Sequence[QTable], path) -> None:
    """Writes one `k,m,n,value` row per admissible action (n 0-based)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["k", "m", "n", "value"])
        for k, table in enumerate(tables):
            for a in table.codes():
                m, n = decode_action(int(a), table.num_subchannels)
                writer.writerow([k, m, n, fmt(table.value(a))])
