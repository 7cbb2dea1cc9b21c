"""
Experiment orchestration: the per-slot loop, metric aggregation, parameter sweeps, policy
comparison and the output files.
"""

import csv
import dataclasses
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines, config_base, qlearn
from .allocation import allocate
from .config import SimConfig
from .errors import ConfigError
from .netmodel import SlotContext
from .qlearn import Learner, assignment_rewards
from .queueing import (
    QueueState,
    advance_queue,
    draw_arrivals,
    drift_plus_penalty,
    mean_rate_stability_metric,
)
from .stats import log_stats
from .timer import Stopwatch
from .topology import NetworkTopology, draw_channels, generate_topology
from .utils import STREAM_POLICY, fmt, stream_rng

log = logging.getLogger(__name__)

SWEEP_DIMENSIONS = ("V", "lambda", "compute_budget", "K1", "tau")

# How often (in slots) a run reports progress.
PROGRESS_EVERY = 1000


@dataclass
class World:
    """Everything one seed's simulation carries from slot to slot."""

    config: SimConfig
    seed: int
    topology: NetworkTopology
    queues: QueueState
    learner: Optional[Learner] = None

    @classmethod
    def create(cls, config: SimConfig, seed: int) -> "World":
        topology = generate_topology(config.topology, seed)
        queues = QueueState.empty(config.traffic.arrivals(topology.num_tue), topology.num_ues)
        learner = None
        if config.experiment.policy == "qlearn":
            learner = Learner(topology, config.learner, config.experiment.strategy)
        return cls(config, seed, topology, queues, learner)

    def context(self, slot: int) -> SlotContext:
        cfg = self.config
        topo = self.topology
        return SlotContext(
            topology=topo,
            channels=draw_channels(topo, slot, self.seed, cfg.channel, cfg.rate.w0),
            queues=self.queues,
            rate=cfg.rate,
            power=cfg.power,
            budget=cfg.compute.budget(topo.num_fap),
            p_max=cfg.power.p_max(topo.num_tue, topo.num_fue),
            strategy=cfg.experiment.strategy,
            solver=cfg.solver,
        )


@dataclass(frozen=True)
class SlotRow:
    slot: int
    power: float
    pmr: float
    dpp: float
    reward: float
    violations: int
    feasible: bool
    fap_served: int
    queue_before: float
    queue_after: float
    rates: Tuple[float, ...]
    backlog_before: Tuple[float, ...]
    backlog_after: Tuple[float, ...]

    @staticmethod
    def header(num_ues: int, num_tue: int) -> List[str]:
        return (
            [
                "slot",
                "power",
                "pmr",
                "dpp",
                "reward",
                "violations",
                "feasible",
                "fap_served",
                "queue_before",
                "queue_after",
            ]
            + [f"rate_{k}" for k in range(num_ues)]
            + [f"backlog_{i}" for i in range(num_tue)]
            + [f"backlog_after_{i}" for i in range(num_tue)]
        )

    def values(self) -> List[str]:
        scalars = [
            self.slot,
            self.power,
            self.pmr,
            self.dpp,
            self.reward,
            self.violations,
            self.feasible,
            self.fap_served,
            self.queue_before,
            self.queue_after,
        ]
        vectors = self.rates + self.backlog_before + self.backlog_after
        return [fmt(x) for x in scalars + list(vectors)]


@dataclass
class MetricsRecord:
    """One seed's per-slot rows; every aggregate is derived from them."""

    seed: int
    rows: List[SlotRow] = field(default_factory=list)
    elapsed: float = 0.0

    def aggregates(self) -> Dict[str, float]:
        """
        avg_power and avg_pmr are slot averages; avg_queue is the time average of sum_i Q_i at the
        start of each slot; stability_i is Q_i(T) / T after the last slot.
        """
        rows = self.rows
        T = len(rows)
        if T == 0:
            raise ValueError("No slots recorded")
        agg = {
            "slots": T,
            "avg_power": float(np.mean([r.power for r in rows])),
            "avg_queue": float(np.mean([r.queue_before for r in rows])),
            "avg_pmr": float(np.mean([r.pmr for r in rows])),
            "avg_dpp": float(np.mean([r.dpp for r in rows])),
            "total_reward": float(np.sum([r.reward for r in rows])),
            "avg_reward": float(np.mean([r.reward for r in rows])),
            "final_reward": float(rows[-1].reward),
            "violations": float(np.sum([r.violations for r in rows])),
            "infeasible_slots": float(np.sum([not r.feasible for r in rows])),
            "fap_served": float(np.mean([r.fap_served for r in rows])),
        }
        history = [r.backlog_before for r in rows] + [rows[-1].backlog_after]
        for i, value in enumerate(mean_rate_stability_metric(history, T)):
            agg[f"stability_{i}"] = float(value)
        return agg


def select_assignment(world: World, ctx: SlotContext, rng: np.random.Generator):
    policy = world.config.experiment.policy
    if policy == "qlearn":
        assignment, _ = world.learner.select(ctx, rng)
        return assignment
    if policy == "all_to_rrhs":
        return baselines.all_to_rrhs(ctx, rng)
    if policy == "pl_first":
        return baselines.pl_first(ctx, rng)
    if policy == "pso":
        return baselines.pso_optimize(ctx, world.config.pso, rng).assignment
    if policy == "exhaustive":
        return baselines.exhaustive_search(ctx).assignment
    raise ConfigError(f"Unknown policy '{policy}'")


def run_slot(world: World, slot: int) -> Tuple[SlotRow, World]:
    """
    Draws the slot's channels, selects modes with the configured policy, solves powers, scores the
    result and advances the queues.  UEs at a node whose computing budget is exceeded are not
    served this slot.
    """
    cfg = world.config
    ctx = world.context(slot)
    rng = stream_rng(world.seed, STREAM_POLICY, slot)
    assignment = select_assignment(world, ctx, rng)
    outcome = allocate(ctx, assignment)
    rewards = assignment_rewards(ctx, outcome, cfg.experiment.strategy)

    served = outcome.rates.copy()
    over_budget = ~outcome.verdicts.c1_nodes
    for k in range(assignment.num_ues):
        m = assignment.node(k)
        if m is not None and m < len(over_budget) and over_budget[m]:
            served[k] = 0.0
    before = world.queues
    after = advance_queue(before, served, draw_arrivals(before, world.seed))
    if not outcome.feasible:
        log.debug(f"Slot {slot}: infeasible outcome {outcome.verdicts.as_dict()}")

    row = SlotRow(
        slot=slot,
        power=outcome.power,
        pmr=outcome.pmr,
        dpp=drift_plus_penalty(before, after, outcome.power, cfg.power.V),
        reward=float(rewards.sum()),
        violations=outcome.verdicts.violations(),
        feasible=outcome.feasible,
        fap_served=assignment.fap_served(),
        queue_before=float(before.backlog.sum()),
        queue_after=float(after.backlog.sum()),
        rates=tuple(float(r) for r in served),
        backlog_before=tuple(float(q) for q in before.backlog),
        backlog_after=tuple(float(q) for q in after.backlog),
    )
    world.queues = after
    return row, world


def simulate(config: SimConfig, seed: int) -> Tuple[MetricsRecord, Optional[Learner]]:
    """One seed over the whole horizon.  Topology generation is excluded from `elapsed`."""
    world = World.create(config, seed)
    record = MetricsRecord(seed)
    horizon = config.experiment.horizon
    with Stopwatch() as watch:
        for slot in range(horizon):
            row, world = run_slot(world, slot)
            record.rows.append(row)
            if (slot + 1) % PROGRESS_EVERY == 0:
                log.info(f"Seed {seed}: {slot + 1}/{horizon} slots")
    record.elapsed = watch.elapsed
    infeasible = sum(not row.feasible for row in record.rows)
    if infeasible:
        log.warning(f"Seed {seed}: {infeasible} of {horizon} slots were infeasible")
    return record, world.learner


def _simulate_job(job):
    config, seed = job
    return simulate(config, seed)


def _map(fn, jobs: Sequence, workers: int) -> List:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def mean_aggregates(records: Sequence[MetricsRecord]) -> Dict[str, float]:
    per_seed = [r.aggregates() for r in records]
    return {key: float(np.mean([agg[key] for agg in per_seed])) for key in per_seed[0]}


@dataclass(frozen=True)
class ExperimentResult:
    config: SimConfig
    records: List[MetricsRecord]
    aggregate: Dict[str, float]
    learners: List[Optional[Learner]] = field(default_factory=list, compare=False)

    @property
    def elapsed(self) -> float:
        return float(sum(r.elapsed for r in self.records))


def run_experiment(config: SimConfig, out_dir=None) -> ExperimentResult:
    """Runs every configured seed and averages their aggregates across seeds."""
    exp = config.experiment
    if exp.policy == "exhaustive":
        check_oracle_work(config)
    log.info(
        f"Running {exp.policy} ({exp.strategy}) for {exp.horizon} slots on seeds {list(exp.seeds)}"
    )
    results = _map(_simulate_job, [(config, seed) for seed in exp.seeds], exp.workers)
    records = [record for record, _ in results]
    result = ExperimentResult(
        config=config,
        records=records,
        aggregate=mean_aggregates(records),
        learners=[learner for _, learner in results],
    )
    log_stats(exp.policy, result.aggregate)
    if out_dir is not None:
        write_experiment(result, out_dir)
    return result


def sweep_point(config: SimConfig, dimension: str, value) -> SimConfig:
    """The configuration of one grid point of a sweep along `dimension`."""
    if dimension == "V":
        return config.updated({"power": {"V": float(value)}})
    if dimension == "lambda":
        return config.updated({"traffic": {"mean_arrival": float(value)}})
    if dimension == "compute_budget":
        compute = config.compute.with_total(float(value), config.topology.num_fap)
        return dataclasses.replace(config, compute=compute)
    if dimension == "K1":
        return config.updated({"topology": {"num_fue": int(value)}})
    if dimension == "tau":
        if value == "log":
            return config.updated({"learner": {"schedule": "log"}})
        return config.updated({"learner": {"schedule": "fixed", "tau0": float(value)}})
    raise ConfigError(f"Unknown sweep dimension '{dimension}'; expected one of {SWEEP_DIMENSIONS}")


def sweep_grid(config: SimConfig, dimension: str) -> Tuple:
    exp = config.experiment
    grids = {
        "V": exp.v_grid,
        "lambda": exp.lambda_grid,
        "compute_budget": exp.budget_grid,
        "K1": exp.k1_grid,
        "tau": exp.tau_grid,
    }
    if dimension not in grids:
        raise ConfigError(
            f"Unknown sweep dimension '{dimension}'; expected one of {SWEEP_DIMENSIONS}"
        )
    return tuple(grids[dimension])


@dataclass(frozen=True)
class SweepTable:
    dimension: str
    values: Tuple
    aggregates: List[Dict[str, float]]


def _sweep_job(job):
    config, dimension, value = job
    point = sweep_point(config, dimension, value)
    point = point.updated({"experiment": {"workers": 1}})
    return run_experiment(point).aggregate


def sweep(config: SimConfig, dimension: str, out_dir=None) -> SweepTable:
    """One experiment per grid value of `dimension`, in grid order."""
    values = sweep_grid(config, dimension)
    log.info(f"Sweeping {dimension} over {list(values)}")
    jobs = [(config, dimension, value) for value in values]
    table = SweepTable(dimension, values, _map(_sweep_job, jobs, config.experiment.workers))
    if out_dir is not None:
        write_sweep(table, config, out_dir)
    return table


@dataclass(frozen=True)
class ComparisonRow:
    policy: str
    aggregate: Dict[str, float]
    wall_clock: float


def oracle_work(config: SimConfig) -> int:
    """Assignments the exhaustive oracle would evaluate over every slot of every seed."""
    size = baselines.count_assignments(generate_topology(config.topology, 0))
    exp = config.experiment
    return size * exp.horizon * len(exp.seeds)


def check_oracle_work(config: SimConfig) -> None:
    work = oracle_work(config)
    if work > config_base.ORACLE_WORK_LIMIT:
        exp = config.experiment
        raise ConfigError(
            f"The exhaustive oracle would evaluate {work} assignments over {exp.horizon} slots "
            f"and {len(exp.seeds)} seeds (limit {config_base.ORACLE_WORK_LIMIT}); shorten "
            "experiment.horizon or compare a single slot with --slot"
        )


def compare_policies(config: SimConfig, policies: Sequence[str], out_dir=None):
    """
    Runs each policy on the same seeds, hence the same topologies, channels and arrivals.  The
    exhaustive oracle joins the comparison when every slot of every seed is small enough to
    enumerate.
    """
    policies = list(policies)
    if len(policies) < 2:
        raise ConfigError("A comparison needs at least two policies")
    if "exhaustive" not in policies:
        size = baselines.count_assignments(generate_topology(config.topology, 0))
        work = oracle_work(config)
        if size <= config_base.EXHAUSTIVE_LIMIT and work <= config_base.ORACLE_WORK_LIMIT:
            policies.append("exhaustive")
        else:
            log.info(f"Exhaustive oracle skipped: {work} assignments over the whole run")
    rows = []
    for policy in policies:
        result = run_experiment(config.updated({"experiment": {"policy": policy}}))
        rows.append(ComparisonRow(policy, result.aggregate, result.elapsed))
        log.info(f"{policy}: {result.elapsed:.2f} s wall-clock")
    if out_dir is not None:
        write_comparison(rows, config, out_dir)
    return rows


def snapshot_world(config: SimConfig, seed: int, slot: int) -> World:
    """
    The world of `seed` at the start of `slot`, with every arrival of the earlier slots still
    queued.  Nothing in it depends on a policy.
    """
    world = World.create(config, seed)
    idle = np.zeros(world.topology.num_ues)
    for _ in range(slot):
        world.queues = advance_queue(world.queues, idle, draw_arrivals(world.queues, seed))
    return world


@dataclass(frozen=True)
class SlotComparisonRow:
    policy: str
    seed: int
    row: SlotRow
    wall_clock: float


def compare_at_slot(config: SimConfig, policies: Sequence[str], slot: int, out_dir=None):
    """
    Every policy decides the single slot `slot` from the same snapshot on each seed.  The exhaustive
    oracle joins when one slot's assignments fit within the enumeration limit.
    """
    if slot < 0:
        raise ConfigError(f"Slot must be >= 0, got {slot}")
    policies = list(policies)
    if not policies:
        raise ConfigError("A comparison needs at least one policy")
    if "exhaustive" not in policies:
        size = baselines.count_assignments(generate_topology(config.topology, 0))
        if size <= config_base.EXHAUSTIVE_LIMIT:
            policies.append("exhaustive")
        else:
            log.info(f"Exhaustive oracle skipped: {size} assignments to enumerate")
    rows = []
    for policy in policies:
        cfg = config.updated({"experiment": {"policy": policy}})
        for seed in config.experiment.seeds:
            world = snapshot_world(cfg, seed, slot)
            with Stopwatch() as watch:
                row, _ = run_slot(world, slot)
            rows.append(SlotComparisonRow(policy, seed, row, watch.elapsed))
            log.debug(f"{policy} seed {seed} slot {slot}: pmr {row.pmr:.4g}")
    if out_dir is not None:
        write_slot_comparison(rows, config, out_dir)
    return rows


# -- output files --

AGGREGATE_KEYS = (
    "avg_power",
    "avg_queue",
    "avg_pmr",
    "avg_dpp",
    "total_reward",
    "avg_reward",
    "final_reward",
    "violations",
    "infeasible_slots",
    "fap_served",
)


def _prepare(out_dir, config: SimConfig) -> str:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w") as f:
        f.write("\n".join(config.describe()) + "\n")
    return str(out_dir)


def write_experiment(result: ExperimentResult, out_dir) -> None:
    out_dir = _prepare(out_dir, result.config)
    first = result.records[0].rows[0]
    num_ues, num_tue = len(first.rates), len(first.backlog_before)
    with open(os.path.join(out_dir, "slots.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["seed"] + SlotRow.header(num_ues, num_tue))
        for record in result.records:
            for row in record.rows:
                writer.writerow([record.seed] + row.values())
    with open(os.path.join(out_dir, "aggregate.txt"), "w") as f:
        for line in result.config.describe():
            f.write(f"# {line}\n")
        for key, value in result.aggregate.items():
            f.write(f"{key} = {fmt(value)}\n")
    if result.config.experiment.export_tables:
        for record, learner in zip(result.records, result.learners):
            if learner is not None:
                path = os.path.join(out_dir, f"qtables_seed{record.seed}.csv")
                qlearn.export_tables(learner.tables, path)
    log.info(f"Wrote experiment outputs to {out_dir}")


def _stability_keys(aggregates: Sequence[Dict[str, float]]) -> List[str]:
    keys = {key for agg in aggregates for key in agg if key.startswith("stability_")}
    return sorted(keys, key=lambda k: int(k.split("_")[1]))


def write_sweep(table: SweepTable, config: SimConfig, out_dir) -> None:
    out_dir = _prepare(out_dir, config)
    keys = list(AGGREGATE_KEYS) + _stability_keys(table.aggregates)
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([table.dimension] + keys)
        for value, agg in zip(table.values, table.aggregates):
            label = value if isinstance(value, str) else fmt(value)
            writer.writerow([label] + [fmt(agg[key]) if key in agg else "" for key in keys])
    log.info(f"Wrote sweep table to {out_dir}")


def write_comparison(rows: Sequence[ComparisonRow], config: SimConfig, out_dir) -> None:
    out_dir = _prepare(out_dir, config)
    with open(os.path.join(out_dir, "compare.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["policy"] + list(AGGREGATE_KEYS) + ["wall_clock"])
        for row in rows:
            values = [fmt(row.aggregate[key]) for key in AGGREGATE_KEYS]
            writer.writerow([row.policy] + values + [fmt(row.wall_clock)])
    log.info(f"Wrote policy comparison to {out_dir}")


SLOT_KEYS = ("pmr", "power", "reward", "fap_served", "violations", "feasible")


def write_slot_comparison(rows: Sequence[SlotComparisonRow], config: SimConfig, out_dir) -> None:
    out_dir = _prepare(out_dir, config)
    with open(os.path.join(out_dir, "compare_slot.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["policy", "seed", "slot"] + list(SLOT_KEYS) + ["wall_clock"])
        for r in rows:
            values = [fmt(getattr(r.row, key)) for key in SLOT_KEYS]
            writer.writerow([r.policy, r.seed, r.row.slot] + values + [fmt(r.wall_clock)])
    log.info(f"Wrote single-slot comparison to {out_dir}")
