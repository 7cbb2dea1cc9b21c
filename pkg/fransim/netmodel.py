"""
The per-slot physical model: mode assignments, power allocations, uplink rates, system power,
computing load, and the constraint predicates C1-C7.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import config_base
from .queueing import QueueState
from .topology import ChannelRealization, NetworkTopology, mmse_receiver, receiver_sinr

Link = Tuple[int, int]

ORTHOGONAL = "orthogonal"
MULTIPLEXED = "multiplexed"
STRATEGIES = (ORTHOGONAL, MULTIPLEXED)

# Relative slack when comparing a realized rate with the rate it was allocated to reach.
RATE_RTOL = 1e-6


@dataclass(frozen=True)
class ModeAssignment:
    """
    s[k][m][n] in compact form: links[k] is the (node, subchannel) pair of UE k, or None when UE k
    is not served this slot.  One pair per UE makes C5-C7 hold by construction.
    """

    links: Tuple[Optional[Link], ...]
    num_tue: int
    num_nodes: int
    num_subchannels: int

    def __post_init__(self):
        if not 0 <= self.num_tue <= len(self.links):
            raise ValueError(f"Invalid traditional UE count {self.num_tue}")
        if self.num_nodes < 1 + self.num_fue:
            raise ValueError(f"{self.num_nodes} nodes cannot hold {self.num_fue} F-UE relays")
        for k, link in enumerate(self.links):
            if link is None:
                continue
            m, n = link
            if not (0 <= m < self.num_nodes and 0 <= n < self.num_subchannels):
                raise ValueError(f"UE {k}: link {link} is out of range")
            if m == self.relay_node(k):
                raise ValueError(f"F-UE {k} cannot relay its own traffic")

    @classmethod
    def idle(cls, topology: NetworkTopology) -> "ModeAssignment":
        return cls(
            links=(None,) * topology.num_ues,
            num_tue=topology.num_tue,
            num_nodes=topology.num_nodes,
            num_subchannels=topology.num_subchannels,
        )

    @classmethod
    def from_tensor(cls, s, num_tue: int) -> "ModeAssignment":
        """Builds an assignment from a binary tensor s[k][m][n]; ValueError unless C5-C7 hold."""
        s = np.asarray(s)
        if not np.all((s == 0) | (s == 1)):
            raise ValueError("C5 violated: assignment entries must be 0 or 1")
        if np.any(s.sum(axis=1) > 1):
            raise ValueError("C6 violated: more than one mode on a subchannel")
        if np.any(s.sum(axis=(1, 2)) > 1):
            raise ValueError("C7 violated: more than one mode-subchannel pair for a UE")
        links = []
        for k in range(s.shape[0]):
            hit = np.argwhere(s[k] == 1)
            links.append(tuple(int(x) for x in hit[0]) if len(hit) else None)
        return cls(tuple(links), num_tue, s.shape[1], s.shape[2])

    @property
    def num_ues(self) -> int:
        return len(self.links)

    @property
    def num_fue(self) -> int:
        return len(self.links) - self.num_tue

    @property
    def num_fap(self) -> int:
        return self.num_nodes - 1 - self.num_fue

    def is_traditional(self, k: int) -> bool:
        return k < self.num_tue

    def relay_node(self, k: int) -> Optional[int]:
        return None if k < self.num_tue else 1 + self.num_fap + (k - self.num_tue)

    def node(self, k: int) -> Optional[int]:
        link = self.links[k]
        return None if link is None else link[0]

    def subchannel(self, k: int) -> Optional[int]:
        link = self.links[k]
        return None if link is None else link[1]

    def with_link(self, k: int, link: Optional[Link]) -> "ModeAssignment":
        links = list(self.links)
        links[k] = link
        return ModeAssignment(tuple(links), self.num_tue, self.num_nodes, self.num_subchannels)

    def users_on(self, n: int):
        return [k for k, link in enumerate(self.links) if link is not None and link[1] == n]

    def users_at(self, m: int):
        return [k for k, link in enumerate(self.links) if link is not None and link[0] == m]

    def reuses_subchannels(self) -> bool:
        used = [link[1] for link in self.links if link is not None]
        return len(used) != len(set(used))

    def collides(self, k: int) -> bool:
        """True if another UE holds UE k's subchannel."""
        n = self.subchannel(k)
        return n is not None and len(self.users_on(n)) > 1

    def fap_served(self) -> int:
        return sum(1 for link in self.links if link is not None and 1 <= link[0] <= self.num_fap)

    def tensor(self) -> np.ndarray:
        s = np.zeros((self.num_ues, self.num_nodes, self.num_subchannels), dtype=np.int8)
        for k, link in enumerate(self.links):
            if link is not None:
                s[k, link[0], link[1]] = 1
        return s


@dataclass(frozen=True)
class PowerAllocation:
    p: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        if self.p.shape != self.p_max.shape:
            raise ValueError(f"Power shape {self.p.shape} does not match cap {self.p_max.shape}")
        if np.any(self.p < 0):
            raise ValueError("Transmit powers must be non-negative")

    @classmethod
    def zeros(cls, p_max) -> "PowerAllocation":
        p_max = np.asarray(p_max, dtype=float)
        return cls(np.zeros_like(p_max), p_max)

    @classmethod
    def on_links(cls, assignment: ModeAssignment, user_powers, p_max) -> "PowerAllocation":
        """Places `user_powers[k]` on UE k's assigned subchannel; unassigned UEs get 0."""
        p_max = np.asarray(p_max, dtype=float)
        p = np.zeros_like(p_max)
        for k, link in enumerate(assignment.links):
            if link is not None:
                p[k, link[1]] = user_powers[k]
        return cls(p, p_max)

    def user_power(self, k: int) -> float:
        return float(self.p[k].sum())


@dataclass(frozen=True)
class ComputeBudget:
    """D_m^CPU for m = 0 (BBU pool) .. M0 in MOPTS, plus the slopes of the computing model."""

    d_cpu: np.ndarray
    mu0: float = config_base.MU0
    mu1: float = config_base.MU1
    c_cons: float = config_base.C_CONS

    def __post_init__(self):
        if np.any(np.asarray(self.d_cpu) < 0) or min(self.mu0, self.mu1, self.c_cons) < 0:
            raise ValueError("Computing budgets and slopes must be non-negative")

    @classmethod
    def uniform(
        cls,
        per_fap: float,
        num_fap: int,
        pool_factor: float = config_base.BBU_POOL_FACTOR,
        **slopes,
    ) -> "ComputeBudget":
        d = np.full(num_fap + 1, float(per_fap))
        d[0] = pool_factor * per_fap
        return cls(d_cpu=d, **slopes)

    @property
    def total(self) -> float:
        return float(np.sum(self.d_cpu))


@dataclass(frozen=True)
class PowerParams:
    eta0: float = config_base.ETA_TUE
    eta1: float = config_base.ETA_FUE
    p_fronthaul: float = config_base.FRONTHAUL_POWER
    V: float = config_base.TRADEOFF_V
    p_max_tue: float = config_base.P_MAX_TUE
    p_max_fue: float = config_base.P_MAX_FUE

    def __post_init__(self):
        if not (0 < self.eta0 <= 1 and 0 < self.eta1 <= 1):
            raise ValueError(f"Amplifier efficiencies must be in (0, 1]: {self.eta0}, {self.eta1}")
        if self.p_fronthaul < 0 or self.V < 0:
            raise ValueError("Fronthaul power and V must be non-negative")
        if self.p_max_tue < 0 or self.p_max_fue < 0:
            raise ValueError("Maximum transmit powers must be non-negative")

    @property
    def V0(self) -> float:
        return self.V / self.eta0

    @property
    def V1(self) -> float:
        return self.V / self.eta1

    def p_max(self, num_tue: int, num_fue: int) -> np.ndarray:
        """Per-UE P^max, traditional UEs first."""
        return np.concatenate([np.full(num_tue, self.p_max_tue), np.full(num_fue, self.p_max_fue)])


@dataclass(frozen=True)
class RateParams:
    w0: float = config_base.SUBCHANNEL_BANDWIDTH
    slot_seconds: float = config_base.SLOT_SECONDS
    r_th: float = config_base.RATE_THRESHOLD
    r_min: float = config_base.RATE_MIN

    def __post_init__(self):
        if not (self.w0 > 0 and self.slot_seconds > 0):
            raise ValueError("Bandwidth and slot duration must be positive")
        if self.r_th < 0 or self.r_min < 0:
            raise ValueError("Rate requirements must be non-negative")

    @property
    def scale(self) -> float:
        """Bits per slot carried by one bit/s/Hz of spectral efficiency."""
        return self.w0 * self.slot_seconds


@dataclass(frozen=True)
class SolverParams:
    step_fraction: float = config_base.ORTH_STEP_FRACTION
    kappa: float = config_base.WMMSE_KAPPA
    max_iter: int = config_base.WMMSE_MAX_ITER

    def __post_init__(self):
        if not (0 < self.step_fraction <= 1 and self.kappa > 0 and self.max_iter >= 1):
            raise ValueError("Invalid solver parameters")


@dataclass(frozen=True)
class SlotContext:
    """Everything one slot's mode selection and power allocation reads."""

    topology: NetworkTopology
    channels: ChannelRealization
    queues: QueueState
    rate: RateParams
    power: PowerParams
    budget: ComputeBudget
    p_max: np.ndarray
    strategy: str = ORTHOGONAL
    solver: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"Unknown subchannel strategy '{self.strategy}'")

    @property
    def num_ues(self) -> int:
        return self.topology.num_ues

    @property
    def p_max_matrix(self) -> np.ndarray:
        p_max = np.asarray(self.p_max, dtype=float)
        return np.repeat(p_max[:, np.newaxis], self.topology.num_subchannels, axis=1)

    def surrogate_powers(self, assignment: ModeAssignment) -> PowerAllocation:
        """P^max on every assigned link: the receiver surrogate used before powers are decided."""
        return PowerAllocation.on_links(assignment, self.p_max, self.p_max_matrix)

    def weight(self, k: int) -> float:
        """Queue weight in the power-minus-rate objective: Q_k for traditional UEs, 0 otherwise."""
        return float(self.queues.backlog[k]) if k < self.topology.num_tue else 0.0

    def cost(self, k: int) -> float:
        """Per-watt cost V0 or V1."""
        return self.power.V0 if k < self.topology.num_tue else self.power.V1


def sinr(channels: ChannelRealization, assignment: ModeAssignment, powers: PowerAllocation, k: int):
    """SINR of UE k at the output of its MMSE receiver; 0 for an unassigned UE."""
    link = assignment.links[k]
    if link is None:
        return 0.0
    m, n = link
    p = powers.p[:, n]
    if p[k] <= 0:
        return 0.0
    if np.count_nonzero(p) == 1:
        # interference-free: the MMSE receiver is a matched filter
        return float(p[k] * channels.gains[k, m, n] / channels.noise_power)
    v = mmse_receiver(channels, assignment, powers, k, m, n)
    return float(receiver_sinr(channels, powers, v, k, m, n))


def rate(
    channels: ChannelRealization,
    assignment: ModeAssignment,
    powers: PowerAllocation,
    k: int,
    params: RateParams,
) -> float:
    """R_k = W0 * slot * log2(1 + SINR) in bits/slot."""
    return params.scale * float(np.log2(1.0 + sinr(channels, assignment, powers, k)))


def rates(channels, assignment, powers, params: RateParams) -> np.ndarray:
    return np.array(
        [rate(channels, assignment, powers, k, params) for k in range(assignment.num_ues)]
    )


def system_power(assignment: ModeAssignment, powers: PowerAllocation, params: PowerParams) -> float:
    """P(t): amplifier-scaled transmit power plus fronthaul power per C-RAN connection."""
    k0 = assignment.num_tue
    tx = powers.p[:k0].sum() / params.eta0 + powers.p[k0:].sum() / params.eta1
    cran = sum(1 for link in assignment.links if link is not None and link[0] == 0)
    return float(tx + cran * params.p_fronthaul)


def compute_load(
    assignment: ModeAssignment,
    rates: Sequence[float],
    budget: ComputeBudget,
    topology: NetworkTopology,
    k: int,
) -> float:
    """
    C_k in MOPTS for a UE served by C-RAN or an F-AP; D2D users consume no F-AP or BBU computing.
    """
    m = assignment.node(k)
    if m is None or m > assignment.num_fap:
        return 0.0
    antennas = topology.num_rrh if m == 0 else topology.fap_antennas
    return budget.mu0 * antennas**3 + budget.mu1 * float(rates[k]) + budget.c_cons


def node_loads(assignment, rates, budget, topology) -> np.ndarray:
    """Computing load at each node m = 0..M0."""
    loads = np.zeros(assignment.num_fap + 1)
    for k in range(assignment.num_ues):
        m = assignment.node(k)
        if m is not None and m <= assignment.num_fap:
            loads[m] += compute_load(assignment, rates, budget, topology, k)
    return loads


def required_rates(assignment: ModeAssignment, prev_rates, params: RateParams) -> np.ndarray:
    """
    The rate each UE must reach: R_min for traditional UEs (C2); for F-UE j, R_th plus last slot's
    rates of every UE relaying through j this slot (C3).
    """
    req = np.full(assignment.num_ues, params.r_min)
    for k in range(assignment.num_tue, assignment.num_ues):
        relayed = assignment.users_at(assignment.relay_node(k))
        req[k] = params.r_th + float(sum(prev_rates[u] for u in relayed))
    return req


def meets(achieved, required):
    return np.asarray(achieved) >= np.asarray(required) * (1.0 - RATE_RTOL) - 1e-9


@dataclass(frozen=True)
class Verdicts:
    c1: bool
    c2: bool
    c3: bool
    c4: bool
    c5: bool
    c6: bool
    c7: bool
    no_self_relay: bool
    loads: np.ndarray
    c1_nodes: np.ndarray
    c2_ues: np.ndarray
    c3_ues: np.ndarray
    rates: np.ndarray

    @property
    def ok(self) -> bool:
        return all(self.as_dict().values())

    def as_dict(self):
        return {
            "C1": self.c1,
            "C2": self.c2,
            "C3": self.c3,
            "C4": self.c4,
            "C5": self.c5,
            "C6": self.c6,
            "C7": self.c7,
        }

    def violations(self) -> int:
        return sum(1 for ok in self.as_dict().values() if not ok)

    def ue_ok(self, k: int, node: Optional[int]) -> bool:
        """C1 at UE k's node (when it computes there) and UE k's own rate requirement."""
        num_tue = len(self.c2_ues)
        if node is not None and node < len(self.c1_nodes) and not self.c1_nodes[node]:
            return False
        return bool(self.c2_ues[k]) if k < num_tue else bool(self.c3_ues[k - num_tue])


def check_constraints(
    assignment: ModeAssignment,
    powers: PowerAllocation,
    channels: ChannelRealization,
    queues: QueueState,
    budget: ComputeBudget,
    params: RateParams,
    topology: NetworkTopology,
    achieved=None,
) -> Verdicts:
    """Evaluates every constraint without short-circuiting.  Infeasibility is reported."""
    r = rates(channels, assignment, powers, params) if achieved is None else np.asarray(achieved)
    loads = node_loads(assignment, r, budget, topology)
    c1_nodes = loads <= np.asarray(budget.d_cpu) * (1.0 + 1e-9) + 1e-9
    req = required_rates(assignment, queues.prev_rates, params)
    k0 = assignment.num_tue
    c2_ues = meets(r[:k0], req[:k0])
    c3_ues = meets(r[k0:], req[k0:])

    s = assignment.tensor()
    on = s.sum(axis=1) == 1
    p = powers.p
    c4 = bool(
        np.all(p[~on] == 0)
        and np.all(p[on] >= 0)
        and np.all(p[on] <= powers.p_max[on] * (1 + 1e-9))
    )
    self_relay = all(
        assignment.node(k) != assignment.relay_node(k) for k in range(k0, assignment.num_ues)
    )
    return Verdicts(
        c1=bool(c1_nodes.all()),
        c2=bool(c2_ues.all()),
        c3=bool(c3_ues.all()),
        c4=c4,
        c5=bool(np.all((s == 0) | (s == 1))),
        c6=bool(np.all(s.sum(axis=1) <= 1)),
        c7=bool(np.all(s.sum(axis=(1, 2)) <= 1)),
        no_self_relay=self_relay,
        loads=loads,
        c1_nodes=c1_nodes,
        c2_ues=c2_ues,
        c3_ues=c3_ues,
        rates=r,
    )


def qos_sinr_threshold(required_rate: float, params: RateParams) -> float:
    """gamma^QoS = 2^(R / (W0 * slot)) - 1, the SINR that carries `required_rate` bits/slot."""
    if required_rate < 0:
        raise ValueError(f"Invalid required rate {required_rate}: must be non-negative")
    return float(np.exp2(required_rate / params.scale) - 1.0)


def power_minus_rate(
    assignment: ModeAssignment,
    powers: PowerAllocation,
    queues: QueueState,
    channels: ChannelRealization,
    params: PowerParams,
    rate_params: RateParams,
    achieved=None,
) -> float:
    """V * P(t) - sum_i Q_i R_i, the per-slot objective every solver minimizes."""
    r = rates(channels, assignment, powers, rate_params) if achieved is None else achieved
    k0 = assignment.num_tue
    return params.V * system_power(assignment, powers, params) - float(
        np.dot(queues.backlog, np.asarray(r)[:k0])
    )


@dataclass(frozen=True)
class ServedLinks:
    """The assigned UEs of one assignment as parallel arrays, in UE order."""

    users: np.ndarray
    nodes: np.ndarray
    subchannels: np.ndarray
    charged: np.ndarray
    fixed_load: np.ndarray
    cran_links: int


def served_links(ctx: SlotContext, assignment: ModeAssignment) -> ServedLinks:
    """
    `charged` marks UEs computing at C-RAN or an F-AP; `fixed_load` is the rate-independent part
    mu0 * L^3 + C_cons of their computing load (0 for D2D users).
    """
    topo = ctx.topology
    users = np.array([k for k, link in enumerate(assignment.links) if link is not None], dtype=int)
    nodes = np.array([assignment.links[k][0] for k in users], dtype=int)
    subchannels = np.array([assignment.links[k][1] for k in users], dtype=int)
    charged = nodes <= topo.num_fap
    antennas = np.where(nodes == 0, topo.num_rrh, topo.fap_antennas)
    fixed = np.where(charged, ctx.budget.mu0 * antennas**3.0 + ctx.budget.c_cons, 0.0)
    return ServedLinks(users, nodes, subchannels, charged, fixed, int(np.sum(nodes == 0)))


def charged_loads(nodes, charged, fixed_load, mu1: float, user_rates, num_charged_nodes: int):
    """Per-node computing load for m = 0..M0 from per-user rates."""
    out = np.zeros(num_charged_nodes)
    np.add.at(out, nodes[charged], (fixed_load + mu1 * np.asarray(user_rates))[charged])
    return out
