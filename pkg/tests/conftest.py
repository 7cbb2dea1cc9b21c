import pytest
import numpy as np

from fransim import config_base

config_base.log_level = "WARNING"

from fransim.config import SimConfig  # noqa: E402
from fransim.netmodel import (  # noqa: E402
    ComputeBudget,
    ModeAssignment,
    PowerParams,
    RateParams,
    SlotContext,
    SolverParams,
)
from fransim.queueing import QueueState  # noqa: E402
from fransim.topology import (  # noqa: E402
    ChannelRealization,
    NetworkTopology,
    draw_channels,
    generate_topology,
)


def pytest_addoption(parser):
    parser.addoption(
        "--slow",
        action="store_true",
        default=False,
        help="Also run the long simulation tests (learning against the exhaustive oracle, etc.)",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running simulation test, needs --slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip = pytest.mark.skip(reason="needs --slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def small_config():
    """The default small instance (K0 = 2, K1 = 2, M0 = 3, N = 4) with a short horizon."""
    return SimConfig().updated({"experiment": {"horizon": 3, "seeds": [1]}})


def slot_context(config: SimConfig, seed=1, slot=0, backlog=None, prev_rates=None, strategy=None):
    """A SlotContext drawn from `config` the way the harness builds one."""
    topo = generate_topology(config.topology, seed)
    queues = QueueState.empty(config.traffic.arrivals(topo.num_tue), topo.num_ues)
    if backlog is not None:
        queues = QueueState(
            backlog=np.asarray(backlog, dtype=float),
            mean_arrival=queues.mean_arrival,
            prev_rates=(
                queues.prev_rates if prev_rates is None else np.asarray(prev_rates, dtype=float)
            ),
        )
    return SlotContext(
        topology=topo,
        channels=draw_channels(topo, slot, seed, config.channel, config.rate.w0),
        queues=queues,
        rate=config.rate,
        power=config.power,
        budget=config.compute.budget(topo.num_fap),
        p_max=config.power.p_max(topo.num_tue, topo.num_fue),
        strategy=strategy or config.experiment.strategy,
        solver=config.solver,
    )


@pytest.fixture
def make_context():
    return slot_context


def synthetic_context(
    gains,
    backlog,
    *,
    num_tue=None,
    num_fap=1,
    num_rrh=2,
    fap_antennas=1,
    noise=1.0,
    p_max=1.0,
    rate=None,
    power=None,
    d_cpu=1e12,
    mu0=0.0,
    mu1=0.0,
    c_cons=0.0,
    prev_rates=None,
    strategy="orthogonal",
    solver=None,
    cross=0.0,
    num_subchannels=4,
):
    """
    A hand-built slot in which UE k reaches every node on every subchannel with real channel
    amplitude sqrt(gains[k]) on its first antenna (other antennas see `cross` times that).  The
    topology is placed on a line so distances are well defined but never used for channels.
    """
    gains = np.asarray(gains, dtype=float)
    K = len(gains)
    num_tue = K if num_tue is None else num_tue
    num_fue = K - num_tue
    N = num_subchannels
    topo = NetworkTopology(
        area_side=1000.0,
        rrh_positions=np.column_stack([np.linspace(0, 900, num_rrh), np.zeros(num_rrh)]),
        fap_positions=np.column_stack([np.linspace(100, 800, num_fap), np.full(num_fap, 50.0)]),
        fap_antennas=fap_antennas,
        tue_positions=np.column_stack([np.arange(num_tue) * 10.0, np.full(num_tue, 500.0)]),
        fue_positions=np.column_stack([np.arange(num_fue) * 10.0, np.full(num_fue, 900.0)]),
        neighbor_radius=300.0,
        num_subchannels=N,
    )
    h = []
    for m in range(topo.num_nodes):
        dim = topo.node_dim(m)
        hm = np.zeros((K, N, dim), dtype=complex)
        for k in range(K):
            if m == topo.relay_node(k):
                continue
            hm[k, :, :] = cross * np.sqrt(gains[k])
            hm[k, :, 0] = np.sqrt(gains[k])
        h.append(hm)
    channels = ChannelRealization(h=tuple(h), noise_power=noise)
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (K,)).copy()
    budget = ComputeBudget(
        d_cpu=np.broadcast_to(np.asarray(d_cpu, dtype=float), (num_fap + 1,)).copy(),
        mu0=mu0,
        mu1=mu1,
        c_cons=c_cons,
    )
    queues = QueueState(
        backlog=np.asarray(backlog, dtype=float),
        mean_arrival=np.zeros(num_tue),
        prev_rates=np.zeros(K) if prev_rates is None else np.asarray(prev_rates, dtype=float),
    )
    return SlotContext(
        topology=topo,
        channels=channels,
        queues=queues,
        rate=rate or RateParams(w0=1.0, slot_seconds=1.0, r_th=0.0, r_min=0.0),
        power=power or PowerParams(eta0=1.0, eta1=1.0, p_fronthaul=0.0, V=1.0),
        budget=budget,
        p_max=p_max,
        strategy=strategy,
        solver=solver or SolverParams(),
    )


@pytest.fixture
def make_synthetic():
    return synthetic_context


def links(ctx: SlotContext, *pairs):
    """A ModeAssignment for `ctx` from one (node, subchannel) pair or None per UE."""
    topo = ctx.topology
    return ModeAssignment(tuple(pairs), topo.num_tue, topo.num_nodes, topo.num_subchannels)


@pytest.fixture
def assign():
    return links
