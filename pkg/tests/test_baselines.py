import dataclasses

import numpy as np
import pytest

from fransim import baselines, harness
from fransim.allocation import allocate
from fransim.baselines import PsoParams
from fransim.errors import ConfigError
from fransim.netmodel import MULTIPLEXED
from fransim.topology import generate_topology
from fransim.utils import stream_rng


def test_all_to_rrhs(make_context, small_config):
    ctx = make_context(small_config)
    a = baselines.all_to_rrhs(ctx, stream_rng(1, 3, 0))
    assert all(link is not None and link[0] == 0 for link in a.links)
    assert not a.reuses_subchannels()


def test_all_to_rrhs_more_users_than_subchannels(make_synthetic):
    ctx = make_synthetic([1.0] * 3, [0.0] * 3, num_subchannels=2)
    a = baselines.all_to_rrhs(ctx, stream_rng(1, 3, 0))
    assert sum(link is not None for link in a.links) == 2
    assert not a.reuses_subchannels()


def test_all_to_rrhs_multiplexed_may_reuse(make_synthetic):
    ctx = make_synthetic([1.0] * 3, [0.0] * 3, num_subchannels=1, strategy=MULTIPLEXED)
    a = baselines.all_to_rrhs(ctx, stream_rng(1, 3, 0))
    assert a.links == ((0, 0), (0, 0), (0, 0))


def test_pl_first_colocated_with_fap(make_synthetic):
    ctx = make_synthetic([1.0], [0.0], num_fap=3)
    topo = dataclasses.replace(ctx.topology, tue_positions=ctx.topology.fap_positions[1:2].copy())
    a = baselines.pl_first(dataclasses.replace(ctx, topology=topo), stream_rng(1, 3, 0))
    assert a.node(0) == 2


def test_pl_first_near_rrh(make_synthetic):
    ctx = make_synthetic([1.0], [0.0], num_fap=3)
    topo = dataclasses.replace(ctx.topology, tue_positions=ctx.topology.rrh_positions[:1].copy())
    a = baselines.pl_first(dataclasses.replace(ctx, topology=topo), stream_rng(1, 3, 0))
    assert a.node(0) == 0


def test_pl_first_never_picks_d2d(make_context, small_config):
    ctx = make_context(small_config)
    a = baselines.pl_first(ctx, stream_rng(1, 3, 0))
    assert all(link[0] <= ctx.topology.num_fap for link in a.links if link is not None)


def test_count_assignments(make_synthetic, small_config):
    ctx = make_synthetic([1.0], [0.0], num_subchannels=1)
    topo = dataclasses.replace(ctx.topology, fap_positions=np.zeros((0, 2)))
    assert baselines.count_assignments(topo) == 2
    small = generate_topology(small_config.topology, 1)
    assert baselines.count_assignments(small) == 25 * 25 * 21 * 21


def test_exhaustive_search_is_optimal(make_synthetic, assign):
    ctx = make_synthetic([2.0, 1.0], [1.0, 0.5], num_subchannels=2, p_max=2.0)
    result = baselines.exhaustive_search(ctx)
    assert result.feasible
    # reuse-free assignments only: 1 + 4 + 4 (one UE served) + 4 * 2 (both, distinct subchannels)
    assert result.evaluated == 17
    for first in (None, (0, 0), (1, 1)):
        for second in (None, (0, 1), (1, 0)):
            outcome = allocate(ctx, assign(ctx, first, second))
            if outcome.feasible:
                assert result.objective <= outcome.pmr + 1e-9
    assert result.worst >= result.objective


def test_exhaustive_search_refuses_large_space(make_context, small_config):
    ctx = make_context(small_config)
    with pytest.raises(ConfigError, match="275625"):
        baselines.exhaustive_search(ctx, limit=1000)


def test_decode_position(make_synthetic):
    ctx = make_synthetic([1.0, 1.0], [0.0, 0.0], num_subchannels=4)
    a = baselines.decode_position(ctx, [7.3, 1.0])
    assert a.links == ((1, 2), (0, 0))
    assert baselines.decode_position(ctx, [7.3, 7.9]) is None
    assert baselines.decode_position(ctx, [0.5, 1.0]) is None
    assert baselines.decode_position(ctx, [9.0, 1.0]) is None


def test_decode_position_rejects_self_relay(make_synthetic):
    ctx = make_synthetic([1.0, 1.0], [0.0], num_tue=1, num_subchannels=2)
    relay = ctx.topology.relay_node(1)
    assert baselines.decode_position(ctx, [1.0, 1 + relay * 2 + 1]) is None
    assert baselines.decode_position(ctx, [1 + relay * 2, 2.0]) is not None


def test_decode_position_multiplexed_allows_reuse(make_synthetic):
    ctx = make_synthetic([1.0, 1.0], [0.0, 0.0], strategy=MULTIPLEXED)
    assert baselines.decode_position(ctx, [1.0, 5.0]).links == ((0, 0), (1, 0))


def test_pso_degenerate_swarm(make_synthetic):
    ctx = make_synthetic([2.0, 1.0], [1.0, 0.5], num_subchannels=2, p_max=2.0)
    rng = stream_rng(3, 3, 0)
    x = stream_rng(3, 3, 0).uniform(1.0, 5.0, size=(1, 2))[0]
    result = baselines.pso_optimize(ctx, PsoParams(particles=1, iterations=1), rng)
    assert len(result.trace) == 1
    decoded = baselines.decode_position(ctx, x)
    if decoded is None:
        assert result.objective == np.inf
    else:
        assert result.assignment == decoded
        outcome = allocate(ctx, decoded)
        assert result.objective == (outcome.pmr if outcome.feasible else np.inf)


def test_pso_never_beats_exhaustive(make_synthetic):
    ctx = make_synthetic([2.0, 1.0], [1.0, 0.5], num_subchannels=2, p_max=2.0)
    best = baselines.exhaustive_search(ctx).objective
    result = baselines.pso_optimize(ctx, PsoParams(particles=8, iterations=10), stream_rng(4, 3))
    assert result.objective >= best - 1e-9
    assert all(b <= a for a, b in zip(result.trace, result.trace[1:]))
    assert result.evaluations <= 8 * 10


def test_pso_params_validation():
    with pytest.raises(ValueError):
        PsoParams(particles=0)
    with pytest.raises(ValueError):
        PsoParams(inertia=-0.1)


@pytest.mark.slow
@pytest.mark.parametrize("num_fue", [2, 4, 6])
def test_learning_keeps_up_with_pso_at_a_fraction_of_the_time(small_config, num_fue):
    cfg = small_config.updated(
        {
            "topology": {"num_fap": 6, "num_subchannels": 6, "num_tue": 6, "num_fue": num_fue},
            "experiment": {"strategy": "multiplexed", "horizon": 2},
        }
    )
    rows = {r.policy: r for r in harness.compare_policies(cfg, ["qlearn", "pso", "all_to_rrhs"])}
    assert "exhaustive" not in rows
    pmr = {policy: row.aggregate["avg_pmr"] for policy, row in rows.items()}
    gap = pmr["all_to_rrhs"] - pmr["pso"]
    assert pmr["qlearn"] - pmr["pso"] <= 0.1 * abs(gap)
    assert rows["qlearn"].wall_clock <= 0.5 * rows["pso"].wall_clock
