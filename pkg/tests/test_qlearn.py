import csv

import numpy as np
import pytest

from fransim import harness, qlearn
from fransim.allocation import allocate
from fransim.netmodel import MULTIPLEXED, ORTHOGONAL, PowerParams, RateParams
from fransim.qlearn import Learner, LearnerParams, LearnerState, QTable
from fransim.utils import stream_rng

POWER = PowerParams(eta0=0.05, eta1=0.05, p_fronthaul=0.35, V=10.0)
RATES = RateParams(w0=180e3, r_th=0.6e6, r_min=0.06e6)


def test_decode_action():
    assert qlearn.decode_action(7, 4) == (1, 2)
    assert qlearn.decode_action(1, 4) == (0, 0)
    assert qlearn.encode_action(1, 2, 4) == 7
    for a in range(1, 13):
        assert qlearn.encode_action(*qlearn.decode_action(a, 4), 4) == a


def test_decode_action_out_of_range():
    with pytest.raises(ValueError):
        qlearn.decode_action(0, 4)
    with pytest.raises(ValueError):
        qlearn.decode_action(13, 4, num_nodes=3)
    with pytest.raises(ValueError):
        qlearn.encode_action(0, 4, 4)


def test_softmax_uniform():
    table = QTable(np.zeros(2), np.ones(2, dtype=bool), 2)
    assert table.probabilities() == pytest.approx([0.5, 0.5])


def test_softmax_concentrates_at_low_temperature():
    values = np.array([0.2, 0.9, 0.5])
    table = QTable(values, np.ones(3, dtype=bool), 3, tau0=1e-3, schedule="fixed")
    assert table.probabilities()[1] == pytest.approx(1.0)
    assert qlearn.softmax_select(table, stream_rng(1, 3)) == 2


def test_softmax_only_in_scope():
    table = QTable.for_nodes([1], 3, 2)
    assert list(table.codes()) == [3, 4]
    rng = stream_rng(2, 3)
    assert {qlearn.softmax_select(table, rng) for _ in range(50)} <= {3, 4}


def test_log_temperature():
    table = QTable(np.zeros(1), np.ones(1, dtype=bool), 1, tau0=0.5)
    assert table.temperature == pytest.approx(0.5 / np.log(2.0))
    table.episode = 9
    assert table.temperature == pytest.approx(0.5 / np.log(10.0))


def test_q_update():
    table = QTable(np.zeros(2), np.ones(2, dtype=bool), 2, alpha=0.5)
    qlearn.q_update(table, 1, 1.0)
    assert table.value(1) == 0.5
    qlearn.q_update(table, 1, 0.5)
    assert table.value(1) == 0.5
    with pytest.raises(ValueError):
        qlearn.q_update(table, 2, 1.5)


def test_q_update_outside_scope():
    table = QTable.for_nodes([0], 2, 2)
    with pytest.raises(ValueError):
        qlearn.q_update(table, 3, 0.5)


def test_learner_params_validation():
    with pytest.raises(ValueError):
        LearnerParams(alpha=1.0)
    with pytest.raises(ValueError):
        LearnerParams(schedule="cosine")


def test_reward_fue():
    assert qlearn.reward(False, 1, 0.0, 0.0, 0.0, 1.0, POWER, RATES) == 1.0
    assert qlearn.reward(False, 1, 1.0, 0.0, 0.0, 1.0, POWER, RATES) == 0.0
    half = qlearn.reward(False, 2, 0.5, 0.0, 0.0, 1.0, POWER, RATES)
    assert half == pytest.approx(0.5)


def test_reward_fue_cran_pays_fronthaul():
    w = qlearn.reward(False, 0, 0.0, 0.0, 0.0, 1.0, POWER, RATES)
    fh = POWER.V * POWER.p_fronthaul
    assert w == pytest.approx(1.0 - fh / (POWER.V1 + fh))


def test_reward_traditional():
    queue = 1e-6
    at_max = qlearn.reward(True, 1, 0.2, RATES.r_min, queue, 0.2, POWER, RATES)
    assert at_max == pytest.approx(0.0, abs=1e-12)
    better = qlearn.reward(True, 1, 0.1, 2 * RATES.r_min, queue, 0.2, POWER, RATES)
    assert 0.0 < better <= 1.0


def test_reward_large_backlog_stays_in_range():
    # the reference Q R_min outweighs V0 P^max
    queue = 1.0
    assert qlearn.reward(True, 1, 0.2, RATES.r_min, queue, 0.2, POWER, RATES) == 0.0
    good = qlearn.reward(True, 1, 0.1, 3 * RATES.r_min, queue, 0.2, POWER, RATES)
    assert 0.0 < good <= 1.0
    assert qlearn.reward(True, 1, 0.0, 100 * RATES.r_min, queue, 0.2, POWER, RATES) == 1.0


def test_assignment_rewards_collision_is_zero(make_synthetic, assign):
    ctx = make_synthetic([1.0, 1.0], [1.0, 1.0])
    outcome = allocate(ctx, assign(ctx, (0, 0), (1, 0)))
    assert list(qlearn.assignment_rewards(ctx, outcome, ORTHOGONAL)) == [0.0, 0.0]


def test_assignment_rewards_idle_is_zero(make_synthetic, assign):
    ctx = make_synthetic([1.0, 1.0], [1.0, 1.0])
    outcome = allocate(ctx, assign(ctx, (0, 0), None))
    rewards = qlearn.assignment_rewards(ctx, outcome, ORTHOGONAL)
    assert rewards[1] == 0.0
    assert 0.0 <= rewards[0] <= 1.0


def test_assignment_rewards_multiplexed_qos_failure(make_synthetic, assign):
    ctx = make_synthetic(
        [1.0, 1.0],
        [1.0, 1.0],
        rate=RateParams(w0=1.0, r_th=0.0, r_min=5.0),
        strategy=MULTIPLEXED,
    )
    outcome = allocate(ctx, assign(ctx, (0, 0), (1, 0)))
    assert list(qlearn.assignment_rewards(ctx, outcome, MULTIPLEXED)) == [0.0, 0.0]


def test_learner_state_assignment(make_synthetic):
    ctx = make_synthetic([1.0, 1.0], [0.0, 0.0])
    state = LearnerState.initial(2).with_code(1, qlearn.encode_action(1, 3, 4))
    assert state.k0 == 1
    assert state.assignment(ctx.topology).links == (None, (1, 3))


def test_centralized_one_subchannel_separates(make_synthetic):
    ctx = make_synthetic([1.0, 1.0], [1.0, 1.0], num_subchannels=1)
    params = LearnerParams(episodes=1)
    tables = [QTable.for_nodes([0, 1], 2, 1) for _ in range(2)]
    state = LearnerState.initial(2)
    rng = stream_rng(4, 3)
    for _ in range(20):
        state, best, total = qlearn.centralized_episode(state, tables, ctx, rng, params)
        assignment = state.assignment(ctx.topology)
        assert not assignment.reuses_subchannels()
        assert sum(link is not None for link in assignment.links) == 1
    assert all(t.episode == 21 for t in tables)


def test_distributed_singleton_scope_picks_cran(make_synthetic):
    ctx = make_synthetic([1.0], [1.0], strategy=MULTIPLEXED)
    tables = [QTable.for_nodes([0], ctx.topology.num_nodes, 4)]
    rng = stream_rng(5, 3)
    for _ in range(10):
        assignment, rewards = qlearn.distributed_episode(tables, ctx, rng)
        assert assignment.node(0) == 0


def test_distributed_unreachable_requirement_decays(make_synthetic):
    ctx = make_synthetic(
        [1.0], [1.0], rate=RateParams(w0=1.0, r_th=0.0, r_min=5.0), strategy=MULTIPLEXED
    )
    table = QTable.for_nodes([0], ctx.topology.num_nodes, 4)
    table.values[table.scope] = 0.5
    rng = stream_rng(6, 3)
    for _ in range(30):
        _, rewards = qlearn.distributed_episode([table], ctx, rng)
        assert rewards[0] == 0.0
    assert table.values[table.scope].sum() < 2.0
    assert np.all(table.values[table.scope] <= 0.5)


def test_learner_scopes(make_context, small_config):
    ctx = make_context(small_config)
    topo = ctx.topology
    orth = Learner(topo, LearnerParams(), ORTHOGONAL)
    for k, table in enumerate(orth.tables):
        nodes = {qlearn.decode_action(int(a), 4)[0] for a in table.codes()}
        assert topo.relay_node(k) not in nodes
        assert 0 in nodes
    mux = Learner(topo, LearnerParams(), MULTIPLEXED)
    for k, table in enumerate(mux.tables):
        nodes = {qlearn.decode_action(int(a), 4)[0] for a in table.codes()}
        assert nodes == set(topo.neighbors(k))


@pytest.mark.parametrize("emit", ["final", "best"])
def test_learner_select_orthogonal(make_context, small_config, emit):
    ctx = make_context(small_config)
    learner = Learner(ctx.topology, LearnerParams(episodes=3, emit=emit), ORTHOGONAL)
    assignment, total = learner.select(ctx, stream_rng(1, 3, 0))
    assert not assignment.reuses_subchannels()
    assert total >= 0.0
    outcome = allocate(ctx, assignment)
    expected = qlearn.assignment_rewards(ctx, outcome, ORTHOGONAL).sum()
    assert total == pytest.approx(expected)


def test_learner_select_multiplexed(make_context, small_config):
    ctx = make_context(small_config, strategy=MULTIPLEXED)
    learner = Learner(ctx.topology, LearnerParams(episodes=2), MULTIPLEXED)
    assignment, total = learner.select(ctx, stream_rng(1, 3, 0))
    assert all(link is not None for link in assignment.links)
    assert 0.0 <= total <= ctx.topology.num_ues


def test_export_tables(tmp_path):
    tables = [QTable.for_nodes([0], 2, 2), QTable.for_nodes([1], 2, 2)]
    qlearn.q_update(tables[1], 4, 1.0)
    path = tmp_path / "q.csv"
    qlearn.export_tables(tables, path)
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["k", "m", "n", "value"]
    assert rows[1:] == [
        ["0", "0", "0", "0"],
        ["0", "0", "1", "0"],
        ["1", "1", "0", "0"],
        ["1", "1", "1", "0.1"],
    ]


@pytest.mark.slow
def test_learner_reaches_best_reward(make_synthetic):
    ctx = make_synthetic([2.0, 1.5], [1.0], num_tue=1, p_max=1.0, num_subchannels=2)
    topo = ctx.topology
    learner = Learner(topo, LearnerParams(episodes=300, emit="best"), ORTHOGONAL)
    _, total = learner.select(ctx, stream_rng(7, 3, 0))
    options = []
    for k in range(topo.num_ues):
        nodes = [m for m in range(topo.num_nodes) if m != topo.relay_node(k)]
        options.append([None] + [(m, n) for m in nodes for n in range(2)])
    best = 0.0
    for first in options[0]:
        for second in options[1]:
            a = learner.state.assignment(topo).with_link(0, first).with_link(1, second)
            if a.reuses_subchannels():
                continue
            best = max(best, qlearn.assignment_rewards(ctx, allocate(ctx, a), ORTHOGONAL).sum())
    assert total >= 0.95 * best


@pytest.mark.slow
def test_log_schedule_outscores_fixed_temperature(small_config):
    seeds = list(range(1, 11))
    base = small_config.updated({"experiment": {"horizon": 30, "seeds": seeds}})
    logged = harness.run_experiment(base.updated({"learner": {"schedule": "log"}}))
    fixed = harness.run_experiment(base.updated({"learner": {"schedule": "fixed", "tau0": 0.5}}))
    wins = sum(
        a.aggregates()["total_reward"] >= b.aggregates()["total_reward"]
        for a, b in zip(logged.records, fixed.records)
    )
    assert wins >= 8
