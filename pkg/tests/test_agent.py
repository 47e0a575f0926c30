import numpy as np
import pytest

from mvff.agent import (ConstantSkipPolicy, QPolicy, RandomSkipPolicy, RewardParams,
                        SelectionBuffer, StrategyKind, StrategySpec, TrainConfig,
                        fast_forward_period, hit_reward, kmeans, reward, skip_penalty,
                        step_reward, train_q, training_streams)
from mvff.stream import VideoStream, generate_scene

FAST, NORMAL, SLOW = StrategyKind.FAST, StrategyKind.NORMAL, StrategyKind.SLOW


# ------------------------------------------------------------ strategies

@pytest.mark.formula
def test_default_action_spaces():
    assert StrategySpec.default(NORMAL).action_space == 25
    assert StrategySpec.default(SLOW).action_space == 15
    assert StrategySpec.default(FAST).action_space == 35


def test_action_space_must_be_positive():
    with pytest.raises(ValueError):
        StrategySpec(NORMAL, 0)


# ----------------------------------------------------------- skip penalty

@pytest.mark.formula
def test_skip_penalty_no_important():
    assert skip_penalty([False] * 5) == pytest.approx(-0.1)


@pytest.mark.formula
def test_skip_penalty_all_important():
    assert skip_penalty([True] * 5) == pytest.approx(1.0)


@pytest.mark.formula
def test_skip_penalty_half_important():
    assert skip_penalty([True, True, False, False]) == pytest.approx(0.45)


def test_skip_penalty_empty_is_error():
    with pytest.raises(ValueError):
        skip_penalty([])


# ------------------------------------------------------------- hit reward

@pytest.mark.formula
def test_hit_reward_on_important_frame():
    truth = np.zeros(20, bool)
    truth[7] = True
    assert hit_reward(7, truth, 4) == 1.0


@pytest.mark.formula
def test_hit_reward_outside_window():
    truth = np.zeros(20, bool)
    truth[0] = True
    assert hit_reward(10, truth, 4) == 0.0


@pytest.mark.formula
def test_hit_reward_distance_two():
    truth = np.zeros(20, bool)
    truth[12] = True
    assert hit_reward(10, truth, 4) == pytest.approx(0.6065306597, abs=1e-9)


def test_hit_reward_range_check():
    with pytest.raises(IndexError):
        hit_reward(20, np.zeros(20, bool), 4)


def test_negative_window_rejected():
    with pytest.raises(ValueError):
        RewardParams(window=-1)


# ----------------------------------------------------------------- reward

@pytest.mark.formula
def test_normal_reward():
    assert reward(StrategySpec.default(NORMAL), 0.2, 1.0, 3) == pytest.approx(0.8)


@pytest.mark.formula
def test_slow_reward_large_action_limit():
    spec = StrategySpec(SLOW, 100)
    assert reward(spec, 0.0, 1.0, 100) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.formula
def test_fast_reward_action_one():
    assert reward(StrategySpec.default(FAST), 0.0, 1.0, 1) == pytest.approx(1.3655292893, abs=1e-9)


def test_reward_action_out_of_range():
    with pytest.raises(ValueError):
        reward(StrategySpec.default(SLOW), 0.0, 1.0, 16)


def test_unknown_kind_is_error():
    with pytest.raises(ValueError):
        reward("medium", 0.0, 1.0, 1)


@pytest.mark.parametrize("base", [0.7, -0.3])
@pytest.mark.formula
def test_reward_ordering_flips_with_sign(base):
    vals = [reward(k, 0.0, base, 4) for k in (FAST, NORMAL, SLOW)]
    if base > 0:
        assert vals[0] > vals[1] > vals[2]
    else:
        assert vals[0] < vals[1] < vals[2]


@pytest.mark.formula
def test_step_reward_recomputed_by_hand():
    labels = np.zeros(40, bool)
    labels[5:8] = True
    spec = StrategySpec.default(NORMAL)
    # skipped 1..6 holds 2 important (5, 6), lands on 6
    sp = (2 - 0.1 * 4) / 25
    assert step_reward(spec, labels, 0, 6) == pytest.approx(-sp + 1.0)
    sp_jump = (2 - 0.1 * 4) / 6
    got = step_reward(spec, labels, 0, 6, RewardParams(penalty_norm="jump"))
    assert got == pytest.approx(-sp_jump + 1.0)


# ---------------------------------------------------------------- training

def toy_scene(seed=3):
    sc = generate_scene(1, 2000, 16, [(0, 150, (0,)), (1850, 2000, (0,))], 1.5, seed=seed)
    return sc


def test_zero_episodes_gives_initial_policy():
    pol = train_q([toy_scene()], StrategySpec.default(NORMAL), TrainConfig(episodes=0), seed=0)
    assert np.all(pol.q_table == 0.0)
    assert pol.episode_rewards == []


def test_training_is_deterministic():
    cfg = TrainConfig(episodes=60)
    a = train_q([toy_scene()], StrategySpec.default(FAST), cfg, seed=4)
    b = train_q([toy_scene()], StrategySpec.default(FAST), cfg, seed=4)
    assert np.array_equal(a.q_table, b.q_table)
    assert np.array_equal(a.codebook, b.codebook)
    assert a.episode_rewards == b.episode_rewards


def test_training_needs_streams():
    with pytest.raises(ValueError):
        train_q([], StrategySpec.default(NORMAL))


def test_episode_rewards_recomputed_offline():
    sc = toy_scene()
    spec = StrategySpec.default(SLOW)
    cfg = TrainConfig(episodes=25)
    trace = []
    pol = train_q([sc], spec, cfg, seed=1, trace=trace)
    streams = training_streams([sc])
    for (k, start, actions), total in zip(trace, pol.episode_rewards):
        labels = streams[k].labels
        pos, acc = start, 0.0
        for a in actions:
            acc += step_reward(spec, labels, pos, a, cfg.reward)
            pos += a
        assert acc == pytest.approx(total, abs=1e-12)


def test_trained_policy_skips_more_than_random_in_quiet_block():
    sc = toy_scene()
    spec = StrategySpec.default(NORMAL)
    random_mean = (spec.action_space + 1) / 2
    block = sc.streams[0].features[200:1800]
    means = [train_q([sc], spec, TrainConfig(episodes=1000), seed=s).greedy_actions(block).mean()
             for s in range(5)]
    assert np.mean(means) > random_mean


def test_q_values_finite_for_any_input(rng):
    pol = train_q([toy_scene()], StrategySpec.default(NORMAL), TrainConfig(episodes=30), seed=0)
    x = rng.standard_normal((50, 16)) * 1e6
    assert np.all(np.isfinite(pol.q_values(x)))


def test_checkpoint_round_trip(tmp_path, rng):
    pol = train_q([toy_scene()], StrategySpec.default(FAST), TrainConfig(episodes=40), seed=2)
    path = pol.save(tmp_path / "fast")
    back = QPolicy.load(path)
    x = rng.standard_normal((200, 16)) * 5
    assert np.array_equal(pol.greedy_actions(x), back.greedy_actions(x))
    assert back.kind is FAST and back.episode_rewards == pol.episode_rewards


def test_kmeans_recovers_separated_clusters(rng):
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    x = np.concatenate([c + rng.standard_normal((100, 2)) * 0.1 for c in centers])
    cb = kmeans(x, 3, np.random.default_rng(0))
    got = sorted(map(tuple, np.round(cb)))
    assert got == sorted(map(tuple, centers))


# ---------------------------------------------------------------- execution

def segment(length=100, dim=4):
    return VideoStream(0, np.zeros((length, dim)), np.zeros(length, bool))


@pytest.mark.formula
def test_skip_one_selects_every_frame():
    buf, carry = fast_forward_period(ConstantSkipPolicy(1), StrategySpec.default(NORMAL),
                                     segment())
    assert buf.indices.tolist() == list(range(100))
    assert buf.processed_count == 100 and carry == 0


@pytest.mark.formula
def test_constant_max_stride():
    buf, carry = fast_forward_period(ConstantSkipPolicy(25), StrategySpec.default(NORMAL),
                                     segment())
    assert buf.indices.tolist() == [0, 25, 50, 75]
    assert buf.processed_count == 4 and carry == 0


@pytest.mark.formula
def test_carryover_into_next_period():
    buf, carry = fast_forward_period(ConstantSkipPolicy(35), StrategySpec.default(FAST),
                                     segment())
    assert buf.indices.tolist() == [0, 35, 70]
    assert carry == 5


def test_offset_past_segment_gives_empty_buffer():
    buf, carry = fast_forward_period(ConstantSkipPolicy(35), StrategySpec.default(FAST),
                                     segment(10), 30)
    assert len(buf) == 0 and buf.processed_count == 0 and carry == 20


def test_global_indices_and_period():
    buf, _ = fast_forward_period(ConstantSkipPolicy(10), StrategySpec.default(NORMAL),
                                 segment(), 3, period=2, base_index=200)
    assert buf.indices[0] == 203 and buf.period == 2
    assert np.all((buf.indices >= 200) & (buf.indices < 300))


def test_policy_wider_than_strategy_rejected():
    with pytest.raises(ValueError):
        fast_forward_period(ConstantSkipPolicy(30), StrategySpec.default(NORMAL), segment())


def test_random_policy_actions_in_range():
    pol = RandomSkipPolicy(15, seed=0)
    acts = [pol.act(None) for _ in range(500)]
    assert min(acts) >= 1 and max(acts) <= 15


def test_selection_buffer_invariants():
    with pytest.raises(ValueError):
        SelectionBuffer(0, 0, np.array([3, 2]), np.zeros((2, 1)), 2)
    with pytest.raises(ValueError):
        SelectionBuffer(0, 0, np.array([1, 2]), np.zeros((2, 1)), 3)


def test_pace_ordering_on_label_free_stream(policy_sets):
    means = {FAST: [], NORMAL: [], SLOW: []}
    for s, pols in enumerate(policy_sets):
        stream = generate_scene(6, 3000, 16, [], 1.5, seed=500 + s).streams[s % 6]
        for kind, pol in pols.items():
            buf, _ = fast_forward_period(pol, StrategySpec.default(kind), stream)
            means[kind].append(np.diff(buf.indices).mean())
    m = {k: np.mean(v) for k, v in means.items()}
    assert m[FAST] >= m[NORMAL] >= m[SLOW]
