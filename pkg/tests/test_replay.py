import numpy as np
import pytest

from mcrl.replay import ReplayBuffer, Transition, stack


def tr(i, sdim=2, adim=1):
    return Transition(s=np.full(sdim, float(i)), a=np.full(adim, 0.1 * i),
                      r=float(i), s_next=np.full(sdim, float(i) + 0.5), done=False)


def test_push_grows_then_rings():
    buf = ReplayBuffer(capacity=2, state_dim=2, action_dim=1)
    buf.push(tr(1))
    assert len(buf) == 1
    buf.push(tr(2))
    buf.push(tr(3))
    assert len(buf) == 2
    rewards = sorted(t.r for t in buf.items())
    assert rewards == [2.0, 3.0]


def test_shape_and_reward_validation():
    buf = ReplayBuffer(capacity=4, state_dim=2, action_dim=1)
    with pytest.raises(ValueError):
        buf.push(Transition(np.zeros(3), np.zeros(1), 0.0, np.zeros(2), False))
    with pytest.raises(ValueError):
        buf.push(Transition(np.zeros(2), np.zeros(2), 0.0, np.zeros(2), False))
    with pytest.raises(ValueError):
        buf.push(Transition(np.zeros(2), np.zeros(1), float("inf"), np.zeros(2), False))


def test_roundtrip_fields():
    buf = ReplayBuffer(capacity=4)
    t = tr(7)
    buf.push(t)
    (got,) = buf.sample(1, np.random.default_rng(0))
    np.testing.assert_array_equal(got.s, t.s)
    np.testing.assert_array_equal(got.a, t.a)
    assert got.r == t.r and got.done == t.done
    np.testing.assert_array_equal(got.s_next, t.s_next)


def test_single_item_sampled_with_replacement():
    buf = ReplayBuffer(capacity=4)
    buf.push(tr(1))
    out = buf.sample(4, np.random.default_rng(1))
    assert len(out) == 4
    assert all(o.r == 1.0 for o in out)


def test_empty_buffer_sampling_rejected():
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=4).sample(1, np.random.default_rng(0))


def test_fixed_seed_reproduces_sample_sequence():
    buf = ReplayBuffer(capacity=16)
    for i in range(10):
        buf.push(tr(i))
    seq1 = [t.r for _ in range(5) for t in buf.sample(3, np.random.default_rng(42))]
    seq2 = [t.r for _ in range(5) for t in buf.sample(3, np.random.default_rng(42))]
    assert seq1 == seq2


def test_sampling_does_not_mutate_buffer():
    buf = ReplayBuffer(capacity=16)
    for i in range(10):
        buf.push(tr(i))
    before = [(t.r, t.s.copy()) for t in buf.items()]
    buf.sample(64, np.random.default_rng(3))
    after = buf.items()
    for (r, s), t in zip(before, after):
        assert t.r == r
        np.testing.assert_array_equal(t.s, s)


def test_uniformity_within_three_sigma():
    buf = ReplayBuffer(capacity=16)
    for i in range(10):
        buf.push(tr(i))
    rng = np.random.default_rng(123)
    draws = 100_000
    idx = buf.sample_indices(draws, rng)
    counts = np.bincount(idx, minlength=10)
    p = 0.1
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) <= 3 * sigma)


def test_train_and_validation_draws_are_independent():
    buf = ReplayBuffer(capacity=16)
    for i in range(10):
        buf.push(tr(i))
    rng = np.random.default_rng(9)
    # consecutive draws from one stream must not reuse the index list
    agree = 0
    trials = 200
    for _ in range(trials):
        i1 = buf.sample_indices(8, rng)
        i2 = buf.sample_indices(8, rng)
        if np.array_equal(i1, i2):
            agree += 1
    assert agree == 0


def test_stack_shapes():
    b = stack([tr(i) for i in range(5)])
    assert b.s.shape == (5, 2) and b.a.shape == (5, 1)
    assert b.r.shape == (5, 1) and b.done.shape == (5, 1)
    assert len(b) == 5
