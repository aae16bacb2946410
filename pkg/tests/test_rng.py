import math

from kfnoc.rng import MASK64, bernoulli_threshold, mix64, rng_u64


def test_rng_is_pure():
    assert rng_u64(42, 3, 1000, 0) == rng_u64(42, 3, 1000, 0)


def test_rng_distinguishes_key_components():
    base = rng_u64(42, 3, 1000, 0)
    assert base != rng_u64(43, 3, 1000, 0)
    assert base != rng_u64(42, 4, 1000, 0)
    assert base != rng_u64(42, 3, 1001, 0)
    assert base != rng_u64(42, 3, 1000, 1)


def test_rng_range():
    for i in range(100):
        assert 0 <= rng_u64(7, i, i * i, i % 3) <= MASK64


def test_mix64_masks_to_64_bits():
    assert mix64(2**70 + 5) == mix64((2**70 + 5) & MASK64)


def test_bernoulli_threshold_edges():
    assert bernoulli_threshold(0.0) == (0, False)
    assert bernoulli_threshold(-1.0) == (0, False)
    assert bernoulli_threshold(1.0) == (0, True)
    assert bernoulli_threshold(2.0) == (0, True)
    thr, always = bernoulli_threshold(0.5)
    assert thr == 2**63 and not always


def test_bernoulli_rate_zero_never_fires():
    thr, always = bernoulli_threshold(0.0)
    assert not always
    for cycle in range(1000):
        assert rng_u64(1, 0, cycle, 0) >= thr


def test_bernoulli_hit_rate_within_3_sigma():
    rate = 0.3
    n = 10000
    thr, always = bernoulli_threshold(rate)
    assert not always
    hits = sum(1 for c in range(n) if rng_u64(2024, 5, c, 0) < thr)
    sigma = math.sqrt(n * rate * (1 - rate))
    assert abs(hits - n * rate) <= 3 * sigma


def test_modulo_buckets_roughly_uniform():
    n = 80000
    buckets = [0] * 8
    for c in range(n):
        buckets[rng_u64(7, 11, c, 1) % 8] += 1
    expect = n / 8
    sigma = math.sqrt(n * (1 / 8) * (7 / 8))
    for b in buckets:
        assert abs(b - expect) <= 3 * sigma
