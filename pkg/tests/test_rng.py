import numpy as np
import pytest

from shapesync.errors import InvalidInputError
from shapesync.rng import RngStream

# First draws for seed 42, frozen so any platform or numpy upgrade that
# changes the stream is caught immediately.
GOLDEN_NORMAL_42 = np.array(
    [0.18170474, -1.2426393, -0.551553, 0.36648002,
     0.60079044, 0.64380044, -0.8491223, 0.5878546],
    dtype=np.float32,
)


def test_golden_normal_sequence():
    np.testing.assert_array_equal(RngStream(42).normal((8,)), GOLDEN_NORMAL_42)


def test_draws_are_float32():
    assert RngStream(0).normal((3,)).dtype == np.float32
    assert RngStream(0).uniform((3,)).dtype == np.float32


def test_state_is_seed_and_counter():
    s = RngStream(5)
    first = s.normal((4,))
    second = s.normal((4,))
    assert s.counter == 2
    resumed = RngStream(5, 1)
    np.testing.assert_array_equal(resumed.normal((4,)), second)
    assert not np.array_equal(first, second)


def test_draw_length_does_not_shift_the_stream():
    a = RngStream(3)
    a.normal((100,))
    tail = a.normal((4,))
    b = RngStream(3)
    b.normal((2,))
    np.testing.assert_array_equal(b.normal((4,)), tail)


def test_split_is_deterministic():
    assert RngStream(42).split("audio").seed == 8396080575357882752
    assert RngStream(42).split("audio").seed == RngStream(42).split("audio").seed


def test_split_labels_give_distinct_streams():
    s = RngStream(0)
    a = s.split("a").normal((16,))
    b = s.split("b").normal((16,))
    assert not np.array_equal(a, b)


def test_split_does_not_consume_parent_state():
    s = RngStream(9)
    s.split("child")
    assert s.counter == 0


def test_uniform_range():
    u = RngStream(1).uniform((1000,))
    assert u.min() >= 0.0 and u.max() < 1.0


def test_integers_range_and_error():
    v = RngStream(1).integers(3, 7, (1000,))
    assert v.min() >= 3 and v.max() <= 6
    with pytest.raises(InvalidInputError):
        RngStream(1).integers(5, 5)
