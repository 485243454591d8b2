import numpy as np
import pytest

from shapesync.errors import InvalidInputError, ScheduleRangeError
from shapesync.grid import Grid
from shapesync.rng import RngStream
from shapesync.schedule import NoiseSchedule, noise_to, schedule_eval


def test_kind_and_steps_validated():
    with pytest.raises(InvalidInputError):
        NoiseSchedule("cubic", 10)
    with pytest.raises(InvalidInputError):
        NoiseSchedule("linear-flow", 0)


def test_linear_flow_endpoints():
    s = NoiseSchedule("linear-flow", 50)
    assert schedule_eval(s, 0) == (1.0, 0.0)
    assert schedule_eval(s, 50) == (0.0, 1.0)
    assert schedule_eval(s, 25) == (0.5, 0.5)


def test_linear_flow_is_affine_in_t():
    s = NoiseSchedule("linear-flow", 20)
    for t in range(21):
        alpha, sigma = schedule_eval(s, t)
        assert alpha == 1.0 - t / 20
        assert sigma == t / 20


def test_variance_preserving_identity():
    s = NoiseSchedule("variance-preserving", 17)
    for t in range(18):
        alpha, sigma = schedule_eval(s, t)
        assert alpha ** 2 + sigma ** 2 == pytest.approx(1.0, abs=1e-12)
    assert schedule_eval(s, 0) == pytest.approx((1.0, 0.0), abs=1e-12)
    assert schedule_eval(s, 17) == pytest.approx((0.0, 1.0), abs=1e-12)


def test_out_of_range_timestep():
    s = NoiseSchedule("linear-flow", 10)
    with pytest.raises(ScheduleRangeError):
        schedule_eval(s, -1)
    with pytest.raises(ScheduleRangeError):
        schedule_eval(s, 11)


def test_noise_to_matches_formula():
    s = NoiseSchedule("linear-flow", 10)
    z = Grid(np.full((1, 2, 2, 3, 3), 0.5, dtype=np.float32))
    eps = RngStream(5).normal(z.dims)
    got = noise_to(s, z, 3, RngStream(5))
    alpha, sigma = 0.7, 0.3
    want = np.float32(alpha) * z.data + np.float32(sigma) * eps
    np.testing.assert_array_equal(got.data, want)


def test_noise_to_endpoints():
    s = NoiseSchedule("linear-flow", 10)
    z = Grid(np.random.default_rng(0).normal(size=(1, 1, 2, 2, 2)).astype(np.float32))
    clean = noise_to(s, z, 0, RngStream(1))
    np.testing.assert_array_equal(clean.data, z.data)
    pure = noise_to(s, z, 10, RngStream(2))
    np.testing.assert_array_equal(pure.data, RngStream(2).normal(z.dims))
