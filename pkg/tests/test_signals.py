import math

import numpy as np
import pytest
from scipy import signal

from blsmo.signals import VectorSignal, Waveform


def _off_jump_times(rng, n=500):
    t = rng.uniform(-20, 20, n)
    # keep clear of the jump instants, where the two conventions may pick either side
    return t[np.abs(np.mod(t, math.pi / 3) - math.pi / 6) < math.pi / 6 - 1e-6]


def test_sawtooth_matches_scipy():
    t = _off_jump_times(np.random.default_rng(0))
    w = Waveform("sawtooth", amplitude=2.0, freq=3.0, phase=0.4, offset=-1.0)
    np.testing.assert_allclose(w(t), 2.0 * signal.sawtooth(3.0 * t + 0.4) - 1.0, atol=1e-12)


def test_square_matches_scipy():
    t = _off_jump_times(np.random.default_rng(1))
    w = Waveform("square", amplitude=0.5, freq=2.0)
    np.testing.assert_allclose(w(t), 0.5 * signal.square(2.0 * t), atol=1e-12)


def test_smooth_kinds():
    t = np.linspace(0, 3, 7)
    np.testing.assert_allclose(Waveform("sin", freq=2.0)(t), np.sin(2 * t))
    np.testing.assert_allclose(Waveform("cos", amplitude=3.0)(t), 3 * np.cos(t))
    np.testing.assert_array_equal(Waveform("constant", amplitude=4.0)(t), 4.0)
    np.testing.assert_array_equal(Waveform("zero", amplitude=4.0)(t), 0.0)
    with pytest.raises(ValueError):
        Waveform("triangle")


def test_discontinuities():
    saw = Waveform("sawtooth", freq=4.0)
    np.testing.assert_allclose(saw.discontinuities(0.0, 5.0), [0, math.pi / 2, math.pi, 1.5 * math.pi])
    assert saw.min_jump_gap == pytest.approx(math.pi / 2)
    sq = Waveform("square", freq=1.0, phase=0.5)
    np.testing.assert_allclose(sq.discontinuities(0.0, 7.0), [math.pi - 0.5, 2 * math.pi - 0.5])
    assert Waveform("sin").discontinuities(0, 10).size == 0
    assert Waveform("sin").min_jump_gap == math.inf


def test_vector_signal():
    v = VectorSignal.from_specs([{"kind": "sin", "amplitude": 3.0}, Waveform("square", amplitude=4.0)])
    assert len(v) == 2
    assert v.sup_norm == 5.0
    grid = np.linspace(0, 1, 11)
    S = v.sample(grid)
    assert S.shape == (11, 2)
    np.testing.assert_allclose(S[4], v(grid[4]))
    assert VectorSignal.zeros(3).sup_norm == 0.0
    again = VectorSignal.from_specs(v.to_list())
    np.testing.assert_array_equal(again.sample(grid), S)
