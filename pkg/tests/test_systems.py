import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stlrnn.systems import (
    ControlBounds,
    DisturbanceSpec,
    SystemModel,
    rollout,
    rollout_batch,
    step,
)

UNI = SystemModel.unicycle()
INT = SystemModel.integrator()


def test_integrator_step():
    np.testing.assert_allclose(step(INT, [1, 2], [0.3, -0.1]), [1.3, 1.9])


def test_unicycle_step_turning():
    # oracle: mpmath, 2 sin 0.5 and 2 (1 - cos 0.5)
    np.testing.assert_allclose(step(UNI, [0, 0, 0], [1, 0.5]),
                               [0.958851077208406, 0.244834876219254, 0.5], atol=1e-14)


def test_unicycle_step_straight():
    np.testing.assert_array_equal(step(UNI, [0, 0, 0], [1, 0]), [1, 0, 0])


def test_step_dimension_errors():
    with pytest.raises(ValueError):
        step(UNI, [0, 0], [1, 0])
    with pytest.raises(ValueError):
        step(INT, [0, 0], [1, 0, 0])


def test_bounds_validation():
    with pytest.raises(ValueError):
        ControlBounds([0, 0], [0, 1])
    with pytest.raises(ValueError):
        ControlBounds([0, -np.inf], [1, 1])
    b = UNI.bounds
    np.testing.assert_allclose(b.midpoint, [0.5, 0.0])


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-7, 7), st.floats(0, 1),
       st.sampled_from([1e-8, -1e-8]))
def test_unicycle_continuity(x, y, th, v, w):
    limit = step(UNI, [x, y, th], [v, w])
    r = v / w
    general = np.array([x + r * (math.sin(th + w) - math.sin(th)),
                        y + r * (math.cos(th) - math.cos(th + w)), th + w])
    np.testing.assert_allclose(limit, general, atol=1e-6)


def test_rollout_examples():
    tr = rollout(INT, [0, 0], [[0.1, 0], [0.1, 0]])
    np.testing.assert_allclose(tr.states, [[0, 0], [0.1, 0], [0.2, 0]])
    assert len(rollout(UNI, [1, 2, 3], [])) == 1
    np.testing.assert_array_equal(rollout(UNI, [1, 2, 3], []).states, [[1, 2, 3]])


def test_rollout_rejects_out_of_bounds_with_index():
    with pytest.raises(ValueError, match="control 1"):
        rollout(INT, [0, 0], [[0.1, 0], [0.7, 0]])


def test_rollout_disturbance_deterministic_and_bounded():
    rng = np.random.default_rng(0)
    U = rng.uniform(-0.6, 0.6, (30, 2))
    d = DisturbanceSpec("uniform_box", (0.05, 0.05), seed=11)
    a = rollout(INT, [0, 0], U, d).states
    b = rollout(INT, [0, 0], U, d).states
    np.testing.assert_array_equal(a, b)
    w = np.diff(a, axis=0) - U
    assert np.all(np.abs(w) <= 0.05) and np.any(np.abs(w) > 0.01)
    other = rollout(INT, [0, 0], U, DisturbanceSpec("uniform_box", (0.05, 0.05), seed=12)).states
    assert not np.array_equal(a, other)


def test_disturbance_validation():
    with pytest.raises(ValueError):
        DisturbanceSpec("uniform_box", (-0.1, 0.1))
    with pytest.raises(ValueError):
        DisturbanceSpec("gaussian", (0.1,))


@pytest.mark.parametrize("model", [UNI, INT], ids=["unicycle", "integrator"])
@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_rollout_batch_matches_rollout(model, backend):
    rng = np.random.default_rng(3)
    U = rng.uniform(model.bounds.lo, model.bounds.hi, (7, 12, 2))
    U[0, :, 1] = 0.0  # exercise the straight-line branch
    q0 = rng.uniform(0, 2, model.state_dim)
    out = rollout_batch(model, q0, U, backend=backend)
    assert out.shape == (7, 13, model.state_dim)
    for b in range(7):
        np.testing.assert_allclose(out[b], rollout(model, q0, U[b]).states, atol=1e-13)
