"""The numba-compiled kernels and their pure-numpy fallbacks agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from gru_attitude import _accel, gru, kernels
from gru_attitude._accel import python_impl

from conftest import random_rotation


@pytest.fixture
def plant(rng):
    inertia = np.diag([120.0, 100.0, 90.0])
    return (random_rotation(rng), rng.standard_normal(3) * 0.01, inertia, np.linalg.inv(inertia),
            rng.standard_normal(3) * 1e-4)


def test_flag_selects_path():
    assert _accel.ENV_FLAG == "GRU_ATTITUDE_DISABLE_NUMBA"
    if _accel.NUMBA_ENABLED:
        assert python_impl(kernels.rk4_step) is not kernels.rk4_step
    else:
        assert python_impl(kernels.rk4_step) is kernels.rk4_step


def test_propagate_parity(plant):
    R, w, inertia, inv, torque = plant
    fast = kernels.propagate(R, w, inertia, inv, torque, 1.0, 10)
    slow = python_impl(kernels.propagate)(R, w, inertia, inv, torque, 1.0, 10)
    for a, b in zip(fast, slow):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_polar_parity(rng):
    M = random_rotation(rng) + 1e-6 * rng.standard_normal((3, 3))
    np.testing.assert_allclose(kernels.polar(M), python_impl(kernels.polar)(M), atol=1e-14)


def test_gru_kernels_parity(rng):
    net = gru.init_network(3, 6, 2, 3, rng)
    packed = net.packed()
    window = rng.standard_normal((5, 3))
    fast = kernels.gru_forward_window(window, *packed)
    slow = python_impl(kernels.gru_forward_window)(window, *packed)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-15)
    fast = kernels.gru_rollout(window, 20, *packed)
    slow = python_impl(kernels.gru_rollout)(window, 20, *packed)
    np.testing.assert_allclose(fast, slow, rtol=1e-10, atol=1e-13)


def test_sigmoid_is_stable():
    x = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
    for f in (kernels._sigmoid, python_impl(kernels._sigmoid)):
        y = f(x)
        assert np.all(np.isfinite(y)) and y[2] == 0.5 and y[0] == 0.0 and y[-1] == 1.0


SCRIPT = """
import numpy as np
from gru_attitude import _accel
from gru_attitude.compensator import IterationConfig, Scenario, run_iteration
from gru_attitude.disturbance import synthesize
sc = Scenario(initial_euler=np.array([0.01, 0.0, -0.02]))
rec = run_iteration(0, [], sc, IterationConfig(period=200.0), synthesize(sc.disturbance, 200.0))
print(int(_accel.NUMBA_ENABLED))
print(repr(rec.euler.tolist()))
"""


def run_script(disable):
    env = dict(os.environ)
    env.pop(_accel.ENV_FLAG, None)
    if disable:
        env[_accel.ENV_FLAG] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    flag, euler = out.stdout.strip().splitlines()
    return int(flag), np.array(eval(euler))


def test_pure_numpy_path_matches_compiled_end_to_end():
    on_flag, on = run_script(disable=False)
    off_flag, off = run_script(disable=True)
    assert off_flag == 0
    np.testing.assert_allclose(on, off, rtol=1e-9, atol=1e-15)
