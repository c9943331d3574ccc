import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gru_attitude.dynamics import (AttitudeState, FormationGeometry, attitude_error, check_inertia,
                                   dynamics_derivative, euler_from_rotation, inertial_momentum,
                                   kinetic_energy, propagate, reference_basis, rotation_from_euler,
                                   step_rk4)
from gru_attitude.errors import DegenerateGeometry
from gru_attitude.kernels import hat

from conftest import random_rotation

small = st.floats(-0.05, 0.05, allow_nan=False)
vec3 = arrays(float, 3, elements=small)


def test_reference_basis_line_of_sight_along_x():
    e1, e2, e3 = reference_basis(FormationGeometry(np.array([2e5, 0, -7e6]), np.array([0, 0, -7e6])))
    assert np.array_equal(e1, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(e3, [0, 0, 1.0], atol=1e-15)


def test_reference_basis_degenerate():
    with pytest.raises(DegenerateGeometry):
        reference_basis(FormationGeometry(np.array([7e6 + 2e5, 0, 0]), np.array([7e6, 0, 0])))
    with pytest.raises(DegenerateGeometry):
        reference_basis(FormationGeometry(np.array([7e6, 0, 0]), np.array([7e6, 0, 0])))


def test_reference_basis_orthonormal_example():
    e1, e2, e3 = reference_basis(FormationGeometry(np.array([7e6, 2e5, 0]), np.array([7e6, 0, 0])))
    for a, b in [(e1, e2), (e1, e3), (e2, e3)]:
        assert abs(a @ b) < 1e-12
    assert np.array_equal(e2, np.cross(e3, e1))


@given(arrays(float, 3, elements=st.floats(-1e3, 1e3)), arrays(float, 3, elements=st.floats(1e5, 3e5)))
def test_reference_basis_right_handed(offset, los):
    r2 = np.array([7e6, 0, 0]) + offset
    r1 = r2 + los * np.array([0.1, 1, 1])
    try:
        e = np.column_stack(reference_basis(FormationGeometry(r1, r2)))
    except DegenerateGeometry:
        return
    np.testing.assert_allclose(e.T @ e, np.eye(3), atol=1e-12)
    assert np.linalg.det(e) == pytest.approx(1.0, abs=1e-12)


def test_derivative_equilibrium():
    s = AttitudeState(np.eye(3), np.zeros(3))
    R_dot, w_dot = dynamics_derivative(s, np.diag([3.0, 2, 1]), np.zeros(3), np.zeros(3))
    assert not R_dot.any() and not w_dot.any()


def test_derivative_spherical_torque_free():
    s = AttitudeState(np.eye(3), np.array([0, 0, 1.0]))
    _, w_dot = dynamics_derivative(s, np.eye(3), np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(w_dot, 0.0)


def test_derivative_hand_evaluated():
    w = np.array([0.1, 0.2, 0.0])
    s = AttitudeState(np.eye(3), w)
    R_dot, w_dot = dynamics_derivative(s, np.diag([2.0, 1, 1]), [0, 0, 0.01], [0, 0, -0.005])
    # I w = (0.2, 0.2, 0); w x Iw = (0, 0, 0.1*0.2 - 0.2*0.2) = (0, 0, -0.02)
    np.testing.assert_allclose(w_dot, [0.0, 0.0, 0.02 + 0.005], rtol=1e-14)
    np.testing.assert_allclose(R_dot, hat(w), rtol=1e-14)


def test_hat_is_cross_product():
    a, b = np.array([1.0, -2, 0.5]), np.array([0.3, 0.1, -4])
    np.testing.assert_allclose(hat(a) @ b, np.cross(a, b))


def test_step_equilibrium_only_advances_time():
    s = AttitudeState(np.eye(3), np.zeros(3), 3.0)
    out = step_rk4(s, np.diag([3.0, 2, 1]), np.zeros(3), np.zeros(3), 0.1)
    np.testing.assert_array_equal(out.rotation, s.rotation)
    np.testing.assert_array_equal(out.omega, s.omega)
    assert out.time == pytest.approx(3.1)


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step_rk4(AttitudeState(np.eye(3), np.zeros(3)), np.eye(3), np.zeros(3), np.zeros(3), 0.0)


def test_constant_rate_about_principal_axis_matches_closed_form():
    w = 0.01
    s = AttitudeState(np.eye(3), np.array([0, 0, w]))
    for _ in range(100):
        s = propagate(s, np.diag([3.0, 2, 1]), np.zeros(3), np.zeros(3), 1.0, 10)
    ang = w * 100
    expect = np.array([[np.cos(ang), -np.sin(ang), 0], [np.sin(ang), np.cos(ang), 0], [0, 0, 1]])
    np.testing.assert_allclose(s.rotation, expect, atol=1e-12)


def test_check_inertia_rejects_bad_tensors():
    with pytest.raises(ValueError):
        check_inertia(np.array([[1.0, 0.1, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(ValueError):
        check_inertia(np.diag([1.0, -1, 1]))
    with pytest.raises(ValueError):
        check_inertia(np.eye(2))


@given(st.floats(-3.1, 3.1), st.floats(-1.5, 1.5), st.floats(-3.1, 3.1))
def test_euler_round_trip(phi, theta, psi):
    R = rotation_from_euler([phi, theta, psi])
    np.testing.assert_allclose(euler_from_rotation(R), [phi, theta, psi], atol=1e-9)


def test_euler_ranges(rng):
    for _ in range(200):
        e = euler_from_rotation(random_rotation(rng))
        assert abs(e[1]) <= np.pi / 2
        assert -np.pi < e[0] <= np.pi and -np.pi < e[2] <= np.pi


def test_gimbal_flag():
    s = AttitudeState(rotation_from_euler([0, np.pi / 2 - 1e-4, 0]), np.zeros(3))
    assert attitude_error(s).gimbal_proximity
    assert not attitude_error(AttitudeState(np.eye(3), np.zeros(3))).gimbal_proximity


@given(vec3, vec3)
def test_rotation_stays_orthonormal(w, tau):
    s = AttitudeState(np.eye(3), w)
    inertia = np.diag([120.0, 100, 90])
    for _ in range(5):
        s = propagate(s, inertia, tau, np.zeros(3), 1.0, 10)
        R = s.rotation
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(R) - 1) < 1e-9


def test_energy_and_momentum_conserved_torque_free(rng):
    inertia = np.diag([120.0, 100, 90])
    s = AttitudeState(random_rotation(rng), np.array([0.02, -0.01, 0.015]))
    e0, h0 = kinetic_energy(s.omega, inertia), inertial_momentum(s, inertia)
    for _ in range(1000):
        s = step_rk4(s, inertia, np.zeros(3), np.zeros(3), 0.1)
    assert abs(kinetic_energy(s.omega, inertia) - e0) / e0 < 1e-6
    assert np.linalg.norm(inertial_momentum(s, inertia) - h0) / np.linalg.norm(h0) < 1e-6
