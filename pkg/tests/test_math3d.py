import numpy as np
import pytest

from rbdnet.math3d import (inertia_world, quat_derivative, quat_derivative_world,
                           quat_from_axis_angle, quat_mul, quat_norm, quat_normalize,
                           quat_rotate)

RT2 = np.sqrt(2.0) / 2.0


def random_unit_quat(rng):
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def test_quat_mul_identity():
    q = np.array([0.3, -0.5, 0.7, 0.4])
    assert np.allclose(quat_mul(np.array([1.0, 0, 0, 0]), q), q)
    assert np.allclose(quat_mul(q, np.array([1.0, 0, 0, 0])), q)


def test_quat_mul_ij_equals_k():
    i = np.array([0.0, 1.0, 0.0, 0.0])
    j = np.array([0.0, 0.0, 1.0, 0.0])
    assert np.allclose(quat_mul(i, j), [0.0, 0.0, 0.0, 1.0])


def test_quat_mul_hand_value():
    a = np.array([RT2, 0.0, 0.0, RT2])
    b = np.array([0.0, 0.0, 0.0, 1.0])
    assert np.allclose(quat_mul(a, b), [-RT2, 0.0, 0.0, RT2], atol=1e-15)


def test_quat_mul_norm_multiplicative():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        a = rng.standard_normal(4)
        b = rng.standard_normal(4)
        got = quat_norm(quat_mul(a, b))
        want = quat_norm(a) * quat_norm(b)
        assert abs(got - want) <= 1e-12 * max(want, 1.0)


def test_quat_derivative_zero_omega():
    assert np.allclose(quat_derivative(np.array([1.0, 0, 0, 0]), np.zeros(3)), 0.0)


def test_quat_derivative_identity_spin():
    d = quat_derivative(np.array([1.0, 0, 0, 0]), np.array([0.0, 0.0, 2.0]))
    assert np.allclose(d, [0.0, 0.0, 0.0, 1.0])


def test_quat_derivative_hand_value():
    d = quat_derivative(np.array([RT2, 0, 0, RT2]), np.array([0.0, 0.0, 1.0]))
    assert np.allclose(d, [-0.3535533906, 0.0, 0.0, 0.3535533906], atol=1e-9)


def test_quat_derivative_orthogonal_to_unit_q():
    rng = np.random.default_rng(2)
    for _ in range(500):
        q = random_unit_quat(rng)
        w = rng.uniform(-5, 5, 3)
        for d in (quat_derivative(q, w), quat_derivative_world(q, w)):
            assert abs(float(q @ d)) <= 1e-12


def test_quat_normalize():
    assert np.allclose(quat_normalize(np.array([2.0, 0, 0, 0])), [1, 0, 0, 0])
    assert np.allclose(quat_normalize(np.array([1.0, 1, 1, 1])), [0.5, 0.5, 0.5, 0.5])
    with pytest.raises(ValueError, match="degenerate"):
        quat_normalize(np.zeros(4))


def test_quat_rotate_identity_and_90deg():
    v = np.array([1.0, 2.0, 3.0])
    assert np.allclose(quat_rotate(np.array([1.0, 0, 0, 0]), v), v)
    q = quat_from_axis_angle(np.array([0.0, 0, 1]), np.pi / 2)
    assert np.allclose(quat_rotate(q, np.array([1.0, 0, 0])), [0, 1, 0], atol=1e-15)


def test_quat_rotate_double_cover_and_lengths():
    rng = np.random.default_rng(3)
    for _ in range(200):
        q = random_unit_quat(rng)
        v = rng.uniform(-4, 4, 3)
        u = rng.uniform(-4, 4, 3)
        rv = quat_rotate(q, v)
        assert np.allclose(quat_rotate(-q, v), rv, atol=1e-14)
        assert abs(np.linalg.norm(rv) - np.linalg.norm(v)) <= 1e-12 * max(1.0, np.linalg.norm(v))
        # angles preserved
        assert abs(float(rv @ quat_rotate(q, u)) - float(v @ u)) <= 1e-12 * max(1.0, abs(float(v @ u)))


def test_quat_rotate_rejects_non_unit():
    with pytest.raises(ValueError, match="unit"):
        quat_rotate(np.array([1.1, 0, 0, 0]), np.ones(3))


def test_inertia_world_identity_and_isotropy():
    diag = np.array([1.0, 2.0, 3.0])
    assert np.allclose(inertia_world(np.array([1.0, 0, 0, 0]), diag), np.diag(diag))
    rng = np.random.default_rng(4)
    for _ in range(50):
        q = random_unit_quat(rng)
        iw = inertia_world(q, np.array([0.7, 0.7, 0.7]))
        assert np.allclose(iw, 0.7 * np.eye(3), atol=1e-14)


def test_inertia_world_axis_permutation():
    q = quat_from_axis_angle(np.array([0.0, 0, 1]), np.pi / 2)
    iw = inertia_world(q, np.array([1.0, 2.0, 3.0]))
    assert np.allclose(iw, np.diag([2.0, 1.0, 3.0]), atol=1e-14)


def test_inertia_world_properties():
    rng = np.random.default_rng(5)
    for _ in range(200):
        q = random_unit_quat(rng)
        diag = rng.uniform(0.1, 3.0, 3)
        iw = inertia_world(q, diag)
        assert np.abs(iw - iw.T).max() <= 1e-12
        assert abs(np.trace(iw) - diag.sum()) <= 1e-10
        eig = np.sort(np.linalg.eigvalsh(iw))
        assert np.allclose(eig, np.sort(diag), atol=1e-10)


def test_inertia_world_rejects_nonpositive():
    with pytest.raises(ValueError):
        inertia_world(np.array([1.0, 0, 0, 0]), np.array([1.0, -1.0, 1.0]))
