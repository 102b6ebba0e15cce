import numpy as np
import pytest
from scipy.linalg import expm

from zvnav.core import (
    ImuSample,
    ImuSequence,
    NavState,
    Quaternion,
    TimedPositions,
    quat_from_axis_angle,
    quat_from_two_vectors,
    quat_increment,
    quat_multiply,
    quat_to_rotmat,
)
from zvnav.errors import KinematicsError, ZvnavError


def rotmat_longdouble(q):
    """Direct matrix-from-quaternion formula evaluated in extended precision."""
    w, x, y, z = (np.longdouble(v) for v in (q.w, q.x, q.y, q.z))
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (w * y + x * z)],
            [2 * (w * z + x * y), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
        ],
        dtype=np.longdouble,
    )


def random_unit_quaternion(rng):
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    return Quaternion(*q)


class TestQuatToRotmat:
    def test_identity(self):
        np.testing.assert_array_equal(quat_to_rotmat(Quaternion.identity()), np.eye(3))

    def test_half_turn_about_z(self):
        R = quat_to_rotmat(Quaternion(0.0, 0.0, 0.0, 1.0))
        np.testing.assert_allclose(R, np.diag([-1.0, -1.0, 1.0]), atol=1e-15)

    def test_orthonormality_and_extended_precision_formula(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            q = random_unit_quaternion(rng)
            R = quat_to_rotmat(q)
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
            R_ref = rotmat_longdouble(q).astype(float)
            np.testing.assert_allclose(R, R_ref, atol=1e-14)

    def test_non_unit_quaternion_warns_and_normalizes(self):
        with pytest.warns(UserWarning, match="normalizing"):
            R = quat_to_rotmat(Quaternion(1.001, 0.0, 0.0, 0.0))
        np.testing.assert_allclose(R, np.eye(3), atol=1e-12)


def skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=float)


class TestQuatIncrement:
    def test_zero_rate_is_identity(self):
        q = Quaternion(0.5, 0.5, 0.5, 0.5)
        q2 = quat_increment(q, np.zeros(3), 0.01)
        np.testing.assert_allclose(q2.as_array(), q.as_array(), atol=1e-15)

    def test_half_turn_about_z(self):
        q = quat_increment(Quaternion.identity(), np.array([0.0, 0.0, np.pi]), 1.0)
        np.testing.assert_allclose(q.as_array(), [0.0, 0.0, 0.0, 1.0], atol=1e-12)

    def test_matrix_exponential_oracle(self):
        w = np.array([0.1, 0.0, 0.0])
        dt = 0.005
        q = quat_increment(Quaternion.identity(), w, dt)
        np.testing.assert_allclose(quat_to_rotmat(q), expm(skew(w * dt)), atol=1e-10)

    def test_rotation_beyond_pi_rejected(self):
        with pytest.raises(KinematicsError):
            quat_increment(Quaternion.identity(), np.array([700.0, 0.0, 0.0]), 0.005)

    def test_norm_preserved_for_random_inputs(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            q = random_unit_quaternion(rng)
            w = rng.normal(0, 50, 3)
            dt = rng.uniform(1e-4, 0.01)
            q2 = quat_increment(q, w, dt)
            assert abs(q2.norm() - 1.0) < 1e-9

    def test_increment_composes_with_matrix_exponential(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            q = random_unit_quaternion(rng)
            w = rng.normal(0, 5, 3)
            dt = rng.uniform(1e-4, 0.015)
            if np.linalg.norm(w) * dt >= 0.1:
                continue
            q2 = quat_increment(q, w, dt)
            np.testing.assert_allclose(
                quat_to_rotmat(q2), quat_to_rotmat(q) @ expm(skew(w * dt)), atol=1e-9
            )


class TestQuaternionHelpers:
    def test_multiply_identity(self):
        q = Quaternion(0.5, -0.5, 0.5, 0.5)
        out = quat_multiply(q, Quaternion.identity())
        np.testing.assert_allclose(out.as_array(), q.as_array())

    def test_from_two_vectors_maps_direction(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            R = quat_to_rotmat(quat_from_two_vectors(a, b))
            got = R @ (a / np.linalg.norm(a))
            np.testing.assert_allclose(got, b / np.linalg.norm(b), atol=1e-12)

    def test_from_axis_angle_zero(self):
        assert quat_from_axis_angle(np.zeros(3)).as_array()[0] == 1.0


class TestImuSequence:
    def test_rejects_non_monotonic_timestamps(self):
        t = np.array([0.0, 0.01, 0.01, 0.03])
        with pytest.raises(ZvnavError, match="strictly increasing"):
            ImuSequence(t, np.zeros((4, 3)), np.zeros((4, 3)), 100.0)

    def test_rejects_large_gaps(self):
        t = np.array([0.0, 0.01, 0.02, 0.2])
        with pytest.raises(ZvnavError, match="exceeds 3x"):
            ImuSequence(t, np.zeros((4, 3)), np.zeros((4, 3)), 100.0)

    def test_rejects_non_finite(self):
        accel = np.zeros((3, 3))
        accel[1, 2] = np.nan
        with pytest.raises(ZvnavError, match="non-finite"):
            ImuSequence(np.array([0.0, 0.01, 0.02]), accel, np.zeros((3, 3)), 100.0)

    def test_samples_round_trip(self):
        t = np.array([0.0, 0.01])
        seq = ImuSequence(t, np.arange(6).reshape(2, 3), np.arange(6).reshape(2, 3), 100.0)
        samples = seq.samples()
        back = ImuSequence.from_samples(samples, 100.0)
        np.testing.assert_array_equal(back.accel, seq.accel)

    def test_imu_sample_rejects_nan(self):
        with pytest.raises(ZvnavError):
            ImuSample(0.0, np.array([np.nan, 0, 0]), np.zeros(3))


class TestNavState:
    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(ZvnavError, match="norm"):
            NavState(np.zeros(3), np.zeros(3), Quaternion(1.1, 0, 0, 0))

    def test_initial(self):
        s = NavState.initial()
        assert np.all(s.p == 0) and np.all(s.v == 0)


class TestTimedPositions:
    def test_shape_check(self):
        with pytest.raises(ZvnavError):
            TimedPositions(np.zeros(3), np.zeros((2, 3)))

    def test_monotonic_check(self):
        with pytest.raises(ZvnavError):
            TimedPositions(np.array([0.0, 0.0]), np.zeros((2, 3)))
