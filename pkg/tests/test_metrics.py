import numpy as np
import pytest

from zvnav.core import TimedPositions
from zvnav.errors import ZvnavError
from zvnav.eskf import Trajectory
from zvnav.metrics import armse, furthest_point_vertical, interpolate_positions, loop_closure


def make_traj(t, pos):
    n = t.shape[0]
    quat = np.zeros((n, 4))
    quat[:, 0] = 1.0
    return Trajectory(t=t, pos=pos, vel=np.zeros((n, 3)), quat=quat, zupt=np.zeros(n, dtype=np.uint8))


@pytest.fixture
def straight_traj():
    t = np.arange(100) / 10.0
    pos = np.zeros((100, 3))
    pos[:, 0] = t * 0.5
    return make_traj(t, pos)


class TestArmse:
    def test_zero_for_identical(self, straight_traj):
        gt = TimedPositions(straight_traj.t, straight_traj.pos)
        assert armse(straight_traj, gt) == 0.0

    def test_constant_offset(self, straight_traj):
        gt = TimedPositions(straight_traj.t, straight_traj.pos + [1.0, 0.0, 0.0])
        assert armse(straight_traj, gt) == pytest.approx(1.0, rel=1e-12)

    def test_matches_direct_summation(self, straight_traj):
        rng = np.random.default_rng(0)
        times = np.sort(rng.uniform(0.0, 9.9, 17))
        offsets = rng.normal(0, 1, (17, 3))
        est = interpolate_positions(straight_traj, times)
        gt = TimedPositions(times, est + offsets)
        want = float(np.sqrt(np.mean(np.sum(np.asarray(offsets, np.longdouble) ** 2, axis=1))))
        assert armse(straight_traj, gt) == pytest.approx(want, rel=1e-12)

    def test_empty_gt_rejected(self, straight_traj):
        with pytest.raises(ZvnavError):
            armse(straight_traj, TimedPositions(np.array([]), np.zeros((0, 3))))

    def test_outside_span_rejected(self, straight_traj):
        gt = TimedPositions(np.array([10.5]), np.zeros((1, 3)))
        with pytest.raises(ZvnavError, match="outside"):
            armse(straight_traj, gt)

    def test_time_shift_invariance(self, straight_traj):
        gt = TimedPositions(straight_traj.t[::5], straight_traj.pos[::5] + 0.3)
        base = armse(straight_traj, gt)
        shifted = make_traj(straight_traj.t + 100.0, straight_traj.pos)
        gt_shifted = TimedPositions(gt.t + 100.0, gt.xyz)
        assert armse(shifted, gt_shifted) == pytest.approx(base, rel=1e-12)


class TestLoopClosure:
    def test_closed_loop(self):
        t = np.arange(10) / 10.0
        pos = np.zeros((10, 3))
        assert loop_closure(make_traj(t, pos)) == (0.0, 0.0)

    def test_analytic_offset(self):
        t = np.arange(10) / 10.0
        pos = np.zeros((10, 3))
        pos[-1] = [3.0, 4.0, 1.0]
        err3, errv = loop_closure(make_traj(t, pos))
        assert err3 == pytest.approx(np.sqrt(26.0), rel=1e-12)
        assert errv == pytest.approx(1.0, rel=1e-12)

    def test_vertical_never_exceeds_3d(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            t = np.arange(5) / 10.0
            pos = rng.normal(0, 1, (5, 3))
            err3, errv = loop_closure(make_traj(t, pos))
            assert errv <= err3 + 1e-15


class TestFurthestPointVertical:
    def test_perfect_estimate(self, straight_traj):
        z = straight_traj.pos[50, 2]
        assert furthest_point_vertical(straight_traj, z, straight_traj.t[50]) == 0.0

    def test_half_meter_error(self):
        t = np.arange(10) / 10.0
        pos = np.zeros((10, 3))
        pos[:, 2] = 16.0
        traj = make_traj(t, pos)
        assert furthest_point_vertical(traj, 16.5, 0.5) == pytest.approx(0.5, rel=1e-12)

    def test_interpolates_between_samples(self):
        t = np.array([0.0, 1.0])
        pos = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
        traj = make_traj(t, pos)
        # linear formula oracle at t = 0.25
        assert furthest_point_vertical(traj, 0.0, 0.25) == pytest.approx(0.5, rel=1e-12)
