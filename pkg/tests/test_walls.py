import numpy as np
import pytest

from tsgraphs import walls, world
from tsgraphs.errors import ConfigError
from tsgraphs.geometry import Line2, Pose2
from tsgraphs.sensor import LidarConfig, Scan, raycast


def scan_of(obstacles, pose=Pose2(10, 10), seed=0):
    ground = np.ones((40, 40), dtype='u1')
    s = world.Scenario('test', 0.5, ground, obstacles, [pose])
    return raycast(s, pose, LidarConfig(), np.random.default_rng(seed))


class Test_WallConfig:
    def test_from_config_in_degrees(self):
        cfg = walls.WallConfig.from_config(dict(assoc_angle_deg=5, min_support=20))
        assert cfg.assoc_angle == pytest.approx(np.deg2rad(5))
        assert cfg.min_support == 20

    def test_rejects_invalid(self):
        with pytest.raises(ConfigError):
            walls.WallConfig(fit_tol=0)
        with pytest.raises(ConfigError):
            walls.WallConfig.from_config(dict(tolerance=1))


class Test_extract_walls:
    @pytest.fixture(scope='class')
    def wall_obs(self):
        scan = scan_of([world.ObstacleSegment((2, 13), (18, 13))])
        return walls.extract_walls(scan)

    def test_single_wall(self, wall_obs):
        assert len(wall_obs) == 1

    def test_normal_points_toward_wall(self, wall_obs):
        line = wall_obs[0].line
        assert line.theta_n == pytest.approx(np.pi / 2, abs=0.01)
        assert line.d == pytest.approx(3, abs=0.02)

    def test_extent_and_quality(self, wall_obs):
        obs = wall_obs[0]
        assert obs.extent == pytest.approx((-8, 8), abs=0.3)
        assert obs.rms < 0.05
        assert obs.support >= 100
        assert obs.z_max > 1.2

    def test_rail_is_not_a_wall(self):
        rail = world.ObstacleSegment((2, 13), (18, 13), 0, 1.0)
        assert walls.extract_walls(scan_of([rail])) == []

    def test_wall_behind_rail(self):
        rail = world.ObstacleSegment((2, 13), (18, 13), 0, 1.0)
        wall = world.ObstacleSegment((0, 15), (20, 15))
        obs = walls.extract_walls(scan_of([rail, wall]))
        assert len(obs) == 1
        assert obs[0].line.d == pytest.approx(5, abs=0.02)

    def test_corner_gives_two_walls(self):
        obs = walls.extract_walls(scan_of([
            world.ObstacleSegment((4, 14), (16, 14)),
            world.ObstacleSegment((16, 14), (16, 4)),
        ]))
        normals = sorted(round(np.rad2deg(o.line.theta_n)) for o in obs)
        assert normals == [0, 90]

    def test_empty_scan(self):
        assert walls.extract_walls(Scan.empty()) == []


class Test_WallMap:
    @staticmethod
    def obs(theta_n=np.pi / 2, d=3.0, extent=(-2, 2)):
        return walls.WallObservation(Line2(theta_n, d), support=50, extent=extent)

    def test_new_landmark(self):
        m = walls.WallMap()
        lm_id, is_new = m.observe(0, self.obs(), Pose2())
        assert (lm_id, is_new) == (0, True)
        lm = m[0]
        assert lm.line.d == pytest.approx(3)
        assert lm.facing == pytest.approx(np.pi / 2)
        assert lm.extent == pytest.approx((-2, 2))

    def test_same_wall_from_other_pose(self):
        m = walls.WallMap()
        m.observe(0, self.obs(), Pose2())
        lm_id, is_new = m.observe(1, self.obs(d=2.8, extent=(-1, 3)), Pose2(0, 0.2, 0))
        assert (lm_id, is_new) == (0, False)
        assert len(m[0].observations) == 2
        assert m[0].extent == pytest.approx((-2, 3))

    def test_parallel_wall_is_new(self):
        m = walls.WallMap()
        m.observe(0, self.obs(), Pose2())
        assert m.observe(1, self.obs(d=3.5), Pose2()) == (1, True)

    def test_opposite_face_is_new(self):
        m = walls.WallMap()
        m.observe(0, self.obs(), Pose2())
        lm_id, is_new = m.observe(1, self.obs(theta_n=-np.pi / 2), Pose2(0, 6, 0))
        assert is_new
        assert m[lm_id].line.theta_n == pytest.approx(np.pi / 2)
        assert m[lm_id].line.d == pytest.approx(3)
        assert m[lm_id].facing == pytest.approx(-np.pi / 2)

    def test_distant_extent_is_new(self):
        m = walls.WallMap()
        m.observe(0, self.obs(), Pose2())
        assert m.observe(1, self.obs(extent=(10, 12)), Pose2()) == (1, True)

    def test_nearest_match_is_chosen(self):
        m = walls.WallMap()
        m.observe(0, self.obs(d=3.0), Pose2())
        m.observe(0, self.obs(d=3.4), Pose2())
        assert len(m) == 2
        assert walls.associate_wall(self.obs(d=3.25), Pose2(), m.values()) == 1

    def test_set_line_keeps_extent_and_facing(self):
        m = walls.WallMap()
        m.observe(0, self.obs(theta_n=-np.pi / 2), Pose2(0, 6, 0))
        m.set_line(0, Line2(np.pi / 2, 3.05))
        assert m[0].facing == pytest.approx(-np.pi / 2)
        assert m[0].line.d == 3.05
        assert m[0].extent == pytest.approx((-2, 2))

    def test_to_dict(self):
        m = walls.WallMap()
        m.observe(0, self.obs(), Pose2())
        d = m[0].to_dict()
        assert d['id'] == 0
        assert d['num_observations'] == 1
        assert set(d) == {'id', 'theta_n', 'd', 'facing', 'extent', 'num_observations'}
