import numpy as np
import pytest
from scipy.optimize import least_squares

from tsgraphs import posegraph
from tsgraphs.errors import (
    ConfigError, DivergedStep, MissingVariable, SingularSystem, ValidationError,
)
from tsgraphs.geometry import Line2, Pose2, between, line_to_frame
from tsgraphs.posegraph import Factor, FactorGraph, FactorKind


@pytest.fixture
def generic_graph():
    g = FactorGraph()
    g.add_pose(0, Pose2(1.0, 0.5, 0.3))
    g.add_pose(1, Pose2(2.2, 1.1, 0.9))
    g.add_wall(0, Line2(0.7, 4.0))
    g.add_wall(1, Line2(0.2, 5.0))
    g.add_wall(2, Line2(0.2 + np.pi, 1.0))
    g.add_room(0, (2.0, 1.0))
    return g


def all_factors():
    return [
        Factor.prior_pose(0, Pose2(0.9, 0.6, 0.25)),
        Factor.odom(0, 1, Pose2(1.1, 0.3, 0.55)),
        Factor.pose_wall(0, 0, Line2(0.35, 2.8)),
        Factor.room_pair(0, 1, 2),
        Factor.room_span(0, (np.cos(0.4), np.sin(0.4)), 1.5),
    ]


def random_instance(rng):
    """Graph and one factor of each kind, with measurements near the prediction"""
    def u(lo, hi, size=None):
        return rng.uniform(lo, hi, size)

    g = FactorGraph()
    p0 = Pose2(u(-3, 3), u(-3, 3), u(-np.pi, np.pi))
    p1 = Pose2(u(-3, 3), u(-3, 3), u(-np.pi, np.pi))
    g.add_pose(0, p0)
    g.add_pose(1, p1)
    w0 = Line2(u(-np.pi, np.pi), u(5, 10))
    w1 = Line2(u(-np.pi, np.pi), u(1, 5))
    g.add_wall(0, w0)
    g.add_wall(1, w1)
    g.add_wall(2, Line2(w1.theta_n + np.pi + u(-0.3, 0.3), u(1, 5)))
    g.add_room(0, u(-3, 3, 2))

    seen = line_to_frame(p0, w0)
    a = u(-np.pi, np.pi)
    factors = [
        Factor.prior_pose(0, Pose2(p0.x + u(-0.5, 0.5), p0.y + u(-0.5, 0.5),
                                   p0.theta + u(-0.5, 0.5))),
        Factor.odom(0, 1, between(p0, p1) @ Pose2(u(-0.5, 0.5), u(-0.5, 0.5), u(-1, 1))),
        Factor.pose_wall(0, 0, Line2(seen.theta_n + u(-0.3, 0.3), seen.d + u(-0.3, 0.3))),
        Factor.room_pair(0, 1, 2),
        Factor.room_span(0, (np.cos(a), np.sin(a)), u(-3, 3)),
    ]
    return g, factors


class Test_Factor:
    def test_wrong_variable_types(self):
        with pytest.raises(ValidationError):
            Factor(FactorKind.ODOM, (('pose', 0), ('wall', 1)), np.zeros(3), np.eye(3))

    def test_wrong_information_shape(self):
        with pytest.raises(ValidationError):
            Factor(FactorKind.POSE_WALL, (('pose', 0), ('wall', 1)), np.zeros(2), np.eye(3))

    def test_information_not_positive_definite(self):
        with pytest.raises(ValidationError):
            Factor(FactorKind.PRIOR_POSE, (('pose', 0), ), np.zeros(3),
                   np.diag([1.0, -1.0, 1.0]))

    def test_sigma_floor(self):
        f = Factor.odom(0, 1, Pose2(1, 0, 0), sigma=(0.0, 0.0, 0.0), floor=0.01)
        assert np.diag(f.info) == pytest.approx([1e4] * 3)

    def test_to_dict(self):
        d = Factor.pose_wall(3, 4, Line2(0.5, 2.0)).to_dict()
        assert d['kind'] == 'POSE_WALL'
        assert d['keys'] == [['pose', 3], ['wall', 4]]
        assert d['measurement'] == pytest.approx([0.5, 2.0])


class Test_jacobian:
    @pytest.mark.parametrize('k', range(5))
    def test_analytic_equals_numeric(self, generic_graph, k):
        factor = all_factors()[k]
        analytic = posegraph.analytic_jacobian(factor, generic_graph)
        numeric = posegraph.numeric_jacobian(factor, generic_graph)
        assert len(analytic) == len(factor.keys)
        for a, n in zip(analytic, numeric):
            assert a == pytest.approx(n, abs=1e-5)

    @pytest.mark.parametrize('k', range(5))
    def test_random_instances(self, k):
        rng = np.random.default_rng(k)
        worst = 0.0
        for _ in range(100):
            g, factors = random_instance(rng)
            factor = factors[k]
            analytic = posegraph.analytic_jacobian(factor, g)
            numeric = posegraph.numeric_jacobian(factor, g)
            for a, n in zip(analytic, numeric):
                scale = max(np.max(np.abs(a)), 1.0)
                worst = max(worst, np.max(np.abs(a - n)) / scale)
        assert worst < 1e-6

    def test_numeric_jacobian_leaves_graph_unchanged(self, generic_graph):
        before = generic_graph.to_dict()
        posegraph.numeric_jacobian(all_factors()[1], generic_graph)
        assert generic_graph.to_dict() == before

    def test_sparse_jacobian_shape(self, generic_graph):
        for f in all_factors():
            generic_graph.add_factor(f)
        J, r = posegraph.linearize(generic_graph)
        assert J.shape == (3 + 3 + 2 + 1 + 1, 3 * 2 + 2 * 3 + 2)
        assert r.shape == (10, )


class Test_residual:
    def test_consistent_wall_observation(self):
        g = FactorGraph()
        pose = Pose2(1.0, 2.0, 0.4)
        wall = Line2(0.1, 6.0)
        g.add_pose(0, pose)
        g.add_wall(0, wall)
        f = Factor.pose_wall(0, 0, line_to_frame(pose, wall))
        assert posegraph.residual(f, g) == pytest.approx([0, 0], abs=1e-12)

    def test_consistent_odometry(self):
        g = FactorGraph()
        a, b = Pose2(1.0, 2.0, 3.0), Pose2(-1.0, 0.5, -2.9)
        g.add_pose(0, a)
        g.add_pose(1, b)
        f = Factor.odom(0, 1, between(a, b))
        assert posegraph.residual(f, g) == pytest.approx([0, 0, 0], abs=1e-12)

    def test_odometry_pure_translation(self):
        g = FactorGraph()
        g.add_pose(0, Pose2(0, 0, 0))
        g.add_pose(1, Pose2(0, 0, 0))
        e = posegraph.residual(Factor.odom(0, 1, Pose2(1, 0, 0)), g)
        assert e == pytest.approx([-1, 0, 0], abs=1e-12)

    def test_odometry_is_se2_logarithm(self):
        g = FactorGraph()
        g.add_pose(0, Pose2(0, 0, 0))
        g.add_pose(1, Pose2(1, 0, 0))
        e = posegraph.residual(Factor.odom(0, 1, Pose2(0, 0, 1.0)), g)
        assert e == pytest.approx([0.5 / np.tan(0.5), -0.5, -1.0], abs=1e-12)

    def test_odometry_small_angle_branches_agree(self):
        g = FactorGraph()
        g.add_pose(0, Pose2(0, 0, 0))
        g.add_pose(1, Pose2(0.7, -0.4, 0))
        below = posegraph.residual(Factor.odom(0, 1, Pose2(0, 0, 2e-3 - 1e-12)), g)
        above = posegraph.residual(Factor.odom(0, 1, Pose2(0, 0, 2e-3 + 1e-12)), g)
        assert below == pytest.approx(above, abs=1e-10)

    def test_room_pair_midline(self):
        g = FactorGraph()
        g.add_room(0, (3.0, 7.0))
        g.add_wall(0, Line2(0, 5))
        g.add_wall(1, Line2(0, 1))
        assert posegraph.residual(Factor.room_pair(0, 0, 1), g) == pytest.approx([0])

    def test_missing_variable(self):
        g = FactorGraph()
        with pytest.raises(MissingVariable):
            posegraph.residual(Factor.prior_pose(0, Pose2(0, 0, 0)), g)


class Test_FactorGraph:
    def test_add_factor_with_missing_variable(self):
        g = FactorGraph()
        g.add_pose(0, Pose2(0, 0, 0))
        with pytest.raises(MissingVariable):
            g.add_factor(Factor.odom(0, 5, Pose2(1, 0, 0)))

    def test_index(self, generic_graph):
        offsets, size = generic_graph.index()
        assert size == 14
        assert offsets[('wall', 0)] == 6
        assert offsets[('room', 0)] == 12

    def test_dump(self, generic_graph, tmp_path):
        import json
        generic_graph.add_factor(all_factors()[0])
        path = tmp_path / 'graph.json'
        generic_graph.dump(path)
        d = json.loads(path.read_text())
        assert set(d) == {'poses', 'walls', 'rooms', 'factors'}
        assert d['walls']['1'] == pytest.approx([0.2, 5.0])


def corridor_graph():
    """Three poses along a corridor observing one wall, with conflicting odometry"""
    truth = [Pose2(0, 0, 0), Pose2(1, 0, 0), Pose2(2, 0, 0.1)]
    wall = Line2(0, 5)
    g = FactorGraph()
    g.add_pose(0, truth[0])
    g.add_factor(Factor.prior_pose(0, truth[0]))
    odo = [Pose2(1.05, 0.02, 0.01), Pose2(0.97, -0.03, 0.08)]
    pose = truth[0]
    for i, rel in enumerate(odo):
        pose = pose @ rel
        g.add_pose(i + 1, pose)
        g.add_factor(Factor.odom(i, i + 1, rel))
    g.add_wall(0, Line2(0.05, 5.3))
    noise = [(0.01, -0.02), (-0.015, 0.01), (0.0, 0.03)]
    for i, (p, (dt, dd)) in enumerate(zip(truth, noise)):
        m = line_to_frame(p, wall)
        g.add_factor(Factor.pose_wall(i, 0, Line2(m.theta_n + dt, m.d + dd)))
    return g


class Test_optimize:
    def test_matches_least_squares_oracle(self):
        g = corridor_graph()
        offsets, size = g.index()
        base = g.snapshot()

        def fun(delta):
            g.restore(base)
            g.retract(delta, offsets)
            _, r = posegraph.linearize(g, jacobian=False)
            g.restore(base)
            return r

        oracle = least_squares(fun, np.zeros(size), xtol=1e-14, ftol=1e-14, gtol=1e-14)
        stats = posegraph.optimize(g)
        assert stats.chi2_final == pytest.approx(2 * oracle.cost, rel=1e-4, abs=1e-9)
        assert stats.chi2_final < stats.chi2_initial

    def test_error_never_increases(self):
        stats = posegraph.optimize(corridor_graph())
        h = np.array(stats.history)
        assert np.all(np.diff(h) <= 0)
        assert stats.iters >= 1

    def test_diverged_step_is_detected(self, monkeypatch):
        g = corridor_graph()
        retract = g.retract
        monkeypatch.setattr(g, 'retract', lambda delta, offsets: retract(-10 * delta, offsets))
        monkeypatch.setattr(g, 'chi2', lambda: 0.0)
        with pytest.raises(DivergedStep):
            posegraph.optimize(g)

    def test_consistent_graph_is_solved_exactly(self):
        g = FactorGraph()
        g.add_pose(0, Pose2(3, 3, 0))
        g.add_factor(Factor.prior_pose(0, Pose2(3, 3, 0)))
        g.add_wall(0, Line2(0.1, 4.0))
        g.add_wall(1, Line2(-0.1, 2.0))
        g.add_factor(Factor.pose_wall(0, 0, Line2(0, 2)))
        g.add_factor(Factor.pose_wall(0, 1, Line2(np.pi, 2)))
        g.add_room(0, (0, 0))
        g.add_factor(Factor.room_pair(0, 0, 1))
        g.add_factor(Factor.room_span(0, (0, 1), 3.0))
        stats = posegraph.optimize(g)
        assert stats.chi2_final < 1e-8
        assert g.room_vars[0] == pytest.approx([3, 3], abs=1e-4)
        assert g.wall_vars[0].d == pytest.approx(5, abs=1e-4)
        assert g.wall_vars[1].d == pytest.approx(1, abs=1e-4)

    def test_no_prior(self):
        g = FactorGraph()
        g.add_pose(0, Pose2(0, 0, 0))
        g.add_pose(1, Pose2(1, 0, 0))
        g.add_factor(Factor.odom(0, 1, Pose2(1, 0, 0)))
        with pytest.raises(SingularSystem):
            posegraph.optimize(g)

    def test_unconstrained_variable(self):
        g = corridor_graph()
        g.add_wall(1, Line2(1.0, 3.0))
        with pytest.raises(SingularSystem):
            posegraph.optimize(g)


class Test_incremental_update:
    def test_adds_and_records(self):
        g = corridor_graph()
        posegraph.optimize(g)
        last = g.pose_vars[2]
        rel = Pose2(1.0, 0.0, 0.0)
        stats = posegraph.incremental_update(
            g, keyframe=(3, last @ rel), factors=[Factor.odom(2, 3, rel)])
        assert 3 in g.pose_vars
        assert g.stats == [stats]
        assert stats.wall_time >= 0

    def test_new_wall_and_room(self):
        g = FactorGraph()
        g.add_pose(0, Pose2(3, 3, 0))
        factors = [
            Factor.prior_pose(0, Pose2(3, 3, 0)),
            Factor.pose_wall(0, 0, Line2(0, 2)),
            Factor.pose_wall(0, 1, Line2(np.pi, 2)),
            Factor.room_pair(0, 0, 1),
            Factor.room_span(0, (0, 1), 3.0),
        ]
        posegraph.incremental_update(
            g, factors=factors, walls={0: Line2(0, 5), 1: Line2(0, 1)},
            rooms={0: (3.0, 3.0)})
        assert len(g.stats) == 1
        assert g.stats[0].chi2_final < 1e-8


class Test_GraphConfig:
    def test_defaults(self):
        cfg = posegraph.GraphConfig()
        assert cfg.max_iters == 50
        assert cfg.sigma_wall == (0.02, 0.02)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            posegraph.GraphConfig.from_config(dict(damping=1))

    def test_invalid_iterations(self):
        with pytest.raises(ConfigError):
            posegraph.GraphConfig(max_iters=0)
