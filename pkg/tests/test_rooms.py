import numpy as np
import pytest

from tsgraphs import rooms
from tsgraphs.errors import ConfigError, UnboundedRoom
from tsgraphs.freespace import FreeSpaceCluster
from tsgraphs.geometry import Line2
from tsgraphs.rooms import Room, RoomFrame, RoomKind
from tsgraphs.walls import WallLandmark


def make_wall(lm_id, p0, p1, facing):
    n = np.array([np.cos(facing), np.sin(facing)])
    line = Line2(facing, n @ np.asarray(p0, dtype='f8'))
    s = sorted(float(np.asarray(p, dtype='f8') @ line.direction()) for p in (p0, p1))
    return WallLandmark(id=lm_id, line=line, facing=facing, extent=tuple(s))


def make_cluster(xs, ys, offset=(0, 0), cluster_id=0):
    xx, yy = np.meshgrid(xs, ys, indexing='ij')
    nodes = np.stack([xx.ravel(), yy.ravel()], axis=-1) + offset
    idx = np.round(nodes / 0.2 - 0.5).astype('i8')
    return FreeSpaceCluster(id=cluster_id, nodes=nodes, cell_index=idx, resolution=0.2)


def box_walls(xmin=1, ymin=1, xmax=5, ymax=5, first_id=0):
    return {
        first_id: make_wall(first_id, (xmin, ymin), (xmin, ymax), np.pi),
        first_id + 1: make_wall(first_id + 1, (xmax, ymin), (xmax, ymax), 0),
        first_id + 2: make_wall(first_id + 2, (xmin, ymin), (xmax, ymin), -np.pi / 2),
        first_id + 3: make_wall(first_id + 3, (xmin, ymax), (xmax, ymax), np.pi / 2),
    }


ROOM_NODES = 1.5 + 0.2 * np.arange(16)


@pytest.fixture(scope='module')
def box():
    return box_walls()


@pytest.fixture(scope='module')
def box_cluster():
    return make_cluster(ROOM_NODES, ROOM_NODES)


@pytest.fixture(scope='module')
def corridor():
    return {
        10: make_wall(10, (0, 1), (10, 1), -np.pi / 2),
        11: make_wall(11, (0, 3), (10, 3), np.pi / 2),
    }


@pytest.fixture(scope='module')
def corridor_cluster():
    return make_cluster(2.1 + 0.2 * np.arange(20), 1.5 + 0.2 * np.arange(6))


class Test_RoomConfig:
    def test_from_config_in_degrees(self):
        cfg = rooms.RoomConfig.from_config(dict(tau_psi_deg=45, strategy='timer'))
        assert cfg.tau_psi == pytest.approx(np.pi / 4)
        assert cfg.strategy == 'timer'

    def test_unknown_strategy(self):
        with pytest.raises(ConfigError):
            rooms.RoomConfig(strategy='sometimes')

    def test_non_positive_threshold(self):
        with pytest.raises(ConfigError):
            rooms.RoomConfig(tau_w=0)


class Test_extract_room:
    def test_four_wall_room(self, box, box_cluster):
        room = rooms.extract_room(box_cluster, box.values())
        assert room.kind is RoomKind.FOUR_WALL
        assert room.id is None
        assert room.center == pytest.approx([3, 3])
        assert room.axis == pytest.approx(0)
        assert room.extents == pytest.approx((4, 4))
        assert sorted(room.wall_ids) == [0, 1, 2, 3]
        assert room.pairs == [(1, 0), (3, 2)]

    def test_rotated_room(self):
        c, s = np.cos(0.3), np.sin(0.3)
        rot = np.array([[c, -s], [s, c]])

        def tr(p):
            return tuple(rot @ (np.asarray(p, dtype='f8') - 3) + 3)

        walls = [
            make_wall(0, tr((1, 1)), tr((1, 5)), np.pi + 0.3),
            make_wall(1, tr((5, 1)), tr((5, 5)), 0.3),
            make_wall(2, tr((1, 1)), tr((5, 1)), -np.pi / 2 + 0.3),
            make_wall(3, tr((1, 5)), tr((5, 5)), np.pi / 2 + 0.3),
        ]
        cl = make_cluster(ROOM_NODES, ROOM_NODES)
        nodes = (cl.nodes - 3) @ rot.T + 3
        cl = FreeSpaceCluster(id=0, nodes=nodes, cell_index=cl.cell_index, resolution=0.2)
        room = rooms.extract_room(cl, walls)
        assert room.kind is RoomKind.FOUR_WALL
        assert room.center == pytest.approx([3, 3])
        assert room.axis == pytest.approx(0.3)

    def test_two_wall_room(self, corridor, corridor_cluster):
        room = rooms.extract_room(corridor_cluster, corridor.values())
        assert room.kind is RoomKind.TWO_WALL
        assert room.center == pytest.approx([4, 2])
        assert room.axis == pytest.approx(np.pi / 2)
        assert room.extents[0] == pytest.approx(2)
        assert room.extents[1] == rooms.UNBOUNDED
        assert room.span == pytest.approx((-2, 2))
        assert not room.bounded

    def test_two_wall_footprint_is_truncated(self, corridor, corridor_cluster):
        room = rooms.extract_room(corridor_cluster, corridor.values())
        center, axis, extents = room.footprint()
        assert center == pytest.approx([4, 2])
        assert extents == pytest.approx((2, 4))

    def test_far_walls_are_ignored(self, corridor):
        cl = make_cluster(2.1 + 0.2 * np.arange(20), [1.9, 2.1])
        assert rooms.extract_room(cl, corridor.values()) is None

    def test_walls_facing_away_are_ignored(self, box_cluster):
        walls = [
            make_wall(0, (1, 1), (1, 5), 0),
            make_wall(1, (5, 1), (5, 5), np.pi),
        ]
        assert rooms.extract_room(box_cluster, walls) is None

    def test_single_wall(self, box, box_cluster):
        assert rooms.extract_room(box_cluster, [box[0]]) is None

    def test_empty_cluster(self, box):
        cl = FreeSpaceCluster(
            id=0, nodes=np.zeros((0, 2)), cell_index=np.zeros((0, 2), 'i8'),
            resolution=0.2)
        assert rooms.extract_room(cl, box.values()) is None


class Test_Room:
    def test_unbounded_without_span(self):
        room = Room(id=0, center=(0, 0), axis=0, extents=(2, rooms.UNBOUNDED),
                    wall_ids=(0, 1), kind=RoomKind.TWO_WALL)
        with pytest.raises(UnboundedRoom):
            room.footprint()

    def test_to_dict(self):
        room = Room(id=3, center=(1, 2), axis=0.5, extents=(2, rooms.UNBOUNDED),
                    wall_ids=(0, 1), kind=RoomKind.TWO_WALL, span=(-1, 1))
        d = room.to_dict()
        assert d == dict(id=3, kind='TWO_WALL', center=[1, 2], axis=0.5,
                         extents=[2, None], wall_ids=[0, 1], span=[-1, 1])


class Test_associate_room:
    @staticmethod
    def four_wall(center, axis=0.0, room_id=None):
        return Room(id=room_id, center=center, axis=axis, extents=(4, 4),
                    wall_ids=(0, 1, 2, 3), kind=RoomKind.FOUR_WALL,
                    pairs=[(0, 1), (2, 3)])

    def test_same_room(self):
        existing = [self.four_wall((3, 3), room_id=7)]
        assert rooms.associate_room(self.four_wall((3.3, 3)), existing) == (7, True)

    def test_far_room(self):
        existing = [self.four_wall((3, 3), room_id=7)]
        assert rooms.associate_room(self.four_wall((4.5, 3)), existing) is None

    def test_four_wall_axis_modulo_quarter_turn(self):
        existing = [self.four_wall((3, 3), axis=0.0, room_id=7)]
        cand = self.four_wall((3, 3), axis=0.5 * np.pi - 0.05)
        assert rooms.associate_room(cand, existing) == (7, True)

    def test_rotated_room_does_not_match(self):
        existing = [self.four_wall((3, 3), axis=0.0, room_id=7)]
        cand = self.four_wall((3, 3), axis=np.pi / 4)
        assert rooms.associate_room(cand, existing) is None

    def test_kind_must_match(self, corridor, corridor_cluster):
        two = rooms.extract_room(corridor_cluster, corridor.values())
        existing = [self.four_wall(two.center, axis=two.axis, room_id=7)]
        assert rooms.associate_room(two, existing) is None

    def test_nearest_room_is_chosen(self):
        existing = [self.four_wall((3, 3), room_id=1), self.four_wall((3.8, 3), room_id=2)]
        assert rooms.associate_room(self.four_wall((3.5, 3)), existing) == (2, True)

    def test_new_pairs_are_attached(self):
        existing = [self.four_wall((3, 3), room_id=7)]
        cand = self.four_wall((3, 3))
        cand.pairs = [(1, 0), (4, 5)]
        rooms.associate_room(cand, existing)
        assert existing[0].pairs == [(0, 1), (2, 3), (4, 5)]

    def test_two_wall_span_is_extended(self, corridor, corridor_cluster):
        first = rooms.extract_room(corridor_cluster, corridor.values())
        first.id = 0
        shifted = make_cluster(2.1 + 0.2 * np.arange(20), 1.5 + 0.2 * np.arange(6),
                               offset=(3, 0))
        second = rooms.extract_room(shifted, corridor.values())
        assert rooms.associate_room(second, [first]) is None

        shifted = make_cluster(2.1 + 0.2 * np.arange(20), 1.5 + 0.2 * np.arange(6),
                               offset=(0.6, 0))
        second = rooms.extract_room(shifted, corridor.values())
        assert rooms.associate_room(second, [first]) == (0, True)
        assert first.span == pytest.approx((-2.6, 2))


class Test_RoomMap:
    def test_new_then_redetected(self, box, box_cluster):
        m = rooms.RoomMap()
        ev1 = m.observe(rooms.extract_room(box_cluster, box.values()), 1.0, 2)
        ev2 = m.observe(rooms.extract_room(box_cluster, box.values()), 5.0, 9)
        assert (ev1.room.id, ev1.redetected) == (0, False)
        assert (ev2.room.id, ev2.redetected) == (0, True)
        assert len(m) == 1

    def test_event_to_dict(self, box, box_cluster):
        m = rooms.RoomMap()
        ev = m.observe(rooms.extract_room(box_cluster, box.values()), 1.0, 2)
        d = ev.to_dict()
        assert d['t'] == 1.0
        assert d['keyframe'] == 2
        assert d['kind'] == 'FOUR_WALL'
        assert d['redetected'] is False

    def test_stored_room_is_a_copy(self, box, box_cluster):
        m = rooms.RoomMap()
        cand = rooms.extract_room(box_cluster, box.values())
        m.observe(cand, 1.0, 2)
        cand.center[0] = 100
        assert m[0].center[0] == pytest.approx(3)


class Test_should_flush:
    def test_no_reference(self):
        state = rooms.FlushState()
        assert not rooms.should_flush(state, 2.0, 0.0)

    def test_width_change(self):
        state = rooms.FlushState(last_width=2.0, last_axis=0.0)
        assert not rooms.should_flush(state, 2.5, 0.0)
        assert rooms.should_flush(state, 3.0, 0.0)

    def test_direction_change_modulo_pi(self):
        state = rooms.FlushState(last_width=2.0, last_axis=0.0)
        assert rooms.should_flush(state, 2.0, np.deg2rad(40))
        assert not rooms.should_flush(state, 2.0, np.deg2rad(170))

    def test_undefined_values_never_fire(self):
        state = rooms.FlushState(last_width=2.0, last_axis=0.0)
        assert not rooms.should_flush(state, None, None)

    def test_invalid_thresholds(self):
        with pytest.raises(ConfigError):
            rooms.FlushState(tau_w=-1)


class Test_cluster_changed:
    def test_overlap(self, box_cluster):
        state = rooms.FlushState(last_keys=box_cluster.key_set())
        assert not rooms.cluster_changed(state, box_cluster, 0.3)
        other = make_cluster(ROOM_NODES, ROOM_NODES, offset=(20, 0))
        assert rooms.cluster_changed(state, other, 0.3)

    def test_no_previous_snapshot(self, box_cluster):
        assert not rooms.cluster_changed(rooms.FlushState(), box_cluster, 0.3)


def room_frames(box_cluster, other_cluster):
    frames = [
        RoomFrame(keyframe=k, t=float(k), position=np.array([2 + 0.5 * k, 3.0]),
                  cluster=box_cluster, width=3.1, axis=0.0, wall_ids=(0, 1, 2, 3))
        for k in range(5)
    ]
    frames.append(RoomFrame(keyframe=5, t=5.0, position=np.array([23.0, 3.0]),
                            cluster=other_cluster, width=3.1, axis=0.0))
    return frames


class Test_RoomStrategy:
    def test_flush_on_cluster_change(self, box, box_cluster):
        other = make_cluster(ROOM_NODES, ROOM_NODES, offset=(20, 0), cluster_id=1)
        strategy = rooms.RoomStrategy(rooms.RoomConfig(), box)
        out = [strategy.step(f) for f in room_frames(box_cluster, other)]
        assert [len(ev) for ev in out] == [0, 0, 0, 0, 0, 1]
        ev = out[-1][0]
        assert ev.keyframe == 4
        assert ev.room.kind is RoomKind.FOUR_WALL
        assert ev.room.keyframes == [0, 1, 2, 3, 4]
        assert ev.cluster is not None
        assert strategy.finish() == []

    def test_flush_on_width_change(self, box, box_cluster):
        strategy = rooms.RoomStrategy(rooms.RoomConfig(), box)
        frames = room_frames(box_cluster, box_cluster)[:5]
        frames.append(RoomFrame(keyframe=5, t=5.0, position=np.array([3.0, 3.0]),
                                cluster=box_cluster, width=1.5, axis=0.0))
        events = [e for f in frames for e in strategy.step(f)]
        assert len(events) == 1
        assert events[0].room.keyframes == [0, 1, 2, 3, 4]

    def test_frames_without_cluster_are_skipped(self, box, box_cluster):
        strategy = rooms.RoomStrategy(rooms.RoomConfig(), box)
        frame = RoomFrame(keyframe=0, t=0.0, position=np.array([3.0, 3.0]))
        assert strategy.step(frame) == []
        assert strategy.finish() == []

    def test_timer(self, box, box_cluster):
        cfg = rooms.RoomConfig(strategy='timer', timer_interval=10)
        frames = [
            RoomFrame(keyframe=k, t=float(k), position=np.array([3.0, 3.0]),
                      cluster=box_cluster, width=3.1, axis=0.0, wall_ids=(0, 1, 2, 3))
            for k in range(25)
        ]
        events = list(rooms.run_room_strategy('timer', frames, box, cfg))
        assert [e.keyframe for e in events] == [9, 19, 24]
        assert [e.redetected for e in events] == [False, True, True]
        assert {e.room.id for e in events} == {0}

    def test_flush_at_finish(self, box, box_cluster):
        frames = room_frames(box_cluster, box_cluster)[:5]
        events = list(rooms.run_room_strategy('flush', frames, box))
        assert len(events) == 1
        assert events[0].keyframe == 4

    def test_non_monotone_time(self, box, box_cluster):
        strategy = rooms.RoomStrategy(rooms.RoomConfig(), box)
        frames = room_frames(box_cluster, box_cluster)
        strategy.step(frames[3])
        with pytest.raises(ValueError):
            strategy.step(frames[1])
