"""
The module extracts rooms from free-space clusters and wall landmarks, and contains
the two room extraction strategies.

The flush strategy buffers the lower-layer data (cluster snapshots, wall ids,
keyframe ids) and extracts a room whenever the aisle width or direction around the
robot changes, or the robot enters a different free-space cluster. The timer
strategy extracts a room from whatever has been buffered at fixed time intervals.
"""

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, UnboundedRoom
from .freespace import FreeSpaceCluster
from .geometry import point_segment_distance, wrap_angle

logger = logging.getLogger(__name__)

UNBOUNDED = np.inf

STRATEGIES = ('flush', 'timer')


class RoomKind(enum.Enum):
    FOUR_WALL = 'FOUR_WALL'
    TWO_WALL = 'TWO_WALL'


@dataclass(frozen=True)
class RoomConfig:
    """
    Parameters of room extraction, association and the extraction strategies

    :param strategy: Either ``flush`` or ``timer``
    :param tau_w: Width change which triggers a flush, in meters
    :param tau_psi: Direction change which triggers a flush, in radians
    :param timer_interval: Interval of the timer strategy, in seconds
    :param rho: Maximal distance between a candidate wall and a cluster node
    :param assoc_center_dist: Association gate for room centers, in meters
    :param assoc_angle: Association gate for room axes, in radians
    :param sweep_radius: Radius of the buffered cluster snapshots, in meters
    :param min_overlap: Minimal node overlap between consecutive snapshots of the
        same cluster
    :param pair_angle: Tolerance of antiparallel wall normals, in radians
    :param ortho_angle: Tolerance of the angle between the two pairs of a four-wall
        room, in radians
    """

    strategy: str = 'flush'
    tau_w: float = 0.8
    tau_psi: float = np.deg2rad(30)
    timer_interval: float = 10.0
    rho: float = 0.5
    assoc_center_dist: float = 1.0
    assoc_angle: float = np.deg2rad(20)
    sweep_radius: float = 2.5
    min_overlap: float = 0.3
    pair_angle: float = np.deg2rad(15)
    ortho_angle: float = np.deg2rad(15)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f'Unknown room strategy: {self.strategy}, expected one of {STRATEGIES}')
        for name in ('tau_w', 'tau_psi', 'timer_interval', 'rho', 'assoc_center_dist'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'rooms.{name} must be positive')

    @staticmethod
    def from_config(conf) -> "RoomConfig":
        params = dict(conf)
        for key in ('tau_psi', 'assoc_angle', 'pair_angle', 'ortho_angle'):
            if key + '_deg' in params:
                params[key] = np.deg2rad(params.pop(key + '_deg'))
        try:
            return RoomConfig(**params)
        except TypeError as e:
            raise ConfigError(f'Invalid rooms parameters: {e}') from e


@dataclass
class Room:
    """
    Room node

    The room is a rectangle centered at ``center``. The first extent is measured
    along the direction ``axis``, the second one perpendicular to it. For two-wall
    rooms the second extent is :data:`UNBOUNDED` and ``span`` holds the observed
    interval perpendicular to ``axis``, relative to ``center``.

    :param id: Room id, ``None`` for unassociated candidates
    :param center: Room center, shape (2, )
    :param axis: Normal direction of the first wall pair, in [0, pi)
    :param extents: Tuple ``(len_a, len_b)``
    :param wall_ids: Landmark ids of the walls which defined the room
    :param kind: Room kind
    :param span: Observed interval along the unbounded direction
    :param pairs: Opposing wall id pairs constraining the center
    :param keyframes: Ids of the keyframes supporting the room
    """

    id: int
    center: np.ndarray
    axis: float
    extents: tuple
    wall_ids: tuple
    kind: RoomKind
    span: tuple = None
    pairs: list = field(default_factory=list)
    keyframes: list = field(default_factory=list)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype='f8')

    @property
    def bounded(self) -> bool:
        return self.kind is RoomKind.FOUR_WALL

    def footprint(self):
        """
        Bounded rectangle of the room

        Two-wall rooms are truncated to their observed span.

        :return: A tuple ``(center, axis, extents)``
        :raises UnboundedRoom: If a two-wall room has no observed span
        """
        if self.bounded:
            return self.center, self.axis, tuple(self.extents)
        if self.span is None or not self.span[1] > self.span[0]:
            raise UnboundedRoom(f'Room {self.id} has no observed span')
        t = _span_direction(self.axis)
        center = self.center + 0.5 * (self.span[0] + self.span[1]) * t
        return center, self.axis, (self.extents[0], self.span[1] - self.span[0])

    def to_dict(self) -> dict:
        return dict(
            id=self.id,
            kind=self.kind.value,
            center=[float(c) for c in self.center],
            axis=float(self.axis),
            extents=[float(e) if np.isfinite(e) else None for e in self.extents],
            wall_ids=[int(w) for w in self.wall_ids],
            span=None if self.span is None else [float(s) for s in self.span],
        )


@dataclass(frozen=True)
class RoomEvent:
    """
    Room extraction event

    The geometry is the one extracted at time ``t``, also for re-detections.
    """

    t: float
    keyframe: int
    room: Room
    redetected: bool
    cluster: FreeSpaceCluster = None

    def to_dict(self) -> dict:
        d = self.room.to_dict()
        return dict(
            t=float(self.t), keyframe=int(self.keyframe), id=d['id'], kind=d['kind'],
            center=d['center'], axis=d['axis'], extents=d['extents'],
            wall_ids=d['wall_ids'], span=d['span'], redetected=bool(self.redetected),
        )


def _candidate_walls(cluster, landmarks, rho):
    nodes = cluster.nodes
    c = cluster.centroid
    out = []
    for lm in landmarks:
        p0, p1 = lm.endpoints()
        dist = point_segment_distance(nodes, p0, p1) - 0.5 * cluster.resolution
        if np.min(dist) > rho:
            continue
        # The centroid must lie on the observed side
        if lm.facing_normal() @ (0.5 * (p0 + p1) - c) <= 0:
            continue
        out.append(lm)
    return out


def _wall_offset(lm, n):
    """Position of a wall along the unit vector ``n``"""
    return float(n @ (0.5 * lm.endpoints().sum(axis=0)))


def _opposing_pairs(walls, nodes, pair_angle):
    """
    All antiparallel wall pairs with cluster nodes between them

    :return: A list of ``(count, separation, a, b)`` tuples, where ``a`` and ``b`` are
        ordered so that the facing normal of ``a`` points along the positive axis
    """
    pairs = []
    for i, a in enumerate(walls):
        for b in walls[i + 1:]:
            if abs(wrap_angle(a.facing - b.facing - np.pi)) >= pair_angle:
                continue
            n = a.facing_normal()
            s_a, s_b = _wall_offset(a, n), _wall_offset(b, n)
            sep = s_a - s_b
            if sep <= 0:
                continue
            s = nodes @ n
            count = int(np.count_nonzero((s < s_a) & (s > s_b)))
            if count == 0:
                continue
            if np.mod(a.facing, 2 * np.pi) >= np.pi:
                a, b = b, a
            pairs.append((count, sep, a, b))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2].id, p[3].id))
    return pairs


def _span_direction(axis) -> np.ndarray:
    return np.array([-np.sin(axis), np.cos(axis)])


def _pair_axis(a) -> float:
    return float(np.mod(a.facing, np.pi))


def _midline(a, b):
    """Unit normal and offset of the midline between two opposing walls"""
    n = a.facing_normal()
    return n, 0.5 * (_wall_offset(a, n) + _wall_offset(b, n))


def extract_room(cluster: FreeSpaceCluster, landmarks, cfg: RoomConfig = None):
    """
    Extract a room from a free-space cluster and the walls around it

    Candidate walls pass within ``rho`` of a cluster node cell and face the cluster
    centroid. An opposing pair consists of two candidates whose normals are
    antiparallel and which enclose cluster nodes. The pair enclosing most nodes is
    chosen, ties are broken by the smaller separation. A second pair perpendicular
    to the first one gives a four-wall room.

    :param cluster: Free-space cluster, or the union of buffered snapshots
    :param landmarks: Iterable of :class:`WallLandmark <tsgraphs.walls.WallLandmark>`
    :param cfg: Room parameters
    :return: A :class:`Room` with ``id=None``, or ``None``
    """
    cfg = cfg or RoomConfig()
    if not len(cluster):
        return None

    walls = _candidate_walls(cluster, list(landmarks), cfg.rho)
    pairs = _opposing_pairs(walls, cluster.nodes, cfg.pair_angle)
    if not pairs:
        return None

    _, sep1, a1, b1 = pairs[0]
    axis1 = _pair_axis(a1)
    second = None
    for _, sep2, a2, b2 in pairs[1:]:
        if {a2.id, b2.id} & {a1.id, b1.id}:
            continue
        d = abs(wrap_angle(2 * (_pair_axis(a2) - axis1))) / 2
        if abs(d - 0.5 * np.pi) < cfg.ortho_angle:
            second = (sep2, a2, b2)
            break

    n1, m1 = _midline(a1, b1)
    if second is not None:
        sep2, a2, b2 = second
        first_pair, second_pair = (sep1, a1, b1), second
        # The pair with the axis in [0, pi/2) comes first
        if axis1 >= 0.5 * np.pi:
            first_pair, second_pair = second_pair, first_pair
        (s_a, wa, wb), (s_b, wc, wd) = first_pair, second_pair
        na, ma = _midline(wa, wb)
        nb, mb = _midline(wc, wd)
        center = np.linalg.solve(np.array([na, nb]), np.array([ma, mb]))
        return Room(
            id=None, center=center, axis=_pair_axis(wa), extents=(s_a, s_b),
            wall_ids=(wa.id, wb.id, wc.id, wd.id), kind=RoomKind.FOUR_WALL,
            pairs=[(wa.id, wb.id), (wc.id, wd.id)],
        )

    c = cluster.centroid
    center = c + (m1 - n1 @ c) * n1
    axis = _pair_axis(a1)
    along = (cluster.nodes - center) @ _span_direction(axis)
    half = 0.5 * cluster.resolution
    return Room(
        id=None, center=center, axis=axis, extents=(sep1, UNBOUNDED),
        wall_ids=(a1.id, b1.id), kind=RoomKind.TWO_WALL,
        span=(float(along.min() - half), float(along.max() + half)),
        pairs=[(a1.id, b1.id)],
    )


def _axis_difference(a, b, period) -> float:
    return float(np.abs(np.mod(a - b + 0.5 * period, period) - 0.5 * period))


def associate_room(candidate: Room, rooms, cfg: RoomConfig = None):
    """
    Find the existing room matching a candidate

    A room matches if it has the same kind, its center is closer than
    ``assoc_center_dist`` and its axis differs by less than ``assoc_angle``. Axes of
    two-wall rooms are compared modulo pi, axes of four-wall rooms modulo pi/2, since
    a four-wall room rotated by 90 degrees with swapped extents is the same room. The
    nearest matching room is chosen. The pairs and keyframes of the candidate are
    attached to the matched room.

    :param candidate: Extracted room
    :param rooms: Iterable of existing rooms
    :param cfg: Room parameters
    :return: A tuple ``(room_id, True)`` on re-detection, otherwise ``None``
    """
    cfg = cfg or RoomConfig()
    best, best_dist = None, np.inf
    for room in rooms:
        if room.kind is not candidate.kind:
            continue
        dist = float(np.hypot(*(room.center - candidate.center)))
        if dist >= cfg.assoc_center_dist:
            continue
        period = np.pi if room.kind is RoomKind.TWO_WALL else 0.5 * np.pi
        if _axis_difference(room.axis, candidate.axis, period) >= cfg.assoc_angle:
            continue
        if dist < best_dist:
            best, best_dist = room, dist

    if best is None:
        return None

    for pair in candidate.pairs:
        if pair not in best.pairs and pair[::-1] not in best.pairs:
            best.pairs.append(pair)
    best.keyframes.extend(k for k in candidate.keyframes if k not in best.keyframes)
    if best.kind is RoomKind.TWO_WALL and candidate.span is not None:
        t = _span_direction(best.axis)
        shift = float(t @ (candidate.center - best.center))
        sign = np.sign(t @ _span_direction(candidate.axis))
        lo, hi = sorted((sign * candidate.span[0] + shift, sign * candidate.span[1] + shift))
        best.span = (min(best.span[0], lo), max(best.span[1], hi))
    return best.id, True


class RoomMap:
    """
    The collection of room nodes

    :param cfg: Room parameters
    """

    def __init__(self, cfg: RoomConfig = None):
        self.cfg = cfg or RoomConfig()
        self.rooms = {}
        self._next_id = 0

    def __len__(self):
        return len(self.rooms)

    def __getitem__(self, item) -> Room:
        return self.rooms[item]

    def values(self):
        return self.rooms.values()

    def observe(self, candidate: Room, t, keyframe, cluster=None) -> RoomEvent:
        """
        Associate a candidate room and update the map

        :return: The resulting room event
        """
        match = associate_room(candidate, self.rooms.values(), self.cfg)
        if match is None:
            room_id = self._next_id
            self._next_id += 1
            self.rooms[room_id] = Room(
                id=room_id, center=candidate.center.copy(), axis=candidate.axis,
                extents=candidate.extents, wall_ids=candidate.wall_ids,
                kind=candidate.kind, span=candidate.span, pairs=list(candidate.pairs),
                keyframes=list(candidate.keyframes),
            )
            redetected = False
        else:
            room_id, redetected = match

        candidate.id = room_id
        event = RoomEvent(t=t, keyframe=keyframe, room=candidate, redetected=redetected,
                          cluster=cluster)
        logger.info(
            f'Room {room_id} ({candidate.kind.value}) at '
            f'({candidate.center[0]:.2f}, {candidate.center[1]:.2f})'
            + (', re-detected' if redetected else ''))
        return event


@dataclass(frozen=True)
class RoomFrame:
    """
    Per-keyframe input of the room extraction strategies

    :param keyframe: Keyframe id
    :param t: Timestamp, in seconds
    :param position: Estimated robot position
    :param cluster: Free-space cluster containing the robot, or ``None``
    :param width: Local aisle width, or ``None`` if undefined
    :param axis: Local aisle direction, or ``None`` if undefined
    :param wall_ids: Ids of the wall landmarks observed at this keyframe
    """

    keyframe: int
    t: float
    position: np.ndarray
    cluster: FreeSpaceCluster = None
    width: float = None
    axis: float = None
    wall_ids: tuple = ()


@dataclass
class FlushState:
    """
    State of the flush strategy

    :param tau_w: Width change threshold, in meters
    :param tau_psi: Direction change threshold, in radians
    :param last_width: Width at the last flush
    :param last_axis: Direction at the last flush
    :param last_keys: Node keys of the most recent cluster snapshot
    :param buffer: Buffered ``(keyframe, nodes, cell_index, cluster)`` snapshots
    :param wall_ids: Buffered wall ids
    """

    tau_w: float = 0.8
    tau_psi: float = np.deg2rad(30)
    last_width: float = None
    last_axis: float = None
    last_keys: set = None
    buffer: list = field(default_factory=list)
    wall_ids: set = field(default_factory=set)

    def __post_init__(self):
        if not (self.tau_w > 0 and self.tau_psi > 0):
            raise ConfigError('Flush thresholds must be positive')

    def clear(self):
        self.buffer = []
        self.wall_ids = set()


def should_flush(state: FlushState, width, axis) -> bool:
    """
    Check the aisle width and direction against the values at the last flush

    :param state: Flush state
    :param width: Current aisle width, in meters
    :param axis: Current aisle direction, in radians
    :return: True if the width changed by more than ``tau_w`` or the direction
        changed by more than ``tau_psi`` (modulo pi)
    """
    if state.last_width is not None and width is not None:
        if abs(width - state.last_width) > state.tau_w:
            return True
    if state.last_axis is not None and axis is not None:
        if _axis_difference(axis, state.last_axis, np.pi) > state.tau_psi:
            return True
    return False


def cluster_changed(state: FlushState, cluster: FreeSpaceCluster, min_overlap) -> bool:
    """True if few nodes of the previous snapshot belong to the current cluster"""
    if state.last_keys is None or not state.last_keys:
        return False
    overlap = len(state.last_keys & cluster.key_set()) / len(state.last_keys)
    return overlap < min_overlap


class RoomStrategy:
    """
    Room extraction strategy

    :param cfg: Room parameters
    :param landmarks: Mapping from wall id to :class:`WallLandmark`, read at
        extraction time
    :param rooms: Room map receiving the extracted rooms
    """

    def __init__(self, cfg: RoomConfig, landmarks, rooms: RoomMap = None):
        self.cfg = cfg
        self.landmarks = landmarks
        self.rooms = rooms if rooms is not None else RoomMap(cfg)
        self.state = FlushState(tau_w=cfg.tau_w, tau_psi=cfg.tau_psi)
        self.next_tick = None
        self._last = None

    def step(self, frame: RoomFrame) -> list:
        """
        Process a keyframe

        :return: A list of room events, possibly empty
        """
        if self._last is not None and frame.t < self._last.t:
            raise ValueError('Room frames must have monotone timestamps')

        events = []
        if self.cfg.strategy == 'flush':
            if frame.cluster is not None:
                fire = should_flush(self.state, frame.width, frame.axis) or cluster_changed(
                    self.state, frame.cluster, self.cfg.min_overlap)
                if fire:
                    logger.debug(f'Flush at keyframe {frame.keyframe}')
                    events += self._flush(self._last)
                if fire or self.state.last_width is None:
                    self.state.last_width = frame.width
                if fire or self.state.last_axis is None:
                    self.state.last_axis = frame.axis
        else:
            if self.next_tick is None:
                self.next_tick = frame.t + self.cfg.timer_interval
            elif frame.t >= self.next_tick:
                events += self._flush(self._last)
                while self.next_tick <= frame.t:
                    self.next_tick += self.cfg.timer_interval

        self._push(frame)
        self._last = frame
        return events

    def finish(self) -> list:
        """Extract a room from the remaining buffer"""
        return self._flush(self._last)

    def _push(self, frame: RoomFrame):
        if frame.cluster is None:
            return
        cl = frame.cluster
        near = np.hypot(*(cl.nodes - frame.position).T) <= self.cfg.sweep_radius
        self.state.buffer.append((frame.keyframe, cl.nodes[near], cl.cell_index[near], cl))
        self.state.wall_ids.update(frame.wall_ids)
        self.state.last_keys = cl.key_set()

    def _flush(self, frame: RoomFrame) -> list:
        buffer, wall_ids = self.state.buffer, self.state.wall_ids
        self.state.clear()
        if not buffer or frame is None:
            return []

        idx = np.concatenate([b[2] for b in buffer])
        nodes = np.concatenate([b[1] for b in buffer])
        if not len(nodes):
            return []
        _, first = np.unique(idx, axis=0, return_index=True)
        first = np.sort(first)
        latest = buffer[-1][3]
        union = FreeSpaceCluster(
            id=latest.id, nodes=nodes[first], cell_index=idx[first],
            resolution=latest.resolution, obstacles=latest.obstacles,
            backend=latest.backend,
        )
        landmarks = [self.landmarks[w] for w in sorted(wall_ids) if w in self.landmarks]
        candidate = extract_room(union, landmarks, self.cfg)
        if candidate is None:
            logger.debug(f'No room extracted at keyframe {frame.keyframe}')
            return []
        candidate.keyframes = [b[0] for b in buffer]
        return [self.rooms.observe(candidate, frame.t, frame.keyframe, union)]


def run_room_strategy(strategy, frames, landmarks, cfg: RoomConfig = None,
                      rooms: RoomMap = None):
    """
    Run a room extraction strategy over a stream of keyframes

    :param strategy: Either ``flush`` or ``timer``
    :param frames: Iterable of :class:`RoomFrame` objects, in keyframe order
    :param landmarks: Mapping from wall id to wall landmark
    :param cfg: Room parameters, the strategy field is overridden by ``strategy``
    :param rooms: Room map, a new one is created if omitted
    :return: An iterator of :class:`RoomEvent` objects
    """
    cfg = cfg or RoomConfig()
    if strategy != cfg.strategy:
        cfg = replace(cfg, strategy=strategy)
    runner = RoomStrategy(cfg, landmarks, rooms)
    for frame in frames:
        yield from runner.step(frame)
    yield from runner.finish()
