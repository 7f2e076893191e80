"""
The module contains the synthetic indoor worlds that the simulated robot explores.

A :class:`Scenario` consists of a flat ground grid, where each cell is either
``GROUND`` (floor at z = 0) or ``VOID`` (no floor, e.g. an atrium hollow), a set of
vertical obstacle segments (walls, handrails, furniture) with a height extent, and a
closed trajectory of waypoints.

Scenario files are JSON documents with all lengths in meters::

    {
      "name": "four_rooms",
      "cell_size": 0.5,
      "extent": [10.0, 10.0],
      "ground_rows": ["20V", "2V16G2V", ...],
      "obstacles": [{"p0": [1, 1], "p1": [9, 1], "z_low": 0, "z_high": 3}, ...],
      "trajectory": [{"x": 3, "y": 3, "theta": 0}, ...],
      "rng_seed": 0,
      "regions": [{"name": "sw", "kind": "room", "space": "sw",
                   "xmin": 1, "ymin": 1, "xmax": 5, "ymax": 5}, ...]
    }

Row ``j`` of ``ground_rows`` covers ``y`` in ``[j * cell_size, (j + 1) * cell_size)``,
and is run-length encoded as a sequence of ``<count><kind>`` tokens, where ``kind`` is
``G`` (ground) or ``V`` (void). Cells outside the grid are void.
"""

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, SchemaError, ValidationError
from .geometry import Pose2, point_segment_distance

logger = logging.getLogger(__name__)


WALL_HEIGHT = 3.0
RAIL_HEIGHT = 1.0
SHELF_HEIGHT = 2.0

CANONICAL_NAMES = ('four_rooms', 'long_corridor', 'open_corridor', 'bookshelf_hall')


class CellKind(enum.IntEnum):
    VOID = 0
    GROUND = 1


@dataclass(frozen=True)
class ObstacleSegment:
    """
    Vertical obstacle spanning the 2-D segment ``p0 -> p1`` and the height interval
    ``[z_low, z_high]``

    :param p0: First end point, in meters
    :param p1: Second end point, in meters
    :param z_low: Lower height limit, in meters
    :param z_high: Upper height limit, in meters
    """

    p0: tuple
    p1: tuple
    z_low: float = 0.0
    z_high: float = WALL_HEIGHT

    def __post_init__(self):
        object.__setattr__(self, 'p0', (float(self.p0[0]), float(self.p0[1])))
        object.__setattr__(self, 'p1', (float(self.p1[0]), float(self.p1[1])))
        if not self.z_low < self.z_high:
            raise ValidationError(f'Obstacle has z_low >= z_high: {self}')
        if self.p0 == self.p1:
            raise ValidationError(f'Obstacle has zero length: {self}')

    @property
    def length(self) -> float:
        return float(np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]))


@dataclass(frozen=True)
class Region:
    """
    Annotated ground truth rectangle

    Regions sharing the same ``space`` belong to one functional space. A cluster
    covering more than one space is under-segmented.

    :param name: Region name
    :param kind: One of ``room``, ``corridor``
    :param xmin: Lower x limit
    :param ymin: Lower y limit
    :param xmax: Upper x limit
    :param ymax: Upper y limit
    :param space: Functional space label, defaults to the region name
    """

    name: str
    kind: str
    xmin: float
    ymin: float
    xmax: float
    ymax: float
    space: str = None

    def __post_init__(self):
        if self.space is None:
            object.__setattr__(self, 'space', self.name)

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax)])

    @property
    def extents(self) -> tuple:
        return self.xmax - self.xmin, self.ymax - self.ymin

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype='f8'))
        return (
            (xy[:, 0] >= self.xmin) & (xy[:, 0] <= self.xmax)
            & (xy[:, 1] >= self.ymin) & (xy[:, 1] <= self.ymax)
        )


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    A synthetic 2.5-D indoor environment.

    :param name: Scenario name
    :param cell_size: Side length of ground cells, in meters
    :param ground: Array of :class:`CellKind` values with shape (ny, nx), indexed
        as ``ground[j, i]``
    :param obstacles: Vertical obstacle segments
    :param trajectory: Closed list of waypoints
    :param rng_seed: Default random seed for the scenario
    :param regions: Ground truth annotations
    """

    name: str
    cell_size: float
    ground: np.ndarray
    obstacles: tuple
    trajectory: tuple
    rng_seed: int = 0
    regions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'ground', np.asarray(self.ground, dtype='u1'))
        object.__setattr__(self, 'obstacles', tuple(self.obstacles))
        object.__setattr__(self, 'trajectory', tuple(self.trajectory))
        object.__setattr__(self, 'regions', tuple(self.regions))

    @property
    def extent(self) -> tuple:
        ny, nx = self.ground.shape
        return nx * self.cell_size, ny * self.cell_size

    @cached_property
    def segments(self) -> np.ndarray:
        """
        Obstacles as an array of shape (m, 6) with columns
        ``x0, y0, x1, y1, z_low, z_high``
        """
        rows = [(*o.p0, *o.p1, o.z_low, o.z_high) for o in self.obstacles]
        return np.array(rows, dtype='f8').reshape(-1, 6)

    def validate(self):
        """
        Check the scenario invariants

        :raises ValidationError: If an invariant is violated
        """
        if not self.cell_size > 0:
            raise ValidationError(f'cell_size must be positive, got {self.cell_size}')
        if self.ground.ndim != 2 or 0 in self.ground.shape:
            raise ValidationError('Ground grid must be a non-empty 2-D grid')
        if not len(self.trajectory):
            raise ValidationError('Trajectory has no waypoints')
        xy = np.array([(p.x, p.y) for p in self.trajectory])
        off = ~self.is_ground(xy)
        if np.any(off):
            k = int(np.flatnonzero(off)[0])
            raise ValidationError(
                f'Waypoint {k} at ({xy[k, 0]}, {xy[k, 1]}) is not on a ground cell')
        return self

    def cell_index(self, xy) -> tuple:
        xy = np.atleast_2d(np.asarray(xy, dtype='f8'))
        i = np.floor(xy[:, 0] / self.cell_size).astype('i8')
        j = np.floor(xy[:, 1] / self.cell_size).astype('i8')
        return i, j

    def ground_kind(self, xy) -> np.ndarray:
        """
        Cell kind at world positions. Positions outside the grid are void.

        :param xy: Array of shape (n, 2)
        :return: Array of :class:`CellKind` values, shape (n, )
        """
        i, j = self.cell_index(xy)
        ny, nx = self.ground.shape
        inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        kind = np.zeros(len(i), dtype='u1')
        kind[inside] = self.ground[j[inside], i[inside]]
        return kind

    def is_ground(self, xy) -> np.ndarray:
        return self.ground_kind(xy) == CellKind.GROUND

    def keyframes(self, spacing=0.5):
        """
        Resample the waypoint polyline to keyframes

        Keyframes are placed every ``spacing`` meters of arc length, with headings
        along the path. For closed paths, the last keyframe equals the first one.

        :param spacing: Distance between keyframes along the path, in meters
        :return: A tuple ``(poses, s)`` of a list of :class:`Pose2` objects and the
            arc length of each keyframe
        """
        wp = np.array([(p.x, p.y) for p in self.trajectory], dtype='f8')
        legs = np.diff(wp, axis=0)
        lengths = np.hypot(legs[:, 0], legs[:, 1])
        keep = lengths > 0
        start = wp[:-1][keep]
        legs, lengths = legs[keep], lengths[keep]
        if not len(lengths):
            return [self.trajectory[0]], np.zeros(1)

        s_start = np.concatenate([[0], np.cumsum(lengths)])
        total = s_start[-1]
        num = int(np.floor(total / spacing + 1e-9))
        s = np.arange(num + 1) * spacing
        closed = np.allclose(wp[0], wp[-1])
        if closed and total - s[-1] > 1e-9:
            s = np.append(s, total)

        k = np.clip(np.searchsorted(s_start, s, side='right') - 1, 0, len(lengths) - 1)
        frac = (s - s_start[k]) / lengths[k]
        xy = start[k] + frac[:, None] * legs[k]
        theta = np.arctan2(legs[k, 1], legs[k, 0])
        poses = [Pose2(x, y, t) for (x, y), t in zip(xy, theta)]
        if closed:
            poses[-1] = poses[0]
        return poses, s

    def to_dict(self) -> dict:
        return dict(
            name=self.name,
            cell_size=self.cell_size,
            extent=list(self.extent),
            ground_rows=[encode_row(row) for row in self.ground],
            obstacles=[
                dict(p0=list(o.p0), p1=list(o.p1), z_low=o.z_low, z_high=o.z_high)
                for o in self.obstacles
            ],
            trajectory=[dict(x=p.x, y=p.y, theta=p.theta) for p in self.trajectory],
            rng_seed=self.rng_seed,
            regions=[
                dict(name=r.name, kind=r.kind, space=r.space, xmin=r.xmin,
                     ymin=r.ymin, xmax=r.xmax, ymax=r.ymax)
                for r in self.regions
            ],
        )

    @staticmethod
    def from_dict(d) -> "Scenario":
        required = ['name', 'cell_size', 'extent', 'ground_rows', 'obstacles',
                    'trajectory', 'rng_seed']
        missing = [k for k in required if k not in d]
        if missing:
            raise SchemaError(f'Scenario is missing required fields: {missing}')

        try:
            ground = np.array([decode_row(r) for r in d['ground_rows']], dtype='u1')
            obstacles = [ObstacleSegment(**o) for o in d['obstacles']]
            trajectory = [Pose2(p['x'], p['y'], p.get('theta', 0.0))
                          for p in d['trajectory']]
            regions = [Region(**r) for r in d.get('regions', [])]
        except (KeyError, TypeError) as e:
            raise SchemaError(f'Malformed scenario entry: {e}') from e
        except ValueError as e:
            if isinstance(e, ValidationError):
                raise
            raise SchemaError(f'Malformed ground rows: {e}') from e

        scenario = Scenario(
            name=d['name'],
            cell_size=float(d['cell_size']),
            ground=ground,
            obstacles=obstacles,
            trajectory=trajectory,
            rng_seed=int(d['rng_seed']),
            regions=regions,
        )

        ext = np.asarray(d['extent'], dtype='f8')
        if np.any(ext <= 0):
            raise ValidationError(f'Extent must be positive, got {d["extent"]}')
        if not np.allclose(ext, scenario.extent):
            raise ValidationError(
                f'Extent {d["extent"]} does not match the ground grid '
                f'{scenario.extent}')

        return scenario.validate()


_RUN_PATTERN = re.compile(r'(\d+)([GV])')


def encode_row(row) -> str:
    """
    Run-length encode a row of cell kinds

    :param row: Sequence of :class:`CellKind` values
    :return: A string such as ``"2V16G2V"``
    """
    tokens = []
    row = list(int(v) for v in row)
    i = 0
    while i < len(row):
        j = i
        while j < len(row) and row[j] == row[i]:
            j += 1
        tokens.append(f'{j - i}{"G" if row[i] == CellKind.GROUND else "V"}')
        i = j
    return ''.join(tokens)


def decode_row(txt: str) -> list:
    if _RUN_PATTERN.sub('', txt).strip():
        raise ValueError(f'Unrecognized run-length row: "{txt}"')
    row = []
    for count, kind in _RUN_PATTERN.findall(txt):
        value = CellKind.GROUND if kind == 'G' else CellKind.VOID
        row += [int(value)] * int(count)
    return row


def load_scenario(path) -> Scenario:
    """
    Load and validate a scenario file

    :param path: Name of JSON file
    :return: A validated scenario
    :raises SchemaError: If a required field is missing
    :raises ValidationError: If a scenario invariant is violated
    """
    with open(path, 'r', encoding='utf-8') as fp:
        try:
            d = json.load(fp)
        except json.JSONDecodeError as e:
            raise SchemaError(f'{path} is not valid JSON: {e}') from e
    if not isinstance(d, dict):
        raise SchemaError(f'{path} does not contain a JSON object')
    logger.info(f'Load scenario "{d.get("name")}" from {path}')
    return Scenario.from_dict(d)


def save_scenario(scenario: Scenario, path):
    with open(path, 'w', encoding='utf-8') as fp:
        json.dump(scenario.to_dict(), fp, indent=1)


def nearest_obstacle_distance(scenario: Scenario, p, height_band) -> float:
    """
    Distance from a point to the nearest obstacle within a height band

    Only obstacles whose vertical extent overlaps the band are considered.

    :param scenario: The scenario
    :param p: A 2-D point
    :param height_band: A tuple ``(z_lo, z_hi)``
    :return: Minimal 2-D distance, or ``inf`` if no obstacle overlaps the band
    """
    z_lo, z_hi = height_band
    if not z_lo <= z_hi:
        raise ConfigError(f'Invalid height band {height_band}')
    seg = scenario.segments
    in_band = (seg[:, 4] < z_hi) & (seg[:, 5] > z_lo)
    best = np.inf
    for x0, y0, x1, y1, _, _ in seg[in_band]:
        best = min(best, float(point_segment_distance([p], (x0, y0), (x1, y1))[0]))
    return best


def build_canonical(name) -> Scenario:
    """
    Build one of the canonical scenarios

    - ``four_rooms``: Four 4 x 4 m rooms joined by 0.8 m doorways
    - ``long_corridor``: A 2 m corridor widening to 4 m, followed by a 90 degree bend
    - ``open_corridor``: Two 2 m walkways flanking a void hollow, guarded by 1 m
      handrails and connected at one end through doorways into an end passage
    - ``bookshelf_hall``: A hall with a free-standing 2 m high bookshelf run

    :param name: Scenario name
    :return: A validated scenario
    """
    builders = dict(
        four_rooms=_four_rooms,
        long_corridor=_long_corridor,
        open_corridor=_open_corridor,
        bookshelf_hall=_bookshelf_hall,
    )
    if name not in builders:
        raise ConfigError(
            f'Unknown canonical scenario "{name}", expected one of {CANONICAL_NAMES}')
    return builders[name]().validate()


def _grid(width, height, cell_size=0.5):
    return np.zeros((round(height / cell_size), round(width / cell_size)), dtype='u1')


def _paint(ground, xmin, ymin, xmax, ymax, kind, cell_size=0.5):
    ground[round(ymin / cell_size):round(ymax / cell_size),
           round(xmin / cell_size):round(xmax / cell_size)] = kind


def _wall(x0, y0, x1, y1):
    return ObstacleSegment((x0, y0), (x1, y1), 0.0, WALL_HEIGHT)


def _rail(x0, y0, x1, y1):
    return ObstacleSegment((x0, y0), (x1, y1), 0.0, RAIL_HEIGHT)


def _waypoints(*xy):
    return [Pose2(x, y, 0.0) for x, y in xy]


def _four_rooms():
    ground = _grid(10, 10)
    _paint(ground, 1, 1, 9, 9, CellKind.GROUND)

    obstacles = [
        _wall(1, 1, 9, 1), _wall(9, 1, 9, 9), _wall(9, 9, 1, 9), _wall(1, 9, 1, 1),
        _wall(5, 1, 5, 2.6), _wall(5, 3.4, 5, 6.6), _wall(5, 7.4, 5, 9),
        _wall(1, 5, 2.6, 5), _wall(3.4, 5, 6.6, 5), _wall(7.4, 5, 9, 5),
    ]
    trajectory = _waypoints(
        (3, 3), (5, 3), (7, 3), (7, 5), (7, 7), (5, 7), (3, 7), (3, 5), (3, 3))
    regions = [
        Region('sw', 'room', 1, 1, 5, 5),
        Region('se', 'room', 5, 1, 9, 5),
        Region('ne', 'room', 5, 5, 9, 9),
        Region('nw', 'room', 1, 5, 5, 9),
    ]
    return Scenario('four_rooms', 0.5, ground, obstacles, trajectory, 0, regions)


def _long_corridor():
    ground = _grid(22, 16)
    _paint(ground, 1, 1, 11, 3, CellKind.GROUND)
    _paint(ground, 11, 1, 21, 5, CellKind.GROUND)
    _paint(ground, 17, 5, 21, 15, CellKind.GROUND)

    obstacles = [
        _wall(1, 1, 21, 1), _wall(21, 1, 21, 15), _wall(21, 15, 17, 15),
        _wall(17, 15, 17, 5), _wall(17, 5, 11, 5), _wall(11, 5, 11, 3),
        _wall(11, 3, 1, 3), _wall(1, 3, 1, 1),
    ]
    out = [(2, 2), (12, 2), (12, 3), (19, 3), (19, 14)]
    trajectory = _waypoints(*out, *out[-2::-1])
    regions = [
        Region('narrow', 'corridor', 1, 1, 11, 3, space='corridor'),
        Region('wide', 'corridor', 11, 1, 21, 5, space='corridor'),
        Region('bend', 'corridor', 17, 5, 21, 15, space='corridor'),
    ]
    return Scenario('long_corridor', 0.5, ground, obstacles, trajectory, 0, regions)


def _open_corridor():
    ground = _grid(17, 10)
    _paint(ground, 1, 1, 16, 9, CellKind.GROUND)
    _paint(ground, 1, 3, 14, 7, CellKind.VOID)

    obstacles = [
        _wall(1, 1, 16, 1), _wall(16, 1, 16, 9), _wall(16, 9, 1, 9),
        _wall(1, 1, 1, 3), _wall(1, 7, 1, 9),
        _wall(14, 1, 14, 1.6), _wall(14, 2.4, 14, 3),
        _wall(14, 7, 14, 7.6), _wall(14, 8.4, 14, 9),
        _rail(1, 3, 14, 3), _rail(14, 3, 14, 7), _rail(14, 7, 1, 7), _rail(1, 7, 1, 3),
    ]
    out = [(2, 2), (15, 2), (15, 8), (2, 8)]
    trajectory = _waypoints(*out, *out[-2::-1])
    regions = [
        Region('walkway_a', 'corridor', 1, 1, 14, 3),
        Region('walkway_b', 'corridor', 1, 7, 14, 9),
        Region('passage', 'corridor', 14, 1, 16, 9),
    ]
    return Scenario('open_corridor', 0.5, ground, obstacles, trajectory, 0, regions)


def _bookshelf_hall():
    ground = _grid(12, 8)
    _paint(ground, 1, 1, 11, 7, CellKind.GROUND)

    obstacles = [
        _wall(1, 1, 11, 1), _wall(11, 1, 11, 7), _wall(11, 7, 1, 7), _wall(1, 7, 1, 1),
        ObstacleSegment((3, 5.5), (9, 5.5), 0.0, SHELF_HEIGHT),
    ]
    trajectory = _waypoints((2, 3), (10, 3), (10, 6.25), (2, 6.25), (2, 3))
    regions = [
        Region('hall', 'room', 1, 1, 11, 5.5),
        Region('aisle', 'corridor', 3, 5.5, 9, 7),
    ]
    return Scenario('bookshelf_hall', 0.5, ground, obstacles, trajectory, 0, regions)
