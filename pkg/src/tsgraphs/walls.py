"""
The module extracts vertical walls from scans and maintains the wall landmarks.

Wall extraction works on the scan columns (all rings at a given azimuth). Returns
within a height band that are seen by at least two rings at the same horizontal range
indicate a vertical surface. The nearest such surface per azimuth becomes a column
point if it reaches a minimal height, which separates walls from handrails. Column
points are ordered by azimuth, split at large gaps and segmented into straight lines
with split-and-merge.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import Line2, Pose2, line_to_world, wrap_angle
from .numerics import fit_line, split_and_merge
from .sensor import Scan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WallConfig:
    """
    Parameters of wall extraction and association

    :param fit_tol: Split-and-merge tolerance and maximal RMS residual, in meters
    :param min_support: Minimal number of column points of an observation
    :param assoc_angle: Association gate for the facing direction, in radians
    :param assoc_dist: Association gate for the offset along the normal, in meters
    :param assoc_gap: Maximal gap between extents of associated walls, in meters
    :param min_height: Minimal height of a wall, in meters
    :param height_band: Height band of wall points, in meters
    :param max_gap: Maximal distance between consecutive points of a wall, in meters
    :param range_tol: Range tolerance of the vertical surface filter, in meters
    :param min_rings: Minimal number of rings of the vertical surface filter
    """

    fit_tol: float = 0.05
    min_support: int = 10
    assoc_angle: float = np.deg2rad(10)
    assoc_dist: float = 0.3
    assoc_gap: float = 1.0
    min_height: float = 1.2
    height_band: tuple = (0.3, 2.5)
    max_gap: float = 0.5
    range_tol: float = 0.1
    min_rings: int = 2

    def __post_init__(self):
        object.__setattr__(self, 'height_band', tuple(self.height_band))
        if not self.fit_tol > 0:
            raise ConfigError(f'walls.fit_tol must be positive, got {self.fit_tol}')
        if not self.min_support >= 2:
            raise ConfigError(f'walls.min_support must be >= 2, got {self.min_support}')

    @staticmethod
    def from_config(conf) -> "WallConfig":
        params = dict(conf)
        if 'assoc_angle_deg' in params:
            params['assoc_angle'] = np.deg2rad(params.pop('assoc_angle_deg'))
        try:
            return WallConfig(**params)
        except TypeError as e:
            raise ConfigError(f'Invalid walls parameters: {e}') from e


@dataclass(frozen=True)
class WallObservation:
    """
    Wall segment seen from a single keyframe

    :param line: Line in the robot frame. The normal points from the robot toward
        the wall, so ``d > 0``.
    :param support: Number of column points
    :param extent: Interval ``(s_min, s_max)`` along ``line.direction()``
    :param rms: RMS residual of the line fit
    :param z_max: Highest supporting return
    """

    line: Line2
    support: int
    extent: tuple
    rms: float = 0.0
    z_max: float = np.inf

    def endpoints(self) -> np.ndarray:
        """End points in the robot frame, shape (2, 2)"""
        foot, u = self.line.foot(), self.line.direction()
        return np.array([foot + self.extent[0] * u, foot + self.extent[1] * u])


@dataclass
class WallLandmark:
    """
    Global wall landmark

    :param id: Unique identifier
    :param line: Line in world coordinates
    :param facing: Angle of the normal pointing from the observed side toward the
        wall, in world coordinates
    :param extent: Observed interval along ``line.direction()``
    :param observations: A list of ``(keyframe_id, observation)`` tuples
    """

    id: int
    line: Line2
    facing: float
    extent: tuple
    observations: list = field(default_factory=list)

    def endpoints(self) -> np.ndarray:
        foot, u = self.line.foot(), self.line.direction()
        return np.array([foot + self.extent[0] * u, foot + self.extent[1] * u])

    def facing_normal(self) -> np.ndarray:
        return np.array([np.cos(self.facing), np.sin(self.facing)])

    def to_dict(self) -> dict:
        return dict(
            id=self.id, theta_n=self.line.theta_n, d=self.line.d, facing=self.facing,
            extent=list(self.extent), num_observations=len(self.observations),
        )


def column_points(scan: Scan, cfg: WallConfig):
    """
    Apply the vertical surface filter to a scan

    :param scan: Scan in the robot frame
    :param cfg: Wall parameters
    :return: A tuple ``(azimuth, xy, z_max)`` with one entry per azimuth with a
        qualifying surface, ordered by azimuth
    """
    z_lo, z_hi = cfg.height_band
    pts = scan.points
    sel = (pts[:, 2] >= z_lo) & (pts[:, 2] <= z_hi)
    az, ring, pts = scan.azimuth[sel], scan.ring[sel], pts[sel]
    r = np.hypot(pts[:, 0], pts[:, 1])

    order = np.lexsort((r, az))
    az, ring, pts, r = az[order], ring[order], pts[order], r[order]

    out_az, out_xy, out_z = [], [], []
    starts = np.flatnonzero(np.r_[True, az[1:] != az[:-1]])
    stops = np.r_[starts[1:], len(az)]
    for a, b in zip(starts, stops):
        # Range clusters within the column, nearest first
        breaks = np.flatnonzero(np.diff(r[a:b]) > cfg.range_tol) + 1
        for group in np.split(np.arange(a, b), breaks):
            if len(np.unique(ring[group])) < cfg.min_rings:
                continue
            z_max = pts[group, 2].max()
            if z_max < cfg.min_height:
                continue
            out_az.append(az[a])
            out_xy.append(pts[group, 0:2].mean(axis=0))
            out_z.append(z_max)
            break

    return (np.array(out_az, dtype='i8'), np.array(out_xy).reshape(-1, 2),
            np.array(out_z, dtype='f8'))


def _runs(xy, max_gap):
    """Split a circular point sequence at gaps larger than ``max_gap``"""
    n = len(xy)
    if n == 0:
        return []
    step = np.hypot(*(np.roll(xy, -1, axis=0) - xy).T)
    breaks = np.flatnonzero(step > max_gap)
    if not len(breaks):
        return [np.arange(n)]
    start = (breaks[-1] + 1) % n
    order = np.roll(np.arange(n), -start)
    cuts = np.sort((breaks + 1 - start) % n)
    return [run for run in np.split(order, cuts[cuts > 0]) if len(run)]


def extract_walls(scan: Scan, cfg: WallConfig = None) -> list:
    """
    Extract wall observations from a scan

    :param scan: Scan in the robot frame, ordered by ``(ring, azimuth)``
    :param cfg: Wall parameters
    :return: A list of :class:`WallObservation` objects, possibly empty
    """
    cfg = cfg or WallConfig()
    _, xy, z_max = column_points(scan, cfg)
    observations = []

    for run in _runs(xy, cfg.max_gap):
        pts = xy[run]
        for i0, i1 in split_and_merge(pts, cfg.fit_tol):
            seg = pts[i0:i1 + 1]
            if len(seg) < cfg.min_support:
                continue
            theta, d, rms = fit_line(seg)
            if rms > cfg.fit_tol:
                continue
            line = Line2(theta, d)
            s = seg @ line.direction()
            observations.append(WallObservation(
                line=line,
                support=len(seg),
                extent=(float(s.min()), float(s.max())),
                rms=rms,
                z_max=float(z_max[run][i0:i1 + 1].max()),
            ))

    return observations


def observation_to_world(obs: WallObservation, pose: Pose2):
    """
    Express an observation in world coordinates

    :return: A tuple ``(line, facing, endpoints)``
    """
    line = line_to_world(pose, obs.line)
    facing = wrap_angle(obs.line.theta_n + pose.theta)
    endpoints = pose.transform(obs.endpoints())
    return line, facing, endpoints


def _extent_gap(a, b) -> float:
    return max(0.0, max(a[0], b[0]) - min(a[1], b[1]))


def associate_wall(obs: WallObservation, pose: Pose2, landmarks, cfg: WallConfig = None):
    """
    Find the landmark matching an observation

    An observation matches a landmark if the facing directions differ by less than
    ``assoc_angle``, the observation midpoint lies within ``assoc_dist`` of the
    landmark line, and the extents overlap or are separated by at most
    ``assoc_gap``. Among matching landmarks, the one with the smallest angular
    difference is chosen.

    :param obs: Wall observation
    :param pose: Pose of the observing keyframe
    :param landmarks: Sequence of :class:`WallLandmark` objects
    :param cfg: Wall parameters
    :return: The id of the matching landmark, or ``None`` for a new landmark
    """
    cfg = cfg or WallConfig()
    _, facing, endpoints = observation_to_world(obs, pose)
    mid = endpoints.mean(axis=0)

    best, best_key = None, None
    for lm in landmarks:
        d_angle = abs(wrap_angle(facing - lm.facing))
        if d_angle >= cfg.assoc_angle:
            continue
        d_dist = abs(float(lm.line.distance(mid)))
        if d_dist >= cfg.assoc_dist:
            continue
        s = endpoints @ lm.line.direction()
        if _extent_gap((s.min(), s.max()), lm.extent) > cfg.assoc_gap:
            continue
        key = (d_angle, d_dist)
        if best_key is None or key < best_key:
            best, best_key = lm.id, key

    return best


class WallMap:
    """
    The collection of wall landmarks

    :param cfg: Wall parameters
    """

    def __init__(self, cfg: WallConfig = None):
        self.cfg = cfg or WallConfig()
        self.landmarks = {}
        self._next_id = 0

    def __len__(self):
        return len(self.landmarks)

    def __getitem__(self, item) -> WallLandmark:
        return self.landmarks[item]

    def __contains__(self, item):
        return item in self.landmarks

    def values(self):
        return self.landmarks.values()

    def observe(self, keyframe_id, obs: WallObservation, pose: Pose2):
        """
        Associate an observation and update the landmark map

        :param keyframe_id: Id of the observing keyframe
        :param obs: Wall observation
        :param pose: Estimated pose of the keyframe
        :return: A tuple ``(landmark_id, is_new)``
        """
        lm_id = associate_wall(obs, pose, self.landmarks.values(), self.cfg)
        line, facing, endpoints = observation_to_world(obs, pose)

        if lm_id is None:
            lm_id = self._next_id
            self._next_id += 1
            s = endpoints @ line.direction()
            self.landmarks[lm_id] = WallLandmark(
                id=lm_id, line=line, facing=facing,
                extent=(float(s.min()), float(s.max())),
                observations=[(keyframe_id, obs)],
            )
            logger.debug(
                f'New wall {lm_id}: theta_n={line.theta_n:.3f}, d={line.d:.3f}')
            return lm_id, True

        lm = self.landmarks[lm_id]
        s = endpoints @ lm.line.direction()
        lm.extent = (min(lm.extent[0], float(s.min())), max(lm.extent[1], float(s.max())))
        lm.observations.append((keyframe_id, obs))
        return lm_id, False

    def set_line(self, lm_id, line: Line2):
        """
        Replace the line of a landmark, keeping its extent and facing side
        """
        lm = self.landmarks[lm_id]
        ends = lm.endpoints()
        s = ends @ line.direction()
        facing = line.theta_n
        if abs(wrap_angle(facing - lm.facing)) > 0.5 * np.pi:
            facing = wrap_angle(facing + np.pi)
        lm.line = line
        lm.facing = facing
        lm.extent = (float(s.min()), float(s.max()))
