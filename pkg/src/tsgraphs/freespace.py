"""
The module contains the free-space clustering backends.

Two backends select the free-space cluster containing the robot:

- :func:`cluster_traversable` builds an 8-connected graph over the traversable nodes
  and removes every edge with an endpoint closer than ``lambda_th`` to an occupied
  point. Handrails block traversal since their returns are occupied points.

- :func:`cluster_esdf_baseline` voxelizes a height band, computes a Euclidean
  distance field over the free voxels and keeps voxels farther than ``lambda_th`` from
  any obstacle. Free space above low obstacles stays connected.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import (
    ConfigError, DegenerateCluster, RobotNotInFreeSpace, RobotNotOnNode,
)
from .geometry import Pose2
from .numerics import principal_axis
from .sensor import Scan
from .traversability import TravGrid
from .world import CellKind, Scenario

logger = logging.getLogger(__name__)


BACKENDS = ('traversability', 'esdf')


@dataclass(frozen=True)
class ClusterConfig:
    """
    Parameters of the free-space clustering

    :param backend: Either ``traversability`` or ``esdf``
    :param lambda_th: Obstacle proximity threshold, in meters
    :param voxel_size: ESDF voxel size, in meters
    :param esdf_height_band: Height band of the ESDF map, in meters
    :param clearance_height: Upper height limit of occupied points, in meters
    :param occupied_min_height: Lower height limit of occupied points, in meters
    :param near_radius: Radius around the robot used for width estimation
    :param axis_radius: Radius around the robot used for direction estimation
    :param snap_radius: Maximal distance between robot and its node
    :param esdf_max_ray: Maximal length of free space carving along a ray
    :param isotropy_gap: Relative eigenvalue gap below which the direction is
        considered undefined
    """

    backend: str = 'traversability'
    lambda_th: float = 0.45
    voxel_size: float = 0.2
    esdf_height_band: tuple = (0.1, 2.0)
    clearance_height: float = 1.5
    occupied_min_height: float = 0.1
    near_radius: float = 2.0
    axis_radius: float = 3.0
    snap_radius: float = 0.3
    esdf_max_ray: float = 10.0
    isotropy_gap: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, 'esdf_height_band', tuple(self.esdf_height_band))
        if self.backend not in BACKENDS:
            raise ConfigError(
                f'Unknown cluster backend "{self.backend}", expected one of {BACKENDS}')
        if not self.lambda_th > 0:
            raise ConfigError(f'lambda_th must be positive, got {self.lambda_th}')
        if not self.voxel_size > 0:
            raise ConfigError(f'voxel_size must be positive, got {self.voxel_size}')
        lo, hi = self.esdf_height_band
        if not lo < hi:
            raise ConfigError(f'Invalid esdf_height_band {self.esdf_height_band}')

    @staticmethod
    def from_config(conf) -> "ClusterConfig":
        try:
            return ClusterConfig(**conf)
        except TypeError as e:
            raise ConfigError(f'Invalid cluster parameters: {e}') from e


class OccupiedSet:
    """
    Set of occupied 2-D points

    Points are deduplicated on a lattice with spacing ``resolution`` and indexed with
    a ``scipy.spatial.cKDTree``. The object is immutable; :func:`with_points` returns
    an extended copy.

    :param keys: Integer lattice coordinates of shape (n, 2)
    :param resolution: Lattice spacing, in meters
    """

    def __init__(self, keys=None, resolution=0.02):
        if keys is None:
            keys = np.zeros((0, 2), dtype='i8')
        self.keys = np.asarray(keys, dtype='i8').reshape(-1, 2)
        self.resolution = resolution

    def __len__(self):
        return len(self.keys)

    @staticmethod
    def from_points(xyz, z_band=(0.1, 1.5), resolution=0.02) -> "OccupiedSet":
        return OccupiedSet(resolution=resolution).with_points(xyz, z_band)

    def with_points(self, xyz, z_band=(0.1, 1.5)) -> "OccupiedSet":
        """
        Add world-frame points whose height lies in ``(z_lo, z_hi]``

        :param xyz: Array of shape (n, 3)
        :param z_band: Height band ``(z_lo, z_hi)``
        :return: A new set
        """
        xyz = np.asarray(xyz, dtype='f8').reshape(-1, 3)
        z = xyz[:, 2]
        sel = xyz[(z > z_band[0]) & (z <= z_band[1]), 0:2]
        new_keys = np.round(sel / self.resolution).astype('i8')
        keys = np.unique(np.concatenate([self.keys, new_keys]), axis=0)
        return OccupiedSet(keys, self.resolution)

    @property
    def points(self) -> np.ndarray:
        return self.keys * self.resolution

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def distance(self, xy) -> np.ndarray:
        """
        Distance to the nearest occupied point

        :param xy: Array of shape (n, 2)
        :return: Array of shape (n, ), ``inf`` if the set is empty
        """
        xy = np.asarray(xy, dtype='f8').reshape(-1, 2)
        if not len(self.keys):
            return np.full(len(xy), np.inf)
        dist, _ = self.tree.query(xy)
        return dist

    def near(self, xy, radius) -> np.ndarray:
        """Occupied points within ``radius`` of a position"""
        if not len(self.keys):
            return np.zeros((0, 2))
        idx = self.tree.query_ball_point(np.asarray(xy, dtype='f8'), r=radius)
        return self.points[np.sort(np.asarray(idx, dtype='i8'))]


@dataclass(frozen=True, eq=False)
class FreeSpaceCluster:
    """
    Connected component of free space containing the robot

    :param id: Component label
    :param nodes: Node centers of shape (n, 2)
    :param cell_index: Integer node indices of shape (n, 2)
    :param resolution: Node spacing, in meters
    :param obstacles: Occupied points used for width estimation
    :param backend: Name of the backend which produced the cluster
    """

    id: int
    nodes: np.ndarray
    cell_index: np.ndarray
    resolution: float
    obstacles: OccupiedSet = field(default_factory=OccupiedSet)
    backend: str = 'traversability'

    def __len__(self):
        return len(self.nodes)

    @property
    def centroid(self) -> np.ndarray:
        return self.nodes.mean(axis=0)

    @cached_property
    def principal_axis(self) -> float:
        if len(self.nodes) < 2:
            return 0.0
        axis, gap = principal_axis(self.nodes)
        return axis if gap >= 0.2 else 0.0

    @cached_property
    def width_profile(self) -> list:
        """
        Free-space width along the principal axis

        :return: A list of ``(arc_length, width)`` tuples, in meters, with one entry
            per meter of arc length
        """
        u = np.array([np.cos(self.principal_axis), np.sin(self.principal_axis)])
        v = np.array([-u[1], u[0]])
        q = self.nodes - self.centroid
        s = q @ u
        t = q @ v
        bins = np.floor(s - s.min()).astype('i8')
        profile = []
        for b in np.unique(bins):
            tb = t[bins == b]
            profile.append((float(b + 0.5), float(tb.max() - tb.min() + self.resolution)))
        return profile

    def contains(self, xy) -> bool:
        """True if a position lies within a node cell of the cluster"""
        d = np.abs(self.nodes - np.asarray(xy, dtype='f8')).max(axis=1)
        return bool(np.any(d <= 0.5 * self.resolution + 1e-9))

    def key_set(self) -> set:
        return set(map(tuple, self.cell_index.tolist()))

    def to_dict(self) -> dict:
        return dict(
            id=int(self.id),
            backend=self.backend,
            resolution=self.resolution,
            nodes=np.round(self.nodes, 6).tolist(),
        )


def cluster_traversable(grid: TravGrid, occupied: OccupiedSet, cfg: ClusterConfig,
                        robot: Pose2) -> FreeSpaceCluster:
    """
    Select the traversable node cluster containing the robot

    The 8-connected node graph is disconnected by removing every edge where at least
    one endpoint is closer than ``cfg.lambda_th`` to an occupied point. The connected
    component containing the robot node is returned. A robot node without any
    remaining edge is returned as a single-node cluster.

    :param grid: Global traversability grid
    :param occupied: Occupied points
    :param cfg: Clustering parameters
    :param robot: Robot pose
    :return: The cluster containing the robot
    :raises RobotNotOnNode: If no traversable node lies under the robot
    """
    ij, centers = grid.node_array()
    k_robot = grid.nearest_node((robot.x, robot.y), cfg.snap_radius)
    if k_robot is None:
        raise RobotNotOnNode(f'No traversable node at ({robot.x:.3f}, {robot.y:.3f})')

    near = occupied.distance(centers) < cfg.lambda_th
    graph = _lattice_graph(ij, ~near, diagonal=True)
    _, labels = connected_components(graph, directed=False)
    member = labels == labels[k_robot]

    logger.debug(
        f'Traversable cluster at ({robot.x:.2f}, {robot.y:.2f}): '
        f'{member.sum()} of {len(ij)} nodes')

    return FreeSpaceCluster(
        id=int(labels[k_robot]),
        nodes=centers[member],
        cell_index=ij[member],
        resolution=grid.cell_size,
        obstacles=occupied,
        backend='traversability',
    )


def _lattice_graph(ij, usable, diagonal=True):
    """
    Adjacency matrix of nodes on an integer lattice

    :param ij: Integer node coordinates of shape (n, 2)
    :param usable: Boolean mask; edges touching an unusable node are omitted
    :param diagonal: Use 8-connectivity if True, otherwise 4-connectivity
    :return: A sparse adjacency matrix of shape (n, n)
    """
    n = len(ij)
    i0, j0 = ij.min(axis=0)
    i1, j1 = ij.max(axis=0)
    lookup = np.full((i1 - i0 + 3, j1 - j0 + 3), -1, dtype='i8')
    li, lj = ij[:, 0] - i0 + 1, ij[:, 1] - j0 + 1
    lookup[li, lj] = np.arange(n)

    offsets = [(1, 0), (0, 1)]
    if diagonal:
        offsets += [(1, 1), (1, -1)]

    rows, cols = [], []
    for di, dj in offsets:
        other = lookup[li + di, lj + dj]
        ok = (other >= 0) & usable
        ok[ok] &= usable[other[ok]]
        rows.append(np.flatnonzero(ok))
        cols.append(other[ok])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.ones(len(rows), dtype='i1')
    return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


class EsdfMap:
    """
    Voxel map for the ESDF free-space baseline

    Scans are integrated one by one. A voxel is occupied if it contains a return, and
    free if a ray with a return passes through it. Occupied takes precedence.

    :param bounds: Horizontal map bounds ``(xmin, ymin, xmax, ymax)``
    :param cfg: Clustering parameters
    """

    def __init__(self, bounds, cfg: ClusterConfig = None):
        self.cfg = cfg or ClusterConfig()
        v = self.cfg.voxel_size
        z_lo, z_hi = self.cfg.esdf_height_band
        self.origin = np.array([bounds[0], bounds[1], z_lo], dtype='f8')
        self.shape = (
            int(np.ceil((bounds[2] - bounds[0]) / v - 1e-9)),
            int(np.ceil((bounds[3] - bounds[1]) / v - 1e-9)),
            int(np.ceil((z_hi - z_lo) / v - 1e-9)),
        )
        self.free = np.zeros(self.shape, dtype=bool)
        self.occupied = np.zeros(self.shape, dtype=bool)

    @staticmethod
    def for_scenario(scenario: Scenario, cfg: ClusterConfig = None) -> "EsdfMap":
        w, h = scenario.extent
        return EsdfMap((0.0, 0.0, w, h), cfg)

    def voxel_index(self, xyz) -> tuple:
        """
        :param xyz: Array of shape (n, 3)
        :return: A tuple ``(index, inside)`` of integer voxel indices of shape (n, 3)
            and a boolean mask of in-bounds points
        """
        idx = np.floor((xyz - self.origin) / self.cfg.voxel_size).astype('i8')
        inside = np.all((idx >= 0) & (idx < self.shape), axis=1)
        return idx, inside

    def integrate(self, scan: Scan, pose: Pose2):
        """
        Add a scan to the map

        :param scan: Scan in the robot frame
        :param pose: Pose of the robot
        """
        if len(scan) == 0:
            return
        v = self.cfg.voxel_size
        pts = pose.transform(scan.points)
        origin = np.array([pose.x, pose.y, scan.origin[2]])

        # Carve free space from the sensor to each return
        delta = pts - origin
        length = np.linalg.norm(delta, axis=1)
        direction = delta / length[:, None]
        step = 0.5 * v
        reach = np.minimum(length - 0.5 * v, self.cfg.esdf_max_ray)
        num = np.maximum(np.floor(reach / step).astype('i8'), 0)
        ray = np.repeat(np.arange(len(pts)), num)
        k = np.arange(num.sum()) - np.repeat(np.cumsum(num) - num, num)
        samples = origin + ((k + 0.5) * step)[:, None] * direction[ray]
        idx, inside = self.voxel_index(samples)
        idx = idx[inside]
        self.free[idx[:, 0], idx[:, 1], idx[:, 2]] = True

        # Mark returns
        idx, inside = self.voxel_index(pts)
        idx = idx[inside]
        self.occupied[idx[:, 0], idx[:, 1], idx[:, 2]] = True

    def distance(self) -> np.ndarray:
        """
        Distance from each voxel to the nearest occupied voxel, in meters
        """
        if not self.occupied.any():
            return np.full(self.shape, np.inf)
        return ndimage.distance_transform_edt(
            ~self.occupied, sampling=self.cfg.voxel_size)

    def voxel_centers(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx) + 0.5) * self.cfg.voxel_size

    def occupied_set(self, clearance_height=None) -> OccupiedSet:
        """
        Occupied voxel centers up to ``clearance_height``, projected to the plane
        """
        hi = clearance_height or self.cfg.clearance_height
        centers = self.voxel_centers(np.argwhere(self.occupied))
        return OccupiedSet.from_points(
            centers, z_band=(-np.inf, hi), resolution=self.cfg.voxel_size / 2)


def cluster_esdf_baseline(scans, cfg: ClusterConfig, robot: Pose2, bounds=None,
                          sensor_height=0.5) -> FreeSpaceCluster:
    """
    Select the ESDF free-space cluster containing the robot

    Free voxels with a distance to the nearest occupied voxel of at least
    ``cfg.lambda_th`` are grouped into 26-connected components. The component
    containing the sensor origin is projected to the plane.

    :param scans: An :class:`EsdfMap`, or a sequence of ``(pose, scan)`` tuples
    :param cfg: Clustering parameters
    :param robot: Robot pose
    :param bounds: Map bounds ``(xmin, ymin, xmax, ymax)``, required if ``scans``
        is a sequence
    :param sensor_height: Height of the sensor origin, in meters
    :return: The cluster containing the robot
    :raises RobotNotInFreeSpace: If the sensor origin is not in thresholded free space
    """
    if isinstance(scans, EsdfMap):
        esdf = scans
    else:
        scans = list(scans)
        if not scans:
            raise RobotNotInFreeSpace('No scans have been integrated')
        if bounds is None:
            raise ConfigError('Map bounds are required to build an ESDF map')
        esdf = EsdfMap(bounds, cfg)
        for pose, scan in scans:
            esdf.integrate(scan, pose)

    keep = esdf.free & ~esdf.occupied & (esdf.distance() >= cfg.lambda_th)
    (idx,), inside = esdf.voxel_index(np.array([[robot.x, robot.y, sensor_height]]))
    if not inside[0] or not keep[tuple(idx)]:
        raise RobotNotInFreeSpace(
            f'Robot at ({robot.x:.3f}, {robot.y:.3f}) is not in thresholded free space')

    labels, _ = ndimage.label(keep, structure=np.ones((3, 3, 3), dtype=int))
    label = labels[tuple(idx)]
    columns = np.unique(np.argwhere(labels == label)[:, 0:2], axis=0)
    centers = esdf.origin[0:2] + (columns + 0.5) * cfg.voxel_size

    logger.debug(
        f'ESDF cluster at ({robot.x:.2f}, {robot.y:.2f}): {len(columns)} columns')

    return FreeSpaceCluster(
        id=int(label),
        nodes=centers,
        cell_index=columns,
        resolution=cfg.voxel_size,
        obstacles=esdf.occupied_set(cfg.clearance_height),
        backend='esdf',
    )


def width_and_axis(cluster: FreeSpaceCluster, robot: Pose2, near_radius=2.0,
                   axis_radius=3.0, isotropy_gap=0.2):
    """
    Local aisle width and direction around the robot

    The direction is the principal axis of the cluster nodes within ``axis_radius`` of
    the robot, wrapped to [0, pi). If the relative eigenvalue gap is below
    ``isotropy_gap``, the direction is undefined and 0 is returned. The width is the
    median length of the chords perpendicular to the direction, through each node
    within ``near_radius`` of the robot, between the nearest occupied points on
    either side.

    :param cluster: Free-space cluster
    :param robot: Robot pose
    :param near_radius: Radius used for the width estimate, in meters
    :param axis_radius: Radius used for the direction estimate, in meters
    :param isotropy_gap: Relative eigenvalue gap threshold
    :return: A tuple ``(width, axis)``
    :raises DegenerateCluster: If fewer than 3 nodes are available
    """
    nodes = cluster.nodes
    if len(nodes) < 3:
        raise DegenerateCluster(f'Cluster has only {len(nodes)} nodes')

    dist = np.hypot(nodes[:, 0] - robot.x, nodes[:, 1] - robot.y)
    axis_nodes = nodes[dist <= axis_radius]
    width_nodes = nodes[dist <= near_radius]
    if len(width_nodes) < 3:
        raise DegenerateCluster(
            f'Only {len(width_nodes)} cluster nodes within {near_radius} m of robot')

    axis, gap = principal_axis(axis_nodes)
    if gap < isotropy_gap:
        axis = 0.0

    u = np.array([np.cos(axis), np.sin(axis)])
    v = np.array([-u[1], u[0]])
    obstacles = cluster.obstacles.near((robot.x, robot.y), near_radius + 10.0)
    if not len(obstacles):
        raise DegenerateCluster('No occupied points near the cluster')

    rel = obstacles[None, :, :] - width_nodes[:, None, :]
    along = np.abs(rel @ u)
    across = rel @ v
    in_strip = along <= 0.5 * cluster.resolution
    pos = np.where(in_strip & (across > 0), across, np.inf).min(axis=1)
    neg = np.where(in_strip & (across < 0), -across, np.inf).min(axis=1)
    chord = pos + neg
    chord = chord[np.isfinite(chord)]
    if not len(chord):
        raise DegenerateCluster('No cluster node is bounded on both sides')

    return float(np.median(chord)), axis


def under_segmented(cluster: FreeSpaceCluster, scenario: Scenario) -> bool:
    """
    Check a cluster against the ground truth of the scenario

    :param cluster: Free-space cluster
    :param scenario: Scenario with annotated regions
    :return: True if a cluster node lies over a void cell, or if the cluster covers
        more than one functional space
    """
    if np.any(scenario.ground_kind(cluster.nodes) == CellKind.VOID):
        return True
    spaces = {r.space for r in scenario.regions if np.any(r.contains(cluster.nodes))}
    return len(spaces) >= 2
