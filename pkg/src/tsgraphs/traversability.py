"""
The module extracts traversable ground nodes from LiDAR scans.

Each scan is processed in four steps:

1. Ground candidates are selected per grid cell as the points within
   ``delta_g`` of the minimal height in the cell. Cells with fewer than ``n_min``
   candidates are rejected as outliers.

2. A plane is fitted to the candidates of each cell. The raw score is 1 if the plane
   is close to horizontal, the step to every neighbouring cell is small, and the cell
   lies near the ground level of the robot. Otherwise the raw score is 0.

3. The raw scores are smoothed with a Bayesian generalized kernel (BGK).

4. The scan result is merged into the global grid using a running mean weighted by
   the number of observations.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import ndimage

from .errors import ConfigError
from .geometry import Pose2
from .numerics import bgk_kernel
from .sensor import Scan

logger = logging.getLogger(__name__)


COLUMNS = ['z_mean', 'normal_z', 'raw', 'score', 'n_points', 'observed_count']

_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass(frozen=True)
class TravConfig:
    """
    Parameters of the traversability analysis

    :param cell_size: Grid cell size, in meters
    :param tau: Minimal smoothed score of a traversable cell
    :param phi_max: Maximal inclination of a traversable cell, in radians
    :param s_max: Maximal height step to a neighbouring cell, in meters
    :param delta_g: Height tolerance for ground candidates, in meters
    :param n_min: Minimal number of ground candidates in a cell
    :param kernel_radius: Radius of the smoothing kernel, in meters
    :param z_max: Maximal height difference between a traversable cell and the
        ground under the robot, in meters
    :param ridge: Regularization of the plane fit, in squared meters per point
    """

    cell_size: float = 0.2
    tau: float = 0.5
    phi_max: float = np.deg2rad(30)
    s_max: float = 0.15
    delta_g: float = 0.15
    n_min: int = 3
    kernel_radius: float = 0.6
    z_max: float = 0.3
    ridge: float = 1e-4

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ConfigError(f'trav.cell_size must be positive, got {self.cell_size}')
        if not 0 <= self.tau <= 1:
            raise ConfigError(f'trav.tau must be in [0, 1], got {self.tau}')
        if not self.kernel_radius > 0:
            raise ConfigError(
                f'trav.kernel_radius must be positive, got {self.kernel_radius}')

    @staticmethod
    def from_config(conf) -> "TravConfig":
        params = dict(conf)
        if 'phi_max_deg' in params:
            params['phi_max'] = np.deg2rad(params.pop('phi_max_deg'))
        try:
            return TravConfig(**params)
        except TypeError as e:
            raise ConfigError(f'Invalid trav parameters: {e}') from e


@dataclass(frozen=True)
class TravNode:
    """
    Traversable grid cell

    :param center: Cell center, in meters
    :param cell_index: Grid index ``(i, j)``
    """

    center: tuple
    cell_index: tuple


class TravGrid:
    """
    Sparse grid of traversability cells.

    The cells are stored in a ``pandas.DataFrame`` indexed by the integer grid index
    ``(i, j)``, where ``i = floor(x / cell_size)`` and ``j = floor(y / cell_size)``.
    The columns are ``z_mean``, ``normal_z``, ``raw``, ``score``, ``n_points`` and
    ``observed_count``.

    :param cfg: Traversability parameters
    :param cells: Initial cell table
    """

    def __init__(self, cfg: TravConfig = None, cells: pd.DataFrame = None):
        self.cfg = cfg or TravConfig()
        if cells is None:
            index = pd.MultiIndex.from_arrays(
                [np.zeros(0, 'i8'), np.zeros(0, 'i8')], names=['i', 'j'])
            cells = pd.DataFrame(
                {c: np.zeros(0, 'i8' if c in ('n_points', 'observed_count') else 'f8')
                 for c in COLUMNS},
                index=index,
            )
        self.cells = cells

    @property
    def cell_size(self) -> float:
        return self.cfg.cell_size

    def __len__(self):
        return len(self.cells)

    def empty_like(self) -> "TravGrid":
        return TravGrid(self.cfg)

    def traversable(self) -> pd.Series:
        c = self.cells
        return (c['score'] >= self.cfg.tau) & (c['n_points'] >= self.cfg.n_min)

    def node_array(self):
        """
        Traversable nodes as arrays

        :return: A tuple ``(ij, centers)`` of integer cell indices with shape (n, 2)
            and cell centers with shape (n, 2)
        """
        sel = self.cells.index[self.traversable().values]
        ij = np.stack([
            sel.get_level_values('i').to_numpy(dtype='i8'),
            sel.get_level_values('j').to_numpy(dtype='i8'),
        ], axis=-1).reshape(-1, 2)
        centers = (ij + 0.5) * self.cell_size
        return ij, centers

    def nodes(self) -> list:
        ij, centers = self.node_array()
        return [TravNode(tuple(c), tuple(int(v) for v in k)) for k, c in zip(ij, centers)]

    def nearest_node(self, xy, max_dist):
        """
        Find the traversable node closest to a position

        :param xy: A 2-D position
        :param max_dist: Maximal accepted distance
        :return: Row number in :func:`node_array`, or ``None`` if there is no node
            within ``max_dist``
        """
        _, centers = self.node_array()
        if not len(centers):
            return None
        dist = np.hypot(centers[:, 0] - xy[0], centers[:, 1] - xy[1])
        k = int(np.argmin(dist))
        return k if dist[k] <= max_dist else None


def segment_ground(scan: Scan, pose: Pose2, grid: TravGrid) -> TravGrid:
    """
    Classify the ground cells observed by a single scan

    :param scan: Scan in the robot frame
    :param pose: Robot pose
    :param grid: Grid which provides the parameters of the analysis
    :return: A new grid containing only the cells observed by the scan, with
        ``score`` equal to ``raw``
    """
    cfg = grid.cfg
    result = grid.empty_like()
    if len(scan) == 0:
        return result

    pts = pose.transform(scan.points)
    cell = np.floor(pts[:, 0:2] / cfg.cell_size).astype('i8')
    ij, inv = np.unique(cell, axis=0, return_inverse=True)
    inv = inv.ravel()
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]

    # Minimal height candidates
    z_min = np.full(len(ij), np.inf)
    np.minimum.at(z_min, inv, z)
    cand = z <= z_min[inv] + cfg.delta_g
    inv, x, y, z = inv[cand], x[cand], y[cand], z[cand]
    n = np.bincount(inv, minlength=len(ij))

    # Outlier rejection
    keep = n >= cfg.n_min
    if not np.any(keep):
        return result

    # Batched plane fit z = a * x + b * y + c
    def cell_sum(v):
        return np.bincount(inv, weights=v, minlength=len(ij))

    nf = np.maximum(n, 1)
    mx, my, mz = cell_sum(x) / nf, cell_sum(y) / nf, cell_sum(z) / nf
    dx, dy, dz = x - mx[inv], y - my[inv], z - mz[inv]
    lam = cfg.ridge * nf
    sxx = cell_sum(dx * dx) + lam
    syy = cell_sum(dy * dy) + lam
    sxy = cell_sum(dx * dy)
    sxz = cell_sum(dx * dz)
    syz = cell_sum(dy * dz)
    det = sxx * syy - sxy * sxy
    a = (syy * sxz - sxy * syz) / det
    b = (sxx * syz - sxy * sxz) / det
    normal_z = 1 / np.sqrt(1 + a * a + b * b)

    ij, mz, normal_z, n = ij[keep], mz[keep], normal_z[keep], n[keep]

    # Step test against the 8 neighbours
    z_dense, (i0, j0) = _dense(ij, mz, np.nan)
    step = np.zeros_like(z_dense)
    padded = np.pad(z_dense, 1, constant_values=np.nan)
    ni, nj = z_dense.shape
    for di, dj in _NEIGHBOURS:
        neighbour = padded[1 + di:1 + di + ni, 1 + dj:1 + dj + nj]
        step = np.fmax(step, np.abs(z_dense - neighbour))
    step = step[ij[:, 0] - i0, ij[:, 1] - j0]

    raw = (
        (normal_z >= np.cos(cfg.phi_max))
        & (step <= cfg.s_max)
        & (np.abs(mz) <= cfg.z_max)
    ).astype('f8')

    index = pd.MultiIndex.from_arrays([ij[:, 0], ij[:, 1]], names=['i', 'j'])
    result.cells = pd.DataFrame(
        dict(z_mean=mz, normal_z=normal_z, raw=raw, score=raw.copy(),
             n_points=n.astype('i8'), observed_count=np.ones(len(ij), 'i8')),
        index=index,
    )
    return result


def bgk_smooth(grid: TravGrid, kernel_radius=None) -> TravGrid:
    """
    Smooth raw scores with the sparse BGK kernel

    The smoothed score is ``sum(k(r) * raw) / sum(k(r))`` over all cells within
    ``kernel_radius`` (the cell itself included), where ``r`` is the distance
    between cell centers and ``k`` is :func:`tsgraphs.numerics.bgk_kernel`.

    :param grid: Grid with raw scores
    :param kernel_radius: Kernel radius, in meters. Defaults to the grid config.
    :return: A new grid with smoothed scores
    """
    rho = kernel_radius or grid.cfg.kernel_radius
    out = TravGrid(grid.cfg, grid.cells.copy())
    if not len(grid):
        return out

    c = grid.cell_size
    ij = np.stack([
        grid.cells.index.get_level_values('i').to_numpy(dtype='i8'),
        grid.cells.index.get_level_values('j').to_numpy(dtype='i8'),
    ], axis=-1)
    raw, (i0, j0) = _dense(ij, grid.cells['raw'].to_numpy(), 0.0)
    mask, _ = _dense(ij, np.ones(len(ij)), 0.0)

    half = int(np.floor(rho / c))
    offsets = np.arange(-half, half + 1) * c
    r = np.hypot(offsets[:, None], offsets[None, :])
    kernel = bgk_kernel(r, rho)

    num = ndimage.convolve(raw * mask, kernel, mode='constant', cval=0.0)
    den = ndimage.convolve(mask, kernel, mode='constant', cval=0.0)
    k_i, k_j = ij[:, 0] - i0, ij[:, 1] - j0
    score = num[k_i, k_j] / den[k_i, k_j]
    out.cells['score'] = np.clip(score, 0.0, 1.0)
    return out


def global_update(grid: TravGrid, scan_result: TravGrid) -> TravGrid:
    """
    Merge a scan result into the global grid

    ``z_mean``, ``normal_z``, ``raw`` and ``score`` are running means weighted by
    ``observed_count``. ``n_points`` and ``observed_count`` are accumulated.

    :param grid: Global grid
    :param scan_result: Result of a single scan
    :return: The merged grid
    :raises ConfigError: If the cell sizes differ
    """
    if grid.cell_size != scan_result.cell_size:
        raise ConfigError(
            f'Cannot merge grids with cell sizes {grid.cell_size} and '
            f'{scan_result.cell_size}')

    old, new = grid.cells, scan_result.cells
    if not len(new):
        return TravGrid(grid.cfg, old.copy())
    if not len(old):
        return TravGrid(grid.cfg, new.copy())

    mean_cols = ['z_mean', 'normal_z', 'raw', 'score']
    w_old = old['observed_count'].astype('f8')
    w_new = new['observed_count'].astype('f8')
    total = old[mean_cols].mul(w_old, axis=0).add(
        new[mean_cols].mul(w_new, axis=0), fill_value=0)
    counts = w_old.add(w_new, fill_value=0)

    merged = total.div(counts, axis=0)
    merged['n_points'] = old['n_points'].add(new['n_points'], fill_value=0).astype('i8')
    merged['observed_count'] = counts.astype('i8')
    merged = merged[COLUMNS].sort_index()
    return TravGrid(grid.cfg, merged)


def _dense(ij, values, fill):
    i0, j0 = ij.min(axis=0)
    i1, j1 = ij.max(axis=0)
    arr = np.full((i1 - i0 + 1, j1 - j0 + 1), fill, dtype='f8')
    arr[ij[:, 0] - i0, ij[:, 1] - j0] = values
    return arr, (i0, j0)
