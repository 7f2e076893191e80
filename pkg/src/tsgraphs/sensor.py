"""
The module contains the simulated multi-ring LiDAR and the odometry generator.

Rays are intersected analytically with the obstacle segments of the
:class:`Scenario <tsgraphs.world.Scenario>` and with the ground plane. Scan points are
expressed in the robot frame, with ``z`` measured from the ground, so that the sensor
origin is ``(0, 0, sensor_height)``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, PoseOffMap
from .geometry import Pose2, between
from .world import Scenario

logger = logging.getLogger(__name__)


def _default_rings():
    return tuple(np.deg2rad(np.arange(-15, 16, 2)).tolist())


@dataclass(frozen=True)
class LidarConfig:
    """
    LiDAR parameters

    :param h_res: Horizontal angular step, in radians
    :param rings: Vertical angle of each ring, in radians
    :param max_range: Maximal range, in meters
    :param range_noise_sigma: Standard deviation of range noise, in meters
    :param sensor_height: Height of the sensor above the ground, in meters
    """

    h_res: float = np.deg2rad(0.5)
    rings: tuple = field(default_factory=_default_rings)
    max_range: float = 30.0
    range_noise_sigma: float = 0.01
    sensor_height: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, 'rings', tuple(float(r) for r in self.rings))
        if not self.h_res > 0:
            raise ConfigError(f'h_res must be positive, got {self.h_res}')
        if not len(self.rings):
            raise ConfigError('At least one ring is required')
        if not self.max_range > 0:
            raise ConfigError(f'max_range must be positive, got {self.max_range}')
        if not self.range_noise_sigma >= 0:
            raise ConfigError(
                f'range_noise_sigma must be non-negative, got {self.range_noise_sigma}')

    @staticmethod
    def from_config(conf) -> "LidarConfig":
        """
        Initialize using :doc:`configuration parameters </config/sensor>`

        :param conf: A dict of configuration parameters
        :return: An initialized object
        """
        params = dict(conf)
        if 'h_res_deg' in params:
            params['h_res'] = np.deg2rad(params.pop('h_res_deg'))
        if 'rings_deg' in params:
            params['rings'] = np.deg2rad(params.pop('rings_deg')).tolist()
        try:
            return LidarConfig(**params)
        except TypeError as e:
            raise ConfigError(f'Invalid sensor parameters: {e}') from e

    @property
    def azimuths(self) -> np.ndarray:
        num = int(round(2 * np.pi / self.h_res))
        return np.arange(num) * self.h_res


@dataclass(frozen=True, eq=False)
class Scan:
    """
    LiDAR returns of a single sweep

    :param points: Array of shape (n, 3) in the robot frame, ordered by
        ``(ring, azimuth)``
    :param ring: Ring index of each point
    :param azimuth: Azimuth index of each point
    :param origin: Sensor origin in the robot frame
    """

    points: np.ndarray
    ring: np.ndarray
    azimuth: np.ndarray
    origin: tuple = (0.0, 0.0, 0.5)

    def __len__(self):
        return len(self.points)

    @staticmethod
    def empty(sensor_height=0.5) -> "Scan":
        return Scan(np.zeros((0, 3)), np.zeros(0, 'i4'), np.zeros(0, 'i4'),
                    (0.0, 0.0, sensor_height))

    def to_world(self, pose: Pose2) -> np.ndarray:
        return pose.transform(self.points)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(dict(
            ring=self.ring, azimuth=self.azimuth,
            x=self.points[:, 0], y=self.points[:, 1], z=self.points[:, 2],
        ))


@dataclass(frozen=True)
class OdometryStep:
    """
    Measured relative motion between two consecutive keyframes

    :param rel: Measured relative pose
    :param noise_sigma: Standard deviation ``(sigma_x, sigma_y, sigma_theta)`` of the
        measurement noise
    """

    rel: Pose2
    noise_sigma: tuple = (0.02, 0.02, 0.005)


def raycast(scenario: Scenario, pose: Pose2, cfg: LidarConfig, rng) -> Scan:
    """
    Simulate a LiDAR sweep

    Each ray returns the nearest intersection with either an obstacle segment whose
    height extent contains the ray height at the intersection, or the ground plane
    over a ground cell. Rays reaching the floor level over a void cell, and rays
    beyond ``max_range``, give no return. Gaussian range noise is applied to every
    return.

    :param scenario: The world
    :param pose: Sensor pose
    :param cfg: Sensor parameters
    :param rng: A ``numpy.random.Generator``
    :return: The scan, in the robot frame
    :raises PoseOffMap: If the pose is not on a ground cell
    """
    if not scenario.is_ground([(pose.x, pose.y)])[0]:
        raise PoseOffMap(f'Sensor pose ({pose.x}, {pose.y}) is not on a ground cell')

    h = cfg.sensor_height
    az = cfg.azimuths
    rings = np.asarray(cfg.rings)
    tan_phi = np.tan(rings)
    cos_phi = np.cos(rings)

    # Horizontal ray directions in world frame, shape (n_az, 2)
    heading = pose.theta + az
    u = np.stack([np.cos(heading), np.sin(heading)], axis=-1)

    # Horizontal distance to every segment along every azimuth, shape (n_az, m)
    seg = scenario.segments
    p0 = seg[:, 0:2] - (pose.x, pose.y)
    e = seg[:, 2:4] - seg[:, 0:2]
    denom = u[:, 0:1] * e[:, 1] - u[:, 1:2] * e[:, 0]
    with np.errstate(divide='ignore', invalid='ignore'):
        rho_seg = (p0[:, 0] * e[:, 1] - p0[:, 1] * e[:, 0]) / denom
        t_seg = (p0[:, 0] * u[:, 1:2] - p0[:, 1] * u[:, 0:1]) / denom
    crosses = (np.abs(denom) > 1e-12) & (rho_seg > 1e-6) & (t_seg >= 0) & (t_seg <= 1)
    rho_seg = np.where(crosses, rho_seg, np.inf)

    # Ray height at each crossing, shape (n_rings, n_az, m)
    with np.errstate(invalid='ignore'):
        z = h + rho_seg[None, :, :] * tan_phi[:, None, None]
    blocked = (z >= seg[:, 4]) & (z <= seg[:, 5])
    rho_obs = np.where(blocked, rho_seg[None, :, :], np.inf).min(axis=-1, initial=np.inf)

    # Ground plane crossing, shape (n_rings, n_az)
    with np.errstate(divide='ignore'):
        rho_gnd_ring = np.where(tan_phi < 0, -h / tan_phi, np.inf)
    rho_gnd = np.broadcast_to(rho_gnd_ring[:, None], rho_obs.shape)
    hits_ground_first = rho_gnd < rho_obs
    rho = np.where(hits_ground_first, rho_gnd, rho_obs)

    # Ground returns over void cells are lost
    idx = np.flatnonzero(hits_ground_first & np.isfinite(rho))
    if len(idx):
        r_idx, a_idx = np.unravel_index(idx, rho.shape)
        gxy = (pose.x, pose.y) + rho[r_idx, a_idx][:, None] * u[a_idx]
        void = ~scenario.is_ground(gxy)
        rho[r_idx[void], a_idx[void]] = np.inf

    rng_range = rho / cos_phi[:, None]
    noise = rng.standard_normal(size=rho.shape) * cfg.range_noise_sigma
    noisy_range = rng_range + noise
    valid = np.isfinite(noisy_range) & (noisy_range <= cfg.max_range)

    r_idx, a_idx = np.nonzero(valid)
    rr = noisy_range[r_idx, a_idx]
    horz = rr * cos_phi[r_idx]
    points = np.stack([
        horz * np.cos(az[a_idx]),
        horz * np.sin(az[a_idx]),
        h + rr * np.sin(rings[r_idx]),
    ], axis=-1)

    return Scan(points, r_idx.astype('i4'), a_idx.astype('i4'), (0.0, 0.0, h))


def odometry(prev_gt: Pose2, curr_gt: Pose2, noise_sigma, rng) -> Pose2:
    """
    Simulate a noisy odometry measurement

    :param prev_gt: Ground truth pose of the previous keyframe
    :param curr_gt: Ground truth pose of the current keyframe
    :param noise_sigma: Standard deviation ``(sigma_x, sigma_y, sigma_theta)``
    :param rng: A ``numpy.random.Generator``
    :return: Measured relative pose
    """
    rel = between(prev_gt, curr_gt)
    n = rng.standard_normal(3) * np.asarray(noise_sigma, dtype='f8')
    return Pose2(rel.x + n[0], rel.y + n[1], rel.theta + n[2])


def simulate(scenario: Scenario, keyframes, cfg: LidarConfig, noise_sigma, seed):
    """
    Simulate the sensor data along a sequence of keyframes

    Each keyframe uses its own random substream ``default_rng((seed, index))``, so
    the result for a keyframe does not depend on the processing order.

    :param scenario: The world
    :param keyframes: Ground truth poses
    :param cfg: Sensor parameters
    :param noise_sigma: Odometry noise ``(sigma_x, sigma_y, sigma_theta)``
    :param seed: Non-negative integer seed
    :return: An iterator of tuples ``(index, gt_pose, odometry_step, scan)``, where
        ``odometry_step`` is ``None`` for the first keyframe
    """
    prev = None
    for index, gt in enumerate(keyframes):
        rng = np.random.default_rng((seed, index))
        scan = raycast(scenario, gt, cfg, rng)
        step = None
        if prev is not None:
            step = OdometryStep(odometry(prev, gt, noise_sigma, rng), tuple(noise_sigma))
        prev = gt
        yield index, gt, step, scan


def write_scan_csv(scan: Scan, file, float_format='%.10g'):
    """
    Write a scan to a CSV file with columns ``ring, azimuth, x, y, z``

    :param scan: The scan
    :param file: File name or stream
    :param float_format: Output format for float numbers
    """
    scan.to_dataframe().to_csv(file, index=False, float_format=float_format)
