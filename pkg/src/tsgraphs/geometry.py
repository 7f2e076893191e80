"""
The module contains the planar geometry used throughout the package: SE(2) poses
(:class:`Pose2`), oriented 2-D lines (:class:`Line2`) and the frame transforms between
them.

Walls are vertical planes, and the floor is flat, so every 3-D quantity of interest
projects to the plane without loss: keyframe poses become SE(2) elements, wall planes
become lines.
"""

from dataclasses import dataclass

import numpy as np


def wrap_angle(a):
    """
    Wrap angle(s) to the interval (-pi, pi]

    Values already inside the interval are returned unchanged, which makes the
    operation exactly idempotent.

    :param a: Angle in radians (scalar or array)
    :return: Wrapped angle, float if the input is a scalar
    """
    a = np.asarray(a, dtype='f8')
    inside = (a > -np.pi) & (a <= np.pi)
    w = np.where(inside, a, np.pi - np.mod(np.pi - a, 2 * np.pi))
    if w.ndim == 0:
        return float(w)
    return w


def rotation(theta) -> np.ndarray:
    """
    2x2 rotation matrix

    :param theta: Rotation angle in radians
    :return: A numpy array of shape (2, 2)
    """
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    """
    Pose of the robot (or a keyframe) in the plane.

    The heading is wrapped to (-pi, pi] on construction.

    :param x: Position in meters
    :param y: Position in meters
    :param theta: Heading in radians
    """

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'y', float(self.y))
        object.__setattr__(self, 'theta', wrap_angle(self.theta))

    @staticmethod
    def identity() -> "Pose2":
        return Pose2(0.0, 0.0, 0.0)

    @staticmethod
    def from_vector(v) -> "Pose2":
        return Pose2(v[0], v[1], v[2])

    def to_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def matrix(self) -> np.ndarray:
        """
        Homogeneous 3x3 transformation matrix
        """
        m = np.eye(3)
        m[:2, :2] = rotation(self.theta)
        m[:2, 2] = self.x, self.y
        return m

    def transform(self, points) -> np.ndarray:
        """
        Map points from the local frame of the pose to the parent frame.

        Only the first two columns are transformed. Additional columns (typically
        the height ``z``) are passed through unchanged.

        :param points: Array of shape (n, 2) or (n, 3)
        :return: Transformed points, same shape as input
        """
        points = np.asarray(points, dtype='f8')
        out = points.copy()
        c, s = np.cos(self.theta), np.sin(self.theta)
        out[..., 0] = c * points[..., 0] - s * points[..., 1] + self.x
        out[..., 1] = s * points[..., 0] + c * points[..., 1] + self.y
        return out

    def inverse_transform(self, points) -> np.ndarray:
        """
        Map points from the parent frame to the local frame of the pose.
        """
        points = np.asarray(points, dtype='f8')
        out = points.copy()
        c, s = np.cos(self.theta), np.sin(self.theta)
        dx = points[..., 0] - self.x
        dy = points[..., 1] - self.y
        out[..., 0] = c * dx + s * dy
        out[..., 1] = -s * dx + c * dy
        return out

    def __matmul__(self, other: "Pose2") -> "Pose2":
        return compose(self, other)


def compose(a: Pose2, b: Pose2) -> Pose2:
    """
    Group composition ``a o b``

    :param a: Left operand
    :param b: Right operand
    :return: The pose ``b`` expressed in the parent frame of ``a``
    """
    c, s = np.cos(a.theta), np.sin(a.theta)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def inverse(a: Pose2) -> Pose2:
    """
    Group inverse, such that ``compose(a, inverse(a))`` is the identity
    """
    c, s = np.cos(a.theta), np.sin(a.theta)
    return Pose2(
        -(c * a.x + s * a.y),
        -(-s * a.x + c * a.y),
        -a.theta,
    )


def between(a: Pose2, b: Pose2) -> Pose2:
    """
    Relative pose of ``b`` seen from ``a``, i.e. ``inverse(a) o b``
    """
    return compose(inverse(a), b)


@dataclass(frozen=True)
class Line2:
    """
    Oriented line ``{p : p . n(theta_n) = d}`` in the plane.

    The line is stored in canonical form: ``d >= 0``, and if ``d == 0`` the normal
    angle lies in (-pi/2, pi/2]. Construction always canonicalizes, so
    ``Line2(t, d) == Line2(t + pi, -d)``.

    :param theta_n: Direction of the unit normal, in radians
    :param d: Signed distance from the origin along the normal, in meters
    """

    theta_n: float
    d: float

    def __post_init__(self):
        theta, d = canonical_line(self.theta_n, self.d)
        object.__setattr__(self, 'theta_n', theta)
        object.__setattr__(self, 'd', d)

    def normal(self) -> np.ndarray:
        return np.array([np.cos(self.theta_n), np.sin(self.theta_n)])

    def direction(self) -> np.ndarray:
        """Unit vector along the line (normal rotated by +90 degrees)"""
        return np.array([-np.sin(self.theta_n), np.cos(self.theta_n)])

    def distance(self, points) -> np.ndarray:
        """
        Signed distance from points to the line, positive on the side the normal
        points to

        :param points: Array of shape (n, 2)
        :return: Array of shape (n, )
        """
        points = np.asarray(points, dtype='f8')
        return points[..., 0:2] @ self.normal() - self.d

    def foot(self) -> np.ndarray:
        """Point on the line closest to the origin"""
        return self.normal() * self.d


def canonical_line(theta_n, d):
    """
    Canonical parameters of a line

    :param theta_n: Normal angle in radians
    :param d: Signed distance in meters
    :return: A tuple ``(theta_n, d)`` with ``d >= 0``
    """
    theta_n = float(theta_n)
    d = float(d) + 0.0
    if d < 0:
        theta_n = theta_n + np.pi
        d = -d
    theta_n = wrap_angle(theta_n)
    if d == 0 and not (-np.pi / 2 < theta_n <= np.pi / 2):
        theta_n = wrap_angle(theta_n + np.pi)
    return theta_n, d


def line_to_frame(pose: Pose2, world_line: Line2) -> Line2:
    """
    Express a world line in the local frame of a pose

    :param pose: Pose of the local frame
    :param world_line: Line in world coordinates
    :return: Canonical line in local coordinates
    """
    n = world_line.normal()
    return Line2(
        world_line.theta_n - pose.theta,
        world_line.d - n[0] * pose.x - n[1] * pose.y,
    )


def line_to_world(pose: Pose2, local_line: Line2) -> Line2:
    """
    Express a line given in the local frame of a pose in world coordinates.
    Inverse of :func:`line_to_frame`.
    """
    theta = local_line.theta_n + pose.theta
    n = np.array([np.cos(theta), np.sin(theta)])
    return Line2(theta, local_line.d + n[0] * pose.x + n[1] * pose.y)


def point_segment_distance(points, p0, p1) -> np.ndarray:
    """
    Distance from points to a line segment

    :param points: Array of shape (n, 2)
    :param p0: First end point
    :param p1: Second end point
    :return: Array of shape (n, )
    """
    points = np.atleast_2d(np.asarray(points, dtype='f8'))
    p0 = np.asarray(p0, dtype='f8')
    p1 = np.asarray(p1, dtype='f8')
    v = p1 - p0
    vv = v @ v
    t = np.clip((points - p0) @ v / vv, 0, 1) if vv > 0 else np.zeros(len(points))
    closest = p0 + t[:, None] * v
    return np.linalg.norm(points - closest, axis=1)
