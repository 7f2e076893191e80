"""
The module contains numerical helper functions.
"""

import numpy as np


def bgk_kernel(r, rho):
    """
    Sparse kernel used for Bayesian generalized kernel smoothing

    The kernel is ``k(r) = (2 + cos(2 pi r / rho)) (1 - r / rho) / 3 +
    sin(2 pi r / rho) / (2 pi)`` for ``r < rho``, and zero otherwise. It equals 1 at
    the origin and decreases smoothly to 0 at ``r = rho``.

    :param r: Distance (scalar or array)
    :param rho: Kernel radius
    :return: Kernel weight, same shape as ``r``
    """
    r = np.asarray(r, dtype='f8')
    x = 2 * np.pi * r / rho
    k = (2 + np.cos(x)) * (1 - r / rho) / 3 + np.sin(x) / (2 * np.pi)
    return np.where(r < rho, k, 0.0)


def rectangle(center, axis, extents) -> np.ndarray:
    """
    Corners of an oriented rectangle, counter-clockwise

    :param center: Rectangle center
    :param axis: Direction of the first side, in radians
    :param extents: Side lengths ``(len_a, len_b)``, where ``len_a`` is measured
        along ``axis``
    :return: Array of shape (4, 2)
    """
    u = np.array([np.cos(axis), np.sin(axis)])
    v = np.array([-u[1], u[0]])
    ha, hb = 0.5 * extents[0], 0.5 * extents[1]
    c = np.asarray(center, dtype='f8')
    return np.array([
        c - ha * u - hb * v,
        c + ha * u - hb * v,
        c + ha * u + hb * v,
        c - ha * u + hb * v,
    ])


def fit_line(points):
    """
    Total least squares line fit

    :param points: Array of shape (n, 2), n >= 2
    :return: A tuple ``(theta_n, d, rms)`` where ``theta_n`` is the normal angle,
        ``d`` the signed distance along the normal (may be negative) and ``rms`` the
        root-mean-square orthogonal residual
    """
    points = np.asarray(points, dtype='f8')
    c = points.mean(axis=0)
    q = points - c
    cov = q.T @ q / len(points)
    eigval, eigvec = np.linalg.eigh(cov)
    n = eigvec[:, 0]
    rms = float(np.sqrt(max(eigval[0], 0.0)))
    return float(np.arctan2(n[1], n[0])), float(n @ c), rms


def principal_axis(points):
    """
    Principal direction of a point set

    :param points: Array of shape (n, 2)
    :return: A tuple ``(axis, gap)`` where ``axis`` is the direction of the largest
        covariance eigenvector wrapped to [0, pi), and ``gap`` is the relative
        eigenvalue difference ``(l_max - l_min) / l_max``
    """
    points = np.asarray(points, dtype='f8')
    q = points - points.mean(axis=0)
    cov = q.T @ q / len(points)
    eigval, eigvec = np.linalg.eigh(cov)
    v = eigvec[:, 1]
    axis = float(np.mod(np.arctan2(v[1], v[0]), np.pi))
    if axis >= np.pi - 1e-12:
        axis = 0.0
    gap = float((eigval[1] - eigval[0]) / eigval[1]) if eigval[1] > 0 else 0.0
    return axis, gap


def _max_chord_deviation(points, i0, i1):
    p0, p1 = points[i0], points[i1]
    v = p1 - p0
    length = np.hypot(v[0], v[1])
    q = points[i0:i1 + 1] - p0
    if length == 0:
        dev = np.hypot(q[:, 0], q[:, 1])
    else:
        dev = np.abs(q[:, 0] * v[1] - q[:, 1] * v[0]) / length
    k = int(np.argmax(dev))
    return float(dev[k]), i0 + k


def split_and_merge(points, tol):
    """
    Split an ordered point sequence into piecewise straight segments

    The sequence is split recursively at the point of maximal deviation from the chord
    between the segment end points, as long as the deviation exceeds ``tol``. Adjacent
    segments are afterwards merged while the total least squares fit of the union has
    an RMS residual below ``tol``.

    :param points: Ordered points of shape (n, 2)
    :param tol: Split and merge tolerance
    :return: A list of inclusive index ranges ``(i0, i1)``
    """
    points = np.asarray(points, dtype='f8')
    n = len(points)
    if n < 2:
        return [(0, n - 1)] if n else []

    # Split
    breaks = {0, n - 1}
    stack = [(0, n - 1)]
    while stack:
        i0, i1 = stack.pop()
        if i1 - i0 < 2:
            continue
        dev, k = _max_chord_deviation(points, i0, i1)
        if dev > tol and i0 < k < i1:
            breaks.add(k)
            stack.append((i0, k))
            stack.append((k, i1))

    b = sorted(breaks)
    segments = [(b[i], b[i + 1]) for i in range(len(b) - 1)]

    # Merge
    changed = True
    while changed and len(segments) > 1:
        changed = False
        for i in range(len(segments) - 1):
            i0, i1 = segments[i][0], segments[i + 1][1]
            _, _, rms = fit_line(points[i0:i1 + 1])
            if rms <= tol:
                segments[i:i + 2] = [(i0, i1)]
                changed = True
                break

    # Split points are shared by adjacent segments. Assign them to the left segment.
    return [(i0 if k == 0 else i0 + 1, i1) for k, (i0, i1) in enumerate(segments)]
