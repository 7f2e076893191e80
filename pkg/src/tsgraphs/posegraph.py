"""
The module contains the hierarchical factor graph over keyframe poses, wall lines and
room centers, and its Levenberg-Marquardt solver.

Factors are evaluated in batches, one batch per factor kind. The whitened Jacobian is
assembled as a sparse matrix, and the damped normal equations are solved with a dense
Cholesky factorization.

Variable increments are additive: poses ``(dx, dy, dtheta)`` with the heading
re-wrapped, walls ``(dtheta_n, dd)`` with the line re-canonicalized, rooms
``(dcx, dcy)``.
"""

import enum
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse

from .errors import (
    ConfigError, DivergedStep, MissingVariable, SingularSystem, ValidationError,
)
from .geometry import Line2, Pose2, wrap_angle

logger = logging.getLogger(__name__)

POSE, WALL, ROOM = 'pose', 'wall', 'room'

VAR_DIMS = {POSE: 3, WALL: 2, ROOM: 2}


class FactorKind(enum.Enum):
    PRIOR_POSE = 'PRIOR_POSE'
    ODOM = 'ODOM'
    POSE_WALL = 'POSE_WALL'
    ROOM_PAIR = 'ROOM_PAIR'
    ROOM_SPAN = 'ROOM_SPAN'


# Residual dimension and variable types of each factor kind
FACTOR_LAYOUT = {
    FactorKind.PRIOR_POSE: (3, (POSE, )),
    FactorKind.ODOM: (3, (POSE, POSE)),
    FactorKind.POSE_WALL: (2, (POSE, WALL)),
    FactorKind.ROOM_PAIR: (1, (ROOM, WALL, WALL)),
    FactorKind.ROOM_SPAN: (1, (ROOM, )),
}

# Residual components which are angles
ANGULAR = {
    FactorKind.PRIOR_POSE: (2, ),
    FactorKind.ODOM: (2, ),
    FactorKind.POSE_WALL: (0, ),
    FactorKind.ROOM_PAIR: (),
    FactorKind.ROOM_SPAN: (),
}


@dataclass(frozen=True)
class GraphConfig:
    """
    Parameters of the pose graph

    :param max_iters: Maximal number of LM iterations per update
    :param eps: Relative error decrease threshold
    :param sigma_wall: Standard deviation of wall observations ``(theta_n, d)``
    :param sigma_room: Standard deviation of the room midline constraint, in meters
    :param sigma_prior: Standard deviation of the first pose prior
    :param sigma_floor: Lower limit applied to measurement standard deviations
    :param sigma_span: Standard deviation of the along-corridor position of two-wall
        rooms, in meters
    """

    max_iters: int = 50
    eps: float = 1e-9
    sigma_wall: tuple = (0.02, 0.02)
    sigma_room: float = 0.05
    sigma_prior: float = 1e-3
    sigma_floor: float = 1e-3
    sigma_span: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'sigma_wall', tuple(self.sigma_wall))
        if not self.max_iters >= 1:
            raise ConfigError(f'posegraph.max_iters must be >= 1, got {self.max_iters}')
        if not (self.sigma_prior > 0 and self.sigma_floor > 0 and self.sigma_span > 0):
            raise ConfigError('posegraph standard deviations must be positive')

    @staticmethod
    def from_config(conf) -> "GraphConfig":
        try:
            return GraphConfig(**conf)
        except TypeError as e:
            raise ConfigError(f'Invalid posegraph parameters: {e}') from e


def information(sigma, floor=1e-3) -> np.ndarray:
    """
    Diagonal information matrix from standard deviations

    :param sigma: Standard deviation(s)
    :param floor: Lower limit applied to the standard deviations
    :return: A square numpy array
    """
    sigma = np.maximum(np.atleast_1d(np.asarray(sigma, dtype='f8')), floor)
    return np.diag(1 / sigma**2)


@dataclass(frozen=True, eq=False)
class Factor:
    """
    Factor of the pose graph

    :param kind: Factor kind
    :param keys: Variable keys, tuples of ``(type, id)`` where type is one of
        ``pose``, ``wall``, ``room``
    :param measurement: Measurement vector. ``(x, y, theta)`` for ``PRIOR_POSE`` and
        ``ODOM``, ``(theta_n, d)`` for ``POSE_WALL``, empty for ``ROOM_PAIR``,
        ``(t_x, t_y, s)`` for ``ROOM_SPAN``.
    :param info: Information matrix
    """

    kind: FactorKind
    keys: tuple
    measurement: np.ndarray
    info: np.ndarray

    def __post_init__(self):
        dim, types = FACTOR_LAYOUT[self.kind]
        keys = tuple((str(t), int(i)) for t, i in self.keys)
        if tuple(t for t, _ in keys) != types:
            raise ValidationError(f'{self.kind.value} factor expects variables {types}')
        info = np.atleast_2d(np.asarray(self.info, dtype='f8'))
        if info.shape != (dim, dim) or not np.allclose(info, info.T):
            raise ValidationError(f'{self.kind.value} information must be symmetric '
                                  f'with shape ({dim}, {dim})')
        try:
            sqrt_info = np.linalg.cholesky(info).T
        except np.linalg.LinAlgError:
            raise ValidationError(
                f'{self.kind.value} information is not positive definite') from None
        object.__setattr__(self, 'keys', keys)
        object.__setattr__(self, 'info', info)
        object.__setattr__(self, 'measurement',
                           np.asarray(self.measurement, dtype='f8').ravel())
        object.__setattr__(self, 'sqrt_info', sqrt_info)

    @property
    def dim(self) -> int:
        return FACTOR_LAYOUT[self.kind][0]

    @staticmethod
    def prior_pose(i, pose: Pose2, sigma=1e-3) -> "Factor":
        return Factor(FactorKind.PRIOR_POSE, ((POSE, i), ), pose.to_vector(),
                      information([sigma] * 3 if np.isscalar(sigma) else sigma, 0))

    @staticmethod
    def odom(i, j, rel: Pose2, sigma=(0.02, 0.02, 0.005), floor=1e-3) -> "Factor":
        return Factor(FactorKind.ODOM, ((POSE, i), (POSE, j)), rel.to_vector(),
                      information(sigma, floor))

    @staticmethod
    def pose_wall(i, j, line: Line2, sigma=(0.02, 0.02), floor=1e-3) -> "Factor":
        return Factor(FactorKind.POSE_WALL, ((POSE, i), (WALL, j)),
                      (line.theta_n, line.d), information(sigma, floor))

    @staticmethod
    def room_pair(k, a, b, sigma=0.05, floor=1e-3) -> "Factor":
        return Factor(FactorKind.ROOM_PAIR, ((ROOM, k), (WALL, a), (WALL, b)), (),
                      information(sigma, floor))

    @staticmethod
    def room_span(k, direction, offset, sigma=1.0) -> "Factor":
        return Factor(FactorKind.ROOM_SPAN, ((ROOM, k), ),
                      (direction[0], direction[1], offset), information(sigma))

    def to_dict(self) -> dict:
        return dict(
            kind=self.kind.value,
            keys=[list(k) for k in self.keys],
            measurement=self.measurement.tolist(),
            info=self.info.tolist(),
        )


@dataclass(frozen=True)
class OptStats:
    """
    Statistics of an optimization call

    :param chi2_initial: Weighted squared error before optimization
    :param chi2_final: Weighted squared error after optimization
    :param iters: Number of iterations
    :param wall_time: Wall time of the call, in seconds
    :param history: Error after each accepted step
    """

    chi2_initial: float
    chi2_final: float
    iters: int
    wall_time: float
    history: tuple = ()


class FactorGraph:
    """
    Factor graph over keyframe poses, wall lines and room centers
    """

    def __init__(self):
        self.pose_vars = {}
        self.wall_vars = {}
        self.room_vars = {}
        self.factors = []
        self.stats = []

    def _vars(self, kind) -> dict:
        return {POSE: self.pose_vars, WALL: self.wall_vars, ROOM: self.room_vars}[kind]

    def add_pose(self, i, pose: Pose2):
        self.pose_vars[int(i)] = pose

    def add_wall(self, j, line: Line2):
        self.wall_vars[int(j)] = line

    def add_room(self, k, center):
        self.room_vars[int(k)] = np.array(center, dtype='f8')

    def add_factor(self, factor: Factor):
        for key in factor.keys:
            if key[1] not in self._vars(key[0]):
                raise MissingVariable(f'Factor {factor.kind.value} references missing '
                                      f'{key[0]} variable {key[1]}')
        self.factors.append(factor)

    def get(self, key):
        kind, i = key
        try:
            return self._vars(kind)[i]
        except KeyError:
            raise MissingVariable(f'Missing {kind} variable {i}') from None

    def keys(self) -> list:
        return (
            [(POSE, i) for i in sorted(self.pose_vars)]
            + [(WALL, j) for j in sorted(self.wall_vars)]
            + [(ROOM, k) for k in sorted(self.room_vars)]
        )

    def index(self):
        """
        Column offset of each variable in the state vector

        :return: A tuple ``(offsets, size)``
        """
        offsets = {}
        size = 0
        for key in self.keys():
            offsets[key] = size
            size += VAR_DIMS[key[0]]
        return offsets, size

    @property
    def dim(self) -> int:
        return self.index()[1]

    def snapshot(self) -> dict:
        return dict(
            poses=dict(self.pose_vars),
            walls=dict(self.wall_vars),
            rooms={k: v.copy() for k, v in self.room_vars.items()},
        )

    def restore(self, snap: dict):
        self.pose_vars = dict(snap['poses'])
        self.wall_vars = dict(snap['walls'])
        self.room_vars = {k: v.copy() for k, v in snap['rooms'].items()}

    def retract(self, delta: np.ndarray, offsets: dict):
        """Apply a state increment in place"""
        for key, o in offsets.items():
            kind, i = key
            d = delta[o:o + VAR_DIMS[kind]]
            if kind == POSE:
                p = self.pose_vars[i]
                self.pose_vars[i] = Pose2(p.x + d[0], p.y + d[1], p.theta + d[2])
            elif kind == WALL:
                w = self.wall_vars[i]
                self.wall_vars[i] = Line2(w.theta_n + d[0], w.d + d[1])
            else:
                self.room_vars[i] = self.room_vars[i] + d

    def chi2(self) -> float:
        _, r = linearize(self, jacobian=False)
        return float(r @ r)

    def to_dict(self) -> dict:
        return dict(
            poses={str(i): p.to_vector().tolist() for i, p in sorted(self.pose_vars.items())},
            walls={str(j): [w.theta_n, w.d] for j, w in sorted(self.wall_vars.items())},
            rooms={str(k): c.tolist() for k, c in sorted(self.room_vars.items())},
            factors=[f.to_dict() for f in self.factors],
        )

    def dump(self, path):
        """Write the graph to a JSON file"""
        with open(path, 'w', encoding='utf-8') as fp:
            json.dump(self.to_dict(), fp, indent=1)
        logger.info(f'Graph written to {path}')


def _values(graph, factors, pos):
    """Stacked parameter arrays of the variables at key position ``pos``"""
    kind = factors[0].keys[pos][0]
    items = [graph.get(f.keys[pos]) for f in factors]
    if kind == POSE:
        return np.array([p.to_vector() for p in items]).reshape(-1, 3)
    if kind == WALL:
        return np.array([(w.theta_n, w.d) for w in items]).reshape(-1, 2)
    return np.array(items).reshape(-1, 2)


def _prior_pose(graph, factors):
    x = _values(graph, factors, 0)
    m = np.array([f.measurement for f in factors])
    e = x - m
    e[:, 2] = wrap_angle(e[:, 2])
    J = np.broadcast_to(np.eye(3), (len(factors), 3, 3))
    return e, [J]


def _log_translation(phi):
    """
    Matrix ``V(phi)^-1`` of the SE(2) logarithm and its derivative by ``phi``

    ``V^-1 = [[alpha, h], [-h, alpha]]`` with ``h = phi / 2`` and
    ``alpha = h cot(h)``. Small angles use the series of ``alpha``.
    """
    h = 0.5 * np.asarray(phi, dtype='f8')
    small = np.abs(h) < 1e-3
    hs = np.where(small, 1.0, h)
    alpha = np.where(small, 1 - h ** 2 / 3 - h ** 4 / 45, hs / np.tan(hs))
    dalpha_dh = np.where(
        small, -2 * h / 3 - 4 * h ** 3 / 45, 1 / np.tan(hs) - hs / np.sin(hs) ** 2)

    W = np.stack([np.stack([alpha, h], -1), np.stack([-h, alpha], -1)], 1)
    dW = np.stack([
        np.stack([0.5 * dalpha_dh, np.full_like(h, 0.5)], -1),
        np.stack([np.full_like(h, -0.5), 0.5 * dalpha_dh], -1),
    ], 1)
    return W, dW


def _odom(graph, factors):
    xi = _values(graph, factors, 0)
    xj = _values(graph, factors, 1)
    m = np.array([f.measurement for f in factors])
    n = len(factors)

    ci, si = np.cos(xi[:, 2]), np.sin(xi[:, 2])
    dx, dy = xj[:, 0] - xi[:, 0], xj[:, 1] - xi[:, 1]
    lx = ci * dx + si * dy
    ly = -si * dx + ci * dy
    cm, sm = np.cos(m[:, 2]), np.sin(m[:, 2])
    qx, qy = lx - m[:, 0], ly - m[:, 1]

    # Translation and angle of inverse(measured) * inverse(x_i) * x_j
    t = np.stack([cm * qx + sm * qy, -sm * qx + cm * qy], -1)
    phi = wrap_angle(xj[:, 2] - xi[:, 2] - m[:, 2])
    W, dW = _log_translation(phi)

    e = np.empty((n, 3))
    e[:, 0:2] = np.einsum('nab,nb->na', W, t)
    e[:, 2] = phi

    # A = R(theta_m)^T R(theta_i)^T
    ca, sa = np.cos(xi[:, 2] + m[:, 2]), np.sin(xi[:, 2] + m[:, 2])
    A = np.stack([np.stack([ca, sa], -1), np.stack([-sa, ca], -1)], 1)

    Ti = np.zeros((n, 2, 3))
    Ti[:, :, 0:2] = -A
    Ti[:, 0, 2] = cm * ly - sm * lx
    Ti[:, 1, 2] = -sm * ly - cm * lx
    Tj = np.zeros((n, 2, 3))
    Tj[:, :, 0:2] = A

    dphi = np.einsum('nab,nb->na', dW, t)
    Ji = np.zeros((n, 3, 3))
    Jj = np.zeros((n, 3, 3))
    Ji[:, 0:2, :] = np.einsum('nab,nbc->nac', W, Ti)
    Jj[:, 0:2, :] = np.einsum('nab,nbc->nac', W, Tj)
    Ji[:, 0:2, 2] -= dphi
    Jj[:, 0:2, 2] += dphi
    Ji[:, 2, 2] = -1
    Jj[:, 2, 2] = 1
    return e, [Ji, Jj]


def _pose_wall(graph, factors):
    x = _values(graph, factors, 0)
    w = _values(graph, factors, 1)
    m = np.array([f.measurement for f in factors])
    n = len(factors)

    c, s = np.cos(w[:, 0]), np.sin(w[:, 0])
    theta = w[:, 0] - x[:, 2]
    d = w[:, 1] - c * x[:, 0] - s * x[:, 1]
    tw = wrap_angle(theta)
    flip = (d < 0) | ((d == 0) & ~((tw > -np.pi / 2) & (tw <= np.pi / 2)))
    sign = np.where(flip, -1.0, 1.0)

    e = np.empty((n, 2))
    e[:, 0] = wrap_angle(wrap_angle(theta + np.pi * flip) - m[:, 0])
    e[:, 1] = sign * d - m[:, 1]

    Jx = np.zeros((n, 2, 3))
    Jw = np.zeros((n, 2, 2))
    Jx[:, 0, 2] = -1
    Jx[:, 1, 0] = -sign * c
    Jx[:, 1, 1] = -sign * s
    Jw[:, 0, 0] = 1
    Jw[:, 1, 0] = sign * (s * x[:, 0] - c * x[:, 1])
    Jw[:, 1, 1] = sign
    return e, [Jx, Jw]


def _room_pair(graph, factors):
    center = _values(graph, factors, 0)
    wa = _values(graph, factors, 1)
    wb = _values(graph, factors, 2)
    n = len(factors)

    na = np.stack([np.cos(wa[:, 0]), np.sin(wa[:, 0])], -1)
    nb = np.stack([np.cos(wb[:, 0]), np.sin(wb[:, 0])], -1)
    sign = np.where(np.sum(na * nb, axis=1) < 0, -1.0, 1.0)

    e = (np.sum(center * na, axis=1) - 0.5 * (wa[:, 1] + sign * wb[:, 1]))[:, None]

    Jc = na[:, None, :]
    Ja = np.zeros((n, 1, 2))
    Jb = np.zeros((n, 1, 2))
    Ja[:, 0, 0] = -center[:, 0] * na[:, 1] + center[:, 1] * na[:, 0]
    Ja[:, 0, 1] = -0.5
    Jb[:, 0, 1] = -0.5 * sign
    return e, [Jc, Ja, Jb]


def _room_span(graph, factors):
    center = _values(graph, factors, 0)
    m = np.array([f.measurement for f in factors])
    e = (np.sum(center * m[:, 0:2], axis=1) - m[:, 2])[:, None]
    return e, [m[:, None, 0:2]]


KERNELS = {
    FactorKind.PRIOR_POSE: _prior_pose,
    FactorKind.ODOM: _odom,
    FactorKind.POSE_WALL: _pose_wall,
    FactorKind.ROOM_PAIR: _room_pair,
    FactorKind.ROOM_SPAN: _room_span,
}


def residual(factor: Factor, graph: FactorGraph) -> np.ndarray:
    """
    Unweighted residual of a single factor

    :param factor: The factor
    :param graph: Graph holding the variables
    :return: Residual vector
    :raises MissingVariable: If a referenced variable is not in the graph
    """
    e, _ = KERNELS[factor.kind](graph, [factor])
    return e[0]


def analytic_jacobian(factor: Factor, graph: FactorGraph) -> list:
    """
    Unweighted Jacobian blocks of a single factor, one per connected variable
    """
    _, blocks = KERNELS[factor.kind](graph, [factor])
    return [np.array(b[0]) for b in blocks]


def numeric_jacobian(factor: Factor, graph: FactorGraph, h=1e-6) -> list:
    """
    Jacobian blocks of a single factor by central differences

    :param factor: The factor
    :param graph: Graph holding the variables, left unchanged
    :param h: Step size
    :return: A list of arrays of shape (factor.dim, variable dim)
    """
    angular = list(ANGULAR[factor.kind])
    blocks = []
    for key in factor.keys:
        dim = VAR_DIMS[key[0]]
        J = np.zeros((factor.dim, dim))
        for k in range(dim):
            diff = []
            for step in (h, -h):
                snap = graph.snapshot()
                delta = np.zeros(dim)
                delta[k] = step
                graph.retract(delta, {key: 0})
                diff.append(residual(factor, graph))
                graph.restore(snap)
            de = diff[0] - diff[1]
            de[angular] = wrap_angle(de[angular])
            J[:, k] = de / (2 * h)
        blocks.append(J)
    return blocks


def linearize(graph: FactorGraph, jacobian=True):
    """
    Whitened Jacobian and residual of the whole graph

    :param graph: The graph
    :param jacobian: Set to False to evaluate the residual only
    :return: A tuple ``(J, r)`` where ``J`` is a sparse matrix (or ``None``) and
        ``r`` the stacked whitened residual
    """
    offsets, size = graph.index()
    rows, cols, vals, res = [], [], [], []
    row = 0

    for kind, kernel in KERNELS.items():
        factors = [f for f in graph.factors if f.kind is kind]
        if not factors:
            continue
        dim = FACTOR_LAYOUT[kind][0]
        e, blocks = kernel(graph, factors)
        W = np.stack([f.sqrt_info for f in factors])
        res.append(np.einsum('mij,mj->mi', W, e).ravel())

        if jacobian:
            r_idx = row + np.arange(len(factors) * dim).reshape(-1, dim)
            for pos, J in enumerate(blocks):
                Jw = np.einsum('mij,mjk->mik', W, J)
                vdim = Jw.shape[2]
                base = np.array([offsets[f.keys[pos]] for f in factors])
                c_idx = base[:, None] + np.arange(vdim)
                rows.append(np.broadcast_to(r_idx[:, :, None], Jw.shape).ravel())
                cols.append(np.broadcast_to(c_idx[:, None, :], Jw.shape).ravel())
                vals.append(Jw.ravel())
        row += len(factors) * dim

    r = np.concatenate(res) if res else np.zeros(0)
    if not jacobian:
        return None, r
    J = sparse.coo_matrix(
        (np.concatenate(vals) if vals else np.zeros(0),
         (np.concatenate(rows) if rows else np.zeros(0, 'i8'),
          np.concatenate(cols) if cols else np.zeros(0, 'i8'))),
        shape=(row, size),
    ).tocsr()
    return J, r


def check_anchored(graph: FactorGraph):
    """
    :raises SingularSystem: If the graph has no pose prior or an unconstrained
        variable
    """
    if graph.pose_vars and not any(f.kind is FactorKind.PRIOR_POSE for f in graph.factors):
        raise SingularSystem('The graph has no pose prior')
    used = {key for f in graph.factors for key in f.keys}
    loose = [key for key in graph.keys() if key not in used]
    if loose:
        raise SingularSystem(f'Variables without factors: {loose[:5]}')


def optimize(graph: FactorGraph, max_iters=50, eps=1e-9) -> OptStats:
    """
    Optimize the graph with Levenberg-Marquardt

    The damping starts at 1e-4, is multiplied by 10 after a rejected step and divided
    by 10 after an accepted one. The iteration stops when the relative decrease of
    the error drops below ``eps``, the damping exceeds 1e8, or after ``max_iters``
    iterations. Variables are updated in place.

    :param graph: The graph
    :param max_iters: Maximal number of iterations
    :param eps: Relative error decrease threshold
    :return: Optimization statistics
    :raises SingularSystem: If the normal equations are rank deficient
    :raises DivergedStep: If the final error exceeds the initial error
    """
    start = time.perf_counter()
    check_anchored(graph)
    offsets, size = graph.index()

    J, r = linearize(graph)
    chi2 = chi2_initial = float(r @ r)
    lam = 1e-4
    history = [chi2]
    iters = 0

    while iters < max_iters and chi2 > 1e-12 and size:
        iters += 1
        H = (J.T @ J).toarray()
        g = J.T @ r
        try:
            factor = linalg.cho_factor(H + lam * np.eye(size))
        except linalg.LinAlgError:
            raise SingularSystem('Normal equations are not positive definite') from None
        delta = -linalg.cho_solve(factor, g)

        snap = graph.snapshot()
        graph.retract(delta, offsets)
        chi2_new = graph.chi2()

        if chi2_new <= chi2:
            decrease = chi2 - chi2_new
            chi2 = chi2_new
            history.append(chi2)
            lam = max(lam / 10, 1e-12)
            logger.debug(f'LM iteration {iters}: chi2={chi2:.6g}, lambda={lam:.1e}')
            if decrease <= eps * chi2 or chi2 <= 1e-12:
                break
            J, r = linearize(graph)
        else:
            graph.restore(snap)
            lam *= 10
            logger.debug(f'LM iteration {iters}: rejected, lambda={lam:.1e}')
            if lam > 1e8:
                break

    _, r = linearize(graph, jacobian=False)
    chi2_check = float(r @ r)
    increasing = any(b > a for a, b in zip(history, history[1:]))
    if increasing or chi2_check > chi2_initial * (1 + 1e-9) + 1e-12:
        raise DivergedStep(
            f'chi2 increased from {chi2_initial:.6g} to {chi2_check:.6g}')

    stats = OptStats(
        chi2_initial=chi2_initial,
        chi2_final=chi2,
        iters=iters,
        wall_time=time.perf_counter() - start,
        history=tuple(history),
    )
    return stats


def incremental_update(graph: FactorGraph, keyframe=None, factors=(), walls=None,
                       rooms=None, max_iters=50, eps=1e-9) -> OptStats:
    """
    Add variables and factors, then optimize

    The wall time of each call is appended to ``graph.stats``.

    :param graph: The graph
    :param keyframe: A tuple ``(pose_id, Pose2)`` or ``None``
    :param factors: New factors
    :param walls: Mapping of new wall ids to initial lines
    :param rooms: Mapping of new room ids to initial centers
    :param max_iters: Maximal number of iterations
    :param eps: Relative error decrease threshold
    :return: Optimization statistics
    """
    if keyframe is not None:
        graph.add_pose(*keyframe)
    for j, line in (walls or {}).items():
        graph.add_wall(j, line)
    for k, center in (rooms or {}).items():
        graph.add_room(k, center)
    for f in factors:
        graph.add_factor(f)

    stats = optimize(graph, max_iters=max_iters, eps=eps)
    graph.stats.append(stats)
    return stats
