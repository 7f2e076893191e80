"""
The module computes the consistency and accuracy metrics of a run: the number of
rooms per traverse and of re-detected rooms, the Dice coefficient score (DCS) of
matched rooms, the room center distance, the start/end trajectory error and the time
spent in pose graph optimization.
"""

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
import pandas as pd
from shapely.geometry import Polygon

from .errors import OpenTrajectory, UnboundedRoom
from .numerics import rectangle

logger = logging.getLogger(__name__)

# Output column names of each report field
COLUMNS = dict(
    n_first='N1st',
    n_second='N2nd',
    n_re='Nre',
    f_re='f_re',
    dcs='DCS',
    dcs_best='dcs_best',
    d_center='d_center',
    ate='ATE',
    ate_rmse='ate_rmse',
    t_pgo_total='T_PGO',
    t_pgo_mean='T_PGO_mean',
    under_segmented='under_segmented',
)


@dataclass(frozen=True)
class MetricsReport:
    """
    Metrics of a run, or averaged metrics of several runs

    :param n_first: Number of rooms detected in the first traverse
    :param n_second: Number of rooms detected in the second traverse
    :param n_re: Number of first-traverse rooms detected again
    :param f_re: Re-detection frequency ``n_re / n_first``
    :param dcs: Mean DCS over matched room pairs
    :param dcs_best: DCS of the most overlapped pair
    :param d_center: Center distance of the most overlapped pair, in meters
    :param ate: Distance between estimated start and end positions, in meters
    :param ate_rmse: RMS position error over all keyframes, in meters
    :param t_pgo_total: Total optimization wall time, in seconds
    :param t_pgo_mean: Mean optimization wall time per update, in seconds
    :param under_segmented: True (or the fraction of runs) if a cluster spanned more
        than one functional space
    """

    n_first: float
    n_second: float
    n_re: float
    f_re: float
    dcs: float
    dcs_best: float
    d_center: float
    ate: float
    ate_rmse: float = np.nan
    t_pgo_total: float = 0.0
    t_pgo_mean: float = 0.0
    under_segmented: float = False

    def __post_init__(self):
        if self.n_re > min(self.n_first, self.n_second) + 1e-9:
            raise ValueError(f'n_re={self.n_re} exceeds the number of detected rooms')
        if not (np.isnan(self.dcs) or 0 <= self.dcs <= 1 + 1e-12):
            raise ValueError(f'dcs={self.dcs} outside [0, 1]')

    def to_dict(self) -> dict:
        return {k: _plain(v) for k, v in asdict(self).items()}

    def to_row(self) -> dict:
        """Report values keyed by output column name"""
        return {COLUMNS[k]: v for k, v in self.to_dict().items()}


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    v = float(v)
    return None if np.isnan(v) else v


def re_detection_frequency(n_re, n_first) -> float:
    """Fraction of first-traverse rooms detected again, NaN if none was detected"""
    return float(n_re / n_first) if n_first > 0 else np.nan


def _footprint_corners(room) -> np.ndarray:
    center, axis, extents = room.footprint()
    return rectangle(center, axis, extents)


def dcs(a, b) -> float:
    """
    Dice coefficient score of two room footprints

    ``DCS = 2 |A and B| / (|A| + |B|)``, with the exact intersection area of the two
    oriented rectangles. Two-wall rooms are truncated to their observed span. The
    result does not depend on the order of the arguments.

    :param a: First room
    :param b: Second room
    :return: Score in [0, 1]
    :raises UnboundedRoom: If a room has no bounded footprint
    """
    ca, cb = _footprint_corners(a), _footprint_corners(b)
    if tuple(cb.ravel()) < tuple(ca.ravel()):
        ca, cb = cb, ca
    pa, pb = Polygon(ca), Polygon(cb)
    total = pa.area + pb.area
    if total <= 0:
        return 0.0
    inter = pa.intersection(pb).area
    return float(min(1.0, 2 * inter / total))


def match_traverses(rooms_1st, rooms_2nd, min_dcs=0.0):
    """
    Greedy maximum-overlap matching of the rooms of two traverses

    The pair with the highest DCS is matched and removed, until no pair with positive
    DCS of at least ``min_dcs`` remains.

    :param rooms_1st: Rooms of the first traverse
    :param rooms_2nd: Rooms of the second traverse
    :param min_dcs: Minimal DCS of a matched pair
    :return: A tuple ``(n_re, pairs)``, where ``pairs`` is a list of
        ``(i, j, dcs, d_center)`` tuples in matching order; the first pair is the most
        overlapped one
    """
    n1, n2 = len(rooms_1st), len(rooms_2nd)
    score = np.zeros((n1, n2))
    for i, a in enumerate(rooms_1st):
        for j, b in enumerate(rooms_2nd):
            try:
                score[i, j] = dcs(a, b)
            except UnboundedRoom:
                logger.debug(f'Unbounded room in pair ({i}, {j})')

    pairs = []
    valid = (score > 0) & (score >= min_dcs)
    while np.any(valid):
        flat = np.where(valid, score, -1).ravel()
        i, j = divmod(int(np.argmax(flat)), n2)
        d_center = float(np.hypot(*(rooms_1st[i].center - rooms_2nd[j].center)))
        pairs.append((i, j, float(score[i, j]), d_center))
        valid[i, :] = False
        valid[:, j] = False

    return len(pairs), pairs


def lap_rooms(events, lap_of_keyframe) -> dict:
    """
    Rooms detected in each lap

    Each room id counts once per lap, with the geometry of its first event in that
    lap.

    :param events: Iterable of :class:`RoomEvent <tsgraphs.rooms.RoomEvent>`
    :param lap_of_keyframe: Array mapping keyframe id to lap number
    :return: A dict mapping lap number to a list of rooms
    """
    out = {}
    seen = set()
    for ev in events:
        lap = int(lap_of_keyframe[ev.keyframe])
        if (lap, ev.room.id) in seen:
            continue
        seen.add((lap, ev.room.id))
        out.setdefault(lap, []).append(ev.room)
    return out


def compute_metrics(rooms_1st, rooms_2nd, estimated, ground_truth, t_pgo=(),
                    under_segmented=False, min_dcs=0.0) -> MetricsReport:
    """
    Metrics of a double traverse

    :param rooms_1st: Rooms of the first traverse
    :param rooms_2nd: Rooms of the second traverse
    :param estimated: Estimated keyframe poses, array of shape (n, 3)
    :param ground_truth: Ground truth keyframe poses, array of shape (n, 3)
    :param t_pgo: Wall time of each optimization call, in seconds
    :param under_segmented: Ground truth under-segmentation flag of the run
    :param min_dcs: Minimal DCS of a re-detection
    :return: The report
    :raises OpenTrajectory: If the ground truth trajectory does not end at its start
    """
    estimated = np.asarray(estimated, dtype='f8').reshape(-1, 3)
    ground_truth = np.asarray(ground_truth, dtype='f8').reshape(-1, 3)
    if not len(ground_truth):
        raise OpenTrajectory('Empty trajectory')
    gap = np.hypot(*(ground_truth[-1, 0:2] - ground_truth[0, 0:2]))
    if gap > 1e-6:
        raise OpenTrajectory(f'Trajectory ends {gap:.3f} m from its start')

    n_re, pairs = match_traverses(rooms_1st, rooms_2nd, min_dcs)
    n_first, n_second = len(rooms_1st), len(rooms_2nd)
    scores = [p[2] for p in pairs]
    t_pgo = np.asarray(t_pgo, dtype='f8')

    return MetricsReport(
        n_first=n_first,
        n_second=n_second,
        n_re=n_re,
        f_re=re_detection_frequency(n_re, n_first),
        dcs=float(np.mean(scores)) if scores else np.nan,
        dcs_best=pairs[0][2] if pairs else np.nan,
        d_center=pairs[0][3] if pairs else np.nan,
        ate=float(np.hypot(*(estimated[-1, 0:2] - estimated[0, 0:2]))),
        ate_rmse=float(np.sqrt(np.mean(
            np.sum((estimated[:, 0:2] - ground_truth[:, 0:2])**2, axis=1)))),
        t_pgo_total=float(t_pgo.sum()),
        t_pgo_mean=float(t_pgo.mean()) if len(t_pgo) else 0.0,
        under_segmented=bool(under_segmented),
    )


def reports_frame(reports) -> pd.DataFrame:
    """Reports as a data frame with one row per run, indexed by ``repeat``"""
    df = pd.DataFrame([asdict(r) for r in reports], columns=[f.name for f in fields(MetricsReport)])
    df.index.name = 'repeat'
    return df.astype('f8')


def average_reports(reports) -> MetricsReport:
    """
    Arithmetic mean of several reports

    Counts become fractional. The re-detection frequency of the mean is the ratio of
    the mean counts, and ``under_segmented`` becomes the fraction of flagged runs.
    """
    mean = reports_frame(reports).mean(skipna=True)
    values = {k: float(v) for k, v in mean.items()}
    values['f_re'] = re_detection_frequency(values['n_re'], values['n_first'])
    return MetricsReport(**values)
