"""
The module renders a run as an SVG map: ground and void cells, obstacles, extracted
clusters, rooms and the trajectories.
"""

import json
import logging
import os

import numpy as np
import pandas as pd
from matplotlib.figure import Figure
from matplotlib.patches import Polygon

from . import io
from .numerics import rectangle

logger = logging.getLogger(__name__)

RAIL_COLOR = '#c07000'
WALL_COLOR = '#202020'


def _room_polygon(record):
    """Footprint of a room event record, or None if unbounded"""
    center = np.asarray(record['center'], dtype='f8')
    axis = record['axis']
    len_a, len_b = record['extents']
    if len_b is None:
        span = record.get('span')
        if span is None:
            return None
        t = np.array([-np.sin(axis), np.cos(axis)])
        center = center + 0.5 * (span[0] + span[1]) * t
        len_b = span[1] - span[0]
    return rectangle(center, axis, (len_a, len_b))


def draw_map(scenario, rooms=(), clusters=(), trajectory=None, title=None,
             ax=None) -> Figure:
    """
    Draw a scenario with the results of a run

    :param scenario: The scenario
    :param rooms: Room event records, as written to ``rooms.jsonl``
    :param clusters: Cluster records, as written to ``clusters.json``
    :param trajectory: Data frame with columns ``x, y, gt_x, gt_y``, or ``None``
    :param title: Figure title
    :param ax: Axes to draw into. A new figure is created if omitted.
    :return: A matplotlib figure
    """
    if ax is None:
        fig = Figure(figsize=(8, 8 * scenario.extent[1] / max(scenario.extent[0], 1e-9)))
        ax = fig.add_subplot()
    else:
        fig = ax.figure

    w, h = scenario.extent
    ax.imshow(
        scenario.ground, origin='lower', extent=(0, w, 0, h), cmap='Greys_r',
        vmin=-1, vmax=1, interpolation='nearest',
    )

    for x0, y0, x1, y1, _, z_high in scenario.segments:
        tall = z_high > 1.2
        ax.plot([x0, x1], [y0, y1], color=WALL_COLOR if tall else RAIL_COLOR,
                linewidth=2 if tall else 1.2, linestyle='-' if tall else '--')

    for k, c in enumerate(clusters):
        nodes = np.asarray(c['nodes'], dtype='f8').reshape(-1, 2)
        ax.scatter(nodes[:, 0], nodes[:, 1], s=2, color=f'C{k % 10}', alpha=0.4)

    for rec in rooms:
        poly = _room_polygon(rec)
        if poly is None:
            continue
        color = f'C{rec["id"] % 10}'
        ax.add_patch(Polygon(poly, closed=True, fill=False, edgecolor=color,
                             linestyle=':' if rec.get('redetected') else '-'))
        ax.plot(*rec['center'], marker='+', color=color)

    if trajectory is not None:
        ax.plot(trajectory['gt_x'], trajectory['gt_y'], color='0.5', linewidth=1,
                label='ground truth')
        ax.plot(trajectory['x'], trajectory['y'], color='C3', linewidth=1,
                label='estimate')
        ax.legend(loc='upper right')

    ax.set_xlim(0, w)
    ax.set_ylim(0, h)
    ax.set_aspect('equal')
    ax.set_xlabel('x (m)')
    ax.set_ylabel('y (m)')
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig


def render_run(scenario, result, path):
    """
    Render a single repeat to an SVG file

    :param scenario: The scenario
    :param result: A :class:`RepeatResult <tsgraphs.model.RepeatResult>`
    :param path: Output file name
    """
    traj = result.trajectory.to_dataframe()
    fig = draw_map(
        scenario,
        rooms=[ev.to_dict() for ev in result.events],
        clusters=[c.to_dict() for _, c in result.clusters],
        trajectory=traj,
        title=f'{scenario.name}, repeat {result.repeat}',
    )
    fig.savefig(path, format='svg')
    logger.info(f'Written {path}')


def render_directory(run_dir, path, repeat=0):
    """
    Render the results stored in a run directory

    :param run_dir: Run directory containing ``metrics.json`` and ``rooms.jsonl``
    :param path: Output SVG file name
    :param repeat: Repeat to render
    """
    from .model import load_config, resolve_scenario

    with open(os.path.join(run_dir, io.METRICS_JSON), encoding='utf-8') as fp:
        config = json.load(fp).get('config', {})
    experiment = load_config(config)['experiment']
    scenario = resolve_scenario(experiment.get('scenario', 'four_rooms'))

    rooms_path = os.path.join(run_dir, io.ROOMS_JSONL)
    rooms = []
    if os.path.exists(rooms_path):
        rooms = [r for r in io.read_room_events(rooms_path) if r.get('repeat', 0) == repeat]

    clusters = []
    clusters_path = os.path.join(run_dir, io.CLUSTERS_JSON)
    if os.path.exists(clusters_path) and repeat == 0:
        with open(clusters_path, encoding='utf-8') as fp:
            clusters = json.load(fp)

    trajectory = None
    csv_path = os.path.join(run_dir, 'trajectory.csv')
    if os.path.exists(csv_path):
        df = pd.read_csv(csv_path)
        trajectory = df[df['repeat'] == repeat]

    fig = draw_map(scenario, rooms, clusters, trajectory,
                   title=f'{scenario.name}, repeat {repeat}')
    fig.savefig(path, format='svg')
    logger.info(f'Written {path}')
