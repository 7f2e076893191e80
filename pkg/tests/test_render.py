import numpy as np
import pandas as pd
import pytest
from matplotlib.patches import Polygon

from tsgraphs import render
from tsgraphs.world import build_canonical


@pytest.fixture(scope='module')
def scenario():
    return build_canonical('four_rooms')


def room_record(**kw):
    rec = dict(id=0, kind='FOUR_WALL', center=[3, 3], axis=0.0, extents=[4, 4],
               wall_ids=[0, 1, 2, 3], span=None, redetected=False)
    rec.update(kw)
    return rec


class Test_room_polygon:
    def test_four_wall(self):
        poly = render._room_polygon(room_record())
        assert poly.shape == (4, 2)
        assert poly.min(axis=0) == pytest.approx([1, 1])
        assert poly.max(axis=0) == pytest.approx([5, 5])

    def test_two_wall_uses_span(self):
        rec = room_record(kind='TWO_WALL', axis=np.pi / 2, extents=[2, None], span=[-1, 3])
        poly = render._room_polygon(rec)
        assert poly.min(axis=0) == pytest.approx([0, 2])
        assert poly.max(axis=0) == pytest.approx([4, 4])

    def test_unbounded(self):
        rec = room_record(kind='TWO_WALL', extents=[2, None], span=None)
        assert render._room_polygon(rec) is None


class Test_draw_map:
    def test_scenario_only(self, scenario):
        fig = render.draw_map(scenario)
        ax = fig.axes[0]
        assert ax.get_xlim() == pytest.approx((0, 10))
        assert len(ax.lines) == len(scenario.segments)

    def test_rooms_are_patches(self, scenario):
        rooms = [room_record(), room_record(id=1, kind='TWO_WALL', extents=[2, None])]
        fig = render.draw_map(scenario, rooms=rooms)
        patches = [p for p in fig.axes[0].patches if isinstance(p, Polygon)]
        assert len(patches) == 1

    def test_trajectory_legend(self, scenario):
        traj = pd.DataFrame(dict(x=[2, 3], y=[2, 2], gt_x=[2, 3], gt_y=[2, 2.1]))
        fig = render.draw_map(scenario, trajectory=traj, title='run')
        ax = fig.axes[0]
        assert ax.get_legend() is not None
        assert ax.get_title() == 'run'

    def test_existing_axes(self, scenario):
        from matplotlib.figure import Figure
        fig = Figure()
        ax = fig.add_subplot()
        assert render.draw_map(scenario, ax=ax) is fig
