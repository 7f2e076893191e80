import numpy as np
import pytest

from tsgraphs import model
from tsgraphs.errors import ConfigError
from tsgraphs.model import Model, RunConfig


def small_config(**experiment):
    conf = dict(
        scenario=dict(name='four_rooms'),
        sensor=dict(h_res_deg=1.0),
        experiment=dict(seed=3, repeats=1, laps=1),
    )
    conf['experiment'].update(experiment)
    return conf


class Test_load_config:
    def test_collects_choices_in_experiment(self):
        conf = model.load_config(dict(
            scenario=dict(name='open_corridor'),
            cluster=dict(backend='esdf', lambda_th=1.0),
            rooms=dict(strategy='timer'),
        ))
        assert conf['experiment'] == dict(
            scenario='open_corridor', backend='esdf', strategy='timer')
        assert conf['cluster'] == dict(lambda_th=1.0)
        assert conf['rooms'] == {}

    def test_scenario_file(self):
        conf = model.load_config(dict(scenario=dict(file='my_scenario.json')))
        assert conf['experiment']['scenario'] == 'my_scenario.json'

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            model.load_config(dict(pipe=dict(flow=1)))

    def test_seed_from_environment(self, monkeypatch):
        monkeypatch.setenv('TSG_SEED', '42')
        conf = model.load_config(dict(experiment=dict(seed=1)))
        assert conf['experiment']['seed'] == 42

    def test_invalid_seed_from_environment(self, monkeypatch):
        monkeypatch.setenv('TSG_SEED', 'abc')
        with pytest.raises(ConfigError):
            model.load_config({})

    def test_no_output(self, monkeypatch):
        monkeypatch.delenv('TSG_SEED', raising=False)
        assert model.load_config({})['output'] is None

    def test_output_mapping(self):
        conf = model.load_config(dict(output=dict(directory='out', trajectory='nc')))
        assert conf['output']['directory'] == 'out'
        assert conf['output']['trajectory'] == dict(nc=dict(file='out/trajectory.nc'))

    def test_invalid_trajectory_format(self):
        with pytest.raises(ConfigError):
            model.load_config(dict(output=dict(trajectory='xlsx')))

    def test_keeps_external_config(self):
        external = dict(walls=dict(fit_tol=0.04))
        conf = model.load_config(external)
        assert conf['external'] == external
        assert conf['external'] is not external


class Test_RunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.scenario, cfg.backend, cfg.strategy) == ('four_rooms', 'traversability', 'flush')
        assert cfg.repeats == 10
        assert cfg.match_min_dcs == 0

    def test_timing_runs_serially(self):
        cfg = RunConfig(timing=True, repeats_parallel=4)
        assert cfg.repeats_parallel == 1

    @pytest.mark.parametrize('key, value', [('repeats', 0), ('laps', 0), ('seed', -1),
                                            ('speed', 0),
                                            ('match_min_dcs', 1.5)])
    def test_invalid(self, key, value):
        with pytest.raises(ConfigError):
            RunConfig(**{key: value})

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_config(dict(speeed=1))


class Test_resolve_scenario:
    def test_canonical(self):
        assert model.resolve_scenario('long_corridor').name == 'long_corridor'

    def test_file(self, tmp_path):
        from tsgraphs.world import build_canonical, save_scenario
        path = tmp_path / 'scenario.json'
        save_scenario(build_canonical('four_rooms'), path)
        assert model.resolve_scenario(path).name == 'four_rooms'

    def test_unknown(self):
        with pytest.raises(ConfigError):
            model.resolve_scenario('five_rooms')


class Test_Pipeline_keyframes:
    def test_laps_share_the_start_keyframe(self):
        m = Model.from_config(small_config(laps=2))
        poses, t, lap = m.pipeline.keyframes()
        assert len(poses) == 2 * 33 - 1
        assert lap.tolist().count(0) == 33
        assert np.all(np.diff(t) > 0)
        assert t[-1] == pytest.approx(2 * 16 / 0.5)


class Test_Model_run:
    @pytest.fixture(scope='class')
    def result(self):
        return Model.from_config(small_config()).run()

    def test_single_repeat(self, result):
        assert len(result.repeats) == 1
        assert result.repeats[0].seed == 3
        assert result.reports[0] is result.repeats[0].report

    def test_trajectory_is_closed(self, result):
        traj = result.repeats[0].trajectory
        assert traj.sizes['keyframe'] == 33
        assert traj.gt_x.values[0] == pytest.approx(traj.gt_x.values[-1])
        assert result.mean.ate < 1.0

    def test_reports_match_events(self, result):
        rep = result.repeats[0]
        ids = {ev.room.id for ev in rep.events}
        assert rep.report.n_first == len(ids)
        assert rep.report.n_second == 0
        assert set(rep.graph.room_vars) == ids

    def test_graph_variables(self, result):
        graph = result.repeats[0].graph
        assert len(graph.pose_vars) == 33
        assert len(graph.wall_vars) >= 1
        assert len(graph.stats) >= 33

    def test_deterministic(self, result):
        again = Model.from_config(small_config()).run()
        a = result.repeats[0].trajectory
        b = again.repeats[0].trajectory
        assert a.x.values.tolist() == b.x.values.tolist()
        assert a.odom_y.values.tolist() == b.odom_y.values.tolist()


class Test_Model_output:
    def test_writes_run_directory(self, tmp_path):
        conf = small_config()
        conf['output'] = dict(directory=str(tmp_path))
        Model.from_config(conf).run()

        for name in ('metrics.csv', 'metrics.json', 'rooms.jsonl', 'graph.json',
                     'clusters.json', 'map.svg', 'trajectory.csv'):
            assert (tmp_path / name).exists(), name

        import pandas as pd
        traj = pd.read_csv(tmp_path / 'trajectory.csv')
        assert traj['repeat'].unique().tolist() == [0]
        assert len(traj) == 33


@pytest.mark.slow
class Test_run_experiment:
    def test_double_traverse(self):
        result = model.run_experiment(RunConfig(repeats=2, seed=0))
        assert len(result.reports) == 2
        assert result.mean.n_first >= 3
        assert 0 < result.mean.f_re <= 1

    def test_esdf_under_segments_the_open_corridor(self):
        esdf = model.run_experiment(
            RunConfig(scenario='open_corridor', backend='esdf', repeats=1, laps=1))
        trav = model.run_experiment(
            RunConfig(scenario='open_corridor', backend='traversability', repeats=1, laps=1))
        assert esdf.mean.under_segmented == 1
        assert trav.mean.under_segmented == 0
