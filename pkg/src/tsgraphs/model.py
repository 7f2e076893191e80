"""
The module contains the :class:`Model <tsgraphs.model.Model>` class, which runs the
complete mapping pipeline on a scenario, and helper functions for loading the
configuration.
"""

import copy
import logging
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import tomli as toml
import xarray as xr

from . import io
from .errors import (
    ConfigError, DegenerateCluster, ExperimentError, RobotNotInFreeSpace,
    RobotNotOnNode, TsgError,
)
from .evaluation import MetricsReport, average_reports, compute_metrics, lap_rooms
from .freespace import (
    ClusterConfig, EsdfMap, OccupiedSet, cluster_esdf_baseline, cluster_traversable,
    under_segmented, width_and_axis,
)
from .geometry import Pose2, compose
from .posegraph import Factor, FactorGraph, GraphConfig, incremental_update
from .rooms import RoomConfig, RoomFrame, RoomKind, RoomMap, RoomStrategy
from .sensor import LidarConfig, simulate
from .traversability import TravConfig, TravGrid, bgk_smooth, global_update, segment_ground
from .walls import WallConfig, WallMap, extract_walls
from .world import CANONICAL_NAMES, Scenario, build_canonical, load_scenario

logger = logging.getLogger(__name__)

SEED_VARIABLE = 'TSG_SEED'


@dataclass(frozen=True)
class RunConfig:
    """
    Experiment parameters

    :param scenario: Name of a canonical scenario, or path of a scenario file
    :param backend: Free-space backend, ``traversability`` or ``esdf``
    :param strategy: Room extraction strategy, ``flush`` or ``timer``
    :param seed: Seed of the first repeat. Repeat ``r`` uses ``seed + r``.
    :param repeats: Number of repeats
    :param laps: Number of traverses around the closed trajectory
    :param speed: Robot speed used for the keyframe timestamps, in m/s
    :param spacing: Distance between keyframes, in meters
    :param timing: Timing mode, which runs the repeats serially
    :param repeats_parallel: Number of repeats run in parallel
    :param match_min_dcs: Minimal DCS of a re-detected room
    """

    scenario: str = 'four_rooms'
    backend: str = 'traversability'
    strategy: str = 'flush'
    seed: int = 0
    repeats: int = 10
    laps: int = 2
    speed: float = 0.5
    spacing: float = 0.5
    timing: bool = False
    repeats_parallel: int = 1
    match_min_dcs: float = 0.0

    def __post_init__(self):
        if not self.repeats >= 1:
            raise ConfigError(f'experiment.repeats must be >= 1, got {self.repeats}')
        if not self.laps >= 1:
            raise ConfigError(f'experiment.laps must be >= 1, got {self.laps}')
        if not self.seed >= 0:
            raise ConfigError(f'experiment.seed must be non-negative, got {self.seed}')
        if not (self.speed > 0 and self.spacing > 0):
            raise ConfigError('experiment.speed and experiment.spacing must be positive')
        if not 0 <= self.match_min_dcs <= 1:
            raise ConfigError(
                f'experiment.match_min_dcs must be in [0, 1], got {self.match_min_dcs}')
        if self.timing and self.repeats_parallel != 1:
            logger.warning('Timing mode runs the repeats serially')
            object.__setattr__(self, 'repeats_parallel', 1)

    @staticmethod
    def from_config(conf) -> "RunConfig":
        try:
            return RunConfig(**conf)
        except TypeError as e:
            raise ConfigError(f'Invalid experiment parameters: {e}') from e


@dataclass
class RepeatResult:
    """
    Result of a single repeat

    :param repeat: Repeat number
    :param seed: Seed of the repeat
    :param report: Metrics of the repeat
    :param events: Room events
    :param trajectory: Trajectories, as returned by
        :func:`trajectory_dataset <tsgraphs.io.trajectory_dataset>`
    :param graph: The final factor graph
    :param clusters: ``(keyframe, cluster)`` tuples of the extracted rooms
    :param ate_odometry: Start/end error of dead reckoning, in meters
    """

    repeat: int
    seed: int
    report: MetricsReport
    events: list
    trajectory: xr.Dataset
    graph: FactorGraph
    clusters: list = field(default_factory=list)
    ate_odometry: float = np.nan


@dataclass
class ExperimentResult:
    mean: MetricsReport
    reports: list
    repeats: list


@dataclass
class _Maps:
    grid: TravGrid
    occupied: OccupiedSet
    esdf: EsdfMap = None


class Pipeline:
    """
    Mapping pipeline of a single repeat

    Each keyframe runs the front-end (traversability or ESDF map update, free-space
    clustering, wall extraction and association), the room extraction strategy, and
    an incremental update of the factor graph.
    """

    def __init__(self, scenario: Scenario, run: RunConfig, sensor: LidarConfig = None,
                 odometry_sigma=(0.02, 0.02, 0.005), trav: TravConfig = None,
                 cluster: ClusterConfig = None, walls: WallConfig = None,
                 rooms: RoomConfig = None, posegraph: GraphConfig = None):
        self.scenario = scenario
        self.run_cfg = run
        self.sensor = sensor or LidarConfig()
        self.odometry_sigma = tuple(odometry_sigma)
        self.trav = trav or TravConfig()
        self.cluster = replace(cluster or ClusterConfig(), backend=run.backend)
        self.walls = walls or WallConfig()
        self.rooms = replace(rooms or RoomConfig(), strategy=run.strategy)
        self.posegraph = posegraph or GraphConfig()

    def keyframes(self):
        """
        Ground truth keyframes of all laps

        :return: A tuple ``(poses, t, lap)``
        """
        poses, s = self.scenario.keyframes(self.run_cfg.spacing)
        total = s[-1]
        all_poses, t, lap = [], [], []
        for k in range(self.run_cfg.laps):
            first = 0 if k == 0 else 1
            all_poses += poses[first:]
            t += list((k * total + s[first:]) / self.run_cfg.speed)
            lap += [k] * (len(poses) - first)
        return all_poses, np.array(t), np.array(lap)

    def run(self, repeat=0, seed=0) -> RepeatResult:
        gt, t, lap = self.keyframes()
        pg = self.posegraph

        graph = FactorGraph()
        wall_map = WallMap(self.walls)
        room_map = RoomMap(self.rooms)
        strategy = RoomStrategy(self.rooms, wall_map.landmarks, room_map)
        maps = _Maps(grid=TravGrid(self.trav), occupied=OccupiedSet())
        if self.cluster.backend == 'esdf':
            maps.esdf = EsdfMap.for_scenario(self.scenario, self.cluster)

        odometry = []
        events = []
        room_factors = set()
        flagged = False

        for k, gt_k, step, scan in simulate(self.scenario, gt, self.sensor,
                                           self.odometry_sigma, seed):
            if step is None:
                pose = gt_k
                factors = [Factor.prior_pose(k, gt_k, pg.sigma_prior)]
                odometry.append(gt_k)
            else:
                pose = compose(graph.pose_vars[k - 1], step.rel)
                factors = [Factor.odom(k - 1, k, step.rel, step.noise_sigma, pg.sigma_floor)]
                odometry.append(compose(odometry[-1], step.rel))

            cluster, width, axis = self._front_end(scan, pose, maps)
            if cluster is not None and not flagged:
                flagged = under_segmented(cluster, self.scenario)

            new_walls, wall_ids = {}, []
            for obs in extract_walls(scan, self.walls):
                lm_id, is_new = wall_map.observe(k, obs, pose)
                if is_new:
                    new_walls[lm_id] = wall_map[lm_id].line
                factors.append(Factor.pose_wall(k, lm_id, obs.line, pg.sigma_wall,
                                                pg.sigma_floor))
                wall_ids.append(lm_id)

            frame = RoomFrame(keyframe=k, t=float(t[k]), position=pose.translation,
                              cluster=cluster, width=width, axis=axis,
                              wall_ids=tuple(wall_ids))
            new_rooms = {}
            for ev in strategy.step(frame):
                factors += self._room_factors(ev, room_map, room_factors, new_rooms)
                events.append(ev)

            incremental_update(graph, keyframe=(k, pose), factors=factors,
                               walls=new_walls, rooms=new_rooms,
                               max_iters=pg.max_iters, eps=pg.eps)
            self._sync(graph, wall_map, room_map)

        new_rooms, factors = {}, []
        for ev in strategy.finish():
            factors += self._room_factors(ev, room_map, room_factors, new_rooms)
            events.append(ev)
        if factors:
            incremental_update(graph, factors=factors, rooms=new_rooms,
                               max_iters=pg.max_iters, eps=pg.eps)
            self._sync(graph, wall_map, room_map)

        clusters = [(ev.keyframe, ev.cluster) for ev in events if ev.cluster is not None]
        estimated = np.array([graph.pose_vars[k].to_vector() for k in range(len(gt))])
        gt_arr = np.array([p.to_vector() for p in gt])
        odom_arr = np.array([p.to_vector() for p in odometry])

        per_lap = lap_rooms(events, lap)
        report = compute_metrics(
            per_lap.get(0, []), per_lap.get(1, []), estimated, gt_arr,
            t_pgo=[s.wall_time for s in graph.stats],
            under_segmented=flagged,
            min_dcs=self.run_cfg.match_min_dcs,
        )

        return RepeatResult(
            repeat=repeat,
            seed=seed,
            report=report,
            events=events,
            trajectory=io.trajectory_dataset(t, estimated, gt_arr, odom_arr, lap),
            graph=graph,
            clusters=clusters,
            ate_odometry=float(np.hypot(*(odom_arr[-1, 0:2] - odom_arr[0, 0:2]))),
        )

    def _front_end(self, scan, pose: Pose2, maps: _Maps):
        cfg = self.cluster
        maps.occupied = maps.occupied.with_points(
            scan.to_world(pose), z_band=(cfg.occupied_min_height, cfg.clearance_height))

        try:
            if cfg.backend == 'traversability':
                local = bgk_smooth(segment_ground(scan, pose, maps.grid))
                maps.grid = global_update(maps.grid, local)
                cluster = cluster_traversable(maps.grid, maps.occupied, cfg, pose)
            else:
                maps.esdf.integrate(scan, pose)
                cluster = cluster_esdf_baseline(
                    maps.esdf, cfg, pose, sensor_height=self.sensor.sensor_height)
        except (RobotNotOnNode, RobotNotInFreeSpace) as e:
            logger.debug(str(e))
            return None, None, None

        try:
            width, axis = width_and_axis(
                cluster, pose, near_radius=cfg.near_radius, axis_radius=cfg.axis_radius,
                isotropy_gap=cfg.isotropy_gap)
        except DegenerateCluster as e:
            logger.debug(str(e))
            width, axis = None, None

        return cluster, width, axis

    def _room_factors(self, event, room_map: RoomMap, done: set, new_rooms: dict) -> list:
        pg = self.posegraph
        room = room_map[event.room.id]
        factors = []
        if not event.redetected:
            new_rooms[room.id] = room.center.copy()
            if room.kind is RoomKind.TWO_WALL:
                direction = np.array([-np.sin(room.axis), np.cos(room.axis)])
                factors.append(Factor.room_span(
                    room.id, direction, float(direction @ room.center), pg.sigma_span))
        for a, b in room.pairs:
            key = (room.id, ) + tuple(sorted((a, b)))
            if key in done:
                continue
            done.add(key)
            factors.append(Factor.room_pair(room.id, a, b, pg.sigma_room, pg.sigma_floor))
        return factors

    @staticmethod
    def _sync(graph: FactorGraph, wall_map: WallMap, room_map: RoomMap):
        for j, line in graph.wall_vars.items():
            wall_map.set_line(j, line)
        for k, center in graph.room_vars.items():
            room_map[k].center = center.copy()


def run_repeat(pipeline: Pipeline, repeat, seed) -> RepeatResult:
    """
    Run a single repeat, tagging errors with the repeat number and seed

    :raises ExperimentError: If the pipeline fails
    """
    logger.info(f'Start repeat {repeat} (seed={seed})')
    try:
        result = pipeline.run(repeat, seed)
    except TsgError as e:
        raise ExperimentError(str(e), repeat, seed) from e
    r = result.report
    logger.info(
        f'Finish repeat {repeat}: N1st={r.n_first}, N2nd={r.n_second}, Nre={r.n_re}, '
        f'ATE={r.ate:.3f}, T_PGO={r.t_pgo_total:.3f}')
    return result


class Model:
    """
    A complete experiment on a scenario.

    The class contains the scenario, the parameters of every pipeline component, the
    experiment parameters and the output targets.

    :param pipeline: The mapping pipeline
    :param run_cfg: Experiment parameters
    :param output: Trajectory output, or ``None``
    :param directory: Output directory for metrics and event files, or ``None``
    :param float_format: Output format for float numbers
    """

    def __init__(self, pipeline: Pipeline = None, run_cfg: RunConfig = None,
                 output: io.Output = None, directory=None, float_format='%.10g'):
        self.run_cfg = run_cfg or RunConfig()
        self.pipeline = pipeline
        self.output = output
        self.directory = directory
        self.float_format = float_format
        self.config = {}

    @staticmethod
    def from_config(fname_or_dict) -> "Model":
        """
        Initialize a model object using the :doc:`configuration format </config>`.

        :param fname_or_dict: Config dict or name of config file
        :return: An initialized object.
        """
        conf = load_config(fname_or_dict)

        run_cfg = RunConfig.from_config(conf['experiment'])
        scenario = resolve_scenario(run_cfg.scenario)
        pipeline = Pipeline(
            scenario=scenario,
            run=run_cfg,
            sensor=LidarConfig.from_config(conf['sensor']),
            odometry_sigma=conf['odometry'].get('sigma', (0.02, 0.02, 0.005)),
            trav=TravConfig.from_config(conf['trav']),
            cluster=ClusterConfig.from_config(conf['cluster']),
            walls=WallConfig.from_config(conf['walls']),
            rooms=RoomConfig.from_config(conf['rooms']),
            posegraph=GraphConfig.from_config(conf['posegraph']),
        )

        m = Model(pipeline=pipeline, run_cfg=run_cfg)
        m.config = conf['external']
        out = conf['output']
        if out is not None:
            m.directory = out['directory']
            m.float_format = out['float_format']
            m.output = io.Output.from_config(out['trajectory'])
        return m

    def run(self) -> ExperimentResult:
        """
        Run all repeats using :func:`self.irun() <tsgraphs.model.Model.irun>` and
        average the metrics.

        If an output directory is given, the metrics, the room events, the graph and
        clusters of the first repeat and a map rendering are written to it.

        :return: The averaged and per-repeat results
        """
        if self.directory is not None:
            os.makedirs(self.directory, exist_ok=True)
        results = list(self.irun())
        reports = [r.report for r in results]
        mean = average_reports(reports)
        logger.info(
            f'Mean over {len(reports)} repeats: f_re={mean.f_re:.3f}, '
            f'DCS={mean.dcs:.3f}, ATE={mean.ate:.3f}')

        if self.directory is not None:
            self._write(results, reports, mean)

        return ExperimentResult(mean=mean, reports=reports, repeats=results)

    def irun(self):
        """
        Run the repeats iteratively.

        Repeat ``r`` uses the seed ``seed + r``. The trajectory of each repeat is
        written to the trajectory output before the result is yielded. If
        ``repeats_parallel`` is larger than 1, the repeats are computed in parallel
        processes with dask and yielded in order.

        :return: An iterator of :class:`RepeatResult` objects
        """
        cfg = self.run_cfg
        seeds = [cfg.seed + r for r in range(cfg.repeats)]
        try:
            if cfg.repeats_parallel > 1 and cfg.repeats > 1:
                import dask
                tasks = [dask.delayed(run_repeat)(self.pipeline, r, s)
                         for r, s in enumerate(seeds)]
                results = dask.compute(
                    *tasks, scheduler='processes', num_workers=cfg.repeats_parallel)
            else:
                results = (run_repeat(self.pipeline, r, s) for r, s in enumerate(seeds))

            for result in results:
                if self.output is not None:
                    self.output.write(result.repeat, result.trajectory)
                yield result

        finally:
            if self.output is not None:
                self.output.close()

    def _write(self, results, reports, mean):
        d = self.directory
        io.write_metrics(d, reports, mean, config=self.config,
                         float_format=self.float_format)
        rooms_path = os.path.join(d, io.ROOMS_JSONL)
        for k, r in enumerate(results):
            io.write_room_events(r.events, rooms_path, repeat=r.repeat, append=k > 0)
        results[0].graph.dump(os.path.join(d, io.GRAPH_JSON))
        io.write_clusters(results[0].clusters, os.path.join(d, io.CLUSTERS_JSON))

        from .render import render_run
        render_run(self.pipeline.scenario, results[0], os.path.join(d, io.MAP_SVG))


def run_experiment(cfg: RunConfig, conf=None) -> ExperimentResult:
    """
    Run an experiment

    :param cfg: Experiment parameters, which take precedence over ``conf``
    :param conf: Further :doc:`configuration parameters </config>` (dict object or
        file name)
    :return: The averaged and per-repeat results
    """
    conf = copy.deepcopy(load_file_or_dict(conf if conf is not None else {}))
    experiment = {**conf.get('experiment', {}), **asdict(cfg)}
    scenario = experiment.pop('scenario')
    conf['experiment'] = experiment
    conf['scenario'] = _scenario_section(scenario)
    conf.setdefault('cluster', {})['backend'] = experiment['backend']
    conf.setdefault('rooms', {})['strategy'] = experiment['strategy']
    return Model.from_config(conf).run()


def _scenario_section(scenario) -> dict:
    if scenario in CANONICAL_NAMES:
        return dict(name=scenario)
    return dict(file=str(scenario))


def resolve_scenario(name_or_path) -> Scenario:
    """
    Load a canonical scenario by name, or a scenario file by path
    """
    if name_or_path in CANONICAL_NAMES:
        return build_canonical(name_or_path)
    if os.path.exists(str(name_or_path)):
        return load_scenario(name_or_path)
    raise ConfigError(
        f'Unknown scenario "{name_or_path}", expected a file or one of {CANONICAL_NAMES}')


def load_config(fname_or_dict) -> dict:
    """
    Convert from external to internal config format.

    The :doc:`external config format </config>` is designed to be easy for the user,
    while the internal config format is structured as strictly one entry for each of
    the model subcomponent classes. The scenario, backend and strategy choices are
    collected in the ``experiment`` entry, and the environment variable ``TSG_SEED``
    overrides the configured seed.

    :param fname_or_dict: Either a dict, or the name of a file
    :return: A dict of config options, in internal config format
    """
    external = copy.deepcopy(load_file_or_dict(fname_or_dict))
    c = copy.deepcopy(external)

    known = {'scenario', 'sensor', 'odometry', 'trav', 'cluster', 'walls', 'rooms',
             'posegraph', 'experiment', 'output'}
    unknown = set(c) - known
    if unknown:
        raise ConfigError(f'Unknown config sections: {sorted(unknown)}')

    for key in known:
        c.setdefault(key, {})

    scenario = c.pop('scenario')
    experiment = c['experiment']
    if 'file' in scenario:
        experiment['scenario'] = scenario['file']
    elif 'name' in scenario:
        experiment['scenario'] = scenario['name']
    if 'backend' in c['cluster']:
        experiment['backend'] = c['cluster'].pop('backend')
    if 'strategy' in c['rooms']:
        experiment['strategy'] = c['rooms'].pop('strategy')

    seed = os.environ.get(SEED_VARIABLE)
    if seed is not None:
        try:
            experiment['seed'] = int(seed)
        except ValueError:
            raise ConfigError(f'{SEED_VARIABLE} must be an integer, got "{seed}"') from None

    output = c.pop('output')
    if 'output' in external:
        directory = output.get('directory', '.')
        fmt = output.get('float_format', '%.10g')
        kind = output.get('trajectory', 'csv')
        if kind not in ('csv', 'nc'):
            raise ConfigError(f'output.trajectory must be "csv" or "nc", got "{kind}"')
        fname = os.path.join(directory, f'trajectory.{kind}')
        trajectory = {kind: dict(file=fname)}
        if kind == 'csv':
            trajectory['csv']['float_format'] = fmt
        c['output'] = dict(directory=directory, float_format=fmt, trajectory=trajectory)
    else:
        c['output'] = None

    c['external'] = external
    return c


def load_file_or_dict(f) -> dict:
    if isinstance(f, dict):
        return f
    else:
        with open(f, 'rb') as fp:
            return toml.load(fp)
