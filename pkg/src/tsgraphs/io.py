"""
The module contains functions and classes for writing experiment results to disk.

Per-keyframe trajectories are written through the :class:`Output` classes, one
``xarray.Dataset`` per repeat. Metrics, room events, clusters and the graph dump are
written as JSON or CSV files into the output directory.
"""

import abc
import json
import logging
import os
import uuid

import netCDF4 as nc
import numpy as np
import pandas as pd
import xarray as xr

from .errors import ConfigError
from .evaluation import COLUMNS, reports_frame

logger = logging.getLogger(__name__)


METRICS_JSON = 'metrics.json'
METRICS_CSV = 'metrics.csv'
ROOMS_JSONL = 'rooms.jsonl'
GRAPH_JSON = 'graph.json'
CLUSTERS_JSON = 'clusters.json'
MAP_SVG = 'map.svg'


class Output:
    """
    Class for writing trajectories to disk

    This is an abstract base class with no explicit constructor. To initialize an
    instance of the class, use the factory method.
    """

    @staticmethod
    def from_config(conf) -> "Output":
        """
        Initialize using :doc:`configuration parameters </config/output>`

        :param conf: A dict of configuration parameters
        :return: An initialized object
        """
        if 'csv' in conf:
            return OutputCSV.from_config(conf)
        elif 'nc' in conf:
            return OutputNC.from_config(conf)
        else:
            raise ConfigError("No trajectory file name given")

    @abc.abstractmethod
    def write(self, repeat, result):
        """
        Write the trajectory of a repeat

        :param repeat: Repeat number
        :param result: Trajectory, as returned by :func:`trajectory_dataset`
        """
        raise NotImplementedError

    def close(self):
        """
        Close the underlying data stream
        """
        pass


class OutputCSV(Output):
    """
    Class for writing trajectories to CSV file.

    The output file is created lazily upon the first write statement.

    :param file: Name of output file, or a text stream
    :param variables: A list of variable names to include
    :param float_format: Output format for float numbers
    :param separator: Symbol used as data separator
    """
    def __init__(self, file, variables=None, float_format="%.10g", separator=","):
        self.variables = variables
        self.float_format = float_format
        self.separator = separator
        self._blank_file = True

        if isinstance(file, (str, os.PathLike)):
            self.file = file
            self.dset = None

        elif hasattr(file, 'write') and callable(file.write):
            self.file = None
            self.dset = file

        else:
            raise TypeError(f'Expected file name or stream, found "{type(file)}"')

    def __enter__(self):
        self.open()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def open(self):
        if self.dset is None:
            self.dset = open(self.file, 'w', encoding='utf-8', newline='\n')
            self._blank_file = True

    def close(self):
        if self.dset is not None and self.file is not None:
            self.dset.close()
            self.dset = None

    @staticmethod
    def from_config(conf) -> "OutputCSV":
        params = dict(file=conf['csv']['file'])
        for key in ('float_format', 'separator'):
            if key in conf['csv']:
                params[key] = conf['csv'][key]
        if 'variables' in conf:
            params['variables'] = conf['variables']
        return OutputCSV(**params)

    def write(self, repeat, result):
        self.open()

        df = result.to_dataframe()
        df['repeat'] = repeat
        df = df.reset_index().set_index(['repeat', 'keyframe']).reset_index()

        if self.variables is not None:
            df = df[['repeat', 'keyframe'] + [v for v in self.variables
                                              if v not in ('repeat', 'keyframe')]]

        df.to_csv(
            self.dset,
            header=self._blank_file,
            float_format=self.float_format,
            index=False,
            sep=self.separator,
        )
        self._blank_file = False


class OutputNC(Output):
    """
    Class for writing trajectories to netCDF file.

    The output file is created lazily upon the first write statement. Repeats are
    appended along the unlimited dimension ``repeat``.

    :param file: Name of output file, or an ``xarray.Dataset`` which receives the data
        on close
    :param variables: A list of variable names to include
    """

    def __init__(self, file, variables=None):
        self.variables = variables
        self.dset = None
        self._blank_file = True

        if isinstance(file, (str, os.PathLike)):
            self.fname = file
            self.diskless = False
            self.xr_dset = None

        elif isinstance(file, xr.Dataset):
            self.fname = str(uuid.uuid4())
            self.diskless = True
            self.xr_dset = file

        else:
            raise TypeError(f'Unknown file type: {type(file)}')

    def __enter__(self):
        self.open()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def open(self):
        if self.dset is None:
            self.dset = nc.Dataset(filename=self.fname, mode='w', diskless=self.diskless)
            self._blank_file = True

    def close(self):
        if self.dset is not None:
            if self.xr_dset is not None:
                write_nc_to_xr(self.dset, self.xr_dset)

            self.dset.close()
            self.dset = None

    @staticmethod
    def from_config(conf) -> "OutputNC":
        return OutputNC(file=conf['nc']['file'], variables=conf.get('variables', None))

    def write(self, repeat, result):
        self.open()

        result = result.assign_coords(repeat=repeat).expand_dims('repeat')

        if self.variables is not None:
            drop = [v for v in result.data_vars if v not in self.variables]
            result = result.drop_vars(drop)

        if self._blank_file:
            self._append_attributes(result)
            write_xr_to_nc(result, self.dset)
            self._blank_file = False
        else:
            append_xr_to_nc(result, self.dset)

    @staticmethod
    def _append_attributes(r):
        r.encoding['unlimited_dims'] = ['repeat']

        long_names = dict(
            t='time since start', x='estimated x position', y='estimated y position',
            theta='estimated heading', gt_x='true x position', gt_y='true y position',
            gt_theta='true heading', odom_x='dead reckoning x position',
            odom_y='dead reckoning y position', odom_theta='dead reckoning heading',
            lap='lap number',
        )
        units = dict(t='s', x='m', y='m', theta='rad', gt_x='m', gt_y='m',
                     gt_theta='rad', odom_x='m', odom_y='m', odom_theta='rad')
        for name in r.data_vars:
            if name in long_names:
                r[name].attrs['long_name'] = long_names[name]
            if name in units:
                r[name].attrs['units'] = units[name]

        r.coords['keyframe'].attrs['long_name'] = 'keyframe number'
        r.coords['repeat'].attrs['long_name'] = 'experiment repeat'


def trajectory_dataset(t, estimated, ground_truth, odometry, lap) -> xr.Dataset:
    """
    Collect the trajectories of a repeat in a dataset indexed by ``keyframe``

    :param t: Keyframe timestamps, in seconds
    :param estimated: Optimized poses, array of shape (n, 3)
    :param ground_truth: True poses, array of shape (n, 3)
    :param odometry: Dead reckoning poses, array of shape (n, 3)
    :param lap: Lap number of each keyframe
    :return: A dataset
    """
    dims = 'keyframe'
    variables = dict(t=xr.Variable(dims, np.asarray(t, dtype='f8')))
    for prefix, arr in (('', estimated), ('gt_', ground_truth), ('odom_', odometry)):
        arr = np.asarray(arr, dtype='f8').reshape(-1, 3)
        for k, name in enumerate(('x', 'y', 'theta')):
            variables[prefix + name] = xr.Variable(dims, arr[:, k])
    variables['lap'] = xr.Variable(dims, np.asarray(lap, dtype='i4'))
    return xr.Dataset(variables, coords=dict(keyframe=np.arange(len(t))))


def write_xr_to_nc(xr_dset: xr.Dataset, nc_dset: nc.Dataset):
    """
    Write data from an xarray.Dataset to a netCDF4.Dataset

    :param xr_dset: Input dataset
    :param nc_dset: Output dataset
    """
    unlimited_dims = xr_dset.encoding.get('unlimited_dims', [])

    for name, size in xr_dset.sizes.items():
        nc_dset.createDimension(name, None if name in unlimited_dims else size)

    for name, xr_var in xr_dset.variables.items():
        nc_var = nc_dset.createVariable(
            varname=name,
            datatype=xr_var.dtype,
            dimensions=xr_var.dims,
            fill_value=False,
        )
        nc_var[:] = xr_var.values
        nc_var.setncatts(xr_var.attrs)

    nc_dset.setncatts(xr_dset.attrs)


def write_nc_to_xr(nc_dset: nc.Dataset, xr_dset: xr.Dataset):
    """
    Write data from a netCDF4.Dataset to an xarray.Dataset

    :param nc_dset: Input dataset
    :param xr_dset: Output dataset
    """
    for name, nc_var in nc_dset.variables.items():
        xr_dset[name] = xr.Variable(
            dims=nc_var.dimensions,
            data=nc_var[:],
            attrs={k: nc_var.getncattr(k) for k in nc_var.ncattrs()},
        )

    for k in nc_dset.ncattrs():
        xr_dset.attrs[k] = nc_dset.getncattr(k)


def append_xr_to_nc(xr_dset: xr.Dataset, nc_dset: nc.Dataset):
    """
    Append data from an xarray.Dataset to a netCDF4.Dataset along the unlimited
    dimension

    Only existing variables are extended. Repeats of different length are not
    supported, since the ``keyframe`` dimension is fixed by the first write.

    :param xr_dset: Input dataset
    :param nc_dset: Output dataset
    """
    unlim_dims = [k for k, v in nc_dset.dimensions.items() if v.isunlimited()]
    unlim_dim = unlim_dims[0] if len(unlim_dims) > 0 else None
    unlim_vars = [k for k, v in xr_dset.variables.items()
                  if v.dims and v.dims[0] == unlim_dim]

    num_old_items = nc_dset.dimensions[unlim_dim].size
    num_items = num_old_items + xr_dset.sizes.get(unlim_dim, 0)

    for name in unlim_vars:
        nc_dset.variables[name][num_old_items:num_items] = xr_dset.variables[name].values


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f'Object of type {type(obj)} is not JSON serializable')


def write_json(obj, path):
    with open(path, 'w', encoding='utf-8') as fp:
        json.dump(obj, fp, indent=1, default=_json_default)
    logger.info(f'Written {path}')


def metrics_table(reports, mean=None) -> pd.DataFrame:
    """
    Metrics as a table with one row per repeat and a final ``mean`` row

    :param reports: Per-repeat :class:`MetricsReport <tsgraphs.evaluation.MetricsReport>`
        objects
    :param mean: Averaged report
    :return: A data frame indexed by ``repeat``, with output column names
    """
    df = reports_frame(reports)
    df.index = df.index.astype(str)
    if mean is not None:
        df.loc['mean'] = pd.Series(mean.to_dict(), dtype='f8')
    df.index.name = 'repeat'
    return df.rename(columns=COLUMNS)


def write_metrics(directory, reports, mean, config=None, float_format='%.10g'):
    """
    Write ``metrics.json`` and ``metrics.csv``

    :param directory: Output directory
    :param reports: Per-repeat reports
    :param mean: Averaged report
    :param config: Run configuration, stored in the JSON file
    :param float_format: Output format for float numbers
    """
    write_json(dict(
        config=config or {},
        mean=mean.to_dict(),
        runs=[r.to_dict() for r in reports],
    ), os.path.join(directory, METRICS_JSON))

    path = os.path.join(directory, METRICS_CSV)
    metrics_table(reports, mean).to_csv(path, float_format=float_format)
    logger.info(f'Written {path}')


def read_metrics(directory) -> pd.DataFrame:
    """Read ``metrics.csv`` from a run directory"""
    return pd.read_csv(os.path.join(directory, METRICS_CSV), index_col='repeat')


def write_room_events(events, path, repeat=None, append=False):
    """
    Write room events as JSON lines

    :param events: Iterable of :class:`RoomEvent <tsgraphs.rooms.RoomEvent>`
    :param path: File name
    :param repeat: Repeat number added to each record
    :param append: Append to an existing file
    """
    with open(path, 'a' if append else 'w', encoding='utf-8', newline='\n') as fp:
        for ev in events:
            record = ev.to_dict()
            if repeat is not None:
                record = dict(repeat=repeat, **record)
            fp.write(json.dumps(record, default=_json_default) + '\n')


def read_room_events(path) -> list:
    with open(path, encoding='utf-8') as fp:
        return [json.loads(line) for line in fp if line.strip()]


def write_clusters(clusters, path):
    """
    Write extracted clusters

    :param clusters: A list of ``(keyframe, FreeSpaceCluster)`` tuples
    :param path: File name
    """
    write_json([dict(keyframe=int(k), **c.to_dict()) for k, c in clusters], path)


def compare_runs(dir_a, dir_b) -> pd.DataFrame:
    """
    Side-by-side comparison of the mean metrics of two runs

    :param dir_a: First run directory
    :param dir_b: Second run directory
    :return: A data frame with one row per run and one column per metric
    """
    rows = {}
    for name, directory in (('a', dir_a), ('b', dir_b)):
        df = read_metrics(directory)
        row = df.loc['mean']
        row.name = os.path.basename(os.path.normpath(directory)) or name
        rows[name] = row
    table = pd.DataFrame([rows['a'], rows['b']])
    table.index.name = 'run'
    return table
