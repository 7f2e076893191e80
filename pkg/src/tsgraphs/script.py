"""
The module contains the main entry point of the application
"""

import logging

logger = logging.getLogger(__name__)


def run(conf):
    """
    Run an experiment and save the output in the configured directory.

    Internally, the function creates a :class:`Model <tsgraphs.model.Model>` object
    using the information from the config file, and calls the
    :func:`run <tsgraphs.model.Model.run>` method of that object.

    :param conf: :doc:`Configuration parameters </config>` (dict object or file name).
    :return: The averaged and per-repeat results
    """

    init_logger()

    from .model import Model
    model = Model.from_config(conf)
    return model.run()


def main(argv=None):
    """
    Main script, runnable from the command line

    The function uses the `argparse` library to parse arguments from the command line.
    There are three subcommands: ``run``, ``compare`` and ``render``.

    :param argv: Command line arguments, defaults to ``sys.argv[1:]``
    :return: 0 if successful, 1 if the experiment failed
    """
    import argparse
    from . import __version__ as version_str

    parser = argparse.ArgumentParser(
        prog='tsg',
        description=(
            f'tsgraphs (v{version_str}) is a testbed for room extraction in situational\n'
            'graphs, comparing traversability-based and ESDF-based free-space\n'
            'clustering on synthetic indoor scenarios.'
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p_run = sub.add_parser('run', help='Run an experiment')
    p_run.add_argument('config_file', nargs='?', help='Path of config file')
    p_run.add_argument('--scenario', help='Canonical scenario name or scenario file')
    p_run.add_argument('--backend', choices=('traversability', 'esdf'))
    p_run.add_argument('--strategy', choices=('flush', 'timer'))
    p_run.add_argument('--seed', type=int)
    p_run.add_argument('--repeats', type=int)
    p_run.add_argument('--timing', action='store_true', default=None,
                       help='Run repeats serially for T_PGO measurements')
    p_run.add_argument('--repeats-parallel', type=int, dest='repeats_parallel')
    p_run.add_argument('--out', help='Output directory')
    p_run.add_argument('--quiet', action='store_true', help='Log warnings only')

    p_cmp = sub.add_parser('compare', help='Compare the mean metrics of two runs')
    p_cmp.add_argument('--a', required=True, help='First run directory')
    p_cmp.add_argument('--b', required=True, help='Second run directory')
    p_cmp.add_argument('--out', help='Output CSV file, defaults to stdout')

    p_ren = sub.add_parser('render', help='Render a run directory as SVG')
    p_ren.add_argument('--run', required=True, help='Run directory')
    p_ren.add_argument('--svg', required=True, help='Output SVG file')
    p_ren.add_argument('--repeat', type=int, default=0)

    args = parser.parse_args(argv)

    from .errors import TsgError
    try:
        if args.command == 'run':
            run_command(args)
        elif args.command == 'compare':
            compare_command(args)
        else:
            init_logger(logging.INFO)
            from .render import render_directory
            render_directory(args.run, args.svg, repeat=args.repeat)
    except TsgError as e:
        logger.error(str(e))
        return 1

    return 0


def run_command(args):
    """
    Merge command line options into the config and run the experiment

    :param args: Parsed arguments of the ``run`` subcommand
    """
    import copy
    from .model import load_file_or_dict
    from .world import CANONICAL_NAMES

    conf = copy.deepcopy(load_file_or_dict(args.config_file or {}))
    experiment = conf.setdefault('experiment', {})
    if args.scenario is not None:
        conf['scenario'] = (
            dict(name=args.scenario) if args.scenario in CANONICAL_NAMES
            else dict(file=args.scenario))
    if args.backend is not None:
        conf.setdefault('cluster', {})['backend'] = args.backend
    if args.strategy is not None:
        conf.setdefault('rooms', {})['strategy'] = args.strategy
    for key in ('seed', 'repeats', 'timing', 'repeats_parallel'):
        value = getattr(args, key)
        if value is not None:
            experiment[key] = value
    if args.out is not None:
        conf.setdefault('output', {})['directory'] = args.out
    elif 'output' not in conf:
        conf['output'] = dict(directory='.')

    init_logger(logging.WARNING if args.quiet else logging.INFO)
    from .model import Model
    return Model.from_config(conf).run()


def compare_command(args):
    """
    Print or write the side-by-side comparison of two runs

    :param args: Parsed arguments of the ``compare`` subcommand
    """
    import sys
    from .io import compare_runs

    table = compare_runs(args.a, args.b)
    if args.out is None:
        table.to_csv(sys.stdout, float_format='%.4g')
    else:
        table.to_csv(args.out, float_format='%.4g')


def init_logger(loglevel=None):
    """
    Initialize the python logger

    :param loglevel: Desired output loglevel
    """

    if loglevel is None:
        loglevel = logging.DEBUG

    package_name = str(__name__).split('.', maxsplit=1)[0]
    package_logger = logging.getLogger(package_name)
    package_logger.setLevel(loglevel)
    for h in package_logger.handlers:
        if getattr(h, '_tsg_handler', False):
            h.setLevel(loglevel)
            return
    ch = logging.StreamHandler()
    ch.setLevel(loglevel)
    formatter = logging.Formatter('%(asctime)s  %(name)s:%(levelname)s - %(message)s')
    ch.setFormatter(formatter)
    ch._tsg_handler = True
    package_logger.addHandler(ch)
