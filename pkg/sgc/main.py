"""
Command line entry point: ``sgc [--config FILE] [--seed N] [--out DIR] [-v] COMMAND``.

Every command writes its CSV under the output directory, headed by the
resolved configuration, and exits with the code of the error it hit:
0 success, 2 config or argument error, 3 numeric error, 4 I/O error.

"""
import functools
import json
import logging
import os
import sys

import click
import pandas as pd

from .batchrunner import SweepRunner
from .config import load_config
from .errors import InputError, SgcError
from .memory import METHODS, MethodSpec, memory_table, read_manifest
from .model import train as train_problem
from .model import write_csv
from .omp import recover as recover_sparse
from .problems import make_problem
from .textio import read_matrix, read_vector

logger = logging.getLogger(__name__)

CONFIG_PATH = click.Path(exists=False, dir_okay=False)
INPUT_PATH = click.Path(dir_okay=False)


def _exits(command):
    """Turn library errors into their exit codes with a one-line diagnostic."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except SgcError as exc:
            click.echo("error: {}".format(exc), err=True)
            sys.exit(exc.exit_code)
        except OSError as exc:
            click.echo("error: {}".format(InputError(exc)), err=True)
            sys.exit(InputError.exit_code)

    return wrapper


def _config(ctx):
    options = ctx.obj
    return load_config(options["config"], options["seed"], options["out"])


def _output_path(config, name):
    os.makedirs(config.output.dir, exist_ok=True)
    return os.path.join(config.output.dir, name)


@click.group()
@click.option("--config", "config_path", type=CONFIG_PATH, default=None,
              help="YAML run configuration.")
@click.option("--seed", type=click.IntRange(min=0), default=None,
              help="Master seed; overrides the config file.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Output directory; overrides the config file.")
@click.option("-v", "--verbose", count=True, help="-v for INFO, -vv for DEBUG.")
@click.pass_context
def cli(ctx, config_path, seed, out, verbose):
    "Sparse gradient compression optimizers, recovery and memory accounting"
    level = logging.WARNING if not verbose else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    ctx.obj = {"config": config_path, "seed": seed, "out": out}


@cli.command()
@click.argument("a_file", type=INPUT_PATH)
@click.argument("y_file", type=INPUT_PATH)
@click.option("-s", "--sparsity", "s", type=int, required=True, help="Selections to make.")
@click.option("--tol", type=float, default=None, help="Residual norm to stop at.")
@click.option("--variant", type=click.Choice(["naive", "cholesky"]), default="cholesky")
@click.pass_context
@_exits
def recover(ctx, a_file, y_file, s, tol, variant):
    """Recover a sparse x from y = A x.

    A_FILE holds a ``dense-matrix k d`` and Y_FILE a ``dense-vector k``.
    Writes recovery.csv with one ``index,value`` row per recovered entry and
    prints the residual norm and iteration count as JSON.
    """
    config = _config(ctx)
    A = read_matrix(a_file)
    y = read_vector(y_file)
    result = recover_sparse(A, y, s, tol, variant)

    frame = pd.DataFrame({"index": result.estimate.support, "value": result.estimate.values})
    header = dict(config.header(), recover={"s": s, "tol": tol, "variant": variant})
    write_csv(_output_path(config, "recovery.csv"), frame, header)
    click.echo(json.dumps(
        {"residual_norm": result.residual_norm, "iterations": result.iterations}
    ))


@cli.command()
@click.argument("manifest", type=INPUT_PATH)
@click.option("--method", "methods", type=click.Choice(METHODS), multiple=True,
              help="Method to account for; repeatable. Defaults to all of them.")
@click.option("--rank", "rank_r", type=int, default=None, help="Rank r for CESGC, GaLore, LoRA.")
@click.option("--s-c", "s_c", type=int, default=None, help="Sparsity per chunk.")
@click.option("--chunks", "c", type=int, default=None, help="Number of chunks c.")
@click.option("--kappa", type=int, default=None)
@click.option("--element-width", type=click.IntRange(min=1), default=4,
              help="Bytes per stored value.")
@click.pass_context
@_exits
def memory(ctx, manifest, methods, rank_r, s_c, c, kappa, element_width):
    """Count weights, optimizer states and projection storage per layer.

    MANIFEST lists one ``m n`` layer shape per line.
    """
    config = _config(ctx)
    shapes = read_manifest(manifest)
    specs = [MethodSpec(method, rank_r, s_c, c, kappa) for method in (methods or METHODS)]
    table = memory_table(shapes, specs, element_width)
    header = dict(config.header(), memory={
        "methods": [spec.method for spec in specs], "rank_r": rank_r, "s_c": s_c,
        "c": c, "kappa": kappa, "element_width": element_width,
    })
    write_csv(_output_path(config, "memory.csv"), table, header)
    totals = table.groupby("method", sort=False)["bytes"].sum()
    click.echo(json.dumps({method: int(total) for method, total in totals.items()}))


@cli.command()
@click.pass_context
@_exits
def train(ctx):
    """Train the configured problem and write train.csv (step, loss)."""
    config = _config(ctx)
    problem_config = config.problem
    problem = make_problem(
        problem_config.kind,
        problem_config.dims,
        n_samples=problem_config.n_samples,
        seed=config.seed,
        hidden=problem_config.hidden,
        l2=problem_config.l2,
        energy_profile=problem_config.energy_profile,
    )
    report = train_problem(problem, config.train.optimizer, config.optimizer,
                           config.train.steps, config.train.batch_size)
    report.to_csv(_output_path(config, "train.csv"), config.header())
    click.echo(json.dumps(report.summary()))


@cli.command()
@click.option("--progress/--no-progress", default=False, help="Show a progress bar.")
@click.pass_context
@_exits
def sweep(ctx, progress):
    """Run the configured sweep and write sweep.csv.

    Rows already present in sweep.csv are kept and not run again.
    """
    config = _config(ctx)
    results = SweepRunner(config, _output_path(config, "sweep.csv"), progress).run_all()
    failed = int((results["error"] != "").sum())
    click.echo(json.dumps({"rows": len(results), "failed": failed}))
