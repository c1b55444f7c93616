"""Command-line interface: structure tests on CSV data plus the Monte Carlo
subcommands, with optional matplotlib figures next to the delimited output."""

import sys
from pathlib import Path

import click
import numpy as np

from kpstest import __version__
from kpstest import report as report_mod
from kpstest.core import kpst, kpst_star, nearest_kps
from kpstest.data import ingest, residualize
from kpstest.exceptions import (
    DegenerateSampleError,
    DimensionError,
    EmptyAfterFilteringError,
    KpsError,
    ParseError,
    RankDeficientDesignError,
    SchemaError,
    ShapeMismatchError,
    SigmaOutOfRangeError,
    SingularSecondMomentError,
    TooFewClustersError,
)
from kpstest.montecarlo import (
    DGP_VARIANTS,
    PowerExperiment,
    SizeExperiment,
    paper_table as run_paper_table,
    run_power,
    run_size,
)

EXIT_CODES = [
    (SchemaError, 2),
    (ParseError, 3),
    (EmptyAfterFilteringError, 4),
    (RankDeficientDesignError, 5),
    (DegenerateSampleError, 6),
    (SingularSecondMomentError, 7),
    (TooFewClustersError, 8),
    (DimensionError, 9),
    (ShapeMismatchError, 10),
    (SigmaOutOfRangeError, 12),
    (KpsError, 11),
]


def _exit_code(exc):
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 11


def _run(fn):
    try:
        fn()
    except KpsError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_code(exc))


def _parse_floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise SchemaError(f"cannot parse float list {text!r}: {exc}") from exc


def _emit_table(table, out, figure, render):
    """Write a CSV (file or stdout) and render a figure alongside it."""
    csv_text = table.to_csv(index=False)
    if out:
        Path(out).write_text(csv_text)
    else:
        click.echo(csv_text, nl=False)
    figure_path = figure
    if figure_path is None and out:
        figure_path = str(Path(out).with_suffix(".png"))
    if figure_path:
        render(table, figure_path)
        click.echo(f"figure written to {figure_path}", err=True)


@click.group()
@click.version_option(version=__version__, prog_name="kpstest")
def main():
    """Kronecker-product-structure tests for covariance matrices."""


@main.command("test")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--y", "y_cols", required=True, help="endogenous columns (names or a:b ranges)")
@click.option("--z", "z_cols", required=True, help="instrument columns")
@click.option("--w", "w_cols", default=None, help="control columns")
@click.option("--cluster", "cluster_col", default=None, help="cluster label column")
@click.option("--level", default=0.05, show_default=True, type=float)
@click.option(
    "--method",
    type=click.Choice(["kpst", "kpst-star"]),
    default="kpst",
    show_default=True,
)
@click.option("--no-normalize", is_flag=True, help="skip the whitening normalization")
@click.option("--no-constant", is_flag=True, help="do not append a constant control column")
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["text", "json", "csv"]),
    default="text",
    show_default=True,
)
@click.option(
    "--rank-policy",
    type=click.Choice(["fixed", "tolerance"]),
    default="fixed",
    show_default=True,
)
@click.option("--figure", default=None, type=click.Path(dir_okay=False), help="write a singular-value spectrum figure")
def cmd_test(
    input_path,
    y_cols,
    z_cols,
    w_cols,
    cluster_col,
    level,
    method,
    no_normalize,
    no_constant,
    fmt,
    rank_policy,
    figure,
):
    """Run the structure test on a CSV dataset.

    Exit status is 0 whenever the test computes, regardless of the
    reject/fail-to-reject outcome; nonzero codes signal errors.
    """

    def body():
        if not (0.0 < level < 1.0):
            raise SchemaError(f"--level must be in (0, 1), got {level}")
        data = ingest(
            input_path,
            y_cols,
            z_cols,
            w_cols=w_cols,
            cluster_col=cluster_col,
            add_constant=not no_constant,
        )
        if data.dropped_rows:
            click.echo(f"dropped {data.dropped_rows} rows with missing values", err=True)
        sample = residualize(data)
        run = kpst if method == "kpst" else kpst_star
        result = run(sample, normalize=not no_normalize, rank_policy=rank_policy)
        rep = report_mod.build_report(
            result,
            level=level,
            input_sha256=report_mod.file_sha256(input_path),
            n_observations=sample.n,
        )
        if fmt == "json":
            click.echo(report_mod.to_json(rep))
        elif fmt == "csv":
            click.echo(report_mod.to_csv(rep), nl=False)
        else:
            click.echo(report_mod.to_text(rep), nl=False)
        if figure:
            from kpstest.figures import save_spectrum_figure

            save_spectrum_figure(rep["singular_values"], rep["ds"], figure)
            click.echo(f"figure written to {figure}", err=True)

    _run(body)


@main.command("nkp")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--p", required=True, type=int)
@click.option("--k", required=True, type=int)
@click.option("--figure", default=None, type=click.Path(dir_okay=False))
def cmd_nkp(input_path, p, k, figure):
    """Nearest Kronecker-product factorization of a square matrix CSV."""

    def body():
        try:
            matrix = np.loadtxt(input_path, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot read matrix from {input_path}: {exc}") from exc
        if matrix.shape != (k * p, k * p):
            raise ShapeMismatchError(
                f"matrix has shape {matrix.shape}, expected {(k * p, k * p)} for p={p}, k={k}"
            )
        fit = nearest_kps(matrix, p, k)
        total = float(np.linalg.norm(fit.singular_values))
        rel = fit.ds / total if total > 0 else 0.0
        click.echo(f"distance (DS)      {fit.ds:.6g}")
        click.echo(f"relative distance  {rel:.6g}")
        click.echo(f"leading singular values  {np.array2string(fit.singular_values[: min(6, fit.singular_values.size)], precision=6)}")
        click.echo("g1 =")
        click.echo(np.array2string(fit.g1, precision=6))
        click.echo("g2 =")
        click.echo(np.array2string(fit.g2, precision=6))
        for warning in fit.warnings:
            click.echo(f"warning: {warning}", err=True)
        if figure:
            from kpstest.figures import save_spectrum_figure

            save_spectrum_figure(fit.singular_values, fit.ds, figure)
            click.echo(f"figure written to {figure}", err=True)

    _run(body)


@main.group("simulate")
def simulate():
    """Monte Carlo size and power experiments."""


@simulate.command("size")
@click.option("--p", default=2, show_default=True, type=int)
@click.option("--k", default=2, show_default=True, type=int)
@click.option("--n", default=None, type=int, help="explicit sample size")
@click.option(
    "--n-rule",
    type=click.Choice(["explicit", "pow16-3", "pow4"]),
    default="explicit",
    show_default=True,
)
@click.option("--dgp", type=click.Choice(list(DGP_VARIANTS)), default="homoskedastic", show_default=True)
@click.option("--reps", default=10_000, show_default=True, type=int)
@click.option("--levels", default="0.10,0.05,0.01", show_default=True)
@click.option("--seed", type=int, default=0, envvar="KPS_SEED", show_default=True)
@click.option("--paper-table", type=click.Choice(["1", "2"]), default=None, help="run the full preset grid for the published table layout")
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--figure", default=None, type=click.Path(dir_okay=False))
def cmd_simulate_size(p, k, n, n_rule, dgp, reps, levels, seed, paper_table, workers, out, figure):
    """Null rejection probabilities as CSV (long format, or the published
    table layout with --paper-table)."""

    def body():
        from kpstest import figures as fig_mod

        level_tuple = _parse_floats(levels)
        if paper_table is not None:
            table = run_paper_table(
                int(paper_table), reps=reps, seed=seed, workers=workers, levels=level_tuple
            )
            _emit_table(table, out, figure, fig_mod.save_nrp_vs_n_figure)
            return
        if n is None and n_rule == "explicit":
            raise SchemaError("either --n or --n-rule pow16-3/pow4 is required")
        exp = SizeExperiment(
            p=p, k=k, n=n, n_rule=n_rule, dgp=dgp, reps=reps, levels=level_tuple, seed=seed
        )
        table = run_size(exp, workers=workers)
        _emit_table(table, out, figure, fig_mod.save_size_figure)

    _run(body)


@simulate.command("power")
@click.option("--n", default=200, show_default=True, type=int)
@click.option("--sigma-grid", default="0,1,2,3,4", show_default=True)
@click.option("--reps", default=2_000, show_default=True, type=int)
@click.option("--levels", default="0.10,0.05,0.01", show_default=True)
@click.option("--seed", type=int, default=0, envvar="KPS_SEED", show_default=True)
@click.option("--include-star/--no-include-star", default=True, show_default=True)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--figure", default=None, type=click.Path(dir_okay=False))
def cmd_simulate_power(n, sigma_grid, reps, levels, seed, include_star, workers, out, figure):
    """Rejection rates under local deviations, with the asymptotic
    noncentral chi-square overlay, as CSV."""

    def body():
        from kpstest import figures as fig_mod

        exp = PowerExperiment(
            n=n,
            sigma_grid=_parse_floats(sigma_grid),
            reps=reps,
            levels=_parse_floats(levels),
            seed=seed,
            include_star=include_star,
        )
        table = run_power(exp, workers=workers)
        _emit_table(table, out, figure, fig_mod.save_power_figure)

    _run(body)


if __name__ == "__main__":
    main()
