"""Command-line front end: ``thetabm fit | grid | gof | bench``.

Exit codes: 0 success, 1 domain/data error, 2 usage error. Every output file
embeds the resolved run configuration. ``THETABM_OUT`` sets the default
output directory.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .datasets import load_csv
from .gof import ff_model_vs_data
from .model import affine_pushforward, load_model, params_to_dict
from .optimize import CmaConfig, fit
from .preprocess import AffineMap, apply, fit_zscore_pca
from .rtheta import bench_derivatives, bench_factorized_vs_full, loglog_slope

log = logging.getLogger("thetabm")


def _fail(msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(1)


def _out_dir(out) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _pair(text: str, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise click.BadParameter(f"expected 'lo,hi', got {text!r}", param_hint=name) from None
    if not lo < hi:
        raise click.BadParameter(f"need lo < hi, got {text!r}", param_hint=name)
    return lo, hi


def _write_csv(path: Path, header, rows, config: dict):
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Theta Boltzmann machine density estimation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("fit")
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False), help="CSV with a header row.")
@click.option("--columns", default=None, help="Comma-separated column names or indices (default: all).")
@click.option("--nh", required=True, type=click.IntRange(min=1), help="Number of hidden units.")
@click.option("--model", "model_kind", type=click.Choice(["pjtbm", "rtbm"]), default="pjtbm", show_default=True)
@click.option("--cost", type=click.Choice(["fisher", "nll"]), default=None,
              help="Training cost (default: fisher for pjtbm, nll for rtbm).")
@click.option("--iters", type=click.IntRange(min=1), default=500, show_default=True)
@click.option("--pretrain-iters", type=click.IntRange(min=0), default=200, show_default=True,
              help="CMA-ES iterations per marginal pre-training fit; 0 disables pre-training.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), envvar="THETABM_OUT", default="thetabm-out", show_default=True)
def cmd_fit(data_path, columns, nh, model_kind, cost, iters, pretrain_iters, seed, out):
    """Preprocess, pre-train, fit with CMA-ES; write model.json and report.json."""
    cost = cost or ("fisher" if model_kind == "pjtbm" else "nll")
    config = {"command": "fit", "data": str(data_path), "columns": columns, "nh": nh, "model": model_kind,
              "cost": cost, "iters": iters, "pretrain_iters": pretrain_iters, "seed": seed, "out": str(out)}
    try:
        raw = load_csv(data_path, columns.split(",") if columns else None)
        amap = fit_zscore_pca(raw)
        s = apply(amap, raw)
        report = fit(s, nh, model_kind == "pjtbm", cost, CmaConfig(max_iterations=iters, seed=seed),
                     pretrain_iterations=pretrain_iters or None)
    except (OSError, KeyError, ValueError, RuntimeError) as exc:
        _fail(str(exc))
    odir = _out_dir(out)
    model_doc = params_to_dict(report.best_params, amap)
    model_doc["run_config"] = config
    (odir / "model.json").write_text(json.dumps(model_doc, indent=2))
    rep = report.to_dict()
    rep["run_config"] = config
    rep["data_source"] = raw.source
    (odir / "report.json").write_text(json.dumps(rep, indent=2))
    click.echo(f"{model_kind} nh={nh} cost={cost}: best {report.best_cost:.6g} "
               f"in {report.wall_seconds:.2f}s ({report.evaluations} evaluations) -> {odir}")


def _density_in_data_coords(model_file):
    params, amap = load_model(model_file)
    amap = amap or AffineMap.identity(params.n_v)
    return params, affine_pushforward(params, amap.inverse())


@main.command("grid")
@click.option("--model-file", required=True, type=click.Path(dir_okay=False, exists=True))
@click.option("--xrange", "xr", required=True, help="lo,hi in data coordinates.")
@click.option("--yrange", "yr", required=True, help="lo,hi in data coordinates.")
@click.option("--steps", type=click.IntRange(min=2), default=100, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (default: <THETABM_OUT>/grid.csv).")
def cmd_grid(model_file, xr, yr, steps, out):
    """Density on a steps x steps grid for contour plots."""
    (x0, x1), (y0, y1) = _pair(xr, "--xrange"), _pair(yr, "--yrange")
    config = {"command": "grid", "model_file": str(model_file), "xrange": [x0, x1], "yrange": [y0, y1], "steps": steps}
    try:
        params, dens = _density_in_data_coords(model_file)
        if params.n_v != 2:
            raise ValueError(f"grid needs a 2-D model, got n_v={params.n_v}")
        gx, gy = np.meshgrid(np.linspace(x0, x1, steps), np.linspace(y0, y1, steps), indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        dens_vals = np.exp(dens.log_density(pts))
    except (OSError, KeyError, ValueError) as exc:
        _fail(str(exc))
    path = Path(out) if out else _out_dir(_env_out()) / "grid.csv"
    _write_csv(path, ["x", "y", "density"], [(repr(float(a)), repr(float(b)), repr(float(c))) for (a, b), c in zip(pts, dens_vals)], config)
    click.echo(f"wrote {steps * steps} grid rows -> {path}")


def _env_out() -> str:
    return os.environ.get("THETABM_OUT", "thetabm-out")


@main.command("gof")
@click.option("--model-file", required=True, type=click.Path(dir_okay=False, exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False))
@click.option("--columns", default=None)
@click.option("--repeats", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON path (default: <THETABM_OUT>/gof.json).")
def cmd_gof(model_file, data_path, columns, repeats, seed, out):
    """Fasano-Franceschini statistic of model draws against the data."""
    config = {"command": "gof", "model_file": str(model_file), "data": str(data_path),
              "columns": columns, "repeats": repeats, "seed": seed}
    try:
        data = load_csv(data_path, columns.split(",") if columns else None)
        _, dens = _density_in_data_coords(model_file)
        mean, std = ff_model_vs_data(dens, data, repeats, seed)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        _fail(str(exc))
    path = Path(out) if out else _out_dir(_env_out()) / "gof.json"
    path.write_text(json.dumps({"ff_mean": mean, "ff_std": std, "n": data.n, "run_config": config}, indent=2))
    click.echo(f"FF = {mean:.4f} ± {std:.4f}")


@main.command("bench")
@click.option("--suite", type=click.Choice(["factorization", "derivatives"]), required=True)
@click.option("--dims", default="1,2,3,4,5,6,8,10,12,14,16", show_default=True,
              help="Dimensions for the factorization suite (full path stops at --max-full-dim).")
@click.option("--max-full-dim", type=click.IntRange(1, 8), default=8, show_default=True)
@click.option("--repeats", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--n-params", type=click.IntRange(min=1), default=50, show_default=True,
              help="Parameter draws for the derivatives suite.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (default: <THETABM_OUT>/bench_<suite>.csv).")
def cmd_bench(suite, dims, max_full_dim, repeats, n_params, seed, out):
    """Timing tables for the theta kernels."""
    config = {"command": "bench", "suite": suite, "repeats": repeats, "seed": seed}
    path = Path(out) if out else _out_dir(_env_out()) / f"bench_{suite}.csv"
    if suite == "factorization":
        try:
            dim_list = sorted(int(d) for d in dims.split(","))
        except ValueError:
            raise click.BadParameter(f"expected comma-separated integers, got {dims!r}", param_hint="--dims") from None
        config.update(dims=dim_list, max_full_dim=max_full_dim,
                      omega_sampling="diag entries 2*pi*u, u ~ U(0,1]; z ~ U(0,1]")
        rows = bench_factorized_vs_full(dim_list, repeats, seed, max_full_dim=max_full_dim)
        fac = [r for r in rows if r["path"] == "factorized"]
        slope, r2 = loglog_slope([r["dim"] for r in fac], [r["mean_seconds"] for r in fac])
        config.update(factorized_slope=slope, factorized_r2=r2)
        _write_csv(path, ["dim", "path", "mean_seconds", "std_seconds"],
                   [(r["dim"], r["path"], r["mean_seconds"], r["std_seconds"]) for r in rows], config)
        click.echo(f"factorized log-log slope {slope:.3f} (R^2 {r2:.3f}) -> {path}")
    else:
        config.update(n_params=n_params)
        rows = bench_derivatives(n_params, repeats, seed)
        frac = float(np.mean([r["speedup"] > 1 for r in rows]))
        config.update(fraction_faster=frac, median_speedup=float(np.median([r["speedup"] for r in rows])))
        _write_csv(path, ["omega", "z", "t_full", "t_recursive", "speedup"],
                   [(r["omega"], r["z"], r["t_full"], r["t_recursive"], r["speedup"]) for r in rows], config)
        click.echo(f"median speed-up {config['median_speedup']:.1f}x, faster on {frac:.0%} of draws -> {path}")


if __name__ == "__main__":
    main()
