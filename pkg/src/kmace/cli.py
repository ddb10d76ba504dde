"""Command-line harness: generate data, select cluster counts, benchmark and verify moments."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .ace import DEFAULT_ALPHA, DEFAULT_BETA, select_cnc
from .core import (
    ConfigInvalid,
    KmaceError,
    NonPositiveAlpha,
    NonPositiveSigma,
    RangeInvalid,
    RngSpec,
    UnknownScenario,
    read_csv,
    write_csv,
)
from .datagen import SCENARIOS, U_VARIANTS, fixture_version, generate
from .kernel import kernel_select_cnc
from .metrics import TABLE_COLUMNS, ari, nvi, summarise, write_table
from .oracle import DEFAULT_DRAWS, MomentConfig, check_moments, random_config

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
USAGE_ERRORS = (RangeInvalid, NonPositiveAlpha, NonPositiveSigma, UnknownScenario, ConfigInvalid)
METHODS = ("kmace", "kernel-kmace")


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _sigma_grid(text: str | None):
    if text is None:
        return None
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise click.BadParameter("expected lo:hi:steps, e.g. 0.5:20:20", param_hint="--sigma-grid") from None
    if steps < 1:
        raise click.BadParameter("steps must be at least 1", param_hint="--sigma-grid")
    return np.linspace(lo, hi, steps)


def _threads() -> int:
    raw = os.environ.get("KMACE_THREADS", "")
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise click.UsageError(f"KMACE_THREADS must be an integer, got {raw!r}") from None
    return max(1, cap)


def _run_method(data, method, m_min, m_max, alpha, beta, seed, grid):
    rng = RngSpec(seed)
    if method == "kmace":
        return select_cnc(data, m_min, m_max, alpha, beta, rng), None
    return kernel_select_cnc(data, m_min, m_max, grid, alpha, beta, rng)


@click.group()
@click.version_option(__version__, prog_name="kmace")
def cli():
    """Cluster-count estimation from the average central error."""


@cli.command("generate")
@click.argument("scenario", type=click.Choice(SCENARIOS, case_sensitive=False))
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--variant", type=click.Choice(sorted(U_VARIANTS)), default=None,
              help="U-family variant when SCENARIO is u_family.")
@click.option("-o", "--out", "out", required=True, type=click.Path(dir_okay=False),
              help="CSV path; the mixture description goes next to it as .json.")
def cmd_generate(scenario, seed, variant, out):
    """Write a seeded scenario dataset as CSV plus a JSON sidecar."""
    ds, spec = generate(scenario, seed, variant)
    out = Path(out)
    write_csv(ds, out)
    _dump({"command": "generate", "scenario": scenario.lower(), "variant": variant, "seed": seed,
           "fixture_version": fixture_version(), "n": ds.n, "d": ds.d, "true_m": ds.true_m,
           "csv_sha256": _sha256(out), "mixture": spec.to_dict()}, str(out.with_suffix(".json")))


@cli.command("select")
@click.argument("input_path", metavar="INPUT", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(METHODS), default="kmace", show_default=True)
@click.option("--m-min", type=int, default=1, show_default=True)
@click.option("--m-max", type=int, default=15, show_default=True)
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option("--beta", type=float, default=DEFAULT_BETA, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--sigma-grid", default=None, help="lo:hi:steps for kernel-kmace.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("-o", "--out", "out", default="-", show_default=True)
def cmd_select(input_path, method, m_min, m_max, alpha, beta, seed, sigma_grid, fmt, out):
    """Estimate the number of clusters in a CSV dataset."""
    grid = _sigma_grid(sigma_grid)
    data = read_csv(input_path)
    report, sweep = _run_method(data, method, m_min, m_max, alpha, beta, seed, grid)
    if fmt == "csv":
        rows = [("m", "z_upper", "z_lower")]
        k = report.k_star - m_min
        for m, up, lo in zip(report.ms, report.z_upper_surface[:, k], report.z_lower_surface[:, k]):
            rows.append((int(m), repr(float(up)), repr(float(lo))))
        text = "\n".join(",".join(map(str, r)) for r in rows) + "\n"
        if out == "-":
            click.echo(text, nl=False)
        else:
            Path(out).write_text(text)
        return
    doc = {
        "command": "select",
        "input": {"path": str(input_path), "sha256": _sha256(input_path), "n": data.n, "d": data.d},
        "args": {"method": method, "m_min": m_min, "m_max": m_max, "alpha": alpha, "beta": beta,
                 "seed": seed, "sigma_grid": sigma_grid},
        "m_hat": report.m_hat,
        "report": report.to_dict(),
    }
    if sweep is not None:
        doc["sigma_sweep"] = sweep.to_dict()
    _dump(doc, out)


def _bench_one(job):
    scenario, variant, method, seed, m_min, m_max, alpha, beta, grid = job
    data, _ = generate(scenario, seed, variant)
    report, sweep = _run_method(data, method, m_min, m_max, alpha, beta, seed, grid)
    labels = report.chosen_partition.assign
    return {"seed": seed, "m_hat": report.m_hat, "true_m": data.true_m,
            "ari": ari(data.labels, labels), "nvi": nvi(data.labels, labels),
            "sigma_hat": None if sweep is None else sweep.sigma_hat}


@cli.command("bench")
@click.argument("scenario", type=click.Choice(SCENARIOS, case_sensitive=False))
@click.option("--variant", type=click.Choice(sorted(U_VARIANTS)), default=None)
@click.option("--method", type=click.Choice(METHODS + ("both",)), default="kmace", show_default=True)
@click.option("--runs", type=click.IntRange(1), default=100, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**63), default=0, show_default=True,
              help="Run i uses seed + i.")
@click.option("--m-min", type=int, default=1, show_default=True)
@click.option("--m-max", type=int, default=15, show_default=True)
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option("--beta", type=float, default=DEFAULT_BETA, show_default=True)
@click.option("--sigma-grid", default=None, help="lo:hi:steps for kernel-kmace.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="csv", show_default=True)
@click.option("-o", "--out", "out", default="-", show_default=True)
def cmd_bench(scenario, variant, method, runs, seed, m_min, m_max, alpha, beta, sigma_grid, fmt, out):
    """Repeat the selection over seeded datasets and summarise accuracy, ARI and NVI."""
    grid = _sigma_grid(sigma_grid)
    methods = METHODS if method == "both" else (method,)
    workers = min(_threads(), runs)
    summaries, per_run = [], {}
    for meth in methods:
        jobs = [(scenario, variant, meth, seed + i, m_min, m_max, alpha, beta, grid) for i in range(runs)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_bench_one, jobs))
        else:
            results = [_bench_one(j) for j in jobs]
        true_m = results[0]["true_m"]
        summaries.append(summarise(meth, [r["m_hat"] for r in results], true_m,
                                   [r["ari"] for r in results], [r["nvi"] for r in results]))
        per_run[meth] = results
    if fmt == "csv":
        if out == "-":
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(TABLE_COLUMNS)
            for s in summaries:
                w.writerow([getattr(s, c) for c in TABLE_COLUMNS])
        else:
            write_table(summaries, out)
        return
    _dump({"command": "bench", "scenario": scenario.lower(), "variant": variant,
           "fixture_version": fixture_version(),
           "args": {"method": method, "runs": runs, "seed": seed, "m_min": m_min, "m_max": m_max,
                    "alpha": alpha, "beta": beta, "sigma_grid": sigma_grid},
           "summary": [{c: getattr(s, c) for c in TABLE_COLUMNS} for s in summaries],
           "runs": per_run}, out)


@cli.command("mc-oracle")
@click.argument("config", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--random", "n_random", type=click.IntRange(0), default=0,
              help="Check this many random configurations instead of CONFIG.")
@click.option("--draws", type=click.IntRange(2), default=DEFAULT_DRAWS, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**63), default=0, show_default=True)
@click.option("--perturb", type=float, default=0.0, show_default=True,
              help="Scale the closed forms by 1 + PERTURB (harness self-test).")
@click.option("-o", "--out", "out", default="-", show_default=True)
def cmd_mc_oracle(config, n_random, draws, seed, perturb, out):
    """Monte-Carlo check of the moment formulas; exits 3 if any check fails."""
    if config is None and n_random == 0:
        raise click.UsageError("give a CONFIG file or --random N")
    configs = []
    if config is not None:
        try:
            raw = json.loads(Path(config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{config}: {exc}") from None
        for entry in raw if isinstance(raw, list) else [raw]:
            if not isinstance(entry, dict):
                raise ConfigInvalid("each config must be a JSON object")
            configs.append(MomentConfig.from_dict(entry))
    configs += [random_config(RngSpec(seed + i).child("mc-oracle-config"), draws) for i in range(n_random)]
    results = []
    for cfg in configs:
        checks = check_moments(cfg, perturb)
        results.append({"config": cfg.to_dict(), "checks": [c.to_dict() for c in checks],
                        "passed": all(c.passed for c in checks)})
    ok = all(r["passed"] for r in results)
    _dump({"command": "mc-oracle", "args": {"config": config, "random": n_random, "draws": draws,
                                            "seed": seed, "perturb": perturb},
           "results": results, "passed": ok}, out)
    for i, r in enumerate(results):
        for c in r["checks"]:
            click.echo(f"config {i} {c['name']}: {'PASS' if c['passed'] else 'FAIL'}", err=True)
    if not ok:
        sys.exit(EXIT_INTERNAL)


def _read_labels(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigInvalid(f"{path}: no labels")
    header = [c.strip() for c in rows[0]]
    col = header.index("label") if "label" in header else len(header) - 1
    body = rows[1:] if not _is_number(header[col]) else rows
    return np.array([r[col].strip() for r in body])


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


@cli.command("evaluate")
@click.argument("truth", type=click.Path(exists=True, dir_okay=False))
@click.argument("predicted", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("-o", "--out", "out", default="-", show_default=True)
def cmd_evaluate(truth, predicted, fmt, out):
    """ARI and NVI between two label CSVs (a ``label`` column, else the last column)."""
    t, p = _read_labels(truth), _read_labels(predicted)
    scores = {"ari": ari(t, p), "nvi": nvi(t, p), "n": int(t.size)}
    if fmt == "csv":
        text = f"ari,nvi,n\n{scores['ari']!r},{scores['nvi']!r},{scores['n']}\n"
        if out == "-":
            click.echo(text, nl=False)
        else:
            Path(out).write_text(text)
        return
    _dump({"command": "evaluate", "truth": str(truth), "predicted": str(predicted), **scores}, out)


def main(argv=None) -> int:
    """Entry point mapping failures onto exit codes 1 (usage), 2 (data) and 3 (internal)."""
    try:
        cli.main(args=argv, prog_name="kmace", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError, click.Abort) as exc:
        if isinstance(exc, click.UsageError):
            exc.show()
        return EXIT_USAGE
    except USAGE_ERRORS as exc:
        click.echo(f"Error: {exc}", err=True)
        return EXIT_USAGE
    except (KmaceError, OSError) as exc:
        click.echo(f"Error: {exc}", err=True)
        return EXIT_DATA
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - anything else is a broken invariant
        click.echo(f"Internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
