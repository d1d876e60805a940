"""Command-line entry point ``fxtadapt``.

Exit codes: 0 success, 1 property violation (``verify``), 2 invalid input,
3 runtime failure. The default output root is read from ``FXTADAPT_OUT``
and falls back to ``./runs``.
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from fxtadapt import __version__, config
from fxtadapt._backend import BACKEND
from fxtadapt.errors import ConfigError, FxtAdaptError

EXIT_OK, EXIT_VIOLATION, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
OUT_ENV = "FXTADAPT_OUT"


def _out_root(out) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get(OUT_ENV, "runs"))


def _atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _json(obj) -> str:
    from fxtadapt.sim import _jsonable

    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _resolve_config(scenario, config_path, seed):
    from fxtadapt.sim import SCENARIOS, scenario_config

    if config_path is not None:
        cfg = config.load(config_path)
        if seed is not None:
            cfg.disturbance.seed = int(seed)
            config.validate(cfg)
        return cfg
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; known: {', '.join(SCENARIOS)}")
    return scenario_config(scenario, seed=seed)


def execute_run(cfg, out_dir: Path, seed=None) -> dict:
    """Simulate one configuration and write trace, summary and manifest.

    The manifest is written last and atomically, so its presence marks a
    complete run directory.
    """
    from fxtadapt.sim import run_closed_loop

    t0 = time.perf_counter()
    trace = run_closed_loop(cfg)
    wall = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    summary_path = out_dir / "summary.json"
    config_path = out_dir / "config.yaml"
    _atomic_write(trace_path, trace.to_csv_text())
    _atomic_write(summary_path, _json(trace.summary))
    _atomic_write(config_path, config.dumps(cfg))
    manifest = {
        "scenario": cfg.name,
        "config_path": str(config_path),
        "output_dir": str(out_dir),
        "seed": cfg.disturbance.seed if seed is None else int(seed),
        "tool_version": __version__,
        "numpy_version": np.__version__,
        "kernel_backend": BACKEND,
        "wall_seconds": round(wall, 3),
        "trace_checksum": trace.checksum(),
        "files": {p.name: _sha256(p) for p in (trace_path, summary_path, config_path)},
    }
    _atomic_write(out_dir / "manifest.json", _json(manifest))
    return {"scenario": cfg.name, "out": str(out_dir), "summary": trace.summary, "manifest": manifest}


def _run_worker(args):
    cfg_text, out_dir, seed = args
    return execute_run(config.loads(cfg_text), Path(out_dir), seed)


@click.group()
@click.version_option(__version__, prog_name="fxtadapt")
def main():
    """Fixed-time adaptation with adaptive safety filters."""


@main.command("run")
@click.option("--scenario", "scenarios", multiple=True, help="Shipped scenario name; repeat to run several.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Scenario config file (YAML).")
@click.option("--out", type=click.Path(file_okay=False), help=f"Output directory (default ${OUT_ENV} or ./runs).")
@click.option("--seed", type=int, default=None, help="Disturbance seed override.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes for several scenarios.")
def run_cmd(scenarios, config_path, out, seed, jobs):
    """Simulate a scenario and write trace.csv, summary.json and manifest.json."""
    if not scenarios and config_path is None:
        _fail(EXIT_INVALID, "give --scenario or --config")
    if scenarios and config_path is not None:
        _fail(EXIT_INVALID, "--scenario and --config are mutually exclusive")
    if jobs < 1:
        _fail(EXIT_INVALID, "--jobs must be positive")
    root = _out_root(out)
    try:
        if config_path is not None:
            cfgs = [_resolve_config(None, config_path, seed)]
        else:
            cfgs = [_resolve_config(s, None, seed) for s in scenarios]
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_INVALID, str(exc))
    # one scenario writes straight into --out; several get a subdirectory each
    dirs = [root] if len(cfgs) == 1 else [root / c.name for c in cfgs]
    try:
        if jobs > 1 and len(cfgs) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_worker, [(config.dumps(c), str(d), seed) for c, d in zip(cfgs, dirs)]))
        else:
            results = [execute_run(c, d, seed) for c, d in zip(cfgs, dirs)]
    except ConfigError as exc:
        _fail(EXIT_INVALID, str(exc))
    except (FxtAdaptError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        _fail(EXIT_RUNTIME, f"{type(exc).__name__}: {exc}")
    for r in results:
        s = r["summary"]
        click.echo(f"{r['scenario']}: safe={s.get('safe')} converged={s.get('converged')} "
                   f"min_h={s.get('min_h'):.4g} -> {r['out']}")
    sys.exit(EXIT_OK)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

@main.command("verify")
@click.option("--suite", type=click.Choice(["lemmas", "envelopes", "qp"]), required=True)
@click.option("--samples", type=int, default=None, help="Instances for the suite's main check.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--form", type=click.Choice(["sound", "standard"]), default="sound", show_default=True,
              help="Envelope closed form checked by the envelopes suite.")
@click.option("--out", type=click.Path(file_okay=False), help=f"Report directory (default ${OUT_ENV} or ./runs).")
def verify_cmd(suite, samples, seed, form, out):
    """Run a randomized property suite; exit 1 on any violation."""
    from fxtadapt.verify import run_suite

    defaults = {"lemmas": 100_000, "envelopes": 100, "qp": 1000}
    n = defaults[suite] if samples is None else samples
    if n < 1:
        _fail(EXIT_INVALID, "--samples must be at least 1")
    opts = {"form": form} if suite == "envelopes" else {}
    try:
        rep = run_suite(suite, n, seed, **opts)
    except ValueError as exc:
        _fail(EXIT_INVALID, str(exc))
    root = _out_root(out)
    report_path = root / f"verify_{suite}.json"
    _atomic_write(report_path, _json(rep.to_dict()))
    for name, c in rep.checks.items():
        click.echo(f"{suite}/{name}: {c['violations']} violations in {c['samples']} samples")
    for k, v in rep.notes.items():
        click.echo(f"{suite}/note {k}: {v}")
    if not rep.ok:
        cx_path = root / f"counterexample_{suite}.json"
        _atomic_write(cx_path, _json(rep.counterexample))
        click.echo(f"counterexample written to {cx_path}", err=True)
        sys.exit(EXIT_VIOLATION)
    sys.exit(EXIT_OK)


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

@main.command("plot")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), required=True)
@click.option("--kind", type=click.Choice(["xy", "states", "controls", "cbf", "theta", "eta"]), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="SVG path (default next to the trace).")
def plot_cmd(trace_path, kind, out):
    """Render one figure of a trace as SVG."""
    from fxtadapt.plotting import PlotError, plot_trace
    from fxtadapt.sim import SimulationTrace

    path = Path(trace_path)
    if not path.is_file():
        _fail(EXIT_INVALID, f"trace file not found: {path}")
    try:
        trace = SimulationTrace.from_csv(path)
        target = Path(out) if out else path.with_name(f"{kind}.svg")
        info = plot_trace(trace, kind, target)
    except (PlotError, ValueError) as exc:
        _fail(EXIT_INVALID, str(exc))
    click.echo(info["path"])
    sys.exit(EXIT_OK)


# ---------------------------------------------------------------------------
# dump-config
# ---------------------------------------------------------------------------

@main.command("dump-config")
@click.option("--scenario", required=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write here instead of stdout.")
def dump_config_cmd(scenario, seed, out):
    """Print a shipped scenario as an editable YAML config."""
    try:
        cfg = _resolve_config(scenario, None, seed)
    except ConfigError as exc:
        _fail(EXIT_INVALID, str(exc))
    text = config.dumps(cfg)
    if out:
        _atomic_write(Path(out), text)
    else:
        click.echo(text, nl=False)
    sys.exit(EXIT_OK)


@main.command("scenarios")
def scenarios_cmd():
    """List the shipped scenario names."""
    from fxtadapt.sim import SCENARIOS

    for name in SCENARIOS:
        click.echo(name)


if __name__ == "__main__":  # pragma: no cover
    main()
