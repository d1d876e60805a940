"""Static SVG figures drawn from a simulation trace.

Every figure kind reads a fixed set of trace columns. A trace that lacks a
required column, or has no rows, raises :class:`PlotError` so the command
line can map it to a validation exit code.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from fxtadapt.errors import FxtAdaptError  # noqa: E402

KINDS = ("xy", "states", "controls", "cbf", "theta", "eta")


class PlotError(FxtAdaptError, ValueError):
    """The trace cannot produce the requested figure."""


def _indexed(trace, prefix):
    names = []
    i = 0
    while f"{prefix}_{i}" in trace.columns:
        names.append(f"{prefix}_{i}")
        i += 1
    return names


def _need(trace, names):
    missing = [n for n in names if n not in trace.columns]
    if missing:
        raise PlotError(f"trace lacks columns {missing}")


def _series_min(trace, names):
    return {n: float(np.min(trace[n])) for n in names}


def plot_trace(trace, kind: str, out) -> dict:
    """Draw one figure kind and write it to ``out`` as SVG.

    Returns a small dictionary of the plotted quantities (per-curve minima,
    post-convergence variances and the like) so callers can assert on the
    numbers behind a figure without parsing the SVG.
    """
    if kind not in KINDS:
        raise PlotError(f"unknown plot kind {kind!r}; choose from {', '.join(KINDS)}")
    if "t" not in trace.columns:
        raise PlotError("trace lacks the time column 't'")
    t = np.asarray(trace["t"])
    if t.size == 0:
        raise PlotError("trace has no rows")

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    info: dict = {"kind": kind}
    try:
        if kind == "xy":
            _need(trace, ["x_0", "x_1"])
            ax.plot(trace["x_0"], trace["x_1"], lw=1.5, label="path")
            if "ref_0" in trace.columns and "ref_1" in trace.columns:
                ax.plot(trace["ref_0"], trace["ref_1"], "--", lw=1.0, label="reference")
            ax.plot(trace["x_0"][0], trace["x_1"][0], "o", label="start")
            ax.set_xlabel("x [m]")
            ax.set_ylabel("y [m]")
            ax.set_aspect("equal", adjustable="datalim")
            info["final"] = [float(trace["x_0"][-1]), float(trace["x_1"][-1])]
        elif kind in ("states", "controls", "theta"):
            prefix = {"states": "x", "controls": "u", "theta": "theta_hat"}[kind]
            names = _indexed(trace, prefix)
            if not names:
                raise PlotError(f"trace lacks columns {prefix}_0, {prefix}_1, ...")
            for n in names:
                ax.plot(t, trace[n], lw=1.2, label=n)
            ax.set_xlabel("t [s]")
            info["min"] = _series_min(trace, names)
            if kind == "theta":
                info["final"] = {n: float(trace[n][-1]) for n in names}
        elif kind == "cbf":
            names = [n for n in trace.names if n.startswith("h_")]
            if not names:
                raise PlotError("trace has no barrier columns h_<name>")
            for n in names:
                ax.plot(t, trace[n], lw=1.3, label=n)
                shrunk = "hr_" + n[2:]
                if shrunk in trace.columns:
                    ax.plot(t, trace[shrunk], ":", lw=1.0, label=shrunk)
            ax.axhline(0.0, color="k", lw=0.8)
            ax.set_xlabel("t [s]")
            info["min"] = _series_min(trace, names)
            info["min_all"] = min(info["min"].values())
        else:  # eta
            _need(trace, ["eta", "oracle/theta_err_R_inf"])
            ax.semilogy(t, np.maximum(trace["eta"], 1e-16), lw=1.5, label="envelope")
            ax.semilogy(t, np.maximum(trace["oracle/theta_err_R_inf"], 1e-16), lw=1.2,
                        label="learnable error (sup norm)")
            ax.set_xlabel("t [s]")
            gap = trace["eta"] - trace["oracle/theta_err_R_inf"]
            info["min_gap"] = float(np.min(gap))
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize=8)
        ax.set_title(kind)
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format="svg")
    finally:
        plt.close(fig)
    info["path"] = str(out)
    return info


def settled_variance(trace, prefix: str, after: float) -> dict:
    """Variance of each indexed column over samples with ``t >= after``."""
    t = np.asarray(trace["t"])
    mask = t >= after
    return {n: float(np.var(trace[n][mask])) for n in _indexed(trace, prefix)}
