#!/usr/bin/env python3
"""Render figures from graphflow CLI outputs.

    python plots/render.py --job job.json

A job is a JSON object {"kind": ..., "inputs": {...}, "output": "fig.png"}.
"""
import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

HEADERS = {
    "trajectory": ["t", "energy", "slope", "action", "mass_error", "min_mass"],
    "twopoint": ["rho0", "nu0", "T"],
    "convergence_summary": ["n", "t", "median", "min", "max"],
    "locallimit": ["epsilon", "discrepancy", "graph_drift", "graph_steps"],
}

# inputs each kind needs, keyed by role
KINDS = {
    "mass_scatter": ["snapshots"],
    "twopoint_heatmap": ["twopoint"],
    "energy_decay": ["trajectory"],
    "convergence_curve": ["convergence_summary"],
    "locallimit_curve": ["locallimit"],
}


class SchemaError(Exception):
    pass


def read_csv(path, contract):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    missing = [c for c in HEADERS[contract] if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {', '.join(missing)}")
    cols = {}
    for name in HEADERS[contract]:
        k = header.index(name)
        try:
            cols[name] = np.array([float(r[k]) for r in body])
        except (ValueError, IndexError) as e:
            raise SchemaError(f"{path}: bad value in column {name}: {e}") from None
    return cols


def read_snapshots(path):
    with open(path) as f:
        doc = json.load(f)
    missing = [k for k in ("positions", "times", "masses") if k not in doc]
    if missing:
        raise SchemaError(f"{path}: missing keys {', '.join(missing)}")
    pos = np.array(doc["positions"], dtype=float)
    if pos.ndim != 2 or pos.shape[1] not in (1, 2):
        raise SchemaError(f"{path}: positions must be n x 1 or n x 2")
    masses = np.array(doc["masses"], dtype=float)
    if masses.ndim != 2 or masses.shape[1] != pos.shape[0]:
        raise SchemaError(f"{path}: masses must be one row of length n per time")
    return pos, np.array(doc["times"], dtype=float), masses


def mass_scatter(ax, inputs, opts):
    pos, times, masses = read_snapshots(inputs["snapshots"])
    k = opts.get("frame", -1)
    m = masses[k]
    y = pos[:, 1] if pos.shape[1] == 2 else np.zeros(len(pos))
    # brighter means more mass; plot heavy vertices last so they stay visible
    order = np.argsort(m, kind="stable")
    sc = ax.scatter(pos[order, 0], y[order], c=m[order], cmap="inferno", s=18)
    ax.set_aspect("equal")
    ax.set_title(f"t = {times[k]:g}")
    ax.figure.colorbar(sc, ax=ax, label="mass")


def twopoint_heatmap(ax, inputs, opts):
    c = read_csv(inputs["twopoint"], "twopoint")
    xs, ys = np.unique(c["rho0"]), np.unique(c["nu0"])
    if len(xs) * len(ys) != len(c["T"]):
        raise SchemaError(f"{inputs['twopoint']}: rows do not form a full grid")
    grid = np.full((len(ys), len(xs)), np.nan)
    grid[np.searchsorted(ys, c["nu0"]), np.searchsorted(xs, c["rho0"])] = c["T"]
    grid[~np.isfinite(grid)] = np.nan
    hx = (xs[-1] - xs[0]) / max(len(xs) - 1, 1) / 2
    hy = (ys[-1] - ys[0]) / max(len(ys) - 1, 1) / 2
    ext = (xs[0] - hx, xs[-1] + hx, ys[0] - hy, ys[-1] + hy)
    im = ax.imshow(grid, origin="lower", cmap="viridis", extent=ext, aspect="equal")
    ax.plot([0, 1], [0, 1], color="white", lw=0.8, ls="--")
    ax.set_xlabel(r"$\rho_0$")
    ax.set_ylabel(r"$\nu_0$")
    ax.figure.colorbar(im, ax=ax, label=r"$\mathcal{T}(\rho,\nu)$")


def energy_decay(ax, inputs, opts):
    c = read_csv(inputs["trajectory"], "trajectory")
    ax.plot(c["t"], c["energy"], color="C0")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")


def convergence_curve(ax, inputs, opts):
    c = read_csv(inputs["convergence_summary"], "convergence_summary")
    for i, t in enumerate(np.unique(c["t"])):
        sel = c["t"] == t
        n, med = c["n"][sel], c["median"][sel]
        ax.fill_between(n, c["min"][sel], c["max"][sel], color=f"C{i}", alpha=0.2, lw=0)
        ax.plot(n, med, "o-", color=f"C{i}", label=f"t = {t:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel(r"$W_1$ error")
    ax.legend()


def locallimit_curve(ax, inputs, opts):
    c = read_csv(inputs["locallimit"], "locallimit")
    ax.plot(c["epsilon"], c["discrepancy"], "o-", label="graph vs FV")
    ax.plot(c["epsilon"], c["graph_drift"], "s--", label="graph drift")
    ax.set_xscale("log")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$L^1$")
    ax.legend()


DRAW = {
    "mass_scatter": mass_scatter,
    "twopoint_heatmap": twopoint_heatmap,
    "energy_decay": energy_decay,
    "convergence_curve": convergence_curve,
    "locallimit_curve": locallimit_curve,
}


def load_job(path):
    path = Path(path)
    with open(path) as f:
        job = json.load(f)
    for key in ("kind", "inputs", "output"):
        if key not in job:
            raise SchemaError(f"job: missing field {key}")
    if job["kind"] not in KINDS:
        raise SchemaError(f"job: unknown kind {job['kind']!r}")
    missing = [r for r in KINDS[job["kind"]] if r not in job["inputs"]]
    if missing:
        raise SchemaError(f"job: missing inputs {', '.join(missing)}")
    # relative paths are relative to the job file
    job["inputs"] = {k: str(path.parent / v) for k, v in job["inputs"].items()}
    job["output"] = str(path.parent / job["output"])
    return job


def render(job):
    plt.rcdefaults()
    fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
    try:
        DRAW[job["kind"]](ax, job["inputs"], job.get("options", {}))
        fig.tight_layout()
        out = Path(job["output"])
        # strip timestamps and software tags so bytes depend only on the inputs
        meta = {"svg": {"Date": None, "Creator": None}, "pdf": {"CreationDate": None, "Creator": None, "Producer": None}}
        fmt = out.suffix.lstrip(".").lower()
        if fmt == "svg":
            plt.rcParams["svg.hashsalt"] = "graphflow"
        fig.savefig(out, metadata=meta.get(fmt, {"Software": None}))
    finally:
        plt.close(fig)
    return job["output"]


def main(argv=None):
    ap = argparse.ArgumentParser(prog="render")
    ap.add_argument("--job", required=True)
    args = ap.parse_args(argv)
    try:
        print(render(load_job(args.job)))
    except (SchemaError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
