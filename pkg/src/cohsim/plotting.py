"""Render the CSV/JSON files written by ``cohsim`` as figures.

This is a separate entry point (``cohsim-plot``) so that the main CLI never
imports matplotlib. The figure type is taken from the ``kind`` field of the
file's metadata block.

    cohsim-plot sweep.csv -o sweep.png
    cohsim-plot fcs.json -o fcs.png
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np


def read_artifact(path) -> tuple[dict, str | object]:
    """Return (metadata, body). CSV bodies are text; JSON bodies are parsed."""
    text = Path(path).read_text()
    if text.startswith("# "):
        first, _, body = text.partition("\n")
        return json.loads(first[2:]), body
    doc = json.loads(text)
    if isinstance(doc, dict) and "metadata" in doc:
        return doc["metadata"], doc["data"]
    raise ValueError(f"{path}: no cohsim metadata block found")


def _sweep_rows(body):
    if isinstance(body, str):
        rows = list(csv.DictReader(io.StringIO(body)))
        return (np.array([int(r["k"]) for r in rows]),
                np.array([float(r["C2"]) for r in rows]),
                np.array([float(r["Sx"]) for r in rows]),
                np.array([float(r.get("C2_err") or 0) for r in rows]))
    return (np.array([r["k"] for r in body]), np.array([r["c2"] for r in body]),
            np.array([r["sx"] for r in body]), np.array([r["c2_err"] for r in body]))


def plot_sweep(meta: dict, body, ax=None):
    import matplotlib.pyplot as plt

    n = meta["settings"]["n"]
    k, c2, sx, c2_err = _sweep_rows(body)
    if ax is None:
        _, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(k, c2, yerr=c2_err if np.any(c2_err) else None, marker="o", label=r"$C_N^{(2)}$")
    ax.plot(k, (sx / n) ** 2, marker="s", label=r"$\langle S_x\rangle^2/N^2$")
    ax.axhline((n + 1) / (4 * n), color="0.6", ls=":", lw=1)
    ax.axhline((n + 2) / (4 * n), color="0.6", ls="--", lw=1)
    ax.set_xlabel("coupled qubits k")
    ax.set_title(f"N = {n}, {meta['settings']['mode']}")
    ax.legend(frameon=False)
    return ax


def plot_fcs(meta: dict, body, ax=None):
    """Polar heat map: angle theta, radius S_theta, colour probability."""
    import matplotlib.pyplot as plt

    if isinstance(body, str):
        from .observables import FcsDistribution

        fcs = FcsDistribution.from_csv(body, meta["settings"].get("n"))
        theta, radius, prob = fcs.thetas, fcs.values, fcs.probs
    else:
        theta, radius, prob = np.array(body["theta"]), np.array(body["radius"]), np.array(body["prob"])
    if ax is None:
        _, ax = plt.subplots(subplot_kw={"projection": "polar"}, figsize=(4, 4))
    # a negative outcome at angle theta is drawn at radius |v| on the opposite side
    tt, vv = np.meshgrid(theta, radius, indexing="ij")
    angle = np.where(vv >= 0, tt, tt + np.pi)
    sc = ax.scatter(angle.ravel(), np.abs(vv).ravel(), c=prob.ravel(), s=12, cmap="viridis")
    ax.set_rmax(np.abs(radius).max() + 0.5)
    plt.colorbar(sc, ax=ax, shrink=0.7, label="probability")
    return ax


def plot_wigner(meta: dict, body, ax=None):
    import matplotlib.pyplot as plt

    from .observables import WignerGrid

    grid = WignerGrid.from_csv(body)
    if ax is None:
        _, ax = plt.subplots(figsize=(4, 3.5))
    mesh = ax.pcolormesh(grid.sx_grid, grid.sy_grid, grid.values.T, shading="auto", cmap="magma")
    ax.set_xlabel(r"$s_x$")
    ax.set_ylabel(r"$s_y$")
    ax.set_aspect("equal")
    plt.colorbar(mesh, ax=ax, label="W")
    return ax


PLOTTERS = {"sweep": plot_sweep, "fcs": plot_fcs, "wigner": plot_wigner}


def render(path, out) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    meta, body = read_artifact(path)
    kind = meta.get("kind")
    if kind not in PLOTTERS:
        raise ValueError(f"{path}: cannot plot artifacts of kind {kind!r}")
    ax = PLOTTERS[kind](meta, body)
    ax.figure.tight_layout()
    ax.figure.savefig(out, dpi=150)
    plt.close(ax.figure)
    return kind


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cohsim-plot", description="Plot a cohsim CSV/JSON artifact.")
    parser.add_argument("path")
    parser.add_argument("-o", "--out", default=None, help="image path (default: input with .png)")
    args = parser.parse_args(argv)
    out = args.out or str(Path(args.path).with_suffix(".png"))
    try:
        kind = render(args.path, out)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cohsim-plot: error: {exc}", file=sys.stderr)
        return 2
    print(f"{kind} figure written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
