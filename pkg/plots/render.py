#!/usr/bin/env python3
"""Render publication figures from the toolkit's CSV outputs.

Pure consumer of the CSV contracts: the only computation done here is the
least-squares slope fit drawn on convergence figures.  Each invocation
writes both PNG and SVG next to the requested output stem, with embedded
timestamps disabled so reruns are byte-identical.

Kinds and their required columns:
  convergence   errors.csv with (gamma, n, error); optional sigma column
  energy        energy.csv with (t, E, E_mod)
  steps         energy.csv with (t, tau)
  ratio-curves  ratio_curves.csv with r plus rstar_*/rg_* columns

Usage: render.py --kind energy --in out/energy.csv --out figs/energy
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "fracstep-figures"

KINDS = ("convergence", "energy", "steps", "ratio-curves")


class SchemaError(ValueError):
    pass


def load_columns(path, required):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        missing = [c for c in required if c not in names]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r} "
                              f"(found {names})")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out = {}
    for name in names:
        col = [row[name] for row in rows]
        try:
            out[name] = np.array([float(x) if x else np.nan for x in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def fit_order(ns, errors):
    """Negated log-log slope of error against N."""
    return float(-np.polyfit(np.log(ns), np.log(errors), 1)[0])


def make_convergence_figure(cols, title=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    info = {"slopes": {}}
    sigma = float(cols["sigma"][0]) if "sigma" in cols else None
    for gamma in sorted(set(cols["gamma"])):
        sel = cols["gamma"] == gamma
        ns, errs = cols["n"][sel], cols["error"][sel]
        order = np.argsort(ns)
        ns, errs = ns[order], errs[order]
        slope = fit_order(ns, errs)
        info["slopes"][float(gamma)] = slope
        ax.loglog(ns, errs, "o-", label=f"$\\gamma$={gamma:g}, fitted {slope:.2f}")
        anchor = errs[-1]
        guide = anchor * (ns / ns[-1]) ** -2.0
        ax.loglog(ns, guide, "k--", linewidth=0.8)
        if sigma is not None and gamma * sigma < 2.0:
            guide = anchor * (ns / ns[-1]) ** (-gamma * sigma)
            ax.loglog(ns, guide, "k:", linewidth=0.8)
    ax.set_xlabel("N")
    ax.set_ylabel("max L2 error")
    ax.legend(fontsize=8)
    ax.set_title(title or "time convergence (dashed: slope 2, dotted: slope $\\gamma\\sigma$)",
                 fontsize=9)
    fig.tight_layout()
    return fig, info


def make_energy_figure(cols, title=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    t, e, em = cols["t"], cols["E"], cols["E_mod"]
    pos = t > 0
    ax.semilogx(t[pos], e[pos], label="E")
    ax.semilogx(t[pos], em[pos], "--", label="modified E")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend()
    ax.set_title(title or "energy decay", fontsize=9)
    fig.tight_layout()
    info = {"E_final": float(e[-1]), "E_mod_final": float(em[-1]),
            "monotone": bool(np.all(np.diff(em) <= 1e-10 * (1 + np.abs(em[1:]))))}
    return fig, info


def make_steps_figure(cols, title=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    t, tau = cols["t"], cols["tau"]
    pos = (t > 0) & (tau > 0)
    ax.loglog(t[pos], tau[pos], ".-", markersize=3)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\tau_n$")
    ax.set_title(title or "accepted step sizes", fontsize=9)
    fig.tight_layout()
    return fig, {"tau_min": float(tau[pos].min()), "tau_max": float(tau[pos].max())}


def make_ratio_curves_figure(cols, title=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    r = cols["r"]
    curves = [c for c in cols if c.startswith(("rstar_", "rg_"))]
    if not curves:
        raise SchemaError("ratio-curves input has no rstar_*/rg_* columns")
    for name in sorted(curves):
        style = "-" if name.startswith("rstar") else "--"
        ax.plot(r, cols[name], style, label=name.replace("_", " "))
    ax.set_xlabel(r"current ratio $r_k$")
    ax.set_ylabel("lower bound on next ratio")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize=8)
    ax.set_title(title or "step-ratio admissibility curves", fontsize=9)
    fig.tight_layout()
    return fig, {"curves": sorted(curves)}


_REQUIRED = {
    "convergence": ("gamma", "n", "error"),
    "energy": ("t", "E", "E_mod"),
    "steps": ("t", "tau"),
    "ratio-curves": ("r",),
}
_MAKERS = {
    "convergence": make_convergence_figure,
    "energy": make_energy_figure,
    "steps": make_steps_figure,
    "ratio-curves": make_ratio_curves_figure,
}


def render(kind, in_path, out_stem, title=None):
    cols = load_columns(in_path, _REQUIRED[kind])
    fig, info = _MAKERS[kind](cols, title=title)
    out = Path(out_stem)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out.with_suffix(".png"), dpi=150)
    fig.savefig(out.with_suffix(".svg"), metadata={"Date": None})
    plt.close(fig)
    return info


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="in_path", required=True, help="input CSV")
    parser.add_argument("--out", required=True, help="output stem (no extension)")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    try:
        info = render(args.kind, args.in_path, args.out, title=args.title)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(info)
    return 0


if __name__ == "__main__":
    sys.exit(main())
