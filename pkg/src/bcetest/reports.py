"""Delimited outputs and companion figures for the CLI workflows."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _ensure(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def write_csv(path: str, header: list[str], rows: list[list]) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def theta_cs_table(records, out_dir: str, alpha: float) -> str:
    d = len(records[0][0])
    header = [f"theta_{h}" for h in range(d)] + ["p_value", "retained"]
    rows = [[*map(float, th), p, int(p > alpha)] for th, p in records]
    return write_csv(os.path.join(_ensure(out_dir), "theta_cs.csv"), header, rows)


def theta_cs_figure(records, out_dir: str, alpha: float) -> str | None:
    thetas = np.array([th for th, _ in records], dtype=float)
    pvals = np.array([p for _, p in records])
    d = thetas.shape[1]
    fig, ax = plt.subplots(figsize=(6, 4))
    if d == 1:
        order = np.argsort(thetas[:, 0])
        ax.plot(thetas[order, 0], pvals[order], "o-", ms=4)
        ax.axhline(alpha, color="crimson", ls="--", lw=1, label=f"alpha = {alpha}")
        ax.set_xlabel("theta")
        ax.set_ylabel("bootstrap p-value")
        ax.legend()
    elif d == 2:
        kept = pvals > alpha
        ax.scatter(thetas[~kept, 0], thetas[~kept, 1], c="lightgray", s=18,
                   label="rejected")
        ax.scatter(thetas[kept, 0], thetas[kept, 1], c="navy", s=22, label="retained")
        ax.set_xlabel("theta_0")
        ax.set_ylabel("theta_1")
        ax.legend()
    else:
        plt.close(fig)
        return None
    ax.set_title("Parameter confidence set")
    fig.tight_layout()
    path = os.path.join(_ensure(out_dir), "theta_cs.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def market_cs_table(pvals, bonf, holm, labels, out_dir: str) -> str:
    header = ["market", "covariates", "n_x", "p_value",
              "bonferroni_decision", "holm_decision"]
    rows = []
    for x in sorted(pvals):
        rows.append([
            x + 1, labels[x], pvals[x]["n_x"], pvals[x]["p"],
            "reject" if x in bonf.rejected else "retain",
            "reject" if x in holm.rejected else "retain",
        ])
    return write_csv(os.path.join(_ensure(out_dir), "market_cs.csv"), header, rows)


def market_cs_figure(pvals, bonf, holm, out_dir: str, alpha: float) -> str:
    xs = sorted(pvals)
    p = [pvals[x]["p"] for x in xs]
    fig, ax = plt.subplots(figsize=(7, 4))
    colors = ["crimson" if x in holm.rejected else "navy" for x in xs]
    ax.bar([x + 1 for x in xs], p, color=colors)
    ax.axhline(alpha / len(xs), color="black", ls=":", lw=1,
               label=f"Bonferroni alpha/|X| = {alpha / len(xs):.4g}")
    ax.set_xlabel("market type")
    ax.set_ylabel("p-value")
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.set_title("Per-market tests (red = Holm rejection)")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(_ensure(out_dir), "market_cs.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def power_table(rows, out_dir: str) -> str:
    header = ["xi", "M", "rejection_rate", "mc_se", "reps"]
    data = [[r["xi"], r["M"], r["rejection_rate"], r["mc_se"], r["reps"]] for r in rows]
    return write_csv(os.path.join(_ensure(out_dir), "power.csv"), header, data)


def power_figure(rows, out_dir: str, alpha: float) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for M in sorted({r["M"] for r in rows}):
        sub = sorted((r for r in rows if r["M"] == M), key=lambda r: r["xi"])
        xi = [r["xi"] for r in sub]
        rr = [r["rejection_rate"] for r in sub]
        se = [r["mc_se"] for r in sub]
        ax.errorbar(xi, rr, yerr=se, marker="o", capsize=3, label=f"M = {M:g}")
    ax.axhline(alpha, color="gray", ls="--", lw=1)
    ax.set_xlabel("signal quality xi")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Power of the information-ordering test")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(_ensure(out_dir), "power.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def bounds_table(rows, out_dir: str) -> str:
    d = len(rows[0]["theta"])
    header = [f"theta_{h}" for h in range(d)] + ["outcome", "lower", "upper"]
    data = [[*r["theta"], r["outcome"], r["lower"], r["upper"]] for r in rows]
    return write_csv(os.path.join(_ensure(out_dir), "bce_bounds.csv"), header, data)


def bounds_figure(rows, out_dir: str) -> str | None:
    thetas = np.array([r["theta"] for r in rows], dtype=float)
    if thetas.shape[1] != 1:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for outcome in sorted({r["outcome"] for r in rows}):
        sub = sorted((r for r in rows if r["outcome"] == outcome),
                     key=lambda r: r["theta"][0])
        t = [r["theta"][0] for r in sub]
        lo = [r["lower"] for r in sub]
        hi = [r["upper"] for r in sub]
        line = ax.plot(t, lo, label=f"y = {outcome}")[0]
        ax.plot(t, hi, color=line.get_color())
        ax.fill_between(t, lo, hi, alpha=0.15, color=line.get_color())
    ax.set_xlabel("theta")
    ax.set_ylabel("outcome probability bounds")
    ax.set_title("Sharp BCE bounds")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(_ensure(out_dir), "bce_bounds.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def seq_test_table(levels, out_dir: str) -> str:
    header = ["level", "baseline", "p_value", "decision"]
    rows = [[j + 1, lab, p, "reject" if rej else "retain"]
            for j, (lab, p, rej) in enumerate(levels)]
    return write_csv(os.path.join(_ensure(out_dir), "seq_test.csv"), header, rows)
