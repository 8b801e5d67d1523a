#!/usr/bin/env python3
"""Render the data files in <run>/figures/ as PNGs (matplotlib)."""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def null_fits(fig_dir, out):
    files = sorted(fig_dir.glob("null_fit_class*.json"))
    if not files:
        return
    fig, axes = plt.subplots(1, len(files), figsize=(4.5 * len(files), 3.5), squeeze=False)
    for ax, f in zip(axes[0], files):
        d = json.loads(f.read_text())
        hist = np.array(d["histogram"])
        grid = np.array(d["density_grid"])
        width = hist[1, 0] - hist[0, 0] if len(hist) > 1 else 1.0
        ax.bar(hist[:, 0], hist[:, 1] / (d["n"] * width), width=width, align="edge", color="0.8", label="statistic")
        ax.plot(grid[:, 0], grid[:, 1], label="mixture density")
        ax.plot(grid[:, 0], d["pi0"] * grid[:, 2], "--", label="scaled null")
        ax.set_title(f"{f.stem.split('_')[-1]}  (delta={d['delta']:.3g}, sigma0={d['sigma0']:.3g})", fontsize=9)
        ax2 = ax.twinx()
        ax2.plot(grid[:, 0], grid[:, 3], ":", color="k", lw=0.8)
        ax2.set_ylim(0, 1.05)
        ax2.set_ylabel("lfdr")
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "null_fits.png", dpi=130)
    plt.close(fig)


def directions(fig_dir, out):
    df = pd.read_csv(fig_dir / "direction_lfdr.csv")
    classes = sorted(df["class"].unique())
    fig, axes = plt.subplots(1, len(classes), figsize=(4.5 * len(classes), 4), squeeze=False, layout="constrained")
    for ax, k in zip(axes[0], classes):
        s = df[df["class"] == k]
        sc = ax.scatter(s.dx, s.dy, c=s.lfdr, cmap="viridis_r", vmin=0, vmax=1, s=8)
        ax.set_aspect("equal")
        ax.set_title(f"class {k}")
        ax.set_xlabel("dx")
        ax.set_ylabel("dy")
    fig.colorbar(sc, ax=axes[0].tolist(), label="lfdr")
    fig.savefig(out / "directions.png", dpi=130)
    plt.close(fig)


def cluster_sd(fig_dir, out):
    df = pd.read_csv(fig_dir / "cluster_sd.csv")
    sd_cols = [c for c in df.columns if c.startswith("sd_")]
    fig, axes = plt.subplots(1, len(sd_cols), figsize=(4 * len(sd_cols), 3.5), squeeze=False)
    for ax, c in zip(axes[0], sd_cols):
        ax.scatter(df.boundary_distance, df[c], s=12)
        ax.set_xlabel("distance to boundary")
        ax.set_ylabel(c)
    fig.tight_layout()
    fig.savefig(out / "cluster_sd.png", dpi=130)
    plt.close(fig)


def feature_panels(fig_dir, out):
    df = pd.read_csv(fig_dir / "feature_panels.csv")
    half = pd.read_csv(fig_dir / "halfspaces.csv").set_index("feature")
    score_cols = [c for c in df.columns if c.startswith("score_")]
    for j, s in df.groupby("feature"):
        fig, axes = plt.subplots(1, len(score_cols), figsize=(4 * len(score_cols), 4), squeeze=False)
        for ax, c in zip(axes[0], score_cols):
            lim = np.abs(s[c]).max() or 1.0
            ax.scatter(s.x1, s.x2, c=s[c], cmap="coolwarm", vmin=-lim, vmax=lim, s=5)
            h = half.loc[j]
            xs = np.linspace(s.x1.min(), s.x1.max(), 50)
            if abs(h.w2) > 1e-12:
                ax.plot(xs, -(h.w1 * xs + h.b) / h.w2, "k-", lw=0.8)
            ax.set_ylim(s.x2.min(), s.x2.max())
            ax.set_title(f"feature {j}, {c}", fontsize=9)
        fig.tight_layout()
        fig.savefig(out / f"feature_{j:02d}.png", dpi=110)
        plt.close(fig)


def cluster_strips(fig_dir, out):
    df = pd.read_csv(fig_dir / "cluster_strips.csv")
    classes = sorted(df["class"].unique())
    fig, axes = plt.subplots(len(classes), 1, figsize=(8, 2.5 * len(classes)), squeeze=False)
    for ax, k in zip(axes[:, 0], classes):
        s = df[df["class"] == k]
        for rank, g in s.groupby("rank"):
            ax.scatter(np.full(len(g), rank), g.score, s=6)
        ax.set_title(f"class {k}: top clusters by SD", fontsize=9)
        ax.set_xlabel("rank")
        ax.set_ylabel("score")
    fig.tight_layout()
    fig.savefig(out / "cluster_strips.png", dpi=130)
    plt.close(fig)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("run", type=Path, help="pipeline output directory")
    ap.add_argument("--out", type=Path, help="where to write PNGs (default: <run>/figures/png)")
    args = ap.parse_args()
    fig_dir = args.run / "figures"
    out = args.out or fig_dir / "png"
    out.mkdir(parents=True, exist_ok=True)
    for render in (null_fits, directions, cluster_sd, feature_panels, cluster_strips):
        render(fig_dir, out)
    print(f"wrote {len(list(out.glob('*.png')))} images to {out}")


if __name__ == "__main__":
    main()
