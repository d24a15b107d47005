#!/usr/bin/env python3
"""Render report/charts/*.csv as horizontal bar charts (PNG).

usage: plot_charts.py RUN_DIR [OUT_DIR]

OUT_DIR defaults to RUN_DIR/report/charts/png.
"""
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def plot(csv_path, out_dir):
    df = pd.read_csv(csv_path)
    if df.empty:
        return None
    df = df.iloc[::-1]
    fig, ax = plt.subplots(figsize=(7, 0.4 * len(df) + 1.2))
    ax.barh(df["label"], df["percent"], color="#4c72b0")
    for y, (pct, n) in enumerate(zip(df["percent"], df["count"])):
        ax.text(pct + 0.5, y, f"{pct:.1f}% ({n})", va="center", fontsize=8)
    ax.set_xlabel("percent of parsed responses")
    ax.set_xlim(0, max(100.0, df["percent"].max() + 15))
    ax.set_title(csv_path.stem)
    fig.tight_layout()
    out = out_dir / f"{csv_path.stem}.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def main(argv):
    if len(argv) < 2:
        sys.exit(__doc__)
    charts = pathlib.Path(argv[1]) / "report" / "charts"
    out_dir = pathlib.Path(argv[2]) if len(argv) > 2 else charts / "png"
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in sorted(charts.glob("*.csv")):
        out = plot(path, out_dir)
        if out:
            print(out)


if __name__ == "__main__":
    main(sys.argv)
