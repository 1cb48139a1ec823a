"""
上下限図のSVG出力
図用CSVから実部・虚部の2パネルを描き、区間の帯と真値・推定値のマーカーを重ねる。
"""

from pathlib import Path
from typing import Union

import matplotlib
from matplotlib.figure import Figure

from utils.file_manager import read_figure_csv

# 同じ入力から同じSVGを出力するための設定
SVG_RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "bounded-lse",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def plot_bounds(figure_csv: Union[str, Path], out_svg: Union[str, Path]) -> Path:
    """
    図用CSVを読み込み、母線ごとに目盛りを1つ置いた2パネルのSVGを書き出す。

    Raises:
        CaseFormatError: CSVが空または不正な場合
        DimensionGuardError: 実部と虚部の行数が一致しない場合
    """
    frame = read_figure_csv(figure_csv)
    out_svg = Path(out_svg)
    out_svg.parent.mkdir(parents=True, exist_ok=True)

    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(max(6.0, 0.35 * (len(frame) // 2) + 2.0), 6.0))
        axes = fig.subplots(2, 1, sharex=True)

        for ax, part, label in zip(axes, ("re", "im"), ("Re V [p.u.]", "Im V [p.u.]")):
            rows = frame[frame["part"] == part].sort_values("component_index")
            positions = list(range(len(rows)))

            if rows["lower"].notna().any():
                ax.fill_between(positions, rows["lower"], rows["upper"], step="mid",
                                color="tab:blue", alpha=0.25, label="interval bounds")
            ax.plot(positions, rows["true"], "o", color="black", markersize=4, label="true")
            if "convex_estimate" in rows and rows["convex_estimate"].notna().any():
                ax.plot(positions, rows["convex_estimate"], "x", color="tab:red", label="convex")
            if "glfp_estimate" in rows and rows["glfp_estimate"].notna().any():
                ax.plot(positions, rows["glfp_estimate"], "+", color="tab:green", label="glfp")

            ax.set_ylabel(label)
            ax.set_xticks(positions)
            ax.set_xticklabels([str(int(b)) for b in rows["bus_id"]])
            ax.set_xlim(-0.5, len(rows) - 0.5)
            ax.set_gid(f"panel_{part}")

        axes[0].legend(loc="best", fontsize=8)
        axes[1].set_xlabel("bus")
        fig.tight_layout()
        fig.savefig(out_svg, format="svg", metadata={"Date": None})

    return out_svg
