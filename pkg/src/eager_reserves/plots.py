"""Deterministic SVG boxplots of experiment results."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import ExperimentResult, five_number  # noqa: E402

_RC = {"svg.hashsalt": "eager-reserves", "svg.fonttype": "none"}


def _bxp_stats(values, label):
    s = five_number(values)
    if not s["count"]:
        return None
    return {"label": label, "whislo": s["min"], "q1": s["q25"], "med": s["median"],
            "q3": s["q75"], "whishi": s["max"], "fliers": []}


def _boxplot(groups, ylabel: str, path: Path) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        stats = [s for s in groups if s is not None]
        if stats:
            ax.bxp(stats, showfliers=False)
        ax.set_ylabel(ylabel)
        ax.set_xlabel("w")
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def ratio_boxplot(result: ExperimentResult, path: str | Path) -> Path:
    groups = []
    for w in result.config.ws:
        recs = [r for r in result.records if r.ok and r.w == w]
        groups.append(_bxp_stats([r.prolpr_ratio for r in recs], f"{w:g} LP rounding"))
        groups.append(_bxp_stats([r.greedy_ratio for r in recs], f"{w:g} greedy"))
    return _boxplot(groups, "revenue / LP optimum (training)", Path(path))


def gain_boxplot(result: ExperimentResult, path: str | Path) -> Path:
    groups = []
    for w in result.config.ws:
        gains = [100.0 * g for r in result.records if r.ok and r.w == w for g in r.gains() if g is not None]
        groups.append(_bxp_stats(gains, f"{w:g}"))
    return _boxplot(groups, "test revenue gain over greedy (%)", Path(path))
