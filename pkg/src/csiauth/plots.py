"""Figure rendering for reports.

All renderers write straight to files (Agg backend); nothing opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

RC = {
    "figure.figsize": (6.4, 4.4),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "axes.titlesize": 10,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_roc(reports, path) -> Path:
    """Overlay ROC curves of one or more run reports."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for rep in reports:
            fpr = [p[0] for p in rep.roc]
            tpr = [p[1] for p in rep.roc]
            ax.plot(fpr, tpr, label=f"{rep.scenario} (AUC={rep.auc:.3f})")
        ax.plot([0, 1], [0, 1], "k--", lw=0.8, label="chance")
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_title("Authentication ROC")
        ax.legend(loc="lower right")
        return _save(fig, path)


def plot_score_hist(report, path, bins: int = 40) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for identity, color in (("alice", "tab:blue"), ("eve", "tab:red")):
            ax.hist(report.scores[identity], bins=bins, alpha=0.6, color=color,
                    label=identity, density=True)
        ax.set_xlabel("log-posterior ratio at horizon")
        ax.set_ylabel("density")
        ax.set_title(f"Score separation: {report.scenario}")
        ax.legend()
        return _save(fig, path)


def plot_posterior_cdf(reports, path) -> Path:
    """Empirical CDF of the terminal legitimate-posterior per scenario."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for rep in reports:
            vals = np.asarray(rep.posterior_cdf["alice"])
            ax.plot(vals, np.linspace(0, 1, vals.size), label=rep.scenario)
        ax.set_xlabel("posterior authentication probability (legitimate sessions)")
        ax.set_ylabel("empirical CDF")
        ax.set_title("Posterior probability CDF")
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_decision_times(reports, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        names = [r.scenario for r in reports]
        x = np.arange(len(names))
        for off, identity, color in ((-0.2, "alice", "tab:blue"), (0.2, "eve", "tab:red")):
            ax.bar(x + off, [r.mean_decision_time[identity] for r in reports], 0.38,
                   color=color, label=identity)
        ax.set_xticks(x, names, rotation=20, ha="right")
        ax.set_ylabel("mean time to first decision [slots]")
        ax.set_title("Decision times")
        ax.legend()
        return _save(fig, path)


def plot_sweep_auc(reports, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        names = [r.scenario for r in reports]
        aucs = [r.auc for r in reports]
        ax.bar(np.arange(len(names)), aucs, color="tab:green")
        ax.set_xticks(np.arange(len(names)), names, rotation=20, ha="right")
        ax.set_ylim(0.5, 1.02)
        ax.set_ylabel("AUC")
        ax.set_title("Scenario sweep")
        for i, a in enumerate(aucs):
            ax.text(i, a + 0.004, f"{a:.3f}", ha="center", fontsize=7)
        return _save(fig, path)


def plot_pfa_pd(curves, path, title: str = "Analytic vs Monte Carlo") -> Path:
    """``curves``: records with t, p_fa, p_d, source (analytic | monte-carlo)."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        styles = {"analytic": "-", "monte-carlo": "o"}
        for source, style in styles.items():
            rows = [r for r in curves if r["source"] == source]
            if not rows:
                continue
            t = [r["t"] for r in rows]
            ax.plot(t, [r["p_fa"] for r in rows], style, color="tab:red",
                    label=f"P_FA {source}", markersize=3)
            ax.plot(t, [r["p_d"] for r in rows], style, color="tab:blue",
                    label=f"P_D {source}", markersize=3)
        ax.set_xlabel("time slot")
        ax.set_ylabel("probability")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)
